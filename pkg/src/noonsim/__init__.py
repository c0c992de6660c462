"""Exact simulation of heralded polarization NOON-state experiments."""

__version__ = "0.1.0"

from noonsim.fock import (  # noqa: E402
    FockError,
    FockState,
    ModeId,
    ModeRegistry,
    SingleParticleUnitary,
    TruncationError,
    apply_unitary,
    basis_state,
    condition_exact_count,
    inner,
    marginal_distribution,
    project_count,
    vacuum,
)
from noonsim.sources import OverlapModel, PairDistribution, spdc_state  # noqa: E402
from noonsim.elements import (  # noqa: E402
    PBS,
    PRESETS,
    CircuitPreset,
    Noon3Params,
    Noon4Params,
    PartialPBS,
    WavePlate,
    preset_noon3,
    preset_noon4,
)
from noonsim.detection import (  # noqa: E402
    DetectorModel,
    FringeTable,
    SplitterCascade,
    ZeroProbabilityBranch,
    fringe_scan,
    heralded_output,
    mc_sample_counts,
)
from noonsim.analysis import (  # noqa: E402
    FitResult,
    fit_fixed_freq,
    fidelity_lower_bound,
    fom_approx,
    fom_exact,
    subtract_triple_pair,
)

import types as _types  # noqa: E402

__all__ = sorted(
    k for k, v in globals().items() if not k.startswith("_") and not isinstance(v, _types.ModuleType)
)
