"""Polarization optics as single-particle unitaries, and the heralded NOON circuits.

Conventions (fixed once, checked by the tests against the closed-form states):

* a wave plate with retardance ``d`` and slow-axis angle ``t`` acts on (H, V) as
  ``R(t) diag(1, exp(-i d)) R(-t)`` with ``R`` the real rotation matrix, i.e. the
  slow axis is delayed by ``d`` relative to the fast axis up to a global phase;
* transmitted amplitudes are real ``sqrt(T)``, reflected ones ``i sqrt(1 - T)``;
* a full PBS passes H and exchanges V between its two ports with unit amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from noonsim.fock import (
    FockState,
    ModeId,
    ModeRegistry,
    RegistryError,
    SingleParticleUnitary,
    apply_unitary,
)


def _rot(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def jones_waveplate(retardance: float, angle: float) -> np.ndarray:
    """2x2 (H, V) matrix of a retarder with slow axis at ``angle``."""
    return _rot(angle) @ np.diag([1.0, np.exp(-1j * retardance)]) @ _rot(-angle)


def _mixer(t: float, phase: float = 0.0) -> np.ndarray:
    """Two-port coupler on (through, reflect): sqrt(t) e^{i phase} through, i sqrt(1-t) across."""
    a, b = math.sqrt(t), math.sqrt(1.0 - t)
    return np.array(
        [[a * np.exp(1j * phase), 1j * b], [1j * b, a * np.exp(-1j * phase)]],
        dtype=complex,
    )


def _internals(registry: ModeRegistry, *paths: str) -> tuple[int, ...]:
    ks = sorted({k for p in paths for k in registry.internals(p)})
    return tuple(ks) or (0,)


def _check(registry: ModeRegistry, modes):
    for m in modes:
        if m not in registry:
            raise RegistryError(f"element references unregistered mode {m}")


def _block(blocks: list[tuple[tuple[ModeId, ...], np.ndarray]]) -> SingleParticleUnitary:
    modes = tuple(m for ms, _ in blocks for m in ms)
    mat = np.zeros((len(modes), len(modes)), dtype=complex)
    pos = 0
    for ms, b in blocks:
        n = len(ms)
        mat[pos : pos + n, pos : pos + n] = b
        pos += n
    return SingleParticleUnitary(modes, mat)


@dataclass(frozen=True)
class WavePlate:
    retardance: float
    angle: float
    path: str = "main"

    def __post_init__(self):
        if not 0.0 < self.retardance < 2 * math.pi:
            raise ValueError("retardance must lie in (0, 2*pi)")

    @classmethod
    def half(cls, angle: float, path: str = "main") -> WavePlate:
        return cls(math.pi, angle, path)

    @classmethod
    def quarter(cls, angle: float, path: str = "main") -> WavePlate:
        return cls(math.pi / 2, angle, path)

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        return waveplate_unitary(self, registry)


@dataclass(frozen=True)
class PBS:
    """Polarizing beam splitter between ``paths``: H stays, V changes path."""

    paths: tuple[str, str]

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        return pbs_unitary(self.paths, registry)


@dataclass(frozen=True)
class PartialPBS:
    t_H: float = 1.0
    t_V: float = 1.0 / 3.0
    birefringence_phi: float = 0.0
    paths: tuple[str, str] = ("main", "herald")

    def __post_init__(self):
        for t in (self.t_H, self.t_V):
            if not 0.0 <= t <= 1.0:
                raise ValueError("PPBS transmissions must lie in [0, 1]")

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        return ppbs_unitary(self, registry)


@dataclass(frozen=True)
class PolarizationSwap:
    """Exact H <-> V relabeling on one path (mirror plus QWP double pass)."""

    path: str

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        ks = _internals(registry, self.path) if registry else (0,)
        swap = np.array([[0, 1], [1, 0]], dtype=complex)
        blocks = [((ModeId(self.path, "H", k), ModeId(self.path, "V", k)), swap) for k in ks]
        u = _block(blocks)
        if registry is not None:
            _check(registry, u.modes)
        return u


@dataclass(frozen=True)
class PathSwap:
    """Exchange the contents of two paths (used to rename a PBS output port)."""

    paths: tuple[str, str]

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        a, b = self.paths
        ks = _internals(registry, a, b) if registry else (0,)
        swap = np.array([[0, 1], [1, 0]], dtype=complex)
        blocks = [
            ((ModeId(a, pol, k), ModeId(b, pol, k)), swap) for k in ks for pol in "HV"
        ]
        u = _block(blocks)
        if registry is not None:
            _check(registry, u.modes)
        return u


@dataclass(frozen=True)
class Loss:
    mode: ModeId
    transmission: float
    loss_mode: ModeId = ModeId("loss-0", "H")

    def unitary(self, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
        u = loss_element(self.mode, self.transmission, self.loss_mode)
        if registry is not None:
            _check(registry, u.modes)
        return u


def waveplate_unitary(wp: WavePlate, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
    """Retarder on the (H, V) modes of ``wp.path``, block-diagonal over internal labels."""
    ks = _internals(registry, wp.path) if registry else (0,)
    jm = jones_waveplate(wp.retardance, wp.angle)
    u = _block([((ModeId(wp.path, "H", k), ModeId(wp.path, "V", k)), jm) for k in ks])
    if registry is not None:
        _check(registry, u.modes)
    return u


def pbs_unitary(paths: tuple[str, str], registry: ModeRegistry | None = None) -> SingleParticleUnitary:
    a, b = paths
    ks = _internals(registry, a, b) if registry else (0,)
    swap = np.array([[0, 1], [1, 0]], dtype=complex)
    blocks = []
    for k in ks:
        blocks.append(((ModeId(a, "H", k),), np.eye(1)))
        blocks.append(((ModeId(b, "H", k),), np.eye(1)))
        blocks.append(((ModeId(a, "V", k), ModeId(b, "V", k)), swap))
    u = _block(blocks)
    if registry is not None:
        _check(registry, u.modes)
    return u


def ppbs_unitary(p: PartialPBS, registry: ModeRegistry | None = None) -> SingleParticleUnitary:
    """Partial PBS; the birefringence phase rides on transmitted V photons."""
    through, refl = p.paths
    ks = _internals(registry, through, refl) if registry else (0,)
    blocks = []
    for k in ks:
        blocks.append(((ModeId(through, "H", k), ModeId(refl, "H", k)), _mixer(p.t_H)))
        blocks.append(
            ((ModeId(through, "V", k), ModeId(refl, "V", k)), _mixer(p.t_V, p.birefringence_phi))
        )
    u = _block(blocks)
    if registry is not None:
        _check(registry, u.modes)
    return u


def loss_element(mode: ModeId, transmission: float, loss_mode: ModeId) -> SingleParticleUnitary:
    if not 0.0 <= transmission <= 1.0:
        raise ValueError("transmission must lie in [0, 1]")
    return SingleParticleUnitary((mode, loss_mode), _mixer(transmission))


def add_loss(state: FockState, mode: ModeId, transmission: float) -> FockState:
    """Couple ``mode`` to a freshly allocated loss mode."""
    k = sum(1 for m in state.registry.modes if m.path.startswith("loss"))
    loss_mode = ModeId(f"loss-{k}", mode.pol, mode.internal)
    state = state.extend([loss_mode])
    return apply_unitary(state, loss_element(mode, transmission, loss_mode))


def run(state: FockState, elements) -> FockState:
    """Apply elements in list order."""
    for el in elements:
        state = apply_unitary(state, el.unitary(state.registry))
    return state


# --- circuit presets -------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementStage:
    """QWP3, HWP3 (scanned) and PBS3; the PBS3-transmitted H mode feeds the fiber cascade."""

    qwp3: float = math.pi / 4
    hwp3: float = 0.0
    path: str = "main"
    dump: str = "dump"

    def elements(self, hwp3: float | None = None) -> tuple:
        beta = self.hwp3 if hwp3 is None else hwp3
        return (
            WavePlate.quarter(self.qwp3, self.path),
            WavePlate.half(beta, self.path),
            PBS((self.path, self.dump)),
        )

    def measured_modes(self, registry: ModeRegistry) -> tuple[ModeId, ...]:
        return tuple(m for m in registry.path_modes(self.path) if m.pol == "H")


@dataclass(frozen=True)
class CircuitPreset:
    """Ordered element lists plus the herald and measurement specification.

    ``preparation`` runs on the source state, ``conditioning`` follows the
    herald split (QWP2/HWP2); each herald port is a group of modes watched by
    one detector and ``herald_counts`` gives the photon number per port that
    defines success.
    """

    name: str
    registry: ModeRegistry
    preparation: tuple
    herald_ports: tuple[tuple[ModeId, ...], ...]
    herald_counts: tuple[int, ...]
    conditioning: tuple
    measurement: MeasurementStage
    source: object
    overlap: object = None
    delay: float = 0.0
    cascade: object = None
    herald_detectors: tuple = ()
    detectors: tuple = ()
    target_pairs: int = 2
    params: object = field(default=None, compare=False)

    def __post_init__(self):
        for el in self.preparation + self.conditioning + self.measurement.elements():
            el.unitary(self.registry)
        heralded = {m for port in self.herald_ports for m in port}
        for m in heralded:
            if m not in self.registry:
                raise RegistryError(f"herald mode {m} is not registered")
        if heralded & set(self.measurement.measured_modes(self.registry)):
            raise ValueError("herald modes overlap the measured modes")
        if len(self.herald_counts) != len(self.herald_ports):
            raise ValueError("one herald count per herald port")
        if len(self.herald_detectors) != len(self.herald_ports):
            raise ValueError("one herald detector per herald port")
        if self.cascade is not None and len(self.detectors) != self.cascade.n_detectors:
            raise ValueError("one detector model per cascade output")

    @property
    def herald_modes(self) -> tuple[ModeId, ...]:
        return tuple(m for port in self.herald_ports for m in port)

    @property
    def internals(self) -> tuple[int, ...]:
        return tuple(sorted({m.internal for m in self.registry.modes}))


@dataclass(frozen=True)
class Noon3Params:
    """Parameters of the N=3 circuit; angles and phases in radians.

    ``hwp2=None`` means "compensate": HWP2 is set to ``birefringence_phi / 4``.
    """

    t_H: float = 1.0
    t_V: float = 1.0 / 3.0
    birefringence_phi: float = 0.0
    hwp1: float = math.pi / 8
    qwp2: float = math.pi / 4
    hwp2: float | None = None
    qwp3: float = math.pi / 4
    hwp3: float = 0.0
    source: object = None
    overlap: object = None
    delay: float = 0.0
    cascade: object = None
    herald_detector: object = None
    detectors: tuple | None = None

    @property
    def hwp2_angle(self) -> float:
        return self.birefringence_phi / 4 if self.hwp2 is None else self.hwp2


def _defaults(params):
    # late import: sources/detection build on this module
    from noonsim.detection import DetectorModel, SplitterCascade
    from noonsim.sources import PairDistribution

    source = params.source if params.source is not None else PairDistribution("fixed-n", n=2)
    cascade = params.cascade if params.cascade is not None else SplitterCascade()
    det = params.detectors
    if det is None:
        det = tuple(DetectorModel() for _ in range(cascade.n_detectors))
    herald = params.herald_detector if params.herald_detector is not None else DetectorModel()
    return source, cascade, tuple(det), herald


def _front_end(hwp1: float) -> tuple:
    """Source arms to the merged main path: upper H->V, PBS2 merge, HWP1."""
    return (
        PolarizationSwap("upper"),
        PBS(("lower", "upper")),
        PathSwap(("lower", "main")),
        WavePlate.half(hwp1, "main"),
    )


def _needs_internal(overlap, delay: float) -> bool:
    return overlap is not None and overlap.xi_at(delay) < 1.0


def preset_noon3(params: Noon3Params | None = None) -> CircuitPreset:
    params = params or Noon3Params()
    source, cascade, dets, herald = _defaults(params)
    internals = (0, 1) if _needs_internal(params.overlap, params.delay) else (0,)
    registry = ModeRegistry.for_paths(
        ("upper", "lower", "main", "herald", "dump"), internals
    )
    ppbs = PartialPBS(params.t_H, params.t_V, params.birefringence_phi, ("main", "herald"))
    return CircuitPreset(
        name="noon3",
        registry=registry,
        preparation=_front_end(params.hwp1) + (ppbs,),
        herald_ports=(tuple(registry.path_modes("herald")),),
        herald_counts=(1,),
        conditioning=(
            WavePlate.quarter(params.qwp2, "main"),
            WavePlate.half(params.hwp2_angle, "main"),
        ),
        measurement=MeasurementStage(params.qwp3, params.hwp3),
        source=source,
        overlap=params.overlap,
        delay=params.delay,
        cascade=cascade,
        herald_detectors=(herald,),
        detectors=dets,
        target_pairs=2,
        params=params,
    )


@dataclass(frozen=True)
class Noon4Params:
    """N=4 extension: two partial PBSs (V reflectance 1/3, H reflectance 0) with a HWP at 45 deg between."""

    t_H: float = 1.0
    t_V: float = 2.0 / 3.0
    birefringence_phi: float = 0.0
    hwp1: float = math.pi / 8
    middle_hwp: float = math.pi / 4
    qwp2: float = math.pi / 4
    hwp2: float = 0.0
    qwp3: float = math.pi / 4
    hwp3: float = 0.0
    source: object = None
    overlap: object = None
    delay: float = 0.0
    cascade: object = None
    herald_detector: object = None
    detectors: tuple | None = None


def preset_noon4(params: Noon4Params | None = None) -> CircuitPreset:
    from noonsim.sources import PairDistribution

    params = params or Noon4Params()
    if params.source is None:
        params = replace(params, source=PairDistribution("fixed-n", n=3))
    source, cascade, dets, herald = _defaults(params)
    internals = (0, 1) if _needs_internal(params.overlap, params.delay) else (0,)
    registry = ModeRegistry.for_paths(
        ("upper", "lower", "main", "herald-1", "herald-2", "dump"), internals
    )
    ppbs_a = PartialPBS(params.t_H, params.t_V, params.birefringence_phi, ("main", "herald-1"))
    ppbs_b = PartialPBS(params.t_H, params.t_V, params.birefringence_phi, ("main", "herald-2"))
    return CircuitPreset(
        name="noon4",
        registry=registry,
        preparation=_front_end(params.hwp1)
        + (ppbs_a, WavePlate.half(params.middle_hwp, "main"), ppbs_b),
        herald_ports=(
            tuple(registry.path_modes("herald-1")),
            tuple(registry.path_modes("herald-2")),
        ),
        herald_counts=(1, 1),
        conditioning=(
            WavePlate.quarter(params.qwp2, "main"),
            WavePlate.half(params.hwp2, "main"),
        ),
        measurement=MeasurementStage(params.qwp3, params.hwp3),
        source=source,
        overlap=params.overlap,
        delay=params.delay,
        cascade=cascade,
        herald_detectors=(herald, herald),
        detectors=dets,
        target_pairs=3,
        params=params,
    )


PRESETS = {"noon3": preset_noon3, "noon4": preset_noon4}
