"""Photon sources: SPDC pair-number statistics, weak coherent pulses, partial distinguishability."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from noonsim.fock import (
    DEFAULT_N_MAX,
    FockState,
    ModeId,
    ModeRegistry,
    TruncationError,
    apply_unitary,
    SingleParticleUnitary,
    _pruned,
)

KINDS = ("thermal", "poissonian", "fixed-n")

UPPER_H = ModeId("upper", "H")
LOWER_H = ModeId("lower", "H")


@dataclass(frozen=True)
class PairDistribution:
    """Per-pulse pair-number statistics.

    ``thermal``: w_n = (1 - gamma) gamma^n.  ``poissonian``: mean gamma.
    ``fixed-n``: exactly ``n`` pairs.  Weights are truncated at
    ``n_max_pairs`` and renormalized.
    """

    kind: str = "thermal"
    gamma: float = 0.0
    n: int = 2
    n_max_pairs: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pair distribution kind {self.kind!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.n < 0 or self.n_max_pairs < 0:
            raise ValueError("pair numbers must be non-negative")
        if self.kind == "fixed-n" and self.n > self.n_max_pairs:
            object.__setattr__(self, "n_max_pairs", self.n)

    def weights(self) -> np.ndarray:
        ns = np.arange(self.n_max_pairs + 1)
        if self.kind == "fixed-n":
            w = (ns == self.n).astype(float)
        elif self.kind == "thermal":
            w = (1.0 - self.gamma) * self.gamma ** ns
        else:
            w = np.array([math.exp(-self.gamma) * self.gamma**k / math.factorial(k) for k in ns])
        return w / w.sum()

    def sectors(self):
        """(pair number, weight) for every populated pair number."""
        return [(int(k), float(w)) for k, w in enumerate(self.weights()) if w > 0.0]


@dataclass(frozen=True)
class OverlapModel:
    """Wave-packet overlap between lower- and upper-path photons vs relative delay."""

    xi: float = 1.0
    tau_c: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("xi must lie in [0, 1]")
        if self.tau_c <= 0:
            raise ValueError("tau_c must be positive")

    def xi_at(self, tau: float) -> float:
        return self.xi * math.exp(-((tau / self.tau_c) ** 2))


def _registry_with(registry: ModeRegistry | None, *modes: ModeId) -> ModeRegistry:
    if registry is None:
        return ModeRegistry(modes)
    return registry


def spdc_state(
    dist: PairDistribution,
    registry: ModeRegistry | None = None,
    n_max: int = DEFAULT_N_MAX,
) -> FockState:
    """sum_n sqrt(w_n) |n>_(upper,H) |n>_(lower,H)."""
    if 2 * dist.n_max_pairs > n_max and dist.kind != "fixed-n":
        raise TruncationError(
            f"{dist.n_max_pairs} pairs need {2 * dist.n_max_pairs} photons > n_max={n_max}"
        )
    if dist.kind == "fixed-n" and 2 * dist.n > n_max:
        raise TruncationError(f"{2 * dist.n} photons exceed n_max={n_max}")
    registry = _registry_with(registry, UPPER_H, LOWER_H)
    iu, il = registry.index(UPPER_H), registry.index(LOWER_H)
    amps = {}
    for n, w in dist.sectors():
        occ = [0] * len(registry)
        occ[iu] = occ[il] = n
        amps[tuple(occ)] = complex(math.sqrt(w))
    return FockState(registry, _pruned(amps), n_max)


def pair_state(n: int, registry: ModeRegistry, n_max: int = DEFAULT_N_MAX) -> FockState:
    """Exactly ``n`` pairs: |n>_(upper,H) |n>_(lower,H)."""
    return spdc_state(PairDistribution("fixed-n", n=n), registry, n_max)


def coherent_pulse(
    alpha: float,
    mode: ModeId,
    registry: ModeRegistry | None = None,
    n_max: int = DEFAULT_N_MAX,
) -> FockState:
    """Coherent state with mean photon number ``alpha``, truncated at ``n_max`` and renormalized."""
    if alpha < 0:
        raise ValueError("mean photon number must be non-negative")
    registry = _registry_with(registry, mode)
    i = registry.index(mode)
    amps = {}
    for n in range(n_max + 1):
        occ = [0] * len(registry)
        occ[i] = n
        amps[tuple(occ)] = complex(math.sqrt(math.exp(-alpha) * alpha**n / math.factorial(n)))
    return FockState(registry, _pruned(amps), n_max).normalized()


def overlap_unitary(xi: float, registry: ModeRegistry, path: str = "lower") -> SingleParticleUnitary:
    s = math.sqrt(max(0.0, 1.0 - xi * xi))
    block = np.array([[xi, -s], [s, xi]], dtype=complex)
    modes, mat = [], np.zeros((4, 4), dtype=complex)
    for j, pol in enumerate("HV"):
        modes += [ModeId(path, pol, 0), ModeId(path, pol, 1)]
        mat[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = block
    return SingleParticleUnitary(tuple(modes), mat)


def apply_overlap(
    state: FockState, om: OverlapModel, tau: float = 0.0, path: str = "lower"
) -> FockState:
    """Rewrite every ``path`` photon as xi(tau) |internal 0> + sqrt(1 - xi^2) |internal 1>.

    Internal-1 modes are appended to the registry when missing.
    """
    xi = om.xi_at(tau)
    if xi == 1.0:
        return state
    extra = [ModeId(path, pol, k) for k in (0, 1) for pol in "HV"]
    if any(m not in state.registry for m in extra):
        state = state.extend(extra)
    return apply_unitary(state, overlap_unitary(xi, state.registry, path))
