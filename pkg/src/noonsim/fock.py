"""Sparse bosonic Fock states over named polarization modes.

A state is a mapping from occupation vectors (one count per registered mode)
to complex amplitudes. Linear optics acts on it through single-particle
unitaries: every creation operator ``a_i^dag`` is replaced by
``sum_j U[j, i] a_j^dag`` and the resulting monomials are re-expanded. The
expansion is done on the acted-on sub-occupation only and cached, so the cost
scales with the number of stored terms rather than the full basis size.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PRUNE_THRESHOLD = 1e-14
DEFAULT_N_MAX = 8
UNITARITY_TOL = 1e-12

_PATH_RE = re.compile(r"^(upper|lower|main|herald|dump|loss|detector)(-\d+)?$")


class FockError(ValueError):
    """Base class for state-algebra errors."""


class TruncationError(FockError):
    pass


class RegistryError(FockError):
    """Unregistered mode or mismatched registries."""


@dataclass(frozen=True, order=True)
class ModeId:
    """One bosonic mode: spatial path, polarization and internal (temporal) label."""

    path: str
    pol: str
    internal: int = 0

    def __post_init__(self):
        if not _PATH_RE.match(self.path):
            raise ValueError(f"unknown path label {self.path!r}")
        if self.pol not in ("H", "V"):
            raise ValueError(f"polarization must be 'H' or 'V', got {self.pol!r}")
        if self.internal < 0:
            raise ValueError("internal label must be non-negative")

    def __str__(self):
        s = f"{self.path}-{self.pol}"
        return s if self.internal == 0 else f"{s}#{self.internal}"


@dataclass(frozen=True)
class ModeRegistry:
    """Ordered, duplicate-free collection of modes; fixes the occupation-vector layout."""

    modes: tuple[ModeId, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(set(self.modes)) != len(self.modes):
            raise RegistryError("mode registered more than once")

    @classmethod
    def for_paths(cls, paths: Iterable[str], internals: Iterable[int] = (0,)) -> ModeRegistry:
        internals = tuple(internals)
        return cls(tuple(ModeId(p, pol, k) for k in internals for p in paths for pol in "HV"))

    @cached_property
    def _index(self) -> dict[ModeId, int]:
        return {m: i for i, m in enumerate(self.modes)}

    def __len__(self):
        return len(self.modes)

    def __contains__(self, mode):
        return mode in self._index

    def index(self, mode: ModeId) -> int:
        try:
            return self._index[mode]
        except KeyError:
            raise RegistryError(f"mode {mode} is not registered") from None

    def internals(self, path: str) -> tuple[int, ...]:
        return tuple(sorted({m.internal for m in self.modes if m.path == path}))

    def path_modes(self, path: str) -> tuple[ModeId, ...]:
        return tuple(m for m in self.modes if m.path == path)

    def extend(self, modes: Iterable[ModeId]) -> ModeRegistry:
        new = [m for m in modes if m not in self._index]
        return ModeRegistry(self.modes + tuple(dict.fromkeys(new)))

    def without(self, modes: Iterable[ModeId]) -> ModeRegistry:
        drop = set(modes)
        return ModeRegistry(tuple(m for m in self.modes if m not in drop))


@dataclass(frozen=True)
class SingleParticleUnitary:
    """Unitary acting on the one-photon subspace of ``modes``.

    Column ``i`` of ``matrix`` is the image of a photon entering ``modes[i]``.
    """

    modes: tuple[ModeId, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "matrix", m)
        k = len(self.modes)
        if m.shape != (k, k):
            raise ValueError(f"matrix shape {m.shape} does not match {k} modes")
        if len(set(self.modes)) != k:
            raise ValueError("repeated mode in unitary")
        dev = np.max(np.abs(m.conj().T @ m - np.eye(k))) if k else 0.0
        if dev > UNITARITY_TOL:
            raise ValueError(f"matrix is not unitary (deviation {dev:.2e})")

    def compose(self, first: SingleParticleUnitary) -> SingleParticleUnitary:
        """Return ``self . first`` (apply ``first``, then ``self``) on the union of modes."""
        modes = tuple(dict.fromkeys(first.modes + self.modes))
        return SingleParticleUnitary(modes, self._embed(modes) @ first._embed(modes))

    def _embed(self, modes: Sequence[ModeId]) -> np.ndarray:
        pos = [modes.index(m) for m in self.modes]
        out = np.eye(len(modes), dtype=complex)
        out[np.ix_(pos, pos)] = self.matrix
        return out


@dataclass(frozen=True)
class FockState:
    registry: ModeRegistry
    amps: Mapping[tuple[int, ...], complex] = field(default_factory=dict)
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        width = len(self.registry)
        for occ in self.amps:
            if len(occ) != width:
                raise RegistryError("occupation vector length does not match registry")
            if sum(occ) > self.n_max:
                raise TruncationError(f"{sum(occ)} photons exceed n_max={self.n_max}")

    @classmethod
    def from_terms(
        cls,
        registry: ModeRegistry,
        terms: Iterable[tuple[Mapping[ModeId, int], complex]],
        n_max: int = DEFAULT_N_MAX,
    ) -> FockState:
        amps: dict[tuple[int, ...], complex] = defaultdict(complex)
        for occ, amp in terms:
            amps[_occupation(registry, occ)] += amp
        return cls(registry, _pruned(amps), n_max)

    def __len__(self):
        return len(self.amps)

    def norm_sq(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.amps.values())

    def normalized(self) -> FockState:
        n = math.sqrt(self.norm_sq())
        if n == 0:
            raise FockError("cannot normalize the zero vector")
        return FockState(self.registry, {k: a / n for k, a in self.amps.items()}, self.n_max)

    def amplitude(self, occupation: Mapping[ModeId, int]) -> complex:
        return self.amps.get(_occupation(self.registry, occupation), 0j)

    def photon_numbers(self) -> set[int]:
        return {sum(k) for k in self.amps}

    def extend(self, modes: Iterable[ModeId]) -> FockState:
        """Embed into a registry with extra (empty) modes appended."""
        reg = self.registry.extend(modes)
        pad = (0,) * (len(reg) - len(self.registry))
        return FockState(reg, {k + pad: a for k, a in self.amps.items()}, self.n_max)

    def __str__(self):
        terms = sorted(self.amps.items(), key=lambda kv: -abs(kv[1]))
        names = [str(m) for m in self.registry.modes]
        parts = []
        for occ, a in terms:
            ket = ",".join(f"{names[i]}:{n}" for i, n in enumerate(occ) if n)
            parts.append(f"({a.real:+.6f}{a.imag:+.6f}j)|{ket or 'vac'}>")
        return " ".join(parts) or "0"


def _occupation(registry: ModeRegistry, occ: Mapping[ModeId, int]) -> tuple[int, ...]:
    vec = [0] * len(registry)
    for m, n in occ.items():
        if n < 0:
            raise ValueError("negative photon count")
        vec[registry.index(m)] += int(n)
    return tuple(vec)


def _pruned(amps: Mapping[tuple[int, ...], complex]) -> dict[tuple[int, ...], complex]:
    return {k: complex(a) for k, a in amps.items() if abs(a) >= PRUNE_THRESHOLD}


def basis_state(
    occupation: Mapping[ModeId, int],
    registry: ModeRegistry | None = None,
    n_max: int = DEFAULT_N_MAX,
) -> FockState:
    """Single normalized occupation-number ket.

    Without an explicit registry, one is built from the keys of ``occupation``.
    """
    if registry is None:
        registry = ModeRegistry(tuple(occupation))
    total = sum(occupation.values())
    if total > n_max:
        raise TruncationError(f"{total} photons exceed n_max={n_max}")
    return FockState(registry, {_occupation(registry, occupation): 1.0 + 0j}, n_max)


def vacuum(registry: ModeRegistry, n_max: int = DEFAULT_N_MAX) -> FockState:
    return FockState(registry, {(0,) * len(registry): 1.0 + 0j}, n_max)


def inner(a: FockState, b: FockState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.registry != b.registry:
        raise RegistryError("states live on different mode registries")
    small, big = (a.amps, b.amps) if len(a.amps) <= len(b.amps) else (b.amps, a.amps)
    total = 0j
    for k in small:
        if k in big:
            total += a.amps[k].conjugate() * b.amps[k]
    return total


def _expand_monomial(n_in: tuple[int, ...], cols: list[list[tuple[int, complex]]]):
    """Image of the normalized sub-ket |n_in> under the lifted unitary.

    Multiplies out prod_i (sum_j U_ji x_j)^{n_i} and converts monomial
    coefficients to ket amplitudes with the factorial weights.
    """
    k = len(n_in)
    poly: dict[tuple[int, ...], complex] = {(0,) * k: 1.0 + 0j}
    for i, n in enumerate(n_in):
        for _ in range(n):
            nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
            for exps, c in poly.items():
                for j, u in cols[i]:
                    e = list(exps)
                    e[j] += 1
                    nxt[tuple(e)] += c * u
            poly = nxt
    in_weight = math.prod(math.factorial(n) for n in n_in)
    return [
        (exps, c * math.sqrt(math.prod(math.factorial(m) for m in exps) / in_weight))
        for exps, c in poly.items()
        if c != 0
    ]


def apply_unitary(state: FockState, u: SingleParticleUnitary) -> FockState:
    idx = [state.registry.index(m) for m in u.modes]
    cols = [
        [(j, complex(u.matrix[j, i])) for j in range(len(idx)) if u.matrix[j, i] != 0]
        for i in range(len(idx))
    ]
    cache: dict[tuple[int, ...], list] = {}
    out: dict[tuple[int, ...], complex] = defaultdict(complex)
    for occ, amp in state.amps.items():
        sub = tuple(occ[i] for i in idx)
        image = cache.get(sub)
        if image is None:
            image = cache[sub] = _expand_monomial(sub, cols)
        base = list(occ)
        for sub_out, c in image:
            for i, n in zip(idx, sub_out):
                base[i] = n
            out[tuple(base)] += amp * c
    return FockState(state.registry, _pruned(out), state.n_max)


def _as_modes(mode: ModeId | Iterable[ModeId]) -> tuple[ModeId, ...]:
    return (mode,) if isinstance(mode, ModeId) else tuple(mode)


def project_count(
    state: FockState, mode: ModeId | Iterable[ModeId], n: int
) -> FockState:
    """Unnormalized projection onto ``n`` photons in ``mode`` (summed over a mode group).

    The projected modes are dropped from the registry of the result.
    """
    modes = _as_modes(mode)
    idx = [state.registry.index(m) for m in modes]
    drop = set(idx)
    keep = [i for i in range(len(state.registry)) if i not in drop]
    out: dict[tuple[int, ...], complex] = defaultdict(complex)
    for occ, amp in state.amps.items():
        if sum(occ[i] for i in idx) == n:
            out[tuple(occ[i] for i in keep)] += amp
    return FockState(state.registry.without(modes), dict(out), state.n_max)


def condition_exact_count(
    state: FockState, mode: ModeId | Iterable[ModeId], n: int
) -> tuple[FockState, float]:
    """Post-select on exactly ``n`` photons in ``mode``.

    Returns the renormalized conditional state and the branch probability.
    A branch with probability below 1e-14 comes back as an empty state with
    probability 0.0 rather than raising.
    """
    kept = project_count(state, mode, n)
    p = kept.norm_sq()
    if p < 1e-14:
        return FockState(kept.registry, {}, state.n_max), 0.0
    return kept.normalized(), p


def count_distribution(
    state: FockState, groups: Sequence[ModeId | Iterable[ModeId]]
) -> dict[tuple[int, ...], float]:
    """Joint distribution of the total photon number in each mode group."""
    idx = [[state.registry.index(m) for m in _as_modes(g)] for g in groups]
    dist: dict[tuple[int, ...], float] = defaultdict(float)
    for occ, amp in state.amps.items():
        dist[tuple(sum(occ[i] for i in g) for g in idx)] += abs(amp) ** 2
    return dict(dist)


def marginal_distribution(
    state: FockState, observed: Iterable[ModeId]
) -> dict[tuple[int, ...], float]:
    """Occupation probabilities of ``observed`` modes, traced over the rest.

    Keys follow registry order when ``observed`` is a set, otherwise the given order.
    """
    if isinstance(observed, (set, frozenset)):
        observed = sorted(observed, key=state.registry.index)
    return count_distribution(state, [(m,) for m in observed])


def monomial_coefficients(state: FockState) -> dict[tuple[int, ...], complex]:
    """Coefficients of the creation-operator monomials: amplitude / sqrt(prod n!)."""
    return {
        occ: a / math.sqrt(math.prod(math.factorial(n) for n in occ))
        for occ, a in state.amps.items()
    }
