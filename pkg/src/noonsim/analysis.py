"""Fringe fitting, background subtraction, fidelity bounds and source figures of merit."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np
from scipy import stats

from noonsim.detection import FringeTable, count_distribution, prepared_state
from noonsim.elements import (
    CircuitPreset,
    PBS,
    PathSwap,
    PolarizationSwap,
    WavePlate,
    run,
)
from noonsim.fock import ModeId, ModeRegistry, inner
from noonsim.sources import OverlapModel, apply_overlap, pair_state


class RankDeficientError(np.linalg.LinAlgError):
    pass


class NegativeRateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FitResult:
    offset: float
    amplitude: float
    phase: float
    frequency: int
    visibility: float
    offset_err: float
    amplitude_err: float
    phase_err: float
    visibility_err: float
    chi2: float
    dof: int

    def __post_init__(self):
        for f in fields(self):
            cast = int if f.name in ("frequency", "dof") else float
            object.__setattr__(self, f.name, cast(getattr(self, f.name)))

    @property
    def exceeds_unity(self) -> bool:
        """Visibility more than 3 sigma (and more than rounding) above 1."""
        return self.visibility > 1.0 + max(3.0 * self.visibility_err, 1e-9)

    def model(self, x) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(self.frequency * np.asarray(x) - self.phase)

    def to_record(self) -> str:
        keys = (
            "frequency", "offset", "offset_err", "amplitude", "amplitude_err",
            "phase", "phase_err", "visibility", "visibility_err", "chi2", "dof",
        )
        lines = [f"{k} = {getattr(self, k)!r}" for k in keys]
        lines.append(f"exceeds_unity = {self.exceeds_unity}")
        return "\n".join(lines) + "\n"


def fit_fixed_freq(
    phases: Sequence[float],
    counts: Sequence[float],
    k: int,
    weights: str = "poisson",
) -> FitResult:
    """Weighted linear least squares of ``C + a cos(kx) + b sin(kx)``.

    ``phases`` in radians. Poisson weights are 1/max(count, 1) with the
    covariance taken as absolute; uniform weights scale the covariance by the
    residual variance.
    """
    x = np.asarray(phases, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("phases and counts must be 1-D arrays of equal length")
    if len(x) < 4:
        raise ValueError("need at least 4 points")
    if weights == "poisson":
        w = 1.0 / np.maximum(y, 1.0)
    elif weights == "uniform":
        w = np.ones_like(y)
    else:
        raise ValueError(f"unknown weighting {weights!r}")

    X = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    sw = np.sqrt(w)
    if np.linalg.matrix_rank(X * sw[:, None]) < 3:
        raise RankDeficientError("design matrix is singular for these phases")
    beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ beta
    chi2 = float(np.sum(w * resid**2))
    dof = len(x) - 3
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    if weights == "uniform":
        cov = cov * (chi2 / dof if dof > 0 else 0.0)

    c0, ca, cb = beta
    amp = math.hypot(ca, cb)
    phase = math.atan2(cb, ca)
    if amp > 0:
        j_amp = np.array([0.0, ca / amp, cb / amp])
        j_phase = np.array([0.0, -cb / amp**2, ca / amp**2])
        amp_err = math.sqrt(max(j_amp @ cov @ j_amp, 0.0))
        phase_err = math.sqrt(max(j_phase @ cov @ j_phase, 0.0))
    else:
        amp_err = math.sqrt(max((cov[1, 1] + cov[2, 2]) / 2, 0.0))
        phase_err = math.inf
        j_amp = np.zeros(3)
    vis = amp / c0 if c0 != 0 else math.nan  # no signal, visibility undefined
    if c0 != 0:
        j_vis = j_amp / c0 - np.array([amp / c0**2, 0.0, 0.0])
        vis_err = math.sqrt(max(j_vis @ cov @ j_vis, 0.0))
    else:
        vis_err = math.nan
    return FitResult(
        offset=float(c0),
        amplitude=amp,
        phase=phase,
        frequency=k,
        visibility=vis,
        offset_err=math.sqrt(max(cov[0, 0], 0.0)),
        amplitude_err=amp_err,
        phase_err=phase_err,
        visibility_err=vis_err,
        chi2=chi2,
        dof=dof,
    )


def fit_column(table: FringeTable, column: str, k: int, weights: str | None = None) -> FitResult:
    """Fit one table column against its phase axis; counts get Poisson weights by default."""
    y = table.column(column)
    if weights is None:
        weights = "poisson" if column.startswith("c_") else "uniform"
    return fit_fixed_freq(np.radians(table.phase_deg), y, k, weights)


def subtract_triple_pair(fringe: FringeTable, herald_singles_prob: float) -> FringeTable:
    """Remove the accidental (herald singles x unheralded threefold) background from the fourfold column."""
    if not 0.0 <= herald_singles_prob <= 1.0:
        raise ValueError("herald_singles_prob must lie in [0, 1]")
    if herald_singles_prob == 0.0:
        return replace(fringe)

    def corrected(four, three):
        four = np.asarray(four, dtype=float)
        raw = four - herald_singles_prob * np.asarray(three, dtype=float)
        clipped = np.clip(raw, 0.0, None)
        removed = clipped - raw
        bad = removed > 0.05 * np.abs(four)
        if bad.any():
            warnings.warn(
                f"clamping removed more than 5% at {int(bad.sum())} point(s)",
                NegativeRateWarning,
                stacklevel=3,
            )
        return clipped

    p4 = corrected(fringe.p_fourfold, fringe.p_threefold_unheralded)
    c4 = fringe.c_fourfold
    if c4 is not None:
        c4 = np.rint(corrected(c4, fringe.c_threefold_unheralded)).astype(np.int64)
    return replace(fringe, p_fourfold=p4, c_fourfold=c4)


@dataclass(frozen=True)
class FidelityBound:
    value: float
    visibility: float
    population: float
    model: str


FIDELITY_MODEL = (
    "noon-subspace: population P in {|N,0>,|0,N>}, coherence magnitude V*P/2 "
    "read off the N-photon fringe, ideal state phase-matched to the fringe; "
    "F >= P*(1+V)/2"
)


def fidelity_lower_bound(visibility: float, population: float = 1.0) -> FidelityBound:
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if not 0.0 <= population <= 1.0:
        raise ValueError("population must lie in [0, 1]")
    return FidelityBound(population * (1.0 + visibility) / 2.0, visibility, population, FIDELITY_MODEL)


@dataclass(frozen=True)
class FomInput:
    scheme: str = "double-pair"
    gamma: float = 0.01
    alpha: float | None = None

    def __post_init__(self):
        if self.scheme not in ("double-pair", "pair-plus-coherent"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.scheme == "pair-plus-coherent" and not (self.alpha and self.alpha > 0):
            raise ValueError("pair-plus-coherent needs alpha > 0")


@dataclass(frozen=True)
class FomResult:
    ratio: float
    p_exact: float
    p_excess: float


def fom_approx(f: FomInput) -> FomResult:
    """Leading-order probabilities: gamma^2 vs gamma^3, or gamma*alpha vs gamma^2 + gamma*alpha^2/2."""
    g = f.gamma
    if f.scheme == "double-pair":
        p0, pex = g**2, g**3
    else:
        a = f.alpha
        p0, pex = g * a, g**2 + g * a**2 / 2
    return FomResult(p0 / pex, p0, pex)


def fom_ratio_approx(f: FomInput) -> float:
    if f.scheme == "double-pair":
        return 1.0 / f.gamma
    return 1.0 / (f.gamma / f.alpha + f.alpha / 2.0)


def _pair_pmf_sf(kind: str, g: float):
    """(pmf(n), sf(n) = P(N > n)) for the pair-number law."""
    if kind == "thermal":
        return (lambda n: (1 - g) * g**n), (lambda n: g ** (n + 1))
    if kind == "poissonian":
        return (lambda n: stats.poisson.pmf(n, g)), (lambda n: stats.poisson.sf(n, g))
    raise ValueError(f"unknown pair distribution kind {kind!r}")


def fom_exact(f: FomInput, kind: str = "thermal") -> FomResult:
    """Enumerate source outcomes.

    Double pair: exact means 2 pairs, surplus means 3 or more.  Pair plus
    coherent: exact means 1 pair and 1 coherent photon; surplus means at
    least one pair and four or more photons in total.  Tails are summed in
    closed form.
    """
    pmf, sf = _pair_pmf_sf(kind, f.gamma)
    if f.scheme == "double-pair":
        p0 = pmf(2)
        pex = sf(2)
    else:
        a = f.alpha
        c0, c1 = math.exp(-a), a * math.exp(-a)
        p0 = pmf(1) * c1
        # P(n >= 1) minus the (n = 1, m <= 1) outcomes
        pex = sf(0) - pmf(1) * (c0 + c1)
    return FomResult(float(p0 / pex), float(p0), float(pex))


def fom_ratio_exact(f: FomInput, kind: str = "thermal") -> float:
    return fom_exact(f, kind).ratio


# --- calibration scans ---------------------------------------------------------


def hom_scan(om: OverlapModel, delays: Sequence[float]) -> list[tuple[float, float]]:
    """Two-photon coincidence (one H and one V after HWP1 at 22.5 deg) vs delay.

    One photon per arm, the upper one flipped to V and merged at PBS2; the
    half-wave plate then acts as a balanced mixer between H and V.
    """
    registry = ModeRegistry.for_paths(("upper", "lower", "main"), (0, 1))
    optics = (
        PolarizationSwap("upper"),
        PBS(("lower", "upper")),
        PathSwap(("lower", "main")),
        WavePlate.half(math.pi / 8, "main"),
    )
    h = [ModeId("main", "H", k) for k in (0, 1)]
    v = [ModeId("main", "V", k) for k in (0, 1)]
    out = []
    for tau in delays:
        st = apply_overlap(pair_state(1, registry), om, tau)
        st = run(st, optics)
        dist = count_distribution(st, [h, v])
        out.append((float(tau), dist.get((1, 1), 0.0)))
    return out


def hom_visibility(scan: Sequence[tuple[float, float]], plateau: float = 0.5) -> float:
    return 1.0 - min(p for _, p in scan) / plateau


def hwp2_calibration_preset(preset: CircuitPreset, hwp2: float) -> CircuitPreset:
    """Copy of ``preset`` with HWP2 at ``hwp2`` rad and QWP3/HWP3 both at 0."""
    qwp2, _ = preset.conditioning
    return replace(
        preset,
        conditioning=(qwp2, WavePlate.half(hwp2, qwp2.path)),
        measurement=replace(preset.measurement, qwp3=0.0, hwp3=0.0),
    )


class _Hwp2Scanner:
    """Fourfold probability vs HWP2 angle, reusing the post-herald state."""

    def __init__(self, preset: CircuitPreset):
        from noonsim.detection import click_pattern_distribution

        self._cpd = click_pattern_distribution
        self.preset = preset
        qwp2 = preset.conditioning[0]
        self.path = qwp2.path
        bare = replace(preset, conditioning=())
        self.sectors = [
            (w, run(prepared_state(bare, n), (qwp2,))) for n, w in preset.source.sectors()
        ]
        self.stage = replace(preset.measurement, qwp3=0.0, hwp3=0.0)

    def __call__(self, hwp2: float) -> float:
        p = self.preset
        total = 0.0
        for w, st in self.sectors:
            st = run(st, (WavePlate.half(hwp2, self.path),) + self.stage.elements())
            meas = self.stage.measured_modes(st.registry)
            joint = count_distribution(st, list(p.herald_ports) + [meas])
            dist = self._cpd(joint, p.herald_detectors, p.cascade, p.detectors)
            total += w * sum(v for pat, v in dist.items() if all(pat))
        return total


def hwp2_calibration_scan(preset: CircuitPreset, hwp2_deg: Sequence[float]) -> list[tuple[float, float]]:
    """Heralded fourfold probability vs HWP2 angle (degrees), QWP3 and HWP3 at 0."""
    scanner = _Hwp2Scanner(preset)
    return [(float(a), scanner(math.radians(a))) for a in hwp2_deg]


def hwp2_extrema(
    preset: CircuitPreset, lo_deg: float = 0.0, hi_deg: float = 90.0, step_deg: float = 0.01
) -> list[tuple[float, str]]:
    """Locate HWP2 extrema: grid search, then a root of the symmetric difference.

    For a function even about its extremum, f(t + h) - f(t - h) vanishes
    exactly there, so the bracketed root is insensitive to the step h.
    """
    from scipy.optimize import brentq

    scanner = _Hwp2Scanner(preset)
    grid = np.arange(lo_deg - step_deg, hi_deg + 2 * step_deg, step_deg)
    vals = np.array([scanner(math.radians(a)) for a in grid])
    h = math.radians(0.5)

    def g(deg):
        t = math.radians(deg)
        return scanner(t + h) - scanner(t - h)

    found = []
    for i in range(1, len(grid) - 1):
        left, mid, right = vals[i - 1], vals[i], vals[i + 1]
        kind = None
        if mid >= left and mid > right or mid > left and mid >= right:
            kind = "max"
        elif mid <= left and mid < right or mid < left and mid <= right:
            kind = "min"
        if kind is None:
            continue
        a, b = grid[i - 1], grid[i + 1]
        ga, gb = g(a), g(b)
        if ga == 0.0:
            root = a
        elif gb == 0.0:
            root = b
        elif ga * gb < 0:
            root = brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        else:
            root = grid[i]
        if lo_deg - 1e-6 <= root <= hi_deg + 1e-6 and not any(
            abs(root - r) < step_deg for r, _ in found
        ):
            found.append((float(root), kind))
    return found


def noon_fidelity(state, n: int, path: str = "main", relative_phase: float | None = None) -> float:
    """|<NOON|state>|^2 for (|n,0> + e^{i chi}|0,n>)/sqrt(2) on ``path``.

    With ``relative_phase=None`` chi is chosen to maximize the overlap.
    """
    a = state.amplitude({ModeId(path, "H"): n})
    b = state.amplitude({ModeId(path, "V"): n})
    if relative_phase is None:
        return (abs(a) + abs(b)) ** 2 / 2.0
    return abs(a + np.exp(-1j * relative_phase) * b) ** 2 / 2.0


def fidelity_with(state, target) -> float:
    return abs(inner(target, state)) ** 2
