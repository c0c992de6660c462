"""Click detectors, the fiber-splitter cascade, heralding, and fringe tables.

The cascade is handled probabilistically: every photon leaving PBS3 is routed
to detector ``i`` with probability ``p_i`` and registered with that
detector's efficiency. For a set ``T`` of detectors the probability that none
of them fires given ``n`` photons is

    prod_{i in T} (1 - dark_i) * (1 - sum_{i in T} p_i eta_i) ** n

and every click-pattern probability follows by inclusion-exclusion.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from noonsim.elements import CircuitPreset, run
from noonsim.fock import (
    FockError,
    FockState,
    ModeId,
    condition_exact_count,
    count_distribution,
    project_count,
)
from noonsim.sources import apply_overlap, pair_state


class ZeroProbabilityBranch(FockError):
    pass


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    dark_prob: float = 0.0
    number_resolving: bool = False

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError("dark_prob must lie in [0, 1)")

    def click_prob(self, n: int) -> float:
        return 1.0 - (1.0 - self.dark_prob) * (1.0 - self.efficiency) ** n

    def count_prob(self, k: int, n: int) -> float:
        """Number-resolving response: binomial detection plus at most one dark count."""

        def binom(j):
            if j < 0 or j > n:
                return 0.0
            return math.comb(n, j) * self.efficiency**j * (1 - self.efficiency) ** (n - j)

        return (1 - self.dark_prob) * binom(k) + self.dark_prob * binom(k - 1)


@dataclass(frozen=True)
class SplitterCascade:
    """Chain of two-way fiber couplers; ``ratios[i]`` is the fraction dropped to detector i.

    The last detector receives whatever passes all couplers. Detector labels
    start at ``first_label`` (SPC2 in the experiment).
    """

    ratios: tuple[float, ...] = (0.43, 0.43)
    first_label: int = 2

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if any(not 0.0 <= r <= 1.0 for r in self.ratios):
            raise ValueError("splitting ratios must lie in [0, 1]")

    @property
    def n_detectors(self) -> int:
        return len(self.ratios) + 1

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(self.first_label, self.first_label + self.n_detectors))

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(cascade_probs(self))


def cascade_probs(c: SplitterCascade) -> list[float]:
    out, remaining = [], 1.0
    for r in c.ratios:
        out.append(remaining * r)
        remaining *= 1.0 - r
    out.append(remaining)
    return out


def _as_dets(det, k: int) -> tuple[DetectorModel, ...]:
    if isinstance(det, DetectorModel):
        return (det,) * k
    det = tuple(det)
    if len(det) != k:
        raise ValueError(f"expected {k} detector models, got {len(det)}")
    return det


def _silent(subset: Sequence[int], n: int, probs, dets) -> float:
    dark = math.prod(1.0 - dets[i].dark_prob for i in subset)
    return dark * (1.0 - sum(probs[i] * dets[i].efficiency for i in subset)) ** n


def cascade_pattern_probs(n: int, cascade: SplitterCascade, dets) -> dict[tuple[int, ...], float]:
    """P(click pattern | n photons enter the cascade), patterns as 0/1 tuples."""
    k = cascade.n_detectors
    dets = _as_dets(dets, k)
    probs = cascade.probs
    silent = {}
    for mask in itertools.product((0, 1), repeat=k):
        subset = [i for i in range(k) if mask[i]]
        silent[mask] = _silent(subset, n, probs, dets)
    out = {}
    for pattern in itertools.product((0, 1), repeat=k):
        off = [i for i in range(k) if not pattern[i]]
        on = [i for i in range(k) if pattern[i]]
        total = 0.0
        for extra in itertools.product((0, 1), repeat=len(on)):
            mask = [0] * k
            for i in off:
                mask[i] = 1
            for i, e in zip(on, extra):
                mask[i] = e
            total += (-1) ** sum(extra) * silent[tuple(mask)]
        out[pattern] = total
    return out


def _photon_number(key) -> int:
    return key if isinstance(key, (int, np.integer)) else sum(key)


def kfold_coincidence_prob(
    output_dist: Mapping,
    cascade: SplitterCascade,
    det,
    required: Iterable[int],
) -> float:
    """Probability that every detector label in ``required`` clicks."""
    k = cascade.n_detectors
    dets = _as_dets(det, k)
    idx = [cascade.labels.index(r) for r in required]
    probs = cascade.probs
    total = 0.0
    for key, p in output_dist.items():
        n = _photon_number(key)
        acc = 0.0
        for r in range(len(idx) + 1):
            for subset in itertools.combinations(idx, r):
                acc += (-1) ** r * _silent(subset, n, probs, dets)
        total += p * acc
    return total


def click_pattern_distribution(
    joint: Mapping[tuple[int, ...], float],
    herald_dets: Sequence[DetectorModel],
    cascade: SplitterCascade,
    dets,
) -> dict[tuple[int, ...], float]:
    """Joint click patterns from joint photon numbers (herald ports..., cascade input).

    Pattern tuples list herald clicks first, then the cascade detectors.
    """
    m = len(herald_dets)
    k = cascade.n_detectors
    out = {pat: 0.0 for pat in itertools.product((0, 1), repeat=m + k)}
    casc_cache: dict[int, dict] = {}
    for key, p in joint.items():
        hs, n = key[:m], key[m]
        if n not in casc_cache:
            casc_cache[n] = cascade_pattern_probs(n, cascade, dets)
        hp = [(1.0 - d.click_prob(h), d.click_prob(h)) for d, h in zip(herald_dets, hs)]
        for hpat in itertools.product((0, 1), repeat=m):
            ph = p * math.prod(hp[i][hpat[i]] for i in range(m))
            if ph == 0.0:
                continue
            for cpat, pc in casc_cache[n].items():
                out[hpat + cpat] += ph * pc
    return out


# --- heralding ----------------------------------------------------------------


@dataclass(frozen=True)
class HeraldedEnsemble:
    """Normalized conditional mixture given a herald click."""

    components: tuple[tuple[float, FockState], ...]
    herald_probability: float

    def __post_init__(self):
        total = math.fsum(w for w, _ in self.components)
        if self.components and abs(total - 1.0) > 1e-10:
            raise ValueError("ensemble weights must sum to 1")


def herald_on_click(
    state: FockState,
    mode: ModeId | Iterable[ModeId],
    det: DetectorModel,
    count: int = 1,
) -> HeraldedEnsemble:
    """Condition on the herald detector firing.

    A click detector accepts every photon number n with weight
    P(n) [1 - (1 - dark)(1 - eta)^n]. A number-resolving detector instead
    accepts a registered count of exactly ``count``.
    """
    modes = (mode,) if isinstance(mode, ModeId) else tuple(mode)
    dist = count_distribution(state, [modes])
    branches = []
    for (n,), p in sorted(dist.items()):
        like = det.count_prob(count, n) if det.number_resolving else det.click_prob(n)
        w = p * like
        if w > 0.0:
            branches.append((w, n))
    total = math.fsum(w for w, _ in branches)
    if total < 1e-14:
        raise ZeroProbabilityBranch("herald detector never fires on this state")
    comps = []
    for w, n in branches:
        st, _ = condition_exact_count(state, modes, n)
        comps.append((w / total, st))
    return HeraldedEnsemble(tuple(comps), total)


# --- circuit evaluation -----------------------------------------------------------


def prepared_state(preset: CircuitPreset, n_pairs: int) -> FockState:
    """Fixed pair number pushed through the preparation and post-herald optics."""
    state = pair_state(n_pairs, preset.registry)
    if preset.overlap is not None:
        state = apply_overlap(state, preset.overlap, preset.delay)
    return run(state, preset.preparation + preset.conditioning)


def heralded_output(preset: CircuitPreset, n_pairs: int | None = None) -> tuple[FockState, float]:
    """State after HWP2 given exactly the target herald counts; herald modes removed."""
    n = preset.target_pairs if n_pairs is None else n_pairs
    state = prepared_state(preset, n)
    prob = 1.0
    for port, c in zip(preset.herald_ports, preset.herald_counts):
        state, p = condition_exact_count(state, port, c)
        prob *= p
        if p == 0.0:
            return state, 0.0
    return state, prob


def herald_success_probability(preset: CircuitPreset, n_pairs: int | None = None) -> float:
    """Probability of exactly the target photon count at every herald port."""
    n = preset.target_pairs if n_pairs is None else n_pairs
    state = prepared_state(preset, n)
    for port, c in zip(preset.herald_ports, preset.herald_counts):
        state = project_count(state, port, c)
    return state.norm_sq()


def herald_singles_probability(preset: CircuitPreset) -> float:
    """Per-pulse probability that every herald detector fires, averaged over the source."""
    total = 0.0
    for n, w in preset.source.sectors():
        dist = count_distribution(prepared_state(preset, n), list(preset.herald_ports))
        for hs, p in dist.items():
            total += w * p * math.prod(d.click_prob(h) for d, h in zip(preset.herald_detectors, hs))
    return total


def click_patterns(preset: CircuitPreset) -> list[tuple[int, ...]]:
    m = len(preset.herald_ports)
    return list(itertools.product((0, 1), repeat=m + preset.cascade.n_detectors))


def outcome_distribution(preset: CircuitPreset, hwp3_deg: Sequence[float]) -> np.ndarray:
    """Per-pulse click-pattern probabilities, shape (angles, patterns), ordered as ``click_patterns``."""
    angles = np.radians(np.asarray(hwp3_deg, dtype=float))
    pats = click_patterns(preset)
    out = np.zeros((len(angles), len(pats)))
    for n, w in preset.source.sectors():
        base = prepared_state(preset, n)
        meas = preset.measurement.measured_modes(base.registry)
        for a, beta in enumerate(angles):
            final = run(base, preset.measurement.elements(beta))
            joint = count_distribution(final, list(preset.herald_ports) + [meas])
            dist = click_pattern_distribution(
                joint, preset.herald_detectors, preset.cascade, preset.detectors
            )
            out[a] += w * np.array([dist[p] for p in pats])
    # inclusion-exclusion leaves ~1e-17 negatives on vanishing patterns
    return np.clip(out, 0.0, None)


COLUMNS = (
    "hwp3_deg",
    "phase_deg",
    "p_twofold",
    "p_threefold_unheralded",
    "p_fourfold",
    "c_twofold",
    "c_threefold_unheralded",
    "c_fourfold",
)


def _column_masks(preset: CircuitPreset):
    m = len(preset.herald_ports)
    pats = np.array(click_patterns(preset), dtype=bool)
    heralds = pats[:, :m].all(axis=1)
    casc = pats[:, m:]
    return {
        "twofold": heralds & casc[:, 0],
        "threefold_unheralded": casc.all(axis=1),
        "fourfold": heralds & casc.all(axis=1),
    }


@dataclass
class FringeTable:
    """Per-angle coincidence probabilities (and optionally sampled counts).

    Angles in degrees; ``phase_deg`` is four times the HWP3 angle.
    """

    hwp3_deg: np.ndarray
    p_twofold: np.ndarray
    p_threefold_unheralded: np.ndarray
    p_fourfold: np.ndarray
    c_twofold: np.ndarray | None = None
    c_threefold_unheralded: np.ndarray | None = None
    c_fourfold: np.ndarray | None = None
    phase_deg: np.ndarray = field(default=None)

    def __post_init__(self):
        self.hwp3_deg = np.asarray(self.hwp3_deg, dtype=float)
        if self.phase_deg is None:
            self.phase_deg = 4.0 * self.hwp3_deg
        self.phase_deg = np.asarray(self.phase_deg, dtype=float)
        for name in ("p_twofold", "p_threefold_unheralded", "p_fourfold"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("c_twofold", "c_threefold_unheralded", "c_fourfold"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.int64))

    def __len__(self):
        return len(self.hwp3_deg)

    @property
    def has_counts(self) -> bool:
        return self.c_fourfold is not None

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown column {name!r}")
        v = getattr(self, name)
        if v is None:
            raise KeyError(f"column {name!r} is empty in this table")
        return v

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for i in range(len(self)):
            row = []
            for name in COLUMNS:
                v = getattr(self, name)
                if v is None:
                    row.append("")
                elif name.startswith("c_"):
                    row.append(str(int(v[i])))
                else:
                    row.append(repr(float(v[i])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> FringeTable:
        text = Path(source).read_text() if not str(source).lstrip().startswith("hwp3_deg") else str(source)
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty fringe table")
        missing = set(COLUMNS) - set(rows[0])
        if missing:
            raise ValueError(f"missing columns: {sorted(missing)}")
        cols = {}
        for name in COLUMNS:
            vals = [r[name] for r in rows]
            if all(v == "" for v in vals):
                cols[name] = None
            elif name.startswith("c_"):
                cols[name] = np.array([int(v) for v in vals], dtype=np.int64)
            else:
                cols[name] = np.array([float(v) for v in vals])
        return cls(**cols)


def fringe_scan(preset: CircuitPreset, hwp3_deg: Sequence[float]) -> FringeTable:
    """Analytic per-pulse twofold, unheralded threefold and heralded fourfold probabilities."""
    probs = outcome_distribution(preset, hwp3_deg)
    masks = _column_masks(preset)
    return FringeTable(
        hwp3_deg=np.asarray(hwp3_deg, dtype=float),
        p_twofold=probs[:, masks["twofold"]].sum(axis=1),
        p_threefold_unheralded=probs[:, masks["threefold_unheralded"]].sum(axis=1),
        p_fourfold=probs[:, masks["fourfold"]].sum(axis=1),
    )


# --- Monte Carlo ------------------------------------------------------------------

BLOCK_SIZE = 1 << 16


def _cdf(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    c = np.cumsum(p) / p.sum()
    last = np.flatnonzero(p > 0)[-1]
    c[last:] = 1.0
    return c


def _sample_block(seed: int, angle: int, block: int, size: int, cdf: np.ndarray) -> np.ndarray:
    # Philox is counter-based; each (seed, angle, block) gets its own key
    ss = np.random.SeedSequence(seed, spawn_key=(angle, block))
    rng = np.random.Generator(np.random.Philox(ss))
    u = rng.random(size)
    return np.bincount(np.searchsorted(cdf, u, side="right"), minlength=len(cdf))


def mc_sample_counts(
    preset: CircuitPreset,
    hwp3_deg: Sequence[float],
    pulses_per_point: int,
    seed: int,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> FringeTable:
    """Sample click patterns pulse by pulse and count coincidences per angle.

    Pulses are cut into fixed blocks with independent streams keyed by
    (seed, angle index, block index), so the table does not depend on
    ``workers``.
    """
    if pulses_per_point < 1:
        raise ValueError("pulses_per_point must be >= 1")
    probs = outcome_distribution(preset, hwp3_deg)
    cdfs = [_cdf(row) for row in probs]
    tasks = []
    for a in range(len(probs)):
        start, b = 0, 0
        while start < pulses_per_point:
            size = min(block_size, pulses_per_point - start)
            tasks.append((a, b, size))
            start += size
            b += 1

    def work(task):
        a, b, size = task
        return a, _sample_block(seed, a, b, size, cdfs[a])

    counts = np.zeros(probs.shape, dtype=np.int64)
    if workers <= 1:
        results = list(map(work, tasks))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    for a, c in results:
        counts[a] += c

    masks = _column_masks(preset)
    return FringeTable(
        hwp3_deg=np.asarray(hwp3_deg, dtype=float),
        p_twofold=probs[:, masks["twofold"]].sum(axis=1),
        p_threefold_unheralded=probs[:, masks["threefold_unheralded"]].sum(axis=1),
        p_fourfold=probs[:, masks["fourfold"]].sum(axis=1),
        c_twofold=counts[:, masks["twofold"]].sum(axis=1),
        c_threefold_unheralded=counts[:, masks["threefold_unheralded"]].sum(axis=1),
        c_fourfold=counts[:, masks["fourfold"]].sum(axis=1),
    )
