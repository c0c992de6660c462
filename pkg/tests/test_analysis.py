import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from noonsim.analysis import (
    FomInput,
    NegativeRateWarning,
    RankDeficientError,
    fidelity_lower_bound,
    fidelity_with,
    fit_column,
    fit_fixed_freq,
    fom_approx,
    fom_exact,
    fom_ratio_approx,
    fom_ratio_exact,
    hom_scan,
    hom_visibility,
    hwp2_calibration_preset,
    hwp2_calibration_scan,
    hwp2_extrema,
    noon_fidelity,
    subtract_triple_pair,
)
from noonsim.detection import FringeTable, fringe_scan, heralded_output
from noonsim.elements import Noon3Params, preset_noon3
from noonsim.fock import FockState, ModeId, ModeRegistry
from noonsim.sources import OverlapModel

X = np.radians(np.arange(0.0, 360.1, 20.0))


def sinusoid(x, c, a, b, k):
    return c + a * np.cos(k * x) + b * np.sin(k * x)


# --- fitting ----------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(
    c=st.floats(1.0, 100.0),
    frac=st.floats(0.0, 0.99),
    phase=st.floats(-math.pi, math.pi),
    k=st.integers(1, 3),
)
def test_fit_recovers_noise_free_sinusoid(c, frac, phase, k):
    amp = frac * c
    y = c + amp * np.cos(k * X - phase)
    r = fit_fixed_freq(X, y, k, weights="uniform")
    assert r.offset == pytest.approx(c, rel=1e-10)
    assert r.amplitude == pytest.approx(amp, abs=1e-9 * c)
    assert r.visibility == pytest.approx(frac, abs=1e-9)
    if frac > 1e-3:
        assert math.cos(r.phase - phase) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_poisson_weighted_fit_matches_curve_fit(seed):
    rng = np.random.default_rng(seed)
    y = rng.poisson(50 + 30 * np.cos(3 * X - 0.4)).astype(float)
    r = fit_fixed_freq(X, y, 3, weights="poisson")
    sigma = np.sqrt(np.maximum(y, 1.0))
    popt, pcov = optimize.curve_fit(
        lambda x, c, a, b: sinusoid(x, c, a, b, 3), X, y, p0=(50, 0, 0), sigma=sigma, absolute_sigma=True
    )
    assert r.offset == pytest.approx(popt[0], rel=1e-7)
    assert r.amplitude == pytest.approx(math.hypot(popt[1], popt[2]), rel=1e-7)
    assert r.offset_err == pytest.approx(math.sqrt(pcov[0, 0]), rel=1e-6)
    chi2 = np.sum(((y - sinusoid(X, *popt, 3)) / sigma) ** 2)
    assert r.chi2 == pytest.approx(chi2, rel=1e-7)
    assert r.dof == len(X) - 3


def test_uniform_fit_scales_covariance_by_residuals():
    rng = np.random.default_rng(4)
    y = 10 + 4 * np.cos(X) + rng.normal(0, 0.3, X.size)
    r = fit_fixed_freq(X, y, 1, weights="uniform")
    popt, pcov = optimize.curve_fit(lambda x, c, a, b: sinusoid(x, c, a, b, 1), X, y)
    assert r.offset_err == pytest.approx(math.sqrt(pcov[0, 0]), rel=1e-6)
    j = np.array([-r.amplitude / r.offset**2, popt[1] / r.amplitude / r.offset, popt[2] / r.amplitude / r.offset])
    assert r.visibility_err == pytest.approx(math.sqrt(j @ pcov @ j), rel=1e-5)


def test_rank_deficient_designs():
    with pytest.raises(RankDeficientError):
        fit_fixed_freq(np.zeros(6), np.ones(6), 3)
    # k = 3 on a 120 degree lattice: sin(kx) vanishes everywhere
    with pytest.raises(RankDeficientError):
        fit_fixed_freq(np.radians([0, 120, 240, 360, 480]), np.ones(5), 3)


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_fixed_freq(X[:3], np.ones(3), 1)
    with pytest.raises(ValueError):
        fit_fixed_freq(X, np.ones(X.size - 1), 1)
    with pytest.raises(ValueError):
        fit_fixed_freq(X, np.ones(X.size), 1, weights="cauchy")


def test_exceeds_unity_flag():
    y = 1 + 1.2 * np.cos(X)
    assert fit_fixed_freq(X, y, 1, weights="uniform").exceeds_unity
    assert not fit_fixed_freq(X, 1 + np.cos(X), 1, weights="uniform").exceeds_unity


def test_zero_signal_has_undefined_visibility():
    r = fit_fixed_freq(X, np.zeros(X.size), 3)
    assert math.isnan(r.visibility) and not r.exceeds_unity


def test_record_lists_every_field():
    rec = fit_fixed_freq(X, 2 + np.cos(X), 1, weights="uniform").to_record()
    keys = [line.split(" = ")[0] for line in rec.strip().splitlines()]
    assert {"offset", "visibility", "visibility_err", "chi2", "dof", "exceeds_unity"} <= set(keys)


def test_fit_column_picks_weights_by_column_type():
    angles = np.arange(0.0, 91.0, 5.0)
    t = fringe_scan(preset_noon3(), angles)
    r = fit_column(t, "p_fourfold", 3)
    assert r.visibility == pytest.approx(1.0, abs=1e-9)
    assert r.frequency == 3


# --- background subtraction -------------------------------------------------------


def table(p4, p3, c4=None, c3=None):
    n = len(p4)
    return FringeTable(np.arange(n) * 5.0, np.zeros(n), p3, p4, None, c3, c4)


def test_subtraction_is_linear():
    t = table(np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0]))
    out = subtract_triple_pair(t, 0.05)
    assert out.p_fourfold == pytest.approx([0.5, 1.0, 1.5])
    assert np.array_equal(out.p_threefold_unheralded, t.p_threefold_unheralded)


def test_subtraction_clamps_and_warns():
    t = table(np.array([1.0, 0.1]), np.array([10.0, 10.0]), np.array([100, 10]), np.array([1000, 1000]))
    with pytest.warns(NegativeRateWarning):
        out = subtract_triple_pair(t, 0.05)
    assert out.p_fourfold == pytest.approx([0.5, 0.0])
    assert list(out.c_fourfold) == [50, 0]


def test_subtraction_identity_and_validation():
    t = table(np.array([1.0]), np.array([2.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert subtract_triple_pair(t, 0.0).p_fourfold == pytest.approx([1.0])
    with pytest.raises(ValueError):
        subtract_triple_pair(t, 1.5)


# --- fidelity ---------------------------------------------------------------------


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 4))
def test_fidelity_bound_never_exceeds_phase_matched_fidelity(seed, n):
    # basis |k, n-k>, k = n..0; the NOON pair sits at the two ends
    rho = random_density(n + 1, np.random.default_rng(seed))
    pop = (rho[0, 0] + rho[-1, -1]).real
    assume(pop > 1e-6)
    vis = 2 * abs(rho[0, -1]) / pop
    chi = np.angle(rho[-1, 0])
    target = np.zeros(n + 1, complex)
    target[0], target[-1] = 1 / math.sqrt(2), np.exp(1j * chi) / math.sqrt(2)
    f_true = (target.conj() @ rho @ target).real
    bound = fidelity_lower_bound(min(vis, 1.0), min(pop, 1.0))
    assert bound.value <= f_true + 1e-12


def test_fidelity_bound_values_and_validation():
    assert fidelity_lower_bound(0.72).value == pytest.approx(0.86)
    assert fidelity_lower_bound(0.5, 0.8).value == pytest.approx(0.6)
    with pytest.raises(ValueError):
        fidelity_lower_bound(1.1)
    with pytest.raises(ValueError):
        fidelity_lower_bound(0.5, -0.1)


def test_noon_fidelity_of_heralded_state():
    state, _ = heralded_output(preset_noon3(Noon3Params(birefringence_phi=0.4)))
    assert noon_fidelity(state, 3) == pytest.approx(1.0, abs=1e-12)
    assert noon_fidelity(state, 3, relative_phase=-math.pi / 2) == pytest.approx(1.0, abs=1e-12)
    assert noon_fidelity(state, 3, relative_phase=math.pi / 2) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_with(state, state) == pytest.approx(1.0)


# --- figure of merit --------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(g=st.floats(1e-4, 0.3), a=st.floats(1e-3, 1.0))
def test_fom_approx_formulas(g, a):
    assert fom_approx(FomInput("double-pair", g)).ratio == pytest.approx(1 / g, rel=1e-12)
    hybrid = FomInput("pair-plus-coherent", g, a)
    assert fom_approx(hybrid).ratio == pytest.approx(1 / (g / a + a / 2), rel=1e-12)
    assert fom_ratio_approx(hybrid) == pytest.approx(fom_approx(hybrid).ratio, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(g=st.floats(1e-4, 0.5))
def test_fom_exact_thermal_closed_form(g):
    assert fom_ratio_exact(FomInput("double-pair", g)) == pytest.approx((1 - g) / g, rel=1e-12)


def brute_hybrid(g, a, pmf):
    p0 = pex = 0.0
    for n in range(0, 40):
        for m in range(0, 40):
            p = pmf(n) * stats.poisson.pmf(m, a)
            if n == 1 and m == 1:
                p0 += p
            elif n >= 1 and 2 * n + m >= 4:
                pex += p
    return p0, pex


@pytest.mark.parametrize("kind", ["thermal", "poissonian"])
@pytest.mark.parametrize("g,a", [(0.005, 0.1), (0.05, 0.3)])
def test_fom_exact_hybrid_matches_enumeration(kind, g, a):
    pmf = (lambda n: (1 - g) * g**n) if kind == "thermal" else (lambda n: stats.poisson.pmf(n, g))
    p0, pex = brute_hybrid(g, a, pmf)
    r = fom_exact(FomInput("pair-plus-coherent", g, a), kind)
    assert r.p_exact == pytest.approx(p0, rel=1e-10)
    assert r.p_excess == pytest.approx(pex, rel=1e-8)


def test_fom_exact_poissonian_double_pair():
    g = 0.02
    r = fom_exact(FomInput("double-pair", g), "poissonian")
    assert r.p_exact == pytest.approx(stats.poisson.pmf(2, g), rel=1e-12)
    assert r.p_excess == pytest.approx(1 - stats.poisson.cdf(2, g), rel=1e-9)


@pytest.mark.parametrize(
    "kwargs", [{"scheme": "triple"}, {"gamma": 0.0}, {"scheme": "pair-plus-coherent", "alpha": None}]
)
def test_fom_input_validation(kwargs):
    with pytest.raises(ValueError):
        FomInput(**kwargs)


# --- calibration scans ------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(xi=st.floats(0.0, 1.0))
def test_hom_dip_depth_is_overlap_squared(xi):
    scan = hom_scan(OverlapModel(xi), [0.0, 10.0])
    assert scan[0][1] == pytest.approx(0.5 * (1 - xi**2), abs=1e-12)
    assert scan[1][1] == pytest.approx(0.5, abs=1e-12)
    assert hom_visibility(scan) == pytest.approx(xi**2, abs=1e-12)


def test_hom_scan_is_symmetric():
    d = np.linspace(-2, 2, 9)
    p = [v for _, v in hom_scan(OverlapModel(0.9, 0.7), d)]
    assert p == pytest.approx(p[::-1], abs=1e-14)
    assert int(np.argmin(p)) == 4


def test_hwp2_scan_period_and_calibration_preset():
    p = preset_noon3()
    scan = dict(hwp2_calibration_scan(p, [0.0, 22.5, 45.0, 90.0]))
    assert scan[0.0] == pytest.approx(scan[45.0], abs=1e-15)
    assert scan[0.0] == pytest.approx(scan[90.0], abs=1e-15)
    assert scan[22.5] < scan[0.0]
    cal = hwp2_calibration_preset(p, 0.3)
    assert cal.conditioning[1].angle == 0.3
    assert cal.measurement.qwp3 == 0.0 and cal.measurement.hwp3 == 0.0


def test_hwp2_extremum_refinement_local():
    p = preset_noon3(Noon3Params(hwp2=0.0, birefringence_phi=0.2))
    found = hwp2_extrema(p, 40.0, 50.0, 0.05)
    assert len(found) == 1
    deg, kind = found[0]
    assert kind == "max"
    assert deg == pytest.approx(45.0 + math.degrees(0.2) / 4, abs=1e-9)


def test_noon_fidelity_with_explicit_phase():
    reg = ModeRegistry.for_paths(("main",))
    s = FockState(reg, {(3, 0): 1 / math.sqrt(2), (0, 3): 1j / math.sqrt(2)})
    assert noon_fidelity(s, 3, relative_phase=math.pi / 2) == pytest.approx(1.0)
    assert s.amplitude({ModeId("main", "V"): 3}) == pytest.approx(1j / math.sqrt(2))
