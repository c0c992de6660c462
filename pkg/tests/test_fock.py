import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noonsim.fock import (
    FockError,
    FockState,
    ModeId,
    ModeRegistry,
    RegistryError,
    SingleParticleUnitary,
    TruncationError,
    apply_unitary,
    basis_state,
    condition_exact_count,
    count_distribution,
    inner,
    marginal_distribution,
    monomial_coefficients,
    project_count,
    vacuum,
)
from oracles import dense_lift, fock_basis, random_unitary, symmetric_lift

PATHS = ("upper", "lower", "main", "herald")


def registry(m: int) -> ModeRegistry:
    modes = [ModeId(p, pol) for p in PATHS for pol in "HV"]
    return ModeRegistry(tuple(modes[:m]))


def random_state(reg, n, rng):
    basis = fock_basis(len(reg), n)
    v = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
    v /= np.linalg.norm(v)
    return FockState(reg, dict(zip(basis, v)))


def as_vector(state, basis):
    return np.array([state.amps.get(b, 0j) for b in basis])


# --- modes and registries ---------------------------------------------------------


def test_mode_id_validation():
    ModeId("herald-2", "V", 3)
    with pytest.raises(ValueError):
        ModeId("sideways", "H")
    with pytest.raises(ValueError):
        ModeId("main", "D")


def test_registry_rejects_duplicates_and_unknown_modes():
    m = ModeId("main", "H")
    with pytest.raises(RegistryError):
        ModeRegistry((m, m))
    with pytest.raises(RegistryError):
        registry(2).index(ModeId("dump", "H"))


def test_registry_for_paths_layout():
    reg = ModeRegistry.for_paths(["main", "herald"], internals=(0, 1))
    assert len(reg) == 8
    assert reg.internals("main") == (0, 1)
    assert reg.path_modes("herald")[0] == ModeId("herald", "H", 0)


def test_registry_extend_and_without():
    reg = registry(2)
    ext = reg.extend([ModeId("dump", "H"), reg.modes[0], ModeId("dump", "H")])
    assert len(ext) == 3 and ext.modes[:2] == reg.modes
    assert ext.without([ModeId("dump", "H")]) == reg


# --- states -----------------------------------------------------------------------


def test_basis_state_and_truncation():
    h, v = ModeId("main", "H"), ModeId("main", "V")
    s = basis_state({h: 2, v: 1})
    assert s.norm_sq() == 1.0
    assert s.amplitude({h: 2, v: 1}) == 1.0
    with pytest.raises(TruncationError):
        basis_state({h: 9})
    basis_state({h: 9}, n_max=9)


def test_from_terms_accumulates_and_prunes():
    reg = registry(2)
    h = reg.modes[0]
    s = FockState.from_terms(reg, [({h: 1}, 0.5), ({h: 1}, 0.5), ({h: 0}, 1e-16)])
    assert s.amps == {(1, 0): 1.0}


def test_normalize_zero_vector_raises():
    with pytest.raises(FockError):
        FockState(registry(2), {}).normalized()


def test_inner_is_conjugate_linear_in_first_argument():
    reg = registry(2)
    a = FockState(reg, {(1, 0): 1j})
    b = FockState(reg, {(1, 0): 1.0})
    assert inner(a, b) == -1j
    with pytest.raises(RegistryError):
        inner(a, FockState(registry(3), {}))


def test_extend_pads_occupations():
    s = vacuum(registry(2)).extend([ModeId("dump", "H")])
    assert list(s.amps) == [(0, 0, 0)]


def test_str_lists_terms():
    s = basis_state({ModeId("main", "H"): 1})
    assert str(s) == "(+1.000000+0.000000j)|main-H:1>"


# --- unitary lift -----------------------------------------------------------------


def test_unitary_validation():
    modes = registry(2).modes
    with pytest.raises(ValueError):
        SingleParticleUnitary(modes, np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        SingleParticleUnitary(modes, np.eye(3))


def test_balanced_splitter_bunches_two_photons():
    reg = registry(2)
    bs = SingleParticleUnitary(reg.modes, np.array([[1, 1j], [1j, 1]]) / math.sqrt(2))
    out = apply_unitary(basis_state(dict.fromkeys(reg.modes, 1), reg), bs)
    assert abs(out.amplitude(dict.fromkeys(reg.modes, 1))) < 1e-15
    assert out.norm_sq() == pytest.approx(1.0, abs=1e-14)


def test_unitary_on_subset_leaves_other_modes():
    reg = registry(4)
    u = SingleParticleUnitary(reg.modes[2:], np.array([[0, 1], [1, 0]]))
    s = basis_state({reg.modes[0]: 2, reg.modes[2]: 1}, reg)
    out = apply_unitary(s, u)
    assert out.amplitude({reg.modes[0]: 2, reg.modes[3]: 1}) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_lift_matches_dense_oracle_three_photons(seed):
    rng = np.random.default_rng(seed)
    reg = registry(4)
    u = random_unitary(4, rng)
    big, basis = dense_lift(u, 3)
    s = random_state(reg, 3, rng)
    out = apply_unitary(s, SingleParticleUnitary(reg.modes, u))
    assert np.allclose(as_vector(out, basis), big @ as_vector(s, basis), atol=1e-12)


@pytest.mark.parametrize("m,n", [(2, 3), (3, 2), (4, 3), (5, 2)])
def test_oracles_agree(m, n):
    u = random_unitary(m, np.random.default_rng(m * 10 + n))
    a, basis_a = dense_lift(u, n)
    b, basis_b = symmetric_lift(u, n)
    assert basis_a == basis_b
    assert np.allclose(a, b, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), n=st.integers(0, 4))
def test_lift_preserves_norm_and_inner_products(seed, m, n):
    rng = np.random.default_rng(seed)
    reg = registry(m)
    u = SingleParticleUnitary(reg.modes, random_unitary(m, rng))
    a, b = random_state(reg, n, rng), random_state(reg, n, rng)
    ua, ub = apply_unitary(a, u), apply_unitary(b, u)
    assert ua.norm_sq() == pytest.approx(1.0, abs=1e-12)
    assert abs(inner(ua, ub) - inner(a, b)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), n=st.integers(1, 3))
def test_lift_is_a_representation(seed, m, n):
    rng = np.random.default_rng(seed)
    reg = registry(m)
    u1 = SingleParticleUnitary(reg.modes, random_unitary(m, rng))
    u2 = SingleParticleUnitary(reg.modes, random_unitary(m, rng))
    s = random_state(reg, n, rng)
    seq = apply_unitary(apply_unitary(s, u1), u2)
    once = apply_unitary(s, u2.compose(u1))
    basis = fock_basis(m, n)
    assert np.allclose(as_vector(seq, basis), as_vector(once, basis), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 4))
def test_inverse_undoes_lift(seed, n):
    rng = np.random.default_rng(seed)
    reg = registry(3)
    m = random_unitary(3, rng)
    s = random_state(reg, n, rng)
    back = apply_unitary(
        apply_unitary(s, SingleParticleUnitary(reg.modes, m)),
        SingleParticleUnitary(reg.modes, m.conj().T),
    )
    assert abs(inner(s, back)) == pytest.approx(1.0, abs=1e-12)


# --- conditioning and marginals ---------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_conditioning_branches_are_complete(seed, n):
    rng = np.random.default_rng(seed)
    reg = registry(4)
    s = random_state(reg, n, rng)
    total = sum(condition_exact_count(s, reg.modes[1], k)[1] for k in range(n + 1))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_condition_returns_normalized_state_and_drops_mode():
    reg = registry(2)
    h, v = reg.modes
    s = FockState(reg, {(1, 1): 0.6, (2, 0): 0.8})
    cond, p = condition_exact_count(s, v, 1)
    assert p == pytest.approx(0.36)
    assert cond.registry.modes == (h,)
    assert cond.norm_sq() == pytest.approx(1.0)


def test_condition_on_impossible_branch_is_empty():
    reg = registry(2)
    s = basis_state({reg.modes[0]: 1}, reg)
    cond, p = condition_exact_count(s, reg.modes[1], 1)
    assert p == 0.0 and len(cond) == 0


def test_project_count_over_mode_group():
    reg = registry(3)
    s = FockState(reg, {(1, 0, 1): 0.6, (0, 1, 1): 0.8j})
    kept = project_count(s, reg.modes[:2], 1)
    assert kept.norm_sq() == pytest.approx(1.0)
    assert kept.registry.modes == (reg.modes[2],)


def test_marginals_sum_to_one_and_follow_registry_order():
    reg = registry(3)
    s = FockState(reg, {(1, 0, 1): 0.6, (0, 2, 0): 0.8})
    d = marginal_distribution(s, {reg.modes[2], reg.modes[0]})
    assert d == pytest.approx({(1, 1): 0.36, (0, 0): 0.64})
    d2 = count_distribution(s, [reg.modes[:2]])
    assert d2 == pytest.approx({(1,): 0.36, (2,): 0.64})


def test_monomial_coefficients_include_factorials():
    reg = registry(1)
    s = FockState(reg, {(2,): 1.0})
    assert monomial_coefficients(s)[(2,)] == pytest.approx(1 / math.sqrt(2))
