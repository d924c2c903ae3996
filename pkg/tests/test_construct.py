import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gark import library
from gark.construct import (
    MULTIRATE_X11,
    ExplicitSymmetricSpec,
    build_explicit_symmetric,
    compose_symmetric_symplectic,
    conjugate_pair,
    conjugate_tableau,
    is_self_adjoint,
    make_multirate42,
    multirate_residuals,
    solve_multirate_weights,
    symplectic_conjugate,
    time_reverse,
)
from gark.errors import NotSymplectic, OddStageCount, ShapeMismatch, WeightsNotPalindromic, ZeroWeight
from gark.integrate import PhaseState, make_stepper, plan_stages
from gark.order import partitioned_order_residuals
from gark.problems import harmonic_oscillator
from gark.structure import partitioned_symplecticity_residual, symmetry_residual, symplecticity_residual
from gark.tableau import GarkTableau

from conftest import random_gark, symmetric_part, symplectic_part

# 50-digit root of the three fast conditions written out on the displayed
# 6x6 fast block, computed with mpmath.findroot and rounded to binary64
ORACLE_WEIGHTS = (1.0877529282044216, -1.131212302433601, 0.5434593742291793, 0.5)


# --- time reversal -------------------------------------------------------

def test_midpoint_reverses_to_itself():
    assert time_reverse(library.implicit_midpoint()).A[1, 1].tolist() == [[0.5]]


def test_explicit_euler_reverses_to_implicit_euler():
    r = time_reverse(library.explicit_euler())
    assert r.A[1, 1].tolist() == [[1.0]] and r.b[1].tolist() == [1.0]


def test_reverse_toggles_the_name():
    t = library.verlet_pair()
    assert time_reverse(t).name == "reverse(verlet-pair)"
    assert time_reverse(time_reverse(t)).name == "verlet-pair"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_time_reverse_is_an_involution(seed):
    t = random_gark(np.random.default_rng(seed))
    assert time_reverse(time_reverse(t)).same_as(t, 1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reversal_keeps_symplecticity_for_palindromic_weights(seed):
    t = symplectic_part(random_gark(np.random.default_rng(seed), palindromic=True))
    assert symplecticity_residual(time_reverse(t), tol=1e-12)[0].verdict


# --- composition ---------------------------------------------------------

def test_composed_midpoint():
    c = compose_symmetric_symplectic(library.implicit_midpoint())
    np.testing.assert_array_equal(c.A[1, 1], [[0.25, 0.0], [0.5, 0.25]])
    np.testing.assert_array_equal(c.b[1], [0.5, 0.5])
    assert symmetry_residual(c).verdict and symplecticity_residual(c)[0].verdict


def test_compose_rejects_non_symplectic_input():
    with pytest.raises(NotSymplectic):
        compose_symmetric_symplectic(library.explicit_euler())


def test_compose_rejects_non_palindromic_weights():
    t = library.imim_symplectic()
    with pytest.raises(WeightsNotPalindromic):
        compose_symmetric_symplectic(t)


def test_compose_of_partitioned_pair():
    c = compose_symmetric_symplectic(library.lobatto3_pair())
    assert c.s == (6,) and c.s_hat == (6,)
    assert symmetry_residual(c).verdict
    assert partitioned_symplecticity_residual(c).verdict


def test_composition_equals_half_step_then_reverse():
    sys_ = harmonic_oscillator()
    t = library.implicit_midpoint()
    comp = compose_symmetric_symplectic(t)
    y = PhaseState(np.array([0.7]), np.array([-0.2]))
    one = make_stepper(comp, sys_)(y, 0.2)
    two = make_stepper(time_reverse(t), sys_)(make_stepper(t, sys_)(y, 0.1), 0.1)
    np.testing.assert_allclose(one.vector(), two.vector(), atol=1e-13)


# --- conjugation ---------------------------------------------------------

def test_conjugate_of_lobatto3a_is_lobatto3b():
    for stages in (2, 3):
        a, b = library.lobatto3a(stages), library.lobatto3b(stages)
        conj = symplectic_conjugate(a.A, a.b)
        np.testing.assert_allclose(conj[1, 1], b.A[1, 1], atol=1e-15)


def test_midpoint_is_self_adjoint_and_euler_is_not():
    assert is_self_adjoint(library.implicit_midpoint())
    assert not is_self_adjoint(library.explicit_euler())


def test_conjugate_rejects_zero_weights():
    t = GarkTableau(2, [1, 2], {(1, 1): [[0.0]], (1, 2): [[0, 0]], (2, 1): [[0], [0]], (2, 2): np.zeros((2, 2))},
                    {1: [1.0], 2: [1.0, 0.0]})
    with pytest.raises(ZeroWeight) as info:
        conjugate_tableau(t)
    assert (info.value.partition, info.value.index) == (2, 2)


def test_conjugate_pair_of_lobatto3a_matches_builtin():
    pair = conjugate_pair(library.lobatto3a(3))
    ref = library.lobatto3_pair()
    np.testing.assert_allclose(pair.A[1, 1], ref.A[1, 1], atol=1e-15)
    np.testing.assert_allclose(pair.A_hat[1, 1], ref.A_hat[1, 1], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conjugate_pairs_are_partitioned_symplectic(seed):
    pair = conjugate_pair(random_gark(np.random.default_rng(seed)))
    assert partitioned_symplecticity_residual(pair).max_abs_residual <= 1e-14 * max(
        1.0, max(np.max(np.abs(v)) for v in pair.A.values())
    )


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conjugate_of_symmetric_is_symmetric(seed):
    t = symmetric_part(random_gark(np.random.default_rng(seed), palindromic=True))
    assert symmetry_residual(conjugate_tableau(t), tol=1e-10).verdict


# --- explicit symmetric builder -----------------------------------------

def test_builder_reproduces_the_multirate_matrices():
    b1, b2, b3, bs = ORACLE_WEIGHTS
    t = make_multirate42(ORACLE_WEIGHTS)
    z = 0.0
    Ahat11 = [[z] * 6, [b1, z, z, z, z, z], [b1, b2, z, z, z, z], [b1, b2, b3, b3, z, z],
              [b1, b2, b3, b3, b2, z], [b1, b2, b3, b3, b2, b1]]
    Ahat12 = [[z, z], [bs, z], [bs, z], [bs, z], [bs, z], [bs, bs]]
    A11 = [[b1, z, z, z, z, z], [b1, b2, z, z, z, z], [b1, b2, b3, z, z, z], [b1, b2, b3, z, z, z],
           [b1, b2, b3, b3, z, z], [b1, b2, b3, b3, b2, z]]
    A21 = [[b1, z, z, z, z, z], [b1, b2, b3, b3, b2, z]]
    np.testing.assert_allclose(t.A_hat[1, 1], Ahat11, atol=1e-15)
    np.testing.assert_allclose(t.A_hat[1, 2], Ahat12, atol=1e-15)
    np.testing.assert_allclose(t.A[1, 1], A11, atol=1e-15)
    np.testing.assert_allclose(t.A[2, 1], A21, atol=1e-15)
    np.testing.assert_allclose(t.b_hat[1], [b1, b2, b3, b3, b2, b1])
    np.testing.assert_allclose(t.b_hat[2], [bs, bs])
    assert t.s_hat == (6, 2)


def test_builder_with_zero_X_single_partition():
    t = build_explicit_symmetric(ExplicitSymmetricSpec(1, {1: np.array([0.5])}, {}))
    assert t.s == (2,) and t.s_hat == (2,)
    assert symmetry_residual(t).max_abs_residual <= 1e-14
    assert partitioned_symplecticity_residual(t).max_abs_residual <= 1e-14


def test_builder_with_all_ones_X():
    spec = ExplicitSymmetricSpec(1, {1: np.array([0.2, 0.3])}, {(1, 1): np.ones((2, 2))})
    t = build_explicit_symmetric(spec)
    assert symmetry_residual(t).max_abs_residual <= 1e-14
    assert partitioned_symplecticity_residual(t).max_abs_residual <= 1e-14


def test_builder_rejects_odd_stage_counts_and_bad_X():
    with pytest.raises(OddStageCount):
        ExplicitSymmetricSpec.from_weights({1: [0.3, 0.4, 0.3]}, {})
    with pytest.raises(ShapeMismatch):
        build_explicit_symmetric(ExplicitSymmetricSpec(1, {1: np.array([0.5])}, {(1, 1): np.ones((2, 2))}))


def test_multirate_x11_is_strict_upper_ones():
    assert MULTIRATE_X11.tolist() == [[0, 1, 1], [0, 0, 1], [0, 0, 0]]


# --- multirate weights ---------------------------------------------------

def test_solved_weights_match_the_independent_oracle():
    w = solve_multirate_weights()
    np.testing.assert_allclose(w, ORACLE_WEIGHTS, rtol=0, atol=1e-14)
    assert np.max(np.abs(multirate_residuals(w))) <= 1e-13


def test_solved_weights_structure():
    b1, b2, b3, bs = solve_multirate_weights()
    assert b1 + b2 + b3 == pytest.approx(0.5, abs=1e-15)
    assert bs == 0.5


def test_solver_converges_from_a_distant_start():
    np.testing.assert_allclose(solve_multirate_weights(start=(-1.5, 1.7, 0.3, 0.9)), ORACLE_WEIGHTS, atol=1e-13)


def test_multirate_is_explicit_symmetric_and_symplectic():
    t = make_multirate42()
    assert symmetry_residual(t).max_abs_residual <= 1e-14
    assert partitioned_symplecticity_residual(t).max_abs_residual <= 1e-14
    plan = plan_stages(t)
    assert plan.explicit and len(plan.order) == 14


def test_multirate_slow_coupling_fails_order_three():
    rep = partitioned_order_residuals(make_multirate42())
    assert rep.attained_order == 2
