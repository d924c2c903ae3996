import numpy as np
import pytest

from gark import library
from gark.construct import conjugate_tableau, make_multirate42
from gark.errors import DimensionMismatch, StageSolveFailure
from gark.integrate import (
    YOSHIDA_W0,
    YOSHIDA_W1,
    PhaseState,
    SolverConfig,
    StepStats,
    Strategy,
    gark_step,
    integrate,
    leapfrog_step,
    partitioned_step,
    plan_stages,
    to_gark,
)
from gark.problems import DEFAULT_Y0, harmonic_oscillator, pendulum_oscillator, split
from gark.tableau import PartitionedGarkTableau
from gark.verify import fit_slope

Y_HARMONIC = PhaseState(np.array([1.0]), np.array([0.0]))


def kdk_pair() -> PartitionedGarkTableau:
    """Lobatto pair with the roles swapped: half kick, drift, half kick."""
    t = library.verlet_pair()
    return PartitionedGarkTableau(1, [2], [2], {(1, 1): t.A_hat[1, 1]}, {(1, 1): t.A[1, 1]}, t.b, t.b_hat)


# --- planning ------------------------------------------------------------

def test_multirate_plan_is_explicit_and_interleaved():
    plan = plan_stages(make_multirate42())
    assert plan.explicit and not plan.implicit_groups
    assert len(plan.order) == 14 == len(set(plan.order))
    kinds = [s.kind for s in plan.order]
    assert "momentum" in kinds[:3] and "position" in kinds[:3]


def test_verlet_pair_plan_is_explicit():
    assert plan_stages(library.verlet_pair()).explicit


def test_midpoint_plan_has_one_implicit_group():
    plan = plan_stages(library.implicit_midpoint())
    assert not plan.explicit
    assert len(plan.implicit_groups) == 1 and len(plan.implicit_groups[0]) == 1


def test_explicit_plans_never_iterate():
    stats = StepStats()
    y = PhaseState.from_vector(DEFAULT_Y0["pendulum"])
    partitioned_step(pendulum_oscillator(), make_multirate42(), y, 0.1, stats=stats)
    assert stats == StepStats(0, 0, 0)


# --- single steps ---------------------------------------------------------

def test_verlet_pair_drift_kick_drift_values():
    y = partitioned_step(harmonic_oscillator(), library.verlet_pair(), Y_HARMONIC, 0.1)
    np.testing.assert_allclose([y.q[0], y.p[0]], [0.995, -0.1], rtol=0, atol=1e-15)


def test_kick_drift_kick_values():
    y = partitioned_step(harmonic_oscillator(), kdk_pair(), Y_HARMONIC, 0.1)
    np.testing.assert_allclose([y.q[0], y.p[0]], [0.995, -0.09975], rtol=0, atol=1e-15)


def test_verlet_pair_matches_leapfrog():
    sys_ = pendulum_oscillator()
    y = PhaseState(np.array([0.4, -0.1]), np.array([0.2, 0.3]))
    a = partitioned_step(sys_, library.verlet_pair(), y, 0.05)
    b = leapfrog_step(sys_, y, 0.05)
    np.testing.assert_allclose(a.vector(), b.vector(), rtol=1e-15, atol=1e-16)


@pytest.mark.parametrize("name", ["verlet-pair", "multirate42", "implicit-midpoint", "imim-symplectic"])
def test_zero_step_is_identity(name):
    sys_ = pendulum_oscillator()
    y = PhaseState(np.array([0.4, -0.1]), np.array([0.2, 0.3]))
    t = library.get(name)
    step = partitioned_step if isinstance(t, PartitionedGarkTableau) else gark_step
    out = step(sys_, t, y, 0.0)
    np.testing.assert_array_equal(out.vector(), y.vector())


def test_gark_embedding_reproduces_partitioned_step():
    sys_ = pendulum_oscillator()
    y = PhaseState(np.array([0.4, -0.1]), np.array([0.2, 0.3]))
    t = library.lobatto3_pair()
    a = partitioned_step(sys_, t, y, 0.1)
    emb = to_gark(t)
    parts = split(sys_.merged(1), 2)  # T and V as two parts
    b = gark_step(parts, emb, y, 0.1)
    np.testing.assert_allclose(a.vector(), b.vector(), atol=1e-13)


def test_multirate_gradient_counts():
    sys_ = pendulum_oscillator().counted()
    y = PhaseState.from_vector(DEFAULT_Y0["pendulum"])
    for _ in range(3):
        y = partitioned_step(sys_, make_multirate42(), y, 0.05)
    assert sys_.counts["fast"] == 18 and sys_.counts["slow"] == 6


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        partitioned_step(pendulum_oscillator(), library.verlet_pair(), Y_HARMONIC, 0.1)
    with pytest.raises(DimensionMismatch):
        gark_step(split(pendulum_oscillator(), 2), library.implicit_midpoint(), Y_HARMONIC, 0.1)


def test_implicit_midpoint_preserves_quadratic_energy():
    sys_ = harmonic_oscillator()
    y = Y_HARMONIC
    for _ in range(100):
        y = gark_step(sys_, library.implicit_midpoint(), y, 0.3)
    assert sys_.H(y.q, y.p) == pytest.approx(0.5, abs=100 * 1e-13)


def test_stiff_implicit_stage_falls_back_to_newton():
    sys_ = harmonic_oscillator(20.0)
    stats = StepStats()
    gark_step(sys_, library.implicit_midpoint(), Y_HARMONIC, 0.2, stats=stats)
    assert stats.newton_iterations > 0


def test_fixed_point_only_reports_failure():
    sys_ = harmonic_oscillator(20.0)
    cfg = SolverConfig(strategy=Strategy.FIXED_POINT, max_iters=20)
    with pytest.raises(StageSolveFailure) as info:
        gark_step(sys_, library.implicit_midpoint(), Y_HARMONIC, 0.2, cfg)
    assert info.value.group and info.value.residual > 0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)


def test_steps_are_deterministic():
    sys_ = pendulum_oscillator()
    y = PhaseState(np.array([0.4, -0.1]), np.array([0.2, 0.3]))
    for t in (make_multirate42(), library.imim_symplectic()):
        step = partitioned_step if isinstance(t, PartitionedGarkTableau) else gark_step
        a, b = step(sys_, t, y, 0.07), step(sys_, t, y, 0.07)
        assert a.vector().tobytes() == b.vector().tobytes()


def test_adjoint_pair_identity_on_a_linear_system():
    """The conjugate tableau steps backwards along the adjoint of the forward map.

    For a linear system the step maps are matrices ``M`` and ``M*`` and the
    discrete adjoint relation reads ``M*(-h) = M(h)^{-1}`` for the pair of
    self-adjoint-related tableaus applied to ``y' = J S y``.
    """
    sys_ = harmonic_oscillator(1.3)
    t = library.lobatto3a(3)
    conj = conjugate_tableau(t)

    def matrix(tab, h):
        cols = []
        for e in np.eye(2):
            y = gark_step(sys_, tab, PhaseState.from_vector(e), h)
            cols.append(y.vector())
        return np.array(cols).T

    h = 0.17
    M = matrix(t, h)
    M_adj = matrix(conj, -h)
    np.testing.assert_allclose(M_adj @ M, np.eye(2), atol=1e-12)


# --- trajectories ---------------------------------------------------------

def test_zero_steps_returns_initial_state():
    tr = integrate(harmonic_oscillator(), library.verlet_pair(), Y_HARMONIC, 0.1, 0)
    assert len(tr.t) == 1 and tr.q[0].tolist() == [1.0]


def test_integrate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        integrate(harmonic_oscillator(), "leapfrog", Y_HARMONIC, 0.0, 5)
    with pytest.raises(ValueError):
        integrate(harmonic_oscillator(), "leapfrog", Y_HARMONIC, 0.1, -1)


def test_verlet_energy_error_stays_bounded():
    h = 0.01
    tr = integrate(harmonic_oscillator(), library.verlet_pair(), Y_HARMONIC, h, 10_000)
    assert np.max(np.abs(tr.H - tr.H[0])) <= 1.01 * h**2 / 8


def test_verlet_energy_has_no_drift_over_whole_periods():
    # the error oscillates with period pi, so fit over an integer number of periods
    n = round(100 * np.pi / 0.01)
    tr = integrate(harmonic_oscillator(), library.verlet_pair(), Y_HARMONIC, 0.01, n)
    slope = np.polyfit(np.arange(tr.H.size), tr.H - tr.H[0], 1)[0]
    assert abs(slope) <= 1e-12


@pytest.mark.parametrize("name", ["verlet-pair", "multirate42", "lobatto3-pair"])
def test_negative_step_undoes_symmetric_methods(name):
    sys_ = pendulum_oscillator()
    y0 = PhaseState.from_vector(DEFAULT_Y0["pendulum"])
    t = library.get(name)
    fwd = integrate(sys_, t, y0, 0.05, 20, record=False).final
    back = integrate(sys_, t, fwd, -0.05, 20, record=False).final
    np.testing.assert_allclose(back.vector(), y0.vector(), atol=1e-11)


def test_integrate_records_gradient_counts_and_parts():
    tr = integrate(pendulum_oscillator(), make_multirate42(), PhaseState.from_vector(DEFAULT_Y0["pendulum"]),
                   0.05, 10)
    assert tr.grad_evals["fast"] == 60 and tr.grad_evals["slow"] == 20
    np.testing.assert_allclose(tr.H_parts.sum(axis=1), tr.H, rtol=1e-15)


def test_step_failure_carries_step_index():
    sys_ = harmonic_oscillator(40.0)
    cfg = SolverConfig(strategy=Strategy.FIXED_POINT, max_iters=10)
    with pytest.raises(StageSolveFailure) as info:
        integrate(sys_, library.implicit_midpoint(), Y_HARMONIC, 0.2, 3, cfg)
    assert info.value.step == 0


# --- reference integrators ------------------------------------------------

def test_yoshida_coefficients():
    assert YOSHIDA_W1 == pytest.approx(1.3512071919596578, abs=1e-15)
    assert YOSHIDA_W0 == pytest.approx(-1.7024143839193153, abs=1e-15)
    assert YOSHIDA_W0 + 2 * YOSHIDA_W1 == pytest.approx(1.0, abs=1e-15)
    assert YOSHIDA_W0**3 + 2 * YOSHIDA_W1**3 == pytest.approx(0.0, abs=1e-14)


def test_yoshida_energy_error_has_slope_four():
    sys_ = harmonic_oscillator()
    hs = [0.2, 0.1, 0.05]
    errs = []
    for h in hs:
        tr = integrate(sys_, "yoshida4", Y_HARMONIC, h, int(round(2.0 / h)), record=False)
        errs.append(abs(tr.H[-1] - tr.H[0]))
    assert fit_slope(hs, errs).slope == pytest.approx(4.0, abs=0.3)


def test_rk4_is_fourth_order_in_the_state():
    sys_ = harmonic_oscillator()
    from gark.problems import harmonic_exact_flow

    hs = [0.2, 0.1, 0.05]
    errs = []
    for h in hs:
        tr = integrate(sys_, "rk4", Y_HARMONIC, h, int(round(1.0 / h)), record=False)
        q, p = harmonic_exact_flow(1.0, [1.0], [0.0], 1.0)
        errs.append(max(abs(tr.q[-1][0] - q[0]), abs(tr.p[-1][0] - p[0])))
    assert fit_slope(hs, errs).slope == pytest.approx(4.0, abs=0.3)


def test_unknown_reference_method():
    with pytest.raises(ValueError):
        integrate(harmonic_oscillator(), "euler", Y_HARMONIC, 0.1, 1)
