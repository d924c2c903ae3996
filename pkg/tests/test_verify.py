import numpy as np
import pytest

from gark import library
from gark.construct import make_multirate42
from gark.integrate import PhaseState
from gark.problems import DEFAULT_Y0, PendulumOscillatorParams, harmonic_oscillator, pendulum_oscillator
from gark.verify import (
    canonical_J,
    energy_drift,
    fit_slope,
    hamiltonian_convergence,
    numerical_symplecticity,
    reference_state,
    reversibility_roundtrip,
    step_jacobian,
    two_window_fits,
)

Y_HARMONIC = PhaseState(np.array([1.0]), np.array([0.0]))
Y_PENDULUM = PhaseState.from_vector(DEFAULT_Y0["pendulum"])


def test_canonical_form():
    J = canonical_J(2)
    np.testing.assert_array_equal(J @ J, -np.eye(4))


def test_verlet_map_is_symplectic():
    assert numerical_symplecticity(harmonic_oscillator(), library.verlet_pair(), Y_HARMONIC, 0.1) <= 1e-8


def test_imim_map_is_symplectic():
    assert numerical_symplecticity(harmonic_oscillator(), library.imim_symplectic(), Y_HARMONIC, 0.1) <= 1e-8


def test_euler_control_is_not_symplectic():
    res = numerical_symplecticity(harmonic_oscillator(), library.explicit_euler_pair(), Y_HARMONIC, 0.1)
    assert res > 1e-3
    # M = [[1, h], [-h, 1]] on this problem, so M^T J M = (1 + h^2) J
    assert res == pytest.approx(0.1**2, rel=1e-6)


def test_zero_step_jacobian_is_identity():
    M = step_jacobian(pendulum_oscillator(), make_multirate42(), Y_PENDULUM, 0.0)
    np.testing.assert_allclose(M, np.eye(4), atol=1e-9)
    assert numerical_symplecticity(pendulum_oscillator(), make_multirate42(), Y_PENDULUM, 0.0) <= 1e-9


def test_reversibility_of_symmetric_schemes():
    sys_ = pendulum_oscillator()
    assert reversibility_roundtrip(sys_, make_multirate42(), Y_PENDULUM, 0.05) <= 1e-12
    assert reversibility_roundtrip(sys_, library.verlet_pair(), Y_PENDULUM, 0.05) <= 1e-12


def test_euler_control_is_not_reversible():
    sys_ = harmonic_oscillator()
    assert reversibility_roundtrip(sys_, library.explicit_euler_pair(), Y_HARMONIC, 0.1) > 1e-4


def test_reversibility_of_implicit_symmetric_scheme_within_solver_tolerance():
    sys_ = pendulum_oscillator()
    assert reversibility_roundtrip(sys_, library.lobatto3_pair(), Y_PENDULUM, 0.05) <= 10 * 1e-13


# --- slope fits ----------------------------------------------------------

def test_fit_slope_recovers_power_law():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_slope(h, 3.0 * h**4).slope == pytest.approx(4.0, abs=1e-12)


def test_fit_slope_is_invariant_under_error_scaling(rng):
    h = 0.1 / 2.0 ** np.arange(6)
    e = rng.uniform(0.5, 2.0, h.size) * h**2
    assert fit_slope(h, 1e6 * e).slope == pytest.approx(fit_slope(h, e).slope, abs=1e-12)


def test_two_window_fits_windows():
    h = 0.1 / 2.0 ** np.arange(8)
    lo, hi = two_window_fits(h, h**2)
    assert lo.window == (0, 3) and hi.window == (5, 8)
    assert two_window_fits([0.1], [1e-3]) is None


@pytest.mark.parametrize("h,e", [
    ([0.1, 0.2], [1.0, 2.0]),
    ([0.1, 0.05], [1.0]),
    ([0.1, 0.05], [1.0, 0.0]),
    ([0.1], [1.0]),
])
def test_fit_slope_validation(h, e):
    with pytest.raises(ValueError):
        fit_slope(h, e)


# --- convergence and drift -----------------------------------------------

def test_reference_state_is_accurate_on_the_harmonic_oscillator():
    ref = reference_state(harmonic_oscillator(), Y_HARMONIC, np.pi / 2)
    np.testing.assert_allclose([ref.q[0], ref.p[0]], [0.0, -1.0], atol=1e-11)


def test_strong_spring_shows_order_two_throughout():
    sys_ = pendulum_oscillator(PendulumOscillatorParams(k=1.0))
    hs = [1 / 32 / 2**j for j in range(5)]
    result = hamiltonian_convergence(sys_, make_multirate42(), Y_PENDULUM, hs, 10.0, workers=2)
    for fit in result.fits["H"]:
        assert 1.7 <= fit.slope <= 2.3
    assert [r.h for r in result.rows] == hs
    assert all(r.grad_evals["slow"] == 2 * r.steps for r in result.rows)


def test_energy_drift_degenerate_cases():
    assert energy_drift(harmonic_oscillator(), "leapfrog", Y_HARMONIC, 0.0, 5) == 0.0
    assert energy_drift(harmonic_oscillator(), "leapfrog", Y_HARMONIC, 0.1, 1) == 0.0
