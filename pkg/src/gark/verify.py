"""Numerical checks of structural properties on the actual step maps."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .integrate import Method, PhaseState, SolverConfig, integrate, make_stepper
from .problems import SeparableHamiltonian


def canonical_J(d: int) -> np.ndarray:
    I, Z = np.eye(d), np.zeros((d, d))
    return np.block([[Z, I], [-I, Z]])


def step_jacobian(system: SeparableHamiltonian, method: Method, y: PhaseState, h: float,
                  fd_step: float = 1e-6, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Central-difference Jacobian of ``(q0, p0) -> (q1, p1)``."""
    step = make_stepper(method, system, cfg)
    x0 = y.vector()
    M = np.empty((x0.size, x0.size))
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = fd_step
        fp = step(PhaseState.from_vector(x0 + e, y.t), h).vector()
        fm = step(PhaseState.from_vector(x0 - e, y.t), h).vector()
        M[:, k] = (fp - fm) / (2 * fd_step)
    return M


def numerical_symplecticity(system: SeparableHamiltonian, method: Method, y: PhaseState, h: float,
                            fd_step: float = 1e-6, cfg: SolverConfig = SolverConfig()) -> float:
    """``max |M^T J M - J|`` for the finite-difference Jacobian ``M`` of one step."""
    M = step_jacobian(system, method, y, h, fd_step, cfg)
    J = canonical_J(y.d)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def reversibility_roundtrip(system: SeparableHamiltonian, method: Method, y: PhaseState, h: float,
                            cfg: SolverConfig = SolverConfig()) -> float:
    """``max |rho(phi_h(rho(phi_h(y)))) - y|`` with ``rho(q, p) = (q, -p)``."""
    step = make_stepper(method, system, cfg)
    back = step(step(y, h).flip(), h).flip()
    return float(np.max(np.abs(back.vector() - y.vector())))


@dataclass(frozen=True)
class SlopeFit:
    h_values: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    window: tuple[int, int]


def fit_slope(h_values, errors, window: tuple[int, int] | None = None) -> SlopeFit:
    """Least-squares slope of ``log(error)`` against ``log(h)`` on ``window = (start, stop)``."""
    h = np.asarray(h_values, float)
    e = np.asarray(errors, float)
    if h.size != e.size:
        raise ValueError("h_values and errors differ in length")
    if np.any(h <= 0) or np.any(np.diff(h) >= 0):
        raise ValueError("h_values must be positive and strictly decreasing")
    lo, hi = window if window is not None else (0, h.size)
    if hi - lo < 2:
        raise ValueError("a slope needs at least two points")
    if np.any(e[lo:hi] <= 0):
        raise ValueError("errors must be positive inside the fit window")
    slope = float(np.polyfit(np.log(h[lo:hi]), np.log(e[lo:hi]), 1)[0])
    return SlopeFit(tuple(h.tolist()), tuple(e.tolist()), slope, (lo, hi))


def two_window_fits(h_values, errors, width: int = 3) -> tuple[SlopeFit, SlopeFit] | None:
    n = len(h_values)
    if n < 2:
        return None
    width = min(width, n)
    return fit_slope(h_values, errors, (0, width)), fit_slope(h_values, errors, (n - width, n))


def reference_state(system: SeparableHamiltonian, y0: PhaseState, T_end: float,
                    rtol: float = 1e-13, atol: float = 1e-14) -> PhaseState:
    """High-accuracy end state from an 8th-order embedded Runge-Kutta solver."""
    d = y0.d

    def f(_t, y):
        return np.concatenate([system.grad_T(y[d:]), -system.grad_V(y[:d])])

    sol = solve_ivp(f, (y0.t, y0.t + T_end), y0.vector(), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"reference solve failed: {sol.message}")
    return PhaseState.from_vector(sol.y[:, -1], y0.t + T_end)


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    steps: int
    err_H: float
    err_parts: tuple[float, ...]
    grad_evals: dict
    wall_ns: int


@dataclass(frozen=True)
class ConvergenceResult:
    rows: tuple[ConvergenceRow, ...]
    fits: dict  # "H", "H1", ... -> (large-h SlopeFit, small-h SlopeFit) or None

    def errors(self, key: str = "H") -> list[float]:
        if key == "H":
            return [r.err_H for r in self.rows]
        return [r.err_parts[int(key[1:]) - 1] for r in self.rows]


def _run_level(args):
    system, method, y0, h, T_end, ref_parts, cfg = args
    n = int(round(T_end / h))
    start = time.perf_counter_ns()
    tr = integrate(system, method, y0, h, n, cfg, record=False)
    wall = time.perf_counter_ns() - start
    err_H = abs(float(tr.H[-1]) - float(tr.H[0]))
    err_parts = tuple(abs(float(a) - float(b)) for a, b in zip(tr.H_parts[-1], ref_parts))
    return ConvergenceRow(h, n, err_H, err_parts, dict(tr.grad_evals), wall)


def hamiltonian_convergence(system: SeparableHamiltonian, method: Method, y0: PhaseState, h_list,
                            T_end: float, cfg: SolverConfig = SolverConfig(),
                            workers: int = 1) -> ConvergenceResult:
    """Energy errors at ``T_end`` over a ladder of step sizes, with two-window slope fits.

    The total energy is conserved, so its error is ``|H(T_end) - H(0)|``. The
    part energies exchange energy with each other, so their errors are measured
    against a high-accuracy reference trajectory instead.
    """
    h_list = [float(h) for h in h_list]
    ref = reference_state(system, y0, T_end)
    ref_parts = system.part_values(ref.q, ref.p)
    jobs = [(system, method, y0, h, T_end, ref_parts, cfg) for h in h_list]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(_run_level, jobs))
    else:
        rows = tuple(_run_level(j) for j in jobs)
    fits = {"H": two_window_fits(h_list, [r.err_H for r in rows])}
    for i in range(len(ref_parts)):
        fits[f"H{i + 1}"] = two_window_fits(h_list, [r.err_parts[i] for r in rows])
    return ConvergenceResult(rows, fits)


def energy_drift(system: SeparableHamiltonian, method: Method, y0: PhaseState, h: float, n_steps: int,
                 cfg: SolverConfig = SolverConfig()) -> float:
    """Slope of the least-squares line through ``(t, H(t) - H(0))``."""
    if h == 0 or n_steps < 2:
        return 0.0
    tr = integrate(system, method, y0, h, n_steps, cfg)
    return float(np.polyfit(tr.t, tr.H - tr.H[0], 1)[0])
