"""Generalized additive Runge-Kutta methods for partitioned Hamiltonian systems."""

from .construct import (
    ExplicitSymmetricSpec,
    build_explicit_symmetric,
    compose_symmetric_symplectic,
    is_self_adjoint,
    make_multirate42,
    solve_multirate_weights,
    symplectic_conjugate,
    time_reverse,
)
from .errors import GarkError
from .integrate import (
    PhaseState,
    SolverConfig,
    gark_step,
    integrate,
    leapfrog_step,
    partitioned_step,
    plan_stages,
    rk4_step,
    yoshida4_step,
)
from .order import gark_order_residuals, mixed_order_report, partitioned_order_residuals, verify_order4_iff
from .problems import harmonic_oscillator, pendulum_oscillator, PendulumOscillatorParams
from .structure import (
    algebraic_stability_check,
    merge_condition_residual,
    partitioned_symplecticity_residual,
    redundancy_residuals,
    symmetry_residual,
    symplecticity_residual,
)
from .tableau import (
    ConditionReport,
    GarkTableau,
    PartitionedGarkTableau,
    coupling_abscissae,
    is_internally_consistent,
    read_tableau,
    validate,
    write_tableau,
)

__version__ = "0.1.0"
