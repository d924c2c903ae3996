"""Step maps, stage planning, implicit stage solves and trajectory driver.

Both tableau kinds are compiled into the same form: a list of stages, each
with a value ``Y_i = base_i + h * sum_j W_ij F_j`` and a slope ``F_i`` computed
from ``Y_i``. For partitioned tableaus a momentum stage reads position-stage
slopes and vice versa; for GARK tableaus every stage carries both ``(P, Q)``.
"""

from __future__ import annotations

import enum
import functools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Union

import networkx as nx
import numpy as np

from .errors import DimensionMismatch, StageSolveFailure
from .problems import SeparableHamiltonian, SplitHamiltonian, split
from .tableau import GarkTableau, PartitionedGarkTableau


@dataclass(frozen=True, eq=False)
class PhaseState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, float))
        p = np.atleast_1d(np.asarray(self.p, float))
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatch(f"q has shape {q.shape} but p has shape {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase state contains non-finite values")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.q.size

    def flip(self) -> "PhaseState":
        """Momentum reversal ``(q, p) -> (q, -p)``."""
        return PhaseState(self.q, -self.p, self.t)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "PhaseState":
        y = np.asarray(y, float)
        d = y.size // 2
        return cls(y[:d], y[d:], t)


class Strategy(enum.Enum):
    FIXED_POINT = "fixed-point"
    NEWTON_FALLBACK = "newton-fallback"


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-13
    max_iters: int = 50
    strategy: Strategy = Strategy.NEWTON_FALLBACK

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class StepStats:
    solver_iterations: int = 0
    newton_iterations: int = 0
    implicit_solves: int = 0


@dataclass(frozen=True, order=True)
class StageId:
    partition: int
    index: int
    kind: str  # "position", "momentum" or "joint"

    def __str__(self) -> str:
        tag = {"position": "Q", "momentum": "P", "joint": "Y"}[self.kind]
        return f"{tag}{self.index}^{self.partition}"


@dataclass(frozen=True)
class StagePlan:
    order: tuple[StageId, ...]
    explicit: bool
    implicit_groups: tuple[tuple[StageId, ...], ...]
    groups: tuple[tuple[tuple[StageId, ...], bool], ...] = field(repr=False, default=())


# --- compilation ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Compiled:
    stages: tuple[StageId, ...]
    W: np.ndarray                    # n x n stage coupling
    rows: tuple                      # per stage: (nonzero column indices, coefficients)
    weights_q: np.ndarray            # final-update weights for the q increment
    weights_p: np.ndarray            # final-update weights for the p increment
    plan: StagePlan
    groups: tuple                    # (stage indices, implicit) in evaluation order


def _stage_sort_key(s: StageId):
    return (s.index, s.partition, {"momentum": 0, "joint": 0, "position": 1}[s.kind])


def _make_plan(stages, W) -> tuple[StagePlan, tuple]:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(stages)))
    rows, cols = np.nonzero(W)
    g.add_edges_from(zip(cols.tolist(), rows.tolist()))  # j feeds i
    cond = nx.condensation(g)
    members = cond.graph["mapping"]
    comp_nodes: dict[int, list[int]] = {}
    for node, comp in members.items():
        comp_nodes.setdefault(comp, []).append(node)
    key = lambda c: min(_stage_sort_key(stages[i]) for i in comp_nodes[c])  # noqa: E731
    groups = []
    for comp in nx.lexicographical_topological_sort(cond, key=key):
        nodes = sorted(comp_nodes[comp], key=lambda i: _stage_sort_key(stages[i]))
        implicit = len(nodes) > 1 or W[nodes[0], nodes[0]] != 0
        groups.append((tuple(nodes), implicit))
    order = tuple(stages[i] for nodes, _ in groups for i in nodes)
    implicit_groups = tuple(tuple(stages[i] for i in nodes) for nodes, imp in groups if imp)
    plan = StagePlan(
        order, not implicit_groups, implicit_groups,
        tuple((tuple(stages[i] for i in nodes), imp) for nodes, imp in groups),
    )
    return plan, tuple(groups)


def _finish(stages, W, wq, wp) -> _Compiled:
    W.setflags(write=False)
    rows = tuple((np.flatnonzero(W[i]), W[i][np.flatnonzero(W[i])]) for i in range(len(stages)))
    plan, groups = _make_plan(stages, W)
    return _Compiled(tuple(stages), W, rows, wq, wp, plan, groups)


@functools.lru_cache(maxsize=64)
def _compile_partitioned(t: PartitionedGarkTableau) -> _Compiled:
    mom = [StageId(q, i + 1, "momentum") for q in t.partitions for i in range(t.s[q - 1])]
    pos = [StageId(q, i + 1, "position") for q in t.partitions for i in range(t.s_hat[q - 1])]
    n_m, n_p = len(mom), len(pos)
    W = np.zeros((n_m + n_p, n_m + n_p))
    off = np.concatenate([[0], np.cumsum(t.s)]).astype(int)
    offh = np.concatenate([[0], np.cumsum(t.s_hat)]).astype(int)
    for q in t.partitions:
        for m in t.partitions:
            # momentum rows read position slopes through A_hat
            W[off[q - 1]:off[q], n_m + offh[m - 1]:n_m + offh[m]] = t.A_hat[q, m]
            # position rows read momentum slopes through A
            W[n_m + offh[q - 1]:n_m + offh[q], off[m - 1]:off[m]] = t.A[q, m]
    wq = np.concatenate([np.concatenate([t.b[m] for m in t.partitions]), np.zeros(n_p)])
    wp = np.concatenate([np.zeros(n_m), np.concatenate([t.b_hat[m] for m in t.partitions])])
    return _finish(mom + pos, W, wq, wp)


@functools.lru_cache(maxsize=64)
def _compile_gark(t: GarkTableau) -> _Compiled:
    stages = [StageId(q, i + 1, "joint") for q in t.partitions for i in range(t.s[q - 1])]
    off = np.concatenate([[0], np.cumsum(t.s)]).astype(int)
    W = np.zeros((len(stages), len(stages)))
    for (q, m), a in t.A.items():
        W[off[q - 1]:off[q], off[m - 1]:off[m]] = a
    w = np.concatenate([t.b[m] for m in t.partitions])
    return _finish(stages, W, w, w)


def plan_stages(t: GarkTableau | PartitionedGarkTableau) -> StagePlan:
    """Evaluation order of the stages and the groups that need a simultaneous solve."""
    return (_compile_partitioned(t) if isinstance(t, PartitionedGarkTableau) else _compile_gark(t)).plan


# --- stage evaluation -------------------------------------------------------

def _converged(delta: float, scale: float, cfg: SolverConfig) -> bool:
    return delta <= cfg.abs_tol + cfg.rel_tol * scale


def _run_stages(comp: _Compiled, base: list, slope: Callable, h: float, dv: int,
                cfg: SolverConfig, stats: StepStats | None) -> np.ndarray:
    n = len(comp.stages)
    F = np.zeros((n, dv))
    rows = comp.rows
    for nodes, implicit in comp.groups:
        if not implicit:
            i = nodes[0]
            idx, coef = rows[i]
            y = base[i] + h * (coef @ F[idx]) if idx.size else base[i]
            F[i] = slope(i, y)
        else:
            _solve_group(comp, nodes, base, slope, h, F, cfg, stats)
    return F


def _group_map(comp, nodes, base, slope, h, F):
    """Stage values implied by the current slopes, and slopes of given values."""
    def values_from_slopes():
        return np.array([base[i] + h * (comp.W[i] @ F) for i in nodes])

    def slopes_of(Y):
        return np.array([slope(i, y) for i, y in zip(nodes, Y)])

    return values_from_slopes, slopes_of


def _solve_group(comp, nodes, base, slope, h, F, cfg, stats):
    nodes = list(nodes)
    values_from_slopes, slopes_of = _group_map(comp, nodes, base, slope, h, F)
    if stats is not None:
        stats.implicit_solves += 1
    Y = np.array([base[i] for i in nodes])
    F[nodes] = slopes_of(Y)
    prev, slow = math.inf, 0
    delta = math.inf
    for _ in range(cfg.max_iters):
        Y_new = values_from_slopes()
        delta = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        F[nodes] = slopes_of(Y)
        if stats is not None:
            stats.solver_iterations += 1
        if _converged(delta, float(np.max(np.abs(Y))), cfg):
            return
        slow = slow + 1 if delta > 0.9 * prev else 0
        prev = delta
        if slow >= 5:
            break
    if cfg.strategy is Strategy.NEWTON_FALLBACK:
        delta = _newton_group(nodes, Y, values_from_slopes, slopes_of, F, cfg, stats)
        if delta is None:
            return
    raise StageSolveFailure(
        f"stage group {[str(comp.stages[i]) for i in nodes]} did not converge",
        group=tuple(str(comp.stages[i]) for i in nodes), residual=delta,
    )


def _newton_group(nodes, Y, values_from_slopes, slopes_of, F, cfg, stats):
    shape = Y.shape

    def G(x):
        F[nodes] = slopes_of(x.reshape(shape))
        return x - values_from_slopes().ravel()

    x = Y.ravel().copy()
    r = G(x)
    for _ in range(cfg.max_iters):
        J = np.empty((x.size, x.size))
        for k in range(x.size):
            e = 1e-7 * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += e
            xm[k] -= e
            J[:, k] = (G(xp) - G(xm)) / (2 * e)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        x = x + dx
        r = G(x)
        if stats is not None:
            stats.newton_iterations += 1
        if _converged(float(np.max(np.abs(dx))), float(np.max(np.abs(x))), cfg) or not np.any(r):
            G(x)
            return None
    return float(np.max(np.abs(r)))


# --- public step maps --------------------------------------------------------

def partitioned_step(system: SeparableHamiltonian, t: PartitionedGarkTableau, y: PhaseState, h: float,
                     cfg: SolverConfig = SolverConfig(), stats: StepStats | None = None) -> PhaseState:
    """One step of a partitioned GARK scheme.

    Potential ``V_q`` drives the position stages of partition ``q``; the
    kinetic energy lives in partition 1 so momentum stages of other partitions
    have zero kinetic slope. A system with more potentials than partitions has
    the surplus folded into the last partition.
    """
    if len(system.potentials) != t.N:
        system = system.merged(t.N)
    if y.d != system.d:
        raise DimensionMismatch(f"state dimension {y.d} != system dimension {system.d}")
    comp = _compile_partitioned(t)
    stages = comp.stages
    grad_T, pots = system.grad_T, system.potentials
    zero = np.zeros(y.d)

    def slope(i, value):
        st = stages[i]
        if st.kind == "momentum":
            return grad_T(value) if st.partition == 1 else zero
        return -pots[st.partition - 1].grad(value)

    base = [y.p if st.kind == "momentum" else y.q for st in stages]
    F = _run_stages(comp, base, slope, h, y.d, cfg, stats)
    return PhaseState(y.q + h * (comp.weights_q @ F), y.p + h * (comp.weights_p @ F), y.t + h)


def gark_step(system: SplitHamiltonian | SeparableHamiltonian, t: GarkTableau, y: PhaseState, h: float,
              cfg: SolverConfig = SolverConfig(), stats: StepStats | None = None) -> PhaseState:
    """One step of a GARK scheme on ``H = sum_m H^m``; part ``m`` uses blocks ``A^{m,*}``."""
    if isinstance(system, SeparableHamiltonian):
        system = split(system, t.N)
    if len(system.parts) != t.N:
        raise DimensionMismatch(f"system has {len(system.parts)} parts, tableau {t.N} partitions")
    if y.d != system.d:
        raise DimensionMismatch(f"state dimension {y.d} != system dimension {system.d}")
    comp = _compile_gark(t)
    stages, parts, d = comp.stages, system.parts, y.d

    def slope(i, value):
        part = parts[stages[i].partition - 1]
        P, Q = value[:d], value[d:]
        return np.concatenate([-part.dHdq(Q, P), part.dHdp(Q, P)])

    y0 = np.concatenate([y.p, y.q])
    F = _run_stages(comp, [y0] * len(stages), slope, h, 2 * d, cfg, stats)
    inc = h * (comp.weights_q @ F)
    return PhaseState(y.q + inc[d:], y.p + inc[:d], y.t + h)


def to_gark(t: PartitionedGarkTableau) -> GarkTableau:
    """Embed a partitioned tableau as a ``2N``-partition GARK tableau.

    Partitions ``1..N`` carry the kinetic parts (momentum stages) and
    ``N+1..2N`` the potentials (position stages).
    """
    N = t.N
    s = tuple(t.s) + tuple(t.s_hat)
    A = {}
    for q in range(1, 2 * N + 1):
        for m in range(1, 2 * N + 1):
            A[q, m] = np.zeros((s[q - 1], s[m - 1]))
    for q in t.partitions:
        for m in t.partitions:
            A[q, N + m] = t.A_hat[q, m]
            A[N + q, m] = t.A[q, m]
    b = {m: t.b[m] for m in t.partitions}
    b.update({N + m: t.b_hat[m] for m in t.partitions})
    return GarkTableau(2 * N, s, A, b, f"gark({t.name})" if t.name else "")


# --- reference integrators ------------------------------------------------------

YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = 1.0 - 2.0 * YOSHIDA_W1


def leapfrog_step(system: SeparableHamiltonian, y: PhaseState, h: float) -> PhaseState:
    """Drift-kick-drift Verlet step."""
    q_half = y.q + 0.5 * h * system.grad_T(y.p)
    p1 = y.p - h * system.grad_V(q_half)
    return PhaseState(q_half + 0.5 * h * system.grad_T(p1), p1, y.t + h)


def yoshida4_step(system: SeparableHamiltonian, y: PhaseState, h: float) -> PhaseState:
    y1 = leapfrog_step(system, y, YOSHIDA_W1 * h)
    y2 = leapfrog_step(system, y1, YOSHIDA_W0 * h)
    y3 = leapfrog_step(system, y2, YOSHIDA_W1 * h)
    return PhaseState(y3.q, y3.p, y.t + h)


def rk4_step(system: SeparableHamiltonian, y: PhaseState, h: float) -> PhaseState:
    def f(q, p):
        return system.grad_T(p), -system.grad_V(q)

    k1q, k1p = f(y.q, y.p)
    k2q, k2p = f(y.q + 0.5 * h * k1q, y.p + 0.5 * h * k1p)
    k3q, k3p = f(y.q + 0.5 * h * k2q, y.p + 0.5 * h * k2p)
    k4q, k4p = f(y.q + h * k3q, y.p + h * k3p)
    return PhaseState(
        y.q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q),
        y.p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p),
        y.t + h,
    )


REFERENCE_METHODS: dict[str, Callable] = {
    "leapfrog": leapfrog_step,
    "yoshida4": yoshida4_step,
    "rk4": rk4_step,
}

Method = Union[GarkTableau, PartitionedGarkTableau, str, Callable]
Stepper = Callable[[PhaseState, float], PhaseState]


def make_stepper(method: Method, system: SeparableHamiltonian, cfg: SolverConfig = SolverConfig(),
                 stats: StepStats | None = None) -> Stepper:
    """Bind a method to a system, returning ``step(y, h) -> PhaseState``."""
    if isinstance(method, PartitionedGarkTableau):
        return lambda y, h: partitioned_step(system, method, y, h, cfg, stats)
    if isinstance(method, GarkTableau):
        parts = split(system, method.N)
        return lambda y, h: gark_step(parts, method, y, h, cfg, stats)
    if isinstance(method, str):
        try:
            fn = REFERENCE_METHODS[method]
        except KeyError:
            raise ValueError(f"unknown reference method {method!r}") from None
        return lambda y, h: fn(system, y, h)
    if callable(method):
        return lambda y, h: method(system, y, h)
    raise TypeError(f"cannot integrate with {method!r}")


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    H_parts: np.ndarray
    grad_evals: Counter

    @property
    def final(self) -> PhaseState:
        return PhaseState(self.q[-1], self.p[-1], float(self.t[-1]))


def integrate(system: SeparableHamiltonian, method: Method, y0: PhaseState, h: float, n_steps: int,
              cfg: SolverConfig = SolverConfig(), record: bool = True) -> Trajectory:
    """Apply the step map ``n_steps`` times.

    With ``record=False`` only the initial and final states are stored, which
    keeps long sweeps cheap.
    """
    if h == 0:
        raise ValueError("step size must be nonzero")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    counted = system.counted()
    step = make_stepper(method, counted, cfg)
    states = [y0]
    y = y0
    for k in range(n_steps):
        try:
            y = step(y, h)
        except StageSolveFailure as exc:
            exc.step = k
            raise
        if record:
            states.append(y)
    if not record and n_steps:
        states.append(y)
    q = np.array([s.q for s in states])
    p = np.array([s.p for s in states])
    parts = np.array([system.part_values(a, b) for a, b in zip(q, p)])
    return Trajectory(
        np.array([s.t for s in states]), q, p, parts.sum(axis=1), parts, Counter(counted.counts)
    )
