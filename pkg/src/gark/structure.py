"""Algebraic certificates: symplecticity, symmetry, algebraic stability, redundancy."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ZeroWeight
from .tableau import ConditionReport, GarkTableau, PartitionedGarkTableau, coupling_abscissae

DEFAULT_TOL = 1e-12


class Restriction(enum.Enum):
    ALL = "all"
    POTENTIAL_SPLIT = "potential-split"


@dataclass(frozen=True, eq=False)
class SymplecticityMatrix:
    blocks: dict[tuple[int, int], np.ndarray]
    assembled: np.ndarray


@dataclass(frozen=True)
class StabilityDiagnostics:
    min_eigenvalue: float
    min_weight: float
    note: str = (
        "algebraic stability tested as P positive semidefinite with non-negative weights; "
        "strict definiteness would exclude every symplectic method, for which P = 0"
    )


def _maxabs(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def p_block(t: GarkTableau, m: int, l: int) -> np.ndarray:
    """``P^{m,l} = A^{l,m}^T B^l + B^m A^{m,l} - b^m b^l^T``."""
    bm, bl = t.b[m], t.b[l]
    return t.A[l, m].T * bl + bm[:, None] * t.A[m, l] - np.outer(bm, bl)


def symplecticity_matrix(t: GarkTableau) -> SymplecticityMatrix:
    blocks = {}
    for m in t.partitions:
        for l in range(m, t.N + 1):
            blocks[m, l] = p_block(t, m, l)
            if l != m:
                blocks[l, m] = blocks[m, l].T
    offsets = np.concatenate([[0], np.cumsum(t.s)])
    P = np.zeros((t.total_stages, t.total_stages))
    for (m, l), blk in blocks.items():
        P[offsets[m - 1]:offsets[m], offsets[l - 1]:offsets[l]] = blk
    # the diagonal blocks are symmetric in exact arithmetic only; mirror the upper triangle
    P = np.triu(P) + np.triu(P, 1).T
    P.setflags(write=False)
    return SymplecticityMatrix(blocks, P)


def _required_blocks(N: int, restriction: Restriction):
    for m in range(1, N + 1):
        for l in range(m, N + 1):
            if restriction is Restriction.POTENTIAL_SPLIT and not (m == 1) ^ (l == 1):
                continue
            yield m, l


def symplecticity_residual(
    t: GarkTableau, restriction: Restriction = Restriction.ALL, tol: float = DEFAULT_TOL
) -> tuple[ConditionReport, SymplecticityMatrix]:
    """Max-abs entry of every required block of ``P``.

    With ``Restriction.POTENTIAL_SPLIT`` only the blocks coupling partition 1 to
    the others are required: when ``H^1 = T + V^1`` and ``H^m = V^m`` otherwise,
    the remaining blocks never meet a nonzero product of slopes.
    """
    sm = symplecticity_matrix(t)
    items = [("symplectic", (m, l), _maxabs(sm.blocks[m, l])) for m, l in _required_blocks(t.N, restriction)]
    return ConditionReport.from_items(items, tol), sm


def partitioned_symplecticity_blocks(t: PartitionedGarkTableau) -> dict[tuple[int, int], np.ndarray]:
    """``R^{m,l} = Ahat^{l,m}^T B^l + Bhat^m A^{m,l} - bhat^m b^l^T`` of shape ``s_hat^m x s^l``."""
    out = {}
    for m in t.partitions:
        for l in t.partitions:
            out[m, l] = (
                t.A_hat[l, m].T * t.b[l] + t.b_hat[m][:, None] * t.A[m, l] - np.outer(t.b_hat[m], t.b[l])
            )
    return out


def partitioned_symplecticity_residual(t: PartitionedGarkTableau, tol: float = DEFAULT_TOL) -> ConditionReport:
    blocks = partitioned_symplecticity_blocks(t)
    return ConditionReport.from_items(
        (("symplectic", k, _maxabs(v)) for k, v in sorted(blocks.items())), tol
    )


def _symmetry_items(blocks, weights, tag):
    items = []
    for m, w in sorted(weights.items()):
        items.append((f"{tag}weights", (m,), _maxabs(w - w[::-1])))
    for (l, m), a in sorted(blocks.items()):
        r = a + a[::-1, ::-1] - weights[m][None, :]
        items.append((f"{tag}blocks", (l, m), _maxabs(r)))
    return items


def symmetry_residual(t: GarkTableau | PartitionedGarkTableau, tol: float = DEFAULT_TOL) -> ConditionReport:
    """Distance from being a fixed point of time reversal.

    Checks ``b_j = b_{s+1-j}`` and ``a_{ij} + a_{s+1-i,s+1-j} = b_j`` per block,
    and the hatted analogues for partitioned tableaus.
    """
    if isinstance(t, PartitionedGarkTableau):
        items = _symmetry_items(t.A, t.b, "") + _symmetry_items(t.A_hat, t.b_hat, "hat-")
    else:
        items = _symmetry_items(t.A, t.b, "")
    return ConditionReport.from_items(items, tol)


def algebraic_stability_check(t: GarkTableau, tol: float = DEFAULT_TOL) -> tuple[bool, StabilityDiagnostics]:
    P = symplecticity_matrix(t).assembled
    lam = float(np.linalg.eigvalsh(P)[0]) if P.size else 0.0
    wmin = min((float(np.min(w)) for w in t.b.values() if w.size), default=0.0)
    return (lam >= -tol and wmin >= -tol), StabilityDiagnostics(lam, wmin)


def redundancy_residuals(t: GarkTableau, tol: float = DEFAULT_TOL) -> ConditionReport:
    """Residuals of the pairings of order conditions that symplecticity makes redundant.

    * ``b^m.c^{m,l} + b^l.c^{l,m} - 1``
    * ``b^m.(c^{m,s} * c^{m,l}) + b^l.A^{l,m} c^{m,s} - 1/2``
    * ``b^m.(c^{m,u} * A^{m,l} c^{l,s}) + b^l.(c^{l,s} * A^{l,m} c^{m,u}) - 1/4``
    """
    c = coupling_abscissae(t)
    P = list(t.partitions)
    items = []
    for m, l in itertools.product(P, P):
        items.append(("order2-pair", (m, l), t.b[m] @ c[m, l] + t.b[l] @ c[l, m] - 1.0))
    for m, l, s in itertools.product(P, P, P):
        r = t.b[m] @ (c[m, s] * c[m, l]) + t.b[l] @ (t.A[l, m] @ c[m, s]) - 0.5
        items.append(("order3-pair", (m, l, s), r))
    for m, l, s, u in itertools.product(P, P, P, P):
        r = t.b[m] @ (c[m, u] * (t.A[m, l] @ c[l, s])) + t.b[l] @ (c[l, s] * (t.A[l, m] @ c[m, u])) - 0.25
        items.append(("order4-pair", (m, l, s, u), r))
    return ConditionReport.from_items(items, tol)


def merge_condition_residual(t: GarkTableau, tol: float = DEFAULT_TOL) -> ConditionReport:
    """Residual of ``b^m_j a^{m,l}_{j,i} = b^l_i a^{l,m}_{s+1-i, s+1-j}``.

    Together with symmetry this is equivalent to symplecticity.
    """
    for m in t.partitions:
        zero = np.flatnonzero(t.b[m] == 0)
        if zero.size:
            raise ZeroWeight(f"b^{m}_{zero[0] + 1} is zero", partition=m, index=int(zero[0]) + 1)
    items = []
    for m, l in itertools.product(t.partitions, t.partitions):
        lhs = t.A[m, l].T * t.b[m]
        rhs = t.b[l][:, None] * t.A[l, m][::-1, ::-1]
        items.append(("merge", (m, l), _maxabs(lhs - rhs)))
    return ConditionReport.from_items(items, tol)
