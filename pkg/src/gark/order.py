"""Order-condition residuals through order four.

Residuals are always ``lhs - rhs``. General GARK tableaus use the full coupled
condition set; internally consistent tableaus may use the reduced set in which
every abscissa of a block row is replaced by the common ``c^q``.

Partitioned conditions come in two families. Family ``a`` is rooted at a
potential slope and uses ``b_hat``, ``A`` and ``c = A 1``; family ``b`` is
rooted at a kinetic slope and uses ``b``, ``A_hat`` and ``c_hat = A_hat 1``.
Instances whose tree contains a vertex living in a partition with no stages
are skipped: those conditions are vacuous.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NotConjugate, NotSymmetric
from .tableau import ConditionReport, GarkTableau, PartitionedGarkTableau, coupling_abscissae, is_internally_consistent

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class OrderReport:
    per_order: dict[int, ConditionReport]
    attained_order: int
    internally_consistent: bool = False
    condition_set: str = "full"

    def residual(self, cond_id: str, index: tuple) -> float:
        for rep in self.per_order.values():
            for e in rep.entries:
                if e.id == cond_id and e.index == tuple(index):
                    return e.residual
        raise KeyError((cond_id, index))

    def family(self, cond_id: str) -> ConditionReport:
        rep = next(iter(self.per_order.values()))
        entries = tuple(e for r in self.per_order.values() for e in r.entries if e.id == cond_id)
        return ConditionReport(entries, rep.tolerance)


def _attained(per_order: dict[int, ConditionReport]) -> int:
    p = 0
    for k in sorted(per_order):
        if not per_order[k].verdict:
            break
        p = k
    return p


def _check_max_order(max_order: int) -> None:
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be between 1 and 4")


def gark_order_residuals(
    t: GarkTableau, max_order: int = 4, tol: float = DEFAULT_TOL, mode: str = "auto"
) -> OrderReport:
    """Evaluate every order-condition instance up to ``max_order``.

    ``mode`` is ``"full"``, ``"intcons"`` or ``"auto"``; the latter picks the
    reduced set exactly when the tableau is internally consistent at ``tol``.
    """
    _check_max_order(max_order)
    consistent, _ = is_internally_consistent(t, tol)
    if mode == "auto":
        mode = "intcons" if consistent else "full"
    if mode not in ("full", "intcons"):
        raise ValueError(f"unknown mode {mode!r}")
    c = coupling_abscissae(t)
    b, A, P = t.b, t.A, list(t.partitions)
    per: dict[int, list] = {p: [] for p in range(1, max_order + 1)}

    for s in P:
        per[1].append(("1", (s,), b[s].sum() - 1.0))

    if mode == "full":
        prod = lambda k: itertools.product(P, repeat=k)  # noqa: E731
        if max_order >= 2:
            per[2] = [("2", (s, v), b[s] @ c[s, v] - 0.5) for s, v in prod(2)]
        if max_order >= 3:
            per[3] = [("3a", (s, v, m), b[s] @ (c[s, v] * c[s, m]) - 1 / 3) for s, v, m in prod(3)]
            per[3] += [("3b", (s, v, m), b[s] @ (A[s, v] @ c[v, m]) - 1 / 6) for s, v, m in prod(3)]
        if max_order >= 4:
            per[4] = [("4a", ix, b[ix[0]] @ (c[ix[0], ix[1]] * c[ix[0], ix[2]] * c[ix[0], ix[3]]) - 0.25)
                      for ix in prod(4)]
            per[4] += [("4b", (s, v, l, m), (b[s] * c[s, m]) @ (A[s, v] @ c[v, l]) - 1 / 8)
                       for s, v, l, m in prod(4)]
            per[4] += [("4c", (s, v, l, m), b[s] @ (A[s, v] @ (c[v, l] * c[v, m])) - 1 / 12)
                       for s, v, l, m in prod(4)]
            per[4] += [("4d", (s, v, l, m), b[s] @ (A[s, v] @ (A[v, l] @ c[l, m])) - 1 / 24)
                       for s, v, l, m in prod(4)]
    else:
        cc = {s: c[s, s] for s in P}
        if max_order >= 2:
            per[2] = [("2", (s,), b[s] @ cc[s] - 0.5) for s in P]
        if max_order >= 3:
            per[3] = [("3a", (s,), b[s] @ cc[s] ** 2 - 1 / 3) for s in P]
            per[3] += [("3b", (s, v), b[s] @ (A[s, v] @ cc[v]) - 1 / 6) for s, v in itertools.product(P, P)]
        if max_order >= 4:
            per[4] = [("4a", (s,), b[s] @ cc[s] ** 3 - 0.25) for s in P]
            per[4] += [("4b", (s, v), (b[s] * cc[s]) @ (A[s, v] @ cc[v]) - 1 / 8)
                       for s, v in itertools.product(P, P)]
            per[4] += [("4c", (s, v), b[s] @ (A[s, v] @ cc[v] ** 2) - 1 / 12)
                       for s, v in itertools.product(P, P)]
            per[4] += [("4d", (s, v, l), b[s] @ (A[s, v] @ (A[v, l] @ cc[l])) - 1 / 24)
                       for s, v, l in itertools.product(P, P, P)]

    reports = {p: ConditionReport.from_items(items, tol) for p, items in per.items()}
    return OrderReport(reports, _attained(reports), consistent, mode)


# --- partitioned ---------------------------------------------------------

@dataclass(frozen=True)
class _Family:
    """One colouring of the bicoloured trees through order four."""

    suffix: str
    w: dict          # root weights
    M: dict          # root -> opposite colour coupling
    Mo: dict         # opposite colour -> root colour coupling
    c: dict          # row sums of M
    co: dict         # row sums of Mo
    n_root: tuple    # stage counts of the root colour
    n_other: tuple   # stage counts of the opposite colour


def _families(t: PartitionedGarkTableau) -> tuple[_Family, _Family]:
    c = {k: v.sum(axis=1) for k, v in t.A.items()}
    ch = {k: v.sum(axis=1) for k, v in t.A_hat.items()}
    fa = _Family("a", t.b_hat, t.A, t.A_hat, c, ch, t.s_hat, t.s)
    fb = _Family("b", t.b, t.A_hat, t.A, ch, c, t.s, t.s_hat)
    return fa, fb


@dataclass(frozen=True)
class _Cond:
    order: int
    id: str
    arity: int
    rhs: float
    # partitions that must be non-empty: (colour, position-in-index) pairs
    vertices: tuple[tuple[str, int], ...]
    lhs: Callable = field(compare=False)


_CONDITIONS = (
    _Cond(1, "1", 1, 1.0, (("r", 0),), lambda f, s: f.w[s].sum()),
    _Cond(2, "2", 2, 1 / 2, (("r", 0), ("o", 1)), lambda f, s, v: f.w[s] @ f.c[s, v]),
    _Cond(3, "3a", 3, 1 / 3, (("r", 0), ("o", 1), ("o", 2)),
          lambda f, s, v, m: f.w[s] @ (f.c[s, v] * f.c[s, m])),
    _Cond(3, "3b", 3, 1 / 6, (("r", 0), ("o", 1), ("r", 2)),
          lambda f, s, v, m: f.w[s] @ (f.M[s, v] @ f.co[v, m])),
    _Cond(4, "4a", 4, 1 / 4, (("r", 0), ("o", 1), ("o", 2), ("o", 3)),
          lambda f, s, v, l, m: f.w[s] @ (f.c[s, v] * f.c[s, l] * f.c[s, m])),
    _Cond(4, "4b", 4, 1 / 8, (("r", 0), ("o", 1), ("r", 2), ("o", 3)),
          lambda f, s, v, l, m: (f.w[s] * f.c[s, m]) @ (f.M[s, v] @ f.co[v, l])),
    _Cond(4, "4c", 4, 1 / 12, (("r", 0), ("o", 1), ("r", 2), ("r", 3)),
          lambda f, s, v, l, m: f.w[s] @ (f.M[s, v] @ (f.co[v, l] * f.co[v, m]))),
    _Cond(4, "4d", 4, 1 / 24, (("r", 0), ("o", 1), ("r", 2), ("o", 3)),
          lambda f, s, v, l, m: f.w[s] @ (f.M[s, v] @ (f.Mo[v, l] @ f.c[l, m]))),
)


def _nonempty(f: _Family, cond: _Cond, ix: tuple) -> bool:
    for colour, pos in cond.vertices:
        counts = f.n_root if colour == "r" else f.n_other
        if counts[ix[pos] - 1] == 0:
            return False
    return True


def partitioned_order_residuals(
    t: PartitionedGarkTableau,
    max_order: int = 4,
    tol: float = DEFAULT_TOL,
    partitions: tuple[int, ...] | None = None,
) -> OrderReport:
    """Evaluate both condition families up to ``max_order``.

    ``partitions`` restricts every index to the given subset, which is how the
    order of a single (fast) partition is measured.
    """
    _check_max_order(max_order)
    P = list(partitions) if partitions is not None else list(t.partitions)
    per: dict[int, list] = {p: [] for p in range(1, max_order + 1)}
    for cond in _CONDITIONS:
        if cond.order > max_order:
            continue
        for f in _families(t):
            for ix in itertools.product(P, repeat=cond.arity):
                if _nonempty(f, cond, ix):
                    per[cond.order].append((cond.id + f.suffix, ix, cond.lhs(f, *ix) - cond.rhs))
    reports = {p: ConditionReport.from_items(items, tol) for p, items in per.items()}
    return OrderReport(reports, _attained(reports), False, "partitioned")


@dataclass(frozen=True)
class MixedOrderReport:
    fast_order: int
    overall_order: int
    fast_attained: int
    overall_attained: int
    notes: tuple[str, ...]


def _doubled(p: int) -> int:
    return p + 1 if p % 2 == 1 and p < 4 else p


def mixed_order_report(
    t: PartitionedGarkTableau, fast_partition: int = 1, tol: float = DEFAULT_TOL
) -> MixedOrderReport:
    """Order of the fast partition alone and of the full coupled scheme.

    The tableau must be symmetric; symmetric methods have even order, so an odd
    attained order is promoted to the next even one and the promotion recorded.
    """
    from .structure import symmetry_residual

    sym = symmetry_residual(t, tol)
    if not sym.verdict:
        raise NotSymmetric(f"tableau is not symmetric (residual {sym.max_abs_residual:.3e})")
    fast = partitioned_order_residuals(t, 4, tol, partitions=(fast_partition,)).attained_order
    overall = partitioned_order_residuals(t, 4, tol).attained_order
    notes = []
    for label, raw in (("fast", fast), ("overall", overall)):
        if _doubled(raw) != raw:
            notes.append(f"{label}: order {raw} attained, order {raw + 1} follows from symmetry")
    return MixedOrderReport(_doubled(fast), _doubled(overall), fast, overall, tuple(notes))


@dataclass(frozen=True)
class Order4Equivalence:
    agree: bool
    order4: bool
    report_4ba: ConditionReport
    report_4bb: ConditionReport


def verify_order4_iff(t: PartitionedGarkTableau, tol: float = DEFAULT_TOL) -> Order4Equivalence:
    """Check that coupling conditions 4ba and 4bb pass or fail together.

    For a conjugate pair only one of them carries information: the pairing
    identity forced by symplecticity ties their residuals together.
    """
    from .construct import symplectic_conjugate

    expected = symplectic_conjugate(t.A, t.b, t.b_hat)
    for k, v in expected.items():
        if v.size and np.max(np.abs(v - t.A_hat[k])) > max(tol, 1e-12):
            raise NotConjugate(f"A_hat^{k} is not the symplectic conjugate of A")
    rep = partitioned_order_residuals(t, 4, tol)
    r_a, r_b = rep.family("4ba"), rep.family("4bb")
    return Order4Equivalence(r_a.verdict == r_b.verdict, rep.attained_order >= 4, r_a, r_b)
