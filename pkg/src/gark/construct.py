"""Constructions that produce new tableaus from old ones."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NotSymplectic, OddStageCount, ShapeMismatch, WeightsNotPalindromic, ZeroWeight
from .tableau import Blocks, GarkTableau, PartitionedGarkTableau, Weights

DEFAULT_TOL = 1e-12


def _reverse_blocks(blocks: Blocks, col_weights: Weights) -> Blocks:
    return {
        (l, m): np.ones((a.shape[0], 1)) * col_weights[m][None, :] - a[::-1, ::-1]
        for (l, m), a in blocks.items()
    }


def _toggle(name: str, op: str) -> str:
    """Wrap ``name`` in ``op(...)``, or unwrap it if already wrapped (involutions)."""
    if not name:
        return ""
    prefix = f"{op}("
    if name.startswith(prefix) and name.endswith(")"):
        return name[len(prefix):-1]
    return f"{prefix}{name})"


def time_reverse(t):
    """Tableau of the method run backwards in time.

    ``b -> P b`` and ``A^{l,m} -> 1 b^m^T - P A^{l,m} P`` with ``P`` the
    reversal permutation; partitioned tableaus transform both halves.
    """
    name = _toggle(t.name, "reverse")
    if isinstance(t, PartitionedGarkTableau):
        return PartitionedGarkTableau(
            t.N, t.s, t.s_hat,
            _reverse_blocks(t.A, t.b), _reverse_blocks(t.A_hat, t.b_hat),
            {m: w[::-1] for m, w in t.b.items()}, {m: w[::-1] for m, w in t.b_hat.items()},
            name,
        )
    return GarkTableau(t.N, t.s, _reverse_blocks(t.A, t.b), {m: w[::-1] for m, w in t.b.items()}, name)


def _compose_blocks(blocks: Blocks, reversed_blocks: Blocks, col_weights: Weights) -> Blocks:
    out = {}
    for (l, m), a in blocks.items():
        r, c = a.shape
        top = np.hstack([a, np.zeros((r, c))])
        bottom = np.hstack([np.ones((r, 1)) * col_weights[m][None, :], reversed_blocks[l, m]])
        out[l, m] = np.vstack([top, bottom]) / 2
    return out


def _require_palindromic(weights: Weights, tol: float, label="b") -> None:
    for m, w in weights.items():
        if w.size and np.max(np.abs(w - w[::-1])) > tol:
            raise WeightsNotPalindromic(f"{label}^{m} is not palindromic")


def compose_symmetric_symplectic(t, tol: float = DEFAULT_TOL):
    """Half step of ``t`` followed by a half step of its time reversal.

    The result is symmetric and symplectic whenever ``t`` is symplectic with
    palindromic weights. Stage counts double and the tableau is rescaled so
    that it advances one full step.
    """
    from .structure import partitioned_symplecticity_residual, symplecticity_residual

    name = f"compose({t.name})" if t.name else ""
    if isinstance(t, PartitionedGarkTableau):
        if t.s != t.s_hat or any(np.max(np.abs(t.b[m] - t.b_hat[m]), initial=0) > tol for m in t.partitions):
            raise WeightsNotPalindromic("composition needs b = b_hat on matching stage counts")
        _require_palindromic(t.b, tol)
        rep = partitioned_symplecticity_residual(t, tol)
        if not rep.verdict:
            raise NotSymplectic(f"input is not symplectic (residual {rep.max_abs_residual:.3e})")
        r = time_reverse(t)
        return PartitionedGarkTableau(
            t.N, tuple(2 * x for x in t.s), tuple(2 * x for x in t.s_hat),
            _compose_blocks(t.A, r.A, t.b), _compose_blocks(t.A_hat, r.A_hat, t.b_hat),
            {m: np.concatenate([t.b[m], r.b[m]]) / 2 for m in t.partitions},
            {m: np.concatenate([t.b_hat[m], r.b_hat[m]]) / 2 for m in t.partitions},
            name,
        )
    _require_palindromic(t.b, tol)
    rep, _ = symplecticity_residual(t, tol=tol)
    if not rep.verdict:
        raise NotSymplectic(f"input is not symplectic (residual {rep.max_abs_residual:.3e})")
    r = time_reverse(t)
    return GarkTableau(
        t.N, tuple(2 * x for x in t.s), _compose_blocks(t.A, r.A, t.b),
        {m: np.concatenate([t.b[m], r.b[m]]) / 2 for m in t.partitions}, name,
    )


def symplectic_conjugate(A: Blocks, b: Weights, b_hat: Weights | None = None) -> Blocks:
    """Partner blocks ``Ahat^{l,m} = 1 bhat^m^T - (B^l)^{-1} A^{m,l}^T Bhat^m``.

    ``A^{m,l}`` has rows weighted by ``b_hat^m`` and columns by ``b^l``; with
    ``b_hat`` omitted both weightings are ``b`` (the plain GARK case). The map is
    an involution once the roles of ``b`` and ``b_hat`` are swapped.
    """
    if b_hat is None:
        b_hat = b
    for l, w in sorted(b.items()):
        zero = np.flatnonzero(np.asarray(w) == 0)
        if zero.size:
            raise ZeroWeight(f"b^{l}_{zero[0] + 1} is zero", partition=l, index=int(zero[0]) + 1)
    out = {}
    for (m, l), a in A.items():
        bl, bm = np.asarray(b[l], float), np.asarray(b_hat[m], float)
        out[l, m] = np.ones((bl.size, 1)) * bm[None, :] - (np.asarray(a).T * bm[None, :]) / bl[:, None]
    return out


def conjugate_tableau(t: GarkTableau, name: str = "") -> GarkTableau:
    return GarkTableau(t.N, t.s, symplectic_conjugate(t.A, t.b), t.b, name)


def conjugate_pair(t: GarkTableau, name: str = "") -> PartitionedGarkTableau:
    """Partitioned tableau with ``A_hat = t.A`` and ``A`` its symplectic conjugate."""
    return PartitionedGarkTableau(t.N, t.s, t.s, symplectic_conjugate(t.A, t.b), t.A, t.b, t.b, name)


def is_self_adjoint(t: GarkTableau, tol: float = DEFAULT_TOL) -> bool:
    conj = symplectic_conjugate(t.A, t.b)
    return all(np.max(np.abs(conj[k] - t.A[k]), initial=0.0) <= tol for k in t.A)


# --- explicit symmetric partitioned schemes ------------------------------

@dataclass(frozen=True, eq=False)
class ExplicitSymmetricSpec:
    """Free parameters of an explicit symmetric symplectic partitioned scheme.

    ``half_weights[l]`` holds the first half of ``b^l`` (length ``s^l/2``) and
    ``half_weights_hat[l]`` the first half of ``b_hat^l`` (length ``s_hat^l/2``,
    defaulting to ``half_weights``). ``X[l, m]`` has shape ``s_hat^l/2 x s^m/2``.
    """

    N: int
    half_weights: dict[int, np.ndarray]
    X: dict[tuple[int, int], np.ndarray]
    half_weights_hat: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_weights(cls, b, X, b_hat=None) -> "ExplicitSymmetricSpec":
        """Build a spec from full palindromic weight vectors, keeping their first halves."""
        def halves(ws, label):
            out = {}
            for l, w in ws.items():
                w = np.asarray(w, float)
                if w.size % 2:
                    raise OddStageCount(f"{label}^{l} has an odd number of stages ({w.size})")
                out[l] = w[: w.size // 2]
            return out

        return cls(len(b), halves(b, "b"), dict(X), halves(b_hat or {}, "b_hat"))

    def weights_hat(self) -> dict[int, np.ndarray]:
        out = {}
        for l in range(1, self.N + 1):
            out[l] = np.asarray(self.half_weights_hat.get(l, self.half_weights[l]), float)
        return out


def build_explicit_symmetric(spec: ExplicitSymmetricSpec, name: str = "") -> PartitionedGarkTableau:
    """Explicit partitioned scheme that is symmetric and symplectic for every ``X``."""
    N = spec.N
    bt = {l: np.asarray(spec.half_weights[l], float) for l in range(1, N + 1)}
    bht = spec.weights_hat()
    n = {l: bt[l].size for l in bt}
    nh = {l: bht[l].size for l in bht}
    X = {}
    for l, m in itertools.product(range(1, N + 1), repeat=2):
        x = np.asarray(spec.X.get((l, m), np.zeros((nh[l], n[m]))), float)
        if x.size == 0:
            x = np.zeros((nh[l], n[m]))
        if x.shape != (nh[l], n[m]):
            raise ShapeMismatch(f"X[{l},{m}] has shape {x.shape}, expected {(nh[l], n[m])}", key=(l, m))
        X[l, m] = x

    A, A_hat = {}, {}
    for l, m in itertools.product(range(1, N + 1), repeat=2):
        x = X[l, m]
        ones = np.ones_like(x)
        Bm = np.diag(bt[m])
        A[l, m] = np.block([
            [(ones - x) @ Bm, np.zeros_like(x)],
            [np.ones((nh[l], 1)) * bt[m][None, :], (x @ Bm)[::-1, ::-1]],
        ])
        xt = X[m, l].T
        ones_t = np.ones_like(xt)
        Bhm = np.diag(bht[m])
        A_hat[l, m] = np.block([
            [xt @ Bhm, np.zeros_like(xt)],
            [np.ones((n[l], 1)) * bht[m][None, :], ((ones_t - xt) @ Bhm)[::-1, ::-1]],
        ])
    b = {l: np.concatenate([bt[l], bt[l][::-1]]) for l in bt}
    b_hat = {l: np.concatenate([bht[l], bht[l][::-1]]) for l in bht}
    s = tuple(2 * n[l] for l in range(1, N + 1))
    s_hat = tuple(2 * nh[l] for l in range(1, N + 1))
    return PartitionedGarkTableau(N, s, s_hat, A, A_hat, b, b_hat, name)


# --- the 6/2 multirate scheme -------------------------------------------

MULTIRATE_X11 = np.triu(np.ones((3, 3)), 1)
MULTIRATE_X21 = np.array([[0.0, 1.0, 1.0]])


def multirate_spec(b1: float, b2: float, b3: float, bslow: float) -> ExplicitSymmetricSpec:
    fast = np.array([b1, b2, b3])
    return ExplicitSymmetricSpec(
        N=2,
        half_weights={1: fast, 2: np.zeros(0)},
        half_weights_hat={1: fast, 2: np.array([bslow])},
        X={(1, 1): MULTIRATE_X11, (2, 1): MULTIRATE_X21},
    )


def _multirate_residual(w: np.ndarray) -> np.ndarray:
    t = build_explicit_symmetric(multirate_spec(*w))
    bf, Ah = t.b[1], t.A_hat[1, 1]
    ch = Ah.sum(axis=1)
    return np.array([
        bf.sum() - 1.0,
        bf @ (ch * ch) - 1 / 3,
        bf @ (Ah @ ch) - 1 / 6,
        t.b_hat[2].sum() - 1.0,
    ])


def _multirate_jacobian(w: np.ndarray) -> np.ndarray:
    # A_hat^{1,1} and b^1 are linear in (b1, b2, b3); differentiate through the basis
    basis = [build_explicit_symmetric(multirate_spec(*e, 0.0)) for e in np.eye(3)]
    E = [bt.A_hat[1, 1] for bt in basis]
    db = [bt.b[1] for bt in basis]
    t = build_explicit_symmetric(multirate_spec(*w))
    bf, Ah = t.b[1], t.A_hat[1, 1]
    one = np.ones(bf.size)
    ch = Ah @ one
    J = np.zeros((4, 4))
    for k in range(3):
        dch = E[k] @ one
        J[0, k] = db[k].sum()
        J[1, k] = db[k] @ (ch * ch) + 2 * bf @ (ch * dch)
        J[2, k] = db[k] @ (Ah @ ch) + bf @ (E[k] @ ch) + bf @ (Ah @ dch)
    J[3, 3] = 2.0
    return J


def _newton(w0, tol=1e-15, max_iter=100):
    w = np.array(w0, float)
    F = _multirate_residual(w)
    for _ in range(max_iter):
        if np.max(np.abs(F)) <= tol:
            break
        try:
            step = np.linalg.solve(_multirate_jacobian(w), -F)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while True:
            trial = w + lam * step
            Ft = _multirate_residual(trial)
            if np.linalg.norm(Ft) < np.linalg.norm(F) or lam < 1e-6:
                break
            lam /= 2
        if not np.linalg.norm(Ft) < np.linalg.norm(F):
            break
        w, F = trial, Ft
    return w if np.max(np.abs(F)) <= 1e-13 else None


def solve_multirate_weights(start=(1.0, -1.0, 0.5, 0.5)) -> tuple[float, float, float, float]:
    """Root of the four weight conditions of the 6/2 multirate scheme.

    Damped Newton with an analytic Jacobian, falling back to a grid of starting
    points when the given one fails.
    """
    w = _newton(start)
    if w is None:
        for g in itertools.product(np.linspace(-2, 2, 8), repeat=3):
            w = _newton((*g, 0.5))
            if w is not None:
                break
    if w is None:
        raise NoConvergence("weight conditions could not be solved")
    return tuple(float(x) for x in w)


def multirate_residuals(weights) -> np.ndarray:
    return _multirate_residual(np.asarray(weights, float))


def make_multirate42(weights=None) -> PartitionedGarkTableau:
    """Explicit symmetric symplectic scheme, order 4 in the fast and 2 in the slow part.

    Each step costs six fast and two slow potential gradients.
    """
    if weights is None:
        weights = solve_multirate_weights()
    return build_explicit_symmetric(multirate_spec(*weights), name="multirate42")
