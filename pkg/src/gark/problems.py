"""Test Hamiltonians and gradient self-checks."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

Vector = np.ndarray


@dataclass(frozen=True, eq=False)
class Potential:
    V: Callable[[Vector], float]
    grad: Callable[[Vector], Vector]
    label: str


@dataclass(frozen=True, eq=False)
class SeparableHamiltonian:
    """``H(q, p) = T(p) + sum_i V_i(q)``.

    The kinetic energy belongs to the first part, so the part energies are
    ``H^1 = T + V_1`` and ``H^i = V_i`` for ``i > 1``.
    """

    d: int
    T: Callable[[Vector], float]
    grad_T: Callable[[Vector], Vector]
    potentials: tuple[Potential, ...]
    name: str = ""
    counts: Counter | None = field(default=None, compare=False)

    def H(self, q, p) -> float:
        return self.T(p) + sum(v.V(q) for v in self.potentials)

    def part_values(self, q, p) -> list[float]:
        vals = [v.V(q) for v in self.potentials]
        vals[0] += self.T(p)
        return vals

    def grad_V(self, q) -> Vector:
        return sum(v.grad(q) for v in self.potentials)

    def padded(self, n: int) -> "SeparableHamiltonian":
        """Append identically zero potentials until there are ``n`` of them."""
        extra = tuple(
            Potential(lambda q: 0.0, lambda q: np.zeros_like(q), f"zero{i}")
            for i in range(len(self.potentials), n)
        )
        return replace(self, potentials=self.potentials + extra)

    def merged(self, n: int) -> "SeparableHamiltonian":
        """Exactly ``n`` potentials: pad with zeros or fold the surplus into the last one."""
        if n < 1:
            raise ValueError("need at least one potential")
        if len(self.potentials) <= n:
            return self.padded(n)
        keep, rest = self.potentials[: n - 1], self.potentials[n - 1:]
        folded = Potential(
            lambda q: sum(v.V(q) for v in rest),
            lambda q: sum(v.grad(q) for v in rest),
            "+".join(v.label for v in rest),
        )
        return replace(self, potentials=keep + (folded,))

    def counted(self) -> "SeparableHamiltonian":
        """Copy whose gradient calls are tallied in ``.counts`` by label."""
        counts: Counter = Counter()

        def tally(fn, label):
            def wrapped(x):
                counts[label] += 1
                return fn(x)
            return wrapped

        pots = tuple(Potential(v.V, tally(v.grad, v.label), v.label) for v in self.potentials)
        return replace(self, grad_T=tally(self.grad_T, "kinetic"), potentials=pots, counts=counts)


@dataclass(frozen=True, eq=False)
class HamiltonianPart:
    H: Callable[[Vector, Vector], float]
    dHdq: Callable[[Vector, Vector], Vector]
    dHdp: Callable[[Vector, Vector], Vector]
    label: str = ""


@dataclass(frozen=True, eq=False)
class SplitHamiltonian:
    """General additive splitting ``H = sum_m H^m`` for GARK steps."""

    d: int
    parts: tuple[HamiltonianPart, ...]

    def H(self, q, p) -> float:
        return sum(part.H(q, p) for part in self.parts)

    def part_values(self, q, p) -> list[float]:
        return [part.H(q, p) for part in self.parts]


def split(system: SeparableHamiltonian, n_parts: int) -> SplitHamiltonian:
    """Express a separable system as ``n_parts`` additive Hamiltonians.

    With as many parts as potentials the kinetic energy joins the first part.
    With one more part the kinetic energy becomes a part of its own. Otherwise
    missing parts are padded with zero potentials and surplus potentials are
    folded into the last part.
    """
    pots = list(system.potentials)
    zero = np.zeros(system.d)

    def kinetic_part(extra: Potential | None) -> HamiltonianPart:
        if extra is None:
            return HamiltonianPart(lambda q, p: system.T(p), lambda q, p: zero, lambda q, p: system.grad_T(p), "T")
        return HamiltonianPart(
            lambda q, p: system.T(p) + extra.V(q),
            lambda q, p: extra.grad(q),
            lambda q, p: system.grad_T(p),
            f"T+{extra.label}",
        )

    def potential_part(v: Potential) -> HamiltonianPart:
        return HamiltonianPart(lambda q, p: v.V(q), lambda q, p: v.grad(q), lambda q, p: zero, v.label)

    if n_parts == len(pots) + 1:
        parts = [kinetic_part(None)] + [potential_part(v) for v in pots]
    else:
        pots = list(system.merged(n_parts).potentials)
        parts = [kinetic_part(pots[0])] + [potential_part(v) for v in pots[1:]]
    return SplitHamiltonian(system.d, tuple(parts))


# --- concrete problems ----------------------------------------------------

@dataclass(frozen=True)
class PendulumOscillatorParams:
    m_pend: float = 1.0
    m_osc: float = 1.0
    ell: float = 1.0
    k: float = 1e-4
    g: float = 9.81

    def __post_init__(self):
        for name in ("m_pend", "m_osc", "ell", "k", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def pendulum_oscillator(params: PendulumOscillatorParams = PendulumOscillatorParams()) -> SeparableHamiltonian:
    """Pendulum (angle ``q1``) coupled by a weak spring to an oscillator (``q2``).

    The pendulum part ``T + V1`` is fast and cheap; the spring ``V2`` is the
    slow part.
    """
    mp, mo, ell, k, g = params.m_pend, params.m_osc, params.ell, params.k, params.g
    inertia = mp * ell * ell

    def T(p):
        return p[1] ** 2 / (2 * mo) + (p[0] / ell) ** 2 / (2 * mp)

    def grad_T(p):
        return np.array([p[0] / inertia, p[1] / mo])

    def V1(q):
        return -mp * g * ell * math.cos(q[0])

    def grad_V1(q):
        return np.array([mp * g * ell * math.sin(q[0]), 0.0])

    def V2(q):
        return 0.5 * k * (q[1] - ell * math.sin(q[0])) ** 2

    def grad_V2(q):
        F = k * (q[1] - ell * math.sin(q[0]))
        return np.array([-F * ell * math.cos(q[0]), F])

    sys = SeparableHamiltonian(
        2, T, grad_T, (Potential(V1, grad_V1, "fast"), Potential(V2, grad_V2, "slow")), "pendulum"
    )
    self_check(sys)
    return sys


def harmonic_oscillator(omega: float = 1.0) -> SeparableHamiltonian:
    if not omega > 0:
        raise ValueError("omega must be positive")
    w2 = omega * omega
    sys = SeparableHamiltonian(
        1,
        lambda p: 0.5 * float(p @ p),
        lambda p: np.array(p, dtype=float),
        (Potential(lambda q: 0.5 * w2 * float(q @ q), lambda q: w2 * np.asarray(q, float), "potential"),),
        "harmonic",
    )
    self_check(sys)
    return sys


def harmonic_exact_flow(omega: float, q, p, t: float) -> tuple[Vector, Vector]:
    q, p = np.asarray(q, float), np.asarray(p, float)
    c, s = math.cos(omega * t), math.sin(omega * t)
    return q * c + p * s / omega, -q * omega * s + p * c


# --- gradient checks ------------------------------------------------------

def _central(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(fd, exact) -> float:
    return float(np.max(np.abs(fd - exact)) / max(float(np.max(np.abs(exact))), 1.0))


def fd_gradient_check(system: SeparableHamiltonian, q, p, fd_step: float = 1e-5) -> float:
    """Largest relative deviation between supplied gradients and central differences."""
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    q, p = np.asarray(q, float), np.asarray(p, float)
    devs = [_rel(_central(system.T, p, fd_step), system.grad_T(p))]
    devs += [_rel(_central(v.V, q, fd_step), v.grad(q)) for v in system.potentials]
    return max(devs)


def self_check(system: SeparableHamiltonian, n_points: int = 4, tol: float = 1e-6, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(n_points):
        q, p = rng.uniform(-1, 1, system.d), rng.uniform(-1, 1, system.d)
        dev = fd_gradient_check(system, q, p)
        if dev > tol:
            raise ValueError(f"{system.name}: supplied gradients disagree with finite differences ({dev:.2e})")


# --- registry -------------------------------------------------------------

def _pendulum_from(params: dict) -> SeparableHamiltonian:
    return pendulum_oscillator(PendulumOscillatorParams(**params))


def _harmonic_from(params: dict) -> SeparableHamiltonian:
    return harmonic_oscillator(**params)


PROBLEMS: dict[str, Callable[[dict], SeparableHamiltonian]] = {
    "pendulum": _pendulum_from,
    "harmonic": _harmonic_from,
}

DEFAULT_Y0: dict[str, Sequence[float]] = {
    "pendulum": (0.5, 0.0, 0.0, 0.0),
    "harmonic": (1.0, 0.0),
}


def resolved_params(name: str, params: dict | None = None) -> dict:
    """Every physical parameter of a problem, defaults filled in."""
    params = dict(params or {})
    if name == "pendulum":
        return asdict(PendulumOscillatorParams(**params))
    if name == "harmonic":
        return {"omega": float(params.get("omega", 1.0)), **params}
    raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")


def make_problem(name: str, params: dict | None = None) -> SeparableHamiltonian:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(dict(params or {}))
