"""Named built-in tableaus."""

from __future__ import annotations

import re
from fractions import Fraction as Fr

import numpy as np

from .construct import make_multirate42
from .tableau import GarkTableau, PartitionedGarkTableau


def _f(rows):
    return np.array([[float(Fr(x)) for x in r] for r in rows])


def _v(xs):
    return np.array([float(Fr(x)) for x in xs])


def implicit_midpoint() -> GarkTableau:
    return GarkTableau(1, [1], {(1, 1): [[0.5]]}, {1: [1.0]}, "implicit-midpoint")


def explicit_euler() -> GarkTableau:
    return GarkTableau(1, [1], {(1, 1): [[0.0]]}, {1: [1.0]}, "explicit-euler")


def explicit_euler_pair() -> PartitionedGarkTableau:
    """Non-symplectic control: both updates use the slopes at the old state."""
    return PartitionedGarkTableau(
        1, [1], [1], {(1, 1): [[0.0]]}, {(1, 1): [[0.0]]}, {1: [1.0]}, {1: [1.0]}, "explicit-euler-pair"
    )


def lobatto3a(stages: int = 3) -> GarkTableau:
    if stages == 2:
        A, b = _f([["0", "0"], ["1/2", "1/2"]]), _v(["1/2", "1/2"])
    elif stages == 3:
        A = _f([["0", "0", "0"], ["5/24", "1/3", "-1/24"], ["1/6", "2/3", "1/6"]])
        b = _v(["1/6", "2/3", "1/6"])
    else:
        raise ValueError("only 2 and 3 stage Lobatto IIIA are built in")
    return GarkTableau(1, [stages], {(1, 1): A}, {1: b}, f"lobatto3a-{stages}")


def lobatto3b(stages: int = 3) -> GarkTableau:
    if stages == 2:
        A, b = _f([["1/2", "0"], ["1/2", "0"]]), _v(["1/2", "1/2"])
    elif stages == 3:
        A = _f([["1/6", "-1/6", "0"], ["1/6", "1/3", "0"], ["1/6", "5/6", "0"]])
        b = _v(["1/6", "2/3", "1/6"])
    else:
        raise ValueError("only 2 and 3 stage Lobatto IIIB are built in")
    return GarkTableau(1, [stages], {(1, 1): A}, {1: b}, f"lobatto3b-{stages}")


def lobatto_pair(stages: int, name: str) -> PartitionedGarkTableau:
    """IIIA drives the momentum stages, IIIB the position stages."""
    a, bb = lobatto3a(stages), lobatto3b(stages)
    return PartitionedGarkTableau(
        1, [stages], [stages], {(1, 1): bb.A[1, 1]}, {(1, 1): a.A[1, 1]}, {1: a.b[1]}, {1: a.b[1]}, name
    )


def verlet_pair() -> PartitionedGarkTableau:
    return lobatto_pair(2, "verlet-pair")


def lobatto3_pair() -> PartitionedGarkTableau:
    return lobatto_pair(3, "lobatto3-pair")


def imim_symplectic() -> GarkTableau:
    """Two-partition implicit scheme that is symplectic but not internally consistent."""
    return GarkTableau(
        2, [2, 2],
        {
            (1, 1): _f([["1/8", "0"], ["1/4", "3/8"]]),
            (1, 2): _f([["0", "0"], ["2/3", "0"]]),
            (2, 1): _f([["1/4", "0"], ["1/4", "3/4"]]),
            (2, 2): _f([["1/3", "0"], ["2/3", "1/6"]]),
        },
        {1: _v(["1/4", "3/4"]), 2: _v(["2/3", "1/3"])},
        "imim-symplectic",
    )


def verlet_coupled(alpha: float = 0.0, beta: float = 0.0) -> GarkTableau:
    """Symmetric symplectic two-partition scheme with Verlet coupling blocks."""
    return GarkTableau(
        2, [2, 2],
        {
            (1, 1): [[0.25, alpha], [0.5 - alpha, 0.25]],
            (1, 2): [[0.0, 0.0], [0.5, 0.5]],
            (2, 1): [[0.5, 0.0], [0.5, 0.0]],
            (2, 2): [[0.25, beta], [0.5 - beta, 0.25]],
        },
        {1: [0.5, 0.5], 2: [0.5, 0.5]},
        f"verlet-coupled({alpha!r},{beta!r})",
    )


_FACTORIES = {
    "verlet-pair": verlet_pair,
    "lobatto3-pair": lobatto3_pair,
    "imim-symplectic": imim_symplectic,
    "verlet-coupled": verlet_coupled,
    "multirate42": make_multirate42,
    "implicit-midpoint": implicit_midpoint,
    "explicit-euler": explicit_euler,
    "explicit-euler-pair": explicit_euler_pair,
    "lobatto3a": lobatto3a,
    "lobatto3b": lobatto3b,
}

_CALL = re.compile(r"^([a-z0-9-]+)(?:\((.*)\))?$")


def names() -> list[str]:
    return sorted(_FACTORIES)


def is_named(spec: str) -> bool:
    m = _CALL.match(spec.strip())
    return bool(m) and m.group(1) in _FACTORIES


def get(spec: str):
    """Resolve ``name`` or ``name(arg, ...)``, e.g. ``verlet-coupled(0.3,-0.1)``."""
    m = _CALL.match(spec.strip())
    if not m or m.group(1) not in _FACTORIES:
        raise KeyError(f"unknown tableau {spec!r}; built-ins: {', '.join(names())}")
    args = []
    if m.group(2):
        try:
            args = [float(Fr(x.strip())) for x in m.group(2).split(",")]
        except ValueError as exc:
            raise ValueError(f"bad arguments in {spec!r}") from exc
    if m.group(1) in ("lobatto3a", "lobatto3b"):
        args = [int(a) for a in args]
    return _FACTORIES[m.group(1)](*args)
