"""Tableau data model, validation, derived abscissae and JSON serialization.

Partition indices are 1-based throughout. Blocks are stored in dicts keyed by
``(q, m)`` tuples and weights in dicts keyed by ``m``. All arrays are converted
to read-only ``float64`` on construction so tableaus can be shared freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import NonFinite, ParseError, ShapeMismatch

Blocks = dict[tuple[int, int], np.ndarray]
Weights = dict[int, np.ndarray]


def _frozen(x, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if ndim == 2 and arr.size == 0:
        arr = arr.reshape(arr.shape if arr.ndim == 2 else (0, 0))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConditionEntry:
    id: str
    index: tuple
    residual: float


@dataclass(frozen=True)
class ConditionReport:
    """Residuals of a family of algebraic conditions, judged at ``tolerance``."""

    entries: tuple[ConditionEntry, ...]
    tolerance: float

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, tuple, float]], tolerance: float) -> "ConditionReport":
        return cls(tuple(ConditionEntry(i, tuple(ix), float(r)) for i, ix, r in items), float(tolerance))

    @property
    def max_abs_residual(self) -> float:
        return max((abs(e.residual) for e in self.entries), default=0.0)

    @property
    def verdict(self) -> bool:
        return self.max_abs_residual <= self.tolerance

    def failing(self) -> list[ConditionEntry]:
        return [e for e in self.entries if abs(e.residual) > self.tolerance]

    def __len__(self) -> int:
        return len(self.entries)

    def merged(self, other: "ConditionReport") -> "ConditionReport":
        return ConditionReport(self.entries + other.entries, self.tolerance)


@dataclass(frozen=True, eq=False)
class GarkTableau:
    """Generalized additive Runge-Kutta tableau with ``N`` partitions.

    ``A[q, m]`` has shape ``s[q-1] x s[m-1]`` and ``b[m]`` has length ``s[m-1]``.
    """

    N: int
    s: tuple[int, ...]
    A: Blocks
    b: Weights
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(x) for x in self.s))
        object.__setattr__(self, "A", {_key2(k): _frozen(v, 2) for k, v in self.A.items()})
        object.__setattr__(self, "b", {int(k): _frozen(v, 1) for k, v in self.b.items()})
        _fix_empty(self.A, self.s, self.s)
        validate(self)

    @property
    def partitions(self) -> range:
        return range(1, self.N + 1)

    @property
    def total_stages(self) -> int:
        return sum(self.s)

    def stages(self, m: int) -> int:
        return self.s[m - 1]

    def same_as(self, other: "GarkTableau", tol: float = 0.0) -> bool:
        if not isinstance(other, GarkTableau) or self.N != other.N or self.s != other.s:
            return False
        return _blocks_close(self.A, other.A, tol) and _blocks_close(self.b, other.b, tol)


@dataclass(frozen=True, eq=False)
class PartitionedGarkTableau:
    """Partitioned GARK tableau for separable Hamiltonians.

    Partition ``q`` has ``s[q-1]`` momentum stages and ``s_hat[q-1]`` position
    stages. ``A[q, m]`` (``s_hat^q x s^m``) drives position stages with kinetic
    slopes evaluated at momentum stages; ``A_hat[q, m]`` (``s^q x s_hat^m``)
    drives momentum stages with potential slopes evaluated at position stages.
    ``b`` weights the kinetic slopes in the position update and ``b_hat`` the
    potential slopes in the momentum update.
    """

    N: int
    s: tuple[int, ...]
    s_hat: tuple[int, ...]
    A: Blocks
    A_hat: Blocks
    b: Weights
    b_hat: Weights
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(x) for x in self.s))
        object.__setattr__(self, "s_hat", tuple(int(x) for x in self.s_hat))
        for attr, nd in (("A", 2), ("A_hat", 2)):
            object.__setattr__(self, attr, {_key2(k): _frozen(v, nd) for k, v in getattr(self, attr).items()})
        for attr in ("b", "b_hat"):
            object.__setattr__(self, attr, {int(k): _frozen(v, 1) for k, v in getattr(self, attr).items()})
        _fix_empty(self.A, self.s_hat, self.s)
        _fix_empty(self.A_hat, self.s, self.s_hat)
        validate(self)

    @property
    def partitions(self) -> range:
        return range(1, self.N + 1)

    def same_as(self, other: "PartitionedGarkTableau", tol: float = 0.0) -> bool:
        if not isinstance(other, PartitionedGarkTableau):
            return False
        if (self.N, self.s, self.s_hat) != (other.N, other.s, other.s_hat):
            return False
        return all(
            _blocks_close(getattr(self, a), getattr(other, a), tol) for a in ("A", "A_hat", "b", "b_hat")
        )


AnyTableau = Union[GarkTableau, PartitionedGarkTableau]


def _key2(k) -> tuple[int, int]:
    if isinstance(k, str):
        return _parse_key(k)
    q, m = k
    return int(q), int(m)


def _fix_empty(blocks: Blocks, rows, cols) -> None:
    for (q, m), v in list(blocks.items()):
        if v.size == 0 and 1 <= q <= len(rows) and 1 <= m <= len(cols) and 0 in (rows[q - 1], cols[m - 1]):
            blocks[q, m] = _frozen(np.zeros((rows[q - 1], cols[m - 1])), 2)


def _blocks_close(x: Mapping, y: Mapping, tol: float) -> bool:
    if x.keys() != y.keys():
        return False
    for k in x:
        if x[k].shape != y[k].shape:
            return False
        if x[k].size and np.max(np.abs(x[k] - y[k])) > tol:
            return False
    return True


def _check_blocks(blocks: Blocks, N: int, rows, cols, label: str) -> None:
    expected = {(q, m) for q in range(1, N + 1) for m in range(1, N + 1)}
    extra = set(blocks) - expected
    if extra:
        raise ShapeMismatch(f"{label}: unexpected block {sorted(extra)[0]}", key=sorted(extra)[0])
    for q, m in sorted(expected):
        if (q, m) not in blocks:
            raise ShapeMismatch(f"{label}: missing block ({q},{m})", key=(q, m))
        shape = (rows[q - 1], cols[m - 1])
        got = blocks[q, m]
        if got.shape != shape:
            raise ShapeMismatch(f"{label}^({q},{m}) has shape {got.shape}, expected {shape}", key=(q, m))
        if not np.all(np.isfinite(got)):
            raise NonFinite(f"{label}^({q},{m}) contains a non-finite entry")


def _check_weights(weights: Weights, N: int, lengths, label: str) -> None:
    if set(weights) != set(range(1, N + 1)):
        missing = sorted(set(range(1, N + 1)) - set(weights)) or sorted(set(weights))
        raise ShapeMismatch(f"{label}: weight vectors must be given for partitions 1..{N}", key=missing[0])
    for m in range(1, N + 1):
        if weights[m].shape != (lengths[m - 1],):
            raise ShapeMismatch(
                f"{label}^{m} has shape {weights[m].shape}, expected ({lengths[m - 1]},)", key=m
            )
        if not np.all(np.isfinite(weights[m])):
            raise NonFinite(f"{label}^{m} contains a non-finite entry")


def validate(t: AnyTableau) -> None:
    """Raise ``ShapeMismatch`` or ``NonFinite`` unless every invariant of ``t`` holds."""
    if t.N < 1:
        raise ShapeMismatch("N must be at least 1")
    if len(t.s) != t.N or any(x < 0 for x in t.s):
        raise ShapeMismatch(f"s must list {t.N} non-negative stage counts")
    if isinstance(t, PartitionedGarkTableau):
        if len(t.s_hat) != t.N or any(x < 0 for x in t.s_hat):
            raise ShapeMismatch(f"s_hat must list {t.N} non-negative stage counts")
        _check_blocks(t.A, t.N, t.s_hat, t.s, "A")
        _check_blocks(t.A_hat, t.N, t.s, t.s_hat, "A_hat")
        _check_weights(t.b, t.N, t.s, "b")
        _check_weights(t.b_hat, t.N, t.s_hat, "b_hat")
    else:
        _check_blocks(t.A, t.N, t.s, t.s, "A")
        _check_weights(t.b, t.N, t.s, "b")


def coupling_abscissae(t: GarkTableau) -> dict[tuple[int, int], np.ndarray]:
    """Row sums ``c^{q,m} = A^{q,m} 1`` for every block."""
    return {k: v.sum(axis=1) for k, v in t.A.items()}


def is_internally_consistent(t: GarkTableau, tol: float = 1e-12) -> tuple[bool, ConditionReport]:
    c = coupling_abscissae(t)
    items = []
    for q in t.partitions:
        for m in t.partitions:
            for m2 in range(m + 1, t.N + 1):
                d = c[q, m] - c[q, m2]
                items.append(("intcons", (q, m, m2), float(np.max(np.abs(d))) if d.size else 0.0))
    report = ConditionReport.from_items(items, tol)
    return report.verdict, report


# --- serialization -------------------------------------------------------

_KNOWN_KEYS = {"N", "s", "A", "b", "s_hat", "A_hat", "b_hat", "name"}
_HAT_KEYS = {"s_hat", "A_hat", "b_hat"}


def _parse_key(k: str) -> tuple[int, int]:
    try:
        q, m = (int(x) for x in k.split(","))
    except ValueError as exc:
        raise ParseError(f"bad block key {k!r}, expected 'q,m'") from exc
    return q, m


def parse_number(x) -> float:
    """Accept JSON numbers or rational strings such as ``"5/24"``."""
    if isinstance(x, bool):
        raise ParseError(f"boolean is not a number: {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad rational literal {x!r}") from exc
    raise ParseError(f"expected a number, got {x!r}")


def _parse_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ParseError("a block must be a list of rows")
    if len({len(r) for r in rows}) > 1:
        raise ShapeMismatch("ragged block rows")
    data = [[parse_number(x) for x in r] for r in rows]
    ncols = len(rows[0]) if rows else 0
    return np.array(data, dtype=float).reshape(len(rows), ncols)


def _parse_vector(v) -> np.ndarray:
    if not isinstance(v, list):
        raise ParseError("a weight vector must be a list")
    return np.array([parse_number(x) for x in v], dtype=float)


def _parse_stage_counts(v, label) -> list[int]:
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ParseError(f"{label} must be a list of integers")
    return v


def tableau_from_dict(doc: Mapping) -> AnyTableau:
    if not isinstance(doc, Mapping):
        raise ParseError("tableau document must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ParseError(f"unknown key {sorted(unknown)[0]!r}")
    for key in ("N", "s", "A", "b"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}")
    N = doc["N"]
    if not isinstance(N, int) or isinstance(N, bool):
        raise ParseError("N must be an integer")
    s = _parse_stage_counts(doc["s"], "s")
    if not isinstance(doc["A"], Mapping) or not isinstance(doc["b"], Mapping):
        raise ParseError("A and b must be objects")

    def blocks(obj, rows, cols):
        out = {}
        for k, v in obj.items():
            q, m = _parse_key(k)
            mat = _parse_matrix(v)
            if mat.size == 0 and 1 <= q <= len(rows) and 1 <= m <= len(cols):
                mat = mat.reshape(rows[q - 1], cols[m - 1])
            out[q, m] = mat
        return out

    def weights(obj):
        out = {}
        for k, v in obj.items():
            try:
                out[int(k)] = _parse_vector(v)
            except ValueError as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"bad weight key {k!r}") from exc
        return out

    name = doc.get("name", "")
    present = _HAT_KEYS & set(doc)
    if present:
        if present != _HAT_KEYS:
            raise ParseError("s_hat, A_hat and b_hat must be given together")
        s_hat = _parse_stage_counts(doc["s_hat"], "s_hat")
        return PartitionedGarkTableau(
            N, s, s_hat, blocks(doc["A"], s_hat, s), blocks(doc["A_hat"], s, s_hat),
            weights(doc["b"]), weights(doc["b_hat"]), name,
        )
    return GarkTableau(N, s, blocks(doc["A"], s, s), weights(doc["b"]), name)


def tableau_to_dict(t: AnyTableau) -> dict:
    def blocks(bl):
        return {f"{q},{m}": [[float(x) for x in row] for row in bl[q, m]] for q, m in sorted(bl)}

    def weights(w):
        return {str(m): [float(x) for x in w[m]] for m in sorted(w)}

    doc: dict = {"N": t.N, "s": list(t.s), "A": blocks(t.A), "b": weights(t.b)}
    if isinstance(t, PartitionedGarkTableau):
        doc.update(s_hat=list(t.s_hat), A_hat=blocks(t.A_hat), b_hat=weights(t.b_hat))
    if t.name:
        doc["name"] = t.name
    return doc


def dumps_tableau(t: AnyTableau) -> str:
    """JSON text with one matrix row per line; floats use shortest round-trip form."""
    doc = tableau_to_dict(t)
    out = []
    for key, val in doc.items():
        if isinstance(val, dict):
            inner = []
            for k, v in val.items():
                if v and isinstance(v[0], list):
                    rows = ",\n      ".join(json.dumps(r) for r in v)
                    inner.append(f'    "{k}": [\n      {rows}\n    ]' if v else f'    "{k}": []')
                else:
                    inner.append(f'    "{k}": {json.dumps(v)}')
            out.append(f'  "{key}": {{\n' + ",\n".join(inner) + "\n  }")
        else:
            out.append(f'  "{key}": {json.dumps(val)}')
    return "{\n" + ",\n".join(out) + "\n}\n"


def loads_tableau(text: str) -> AnyTableau:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return tableau_from_dict(doc)


def read_tableau(path) -> AnyTableau:
    return loads_tableau(Path(path).read_text())


def write_tableau(t: AnyTableau, path) -> None:
    Path(path).write_text(dumps_tableau(t))


def reversal(n: int) -> np.ndarray:
    """The order-reversing permutation matrix of size ``n``."""
    return np.eye(n)[::-1]

