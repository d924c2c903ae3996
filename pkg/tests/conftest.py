import numpy as np
import pytest

from gark.construct import conjugate_tableau, time_reverse
from gark.tableau import GarkTableau

ACCEPTANCE_LINES: list[str] = []


def random_weights(rng, s, palindromic=False, sum_one=False):
    w = rng.uniform(0.2, 1.0, size=s)
    if not sum_one:
        w *= rng.choice([-1.0, 1.0], size=s, p=[0.2, 0.8])
    if palindromic:
        w = 0.5 * (w + w[::-1])
        w[np.abs(w) < 0.1] = 0.3
    if sum_one:
        w = w / w.sum()
    return w


def random_gark(rng, N=None, s=None, palindromic=False, sum_one=False) -> GarkTableau:
    N = N or int(rng.integers(1, 4))
    s = s or [int(x) for x in rng.integers(1, 5, size=N)]
    A = {(q, m): rng.normal(size=(s[q - 1], s[m - 1])) for q in range(1, N + 1) for m in range(1, N + 1)}
    b = {m: random_weights(rng, s[m - 1], palindromic, sum_one) for m in range(1, N + 1)}
    return GarkTableau(N, s, A, b)


def symplectic_part(t: GarkTableau) -> GarkTableau:
    """Fixed point of the conjugation involution: ``(A + conj(A)) / 2``."""
    c = conjugate_tableau(t)
    return GarkTableau(t.N, t.s, {k: 0.5 * (t.A[k] + c.A[k]) for k in t.A}, t.b)


def symmetric_part(t: GarkTableau) -> GarkTableau:
    """Fixed point of time reversal; needs palindromic weights."""
    r = time_reverse(t)
    return GarkTableau(t.N, t.s, {k: 0.5 * (t.A[k] + r.A[k]) for k in t.A}, t.b)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
