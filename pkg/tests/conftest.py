import numpy as np
import pytest

from exotest.problem import make_problem

DESK_SEED = 20240611


def desk_arrays(seed=DESK_SEED):
    """T=20, G=1, k1=1 (intercept), k2=3 synthetic sample with endogeneity."""
    rng = np.random.default_rng(seed)
    T = 20
    X1 = np.ones((T, 1))
    X2 = rng.standard_normal((T, 3))
    V = rng.standard_normal((T, 1))
    Y = 0.5 + X2 @ np.array([[0.8], [0.4], [-0.3]]) + V
    e = rng.standard_normal(T)
    y = Y[:, 0] * 1.5 + 2.0 + 2.0 * V[:, 0] + e
    return y, Y, X1, X2


@pytest.fixture
def desk():
    y, Y, X1, X2 = desk_arrays()
    return make_problem(y, Y, X2, X1)


def random_problem(rng, T=None, G=None, k1=None, k2=None, strength=None):
    """Random valid problem over the identity-suite ranges."""
    G = int(rng.choice([1, 2])) if G is None else G
    k1 = int(rng.choice([0, 1, 3])) if k1 is None else k1
    k2 = int(rng.choice([G, G + 1, G + 5])) if k2 is None else k2
    T = int(rng.integers(20, 201)) if T is None else T
    strength = rng.uniform(0.2, 1.5) if strength is None else strength
    X1 = rng.standard_normal((T, k1))
    if k1:
        X1[:, 0] = 1.0
    X2 = rng.standard_normal((T, k2))
    V = rng.standard_normal((T, G))
    Pi1 = rng.standard_normal((k1, G))
    Pi2 = strength * rng.standard_normal((k2, G))
    Y = X1 @ Pi1 + X2 @ Pi2 + V
    a = rng.standard_normal(G) * rng.choice([0.0, 0.5])
    y = Y @ rng.standard_normal(G) + X1 @ rng.standard_normal(k1) + V @ a + rng.standard_normal(T)
    return make_problem(y, Y, X2, X1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
