import itertools
import math

import numpy as np
import pytest

from stratvar import FinitePopulation, Stratification


@pytest.fixture
def p0():
    """Constant effect within pairs."""
    pop = FinitePopulation([2, 2, 4, 4], [0, 0, 2, 2])
    return pop, Stratification.from_sets([[0, 1], [2, 3]], 1)


@pytest.fixture
def p1():
    """Pair A = {(3,1),(1,0)}, pair B = {(2,2),(0,1)}."""
    pop = FinitePopulation([3, 1, 2, 0], [1, 0, 2, 1], x=[[0.0], [0.0], [1.0], [1.0]])
    return pop, Stratification.from_sets([[0, 1], [2, 3]], 1)


def brute_assignments(strata, ell):
    """Plain-Python product over within-stratum subsets, independent of the library."""
    per = [list(itertools.combinations(s, ell)) for s in strata]
    for choice in itertools.product(*per):
        treated = set(i for c in choice for i in c)
        yield treated


def brute_stratum_effects(y, treated, strata):
    out = []
    for s in strata:
        t = [y[i] for i in s if i in treated]
        c = [y[i] for i in s if i not in treated]
        out.append(sum(t) / len(t) - sum(c) / len(c))
    return out


def brute_moments(y1, y0, strata, ell, stat):
    """Exact mean/variance of ``stat(y, treated)`` by explicit enumeration."""
    vals = []
    for treated in brute_assignments(strata, ell):
        y = [y1[i] if i in treated else y0[i] for i in range(len(y1))]
        vals.append(stat(y, treated))
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, var, len(vals)


def random_instance(rng, m, k, ell, p=1):
    n = m * k
    y1 = rng.uniform(-5, 5, n)
    y0 = rng.uniform(-5, 5, n)
    x = rng.uniform(0, 1, (n, p))
    perm = rng.permutation(n)
    strat = Stratification(perm.reshape(m, k), ell)
    return FinitePopulation(y1, y0, x), strat


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then fail on FAIL."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
