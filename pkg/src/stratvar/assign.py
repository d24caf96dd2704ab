"""Treatment assignment within strata, exhaustive enumeration, observation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator

import numpy as np

from .errors import LengthMismatch, NonFinite, SupportTooLarge
from .popmodel import FinitePopulation, Stratification, validate

DEFAULT_SUPPORT_CAP = 10**7


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream addressed by ``(seed, *key)``.

    Streams with different keys are statistically independent, so Monte Carlo
    replication ``r`` can be drawn without touching any other replication.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class Assignment:
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d).astype(np.int8).reshape(-1)
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    def check(self, strat: Stratification) -> "Assignment":
        if self.d.size != strat.n:
            raise LengthMismatch(f"assignment has {self.d.size} entries, strata cover {strat.n}")
        counts = self.d[strat.blocks].sum(axis=1)
        if not (np.isin(self.d, (0, 1)).all() and (counts == strat.ell).all()):
            raise LengthMismatch(f"every stratum must have exactly {strat.ell} treated units")
        return self


@dataclass(frozen=True)
class ObservedExperiment:
    """Revealed outcomes for one realized assignment; potential outcomes are gone."""

    y: np.ndarray
    d: np.ndarray
    strat: Stratification
    x: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        d = Assignment(self.d).check(self.strat).d
        if y.size != d.size:
            raise LengthMismatch(f"{y.size} outcomes for {d.size} assignments")
        if not np.isfinite(y).all():
            raise NonFinite("observed outcomes must be finite")
        x = np.empty((y.size, 0)) if self.x is None else np.asarray(self.x, dtype=float).reshape(y.size, -1)
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.size


def draw_assignment(strat: Stratification, rng: np.random.Generator) -> Assignment:
    """Treat ``ell`` units per stratum, uniformly over subsets, independently
    across strata (partial Fisher-Yates on every stratum at once)."""
    return Assignment(draw_assignment_array(strat, rng))


def draw_assignment_array(strat: Stratification, rng: np.random.Generator) -> np.ndarray:
    m, k, ell = strat.m, strat.k, strat.ell
    slots = np.tile(np.arange(k), (m, 1))
    rows = np.arange(m)
    for t in range(ell):
        pick = rng.integers(t, k, size=m)
        held = slots[rows, t].copy()
        slots[rows, t] = slots[rows, pick]
        slots[rows, pick] = held
    d = np.zeros(strat.n, dtype=np.int8)
    d[strat.blocks[rows[:, None], slots[:, :ell]]] = 1
    return d


def support_size(strat: Stratification) -> int:
    return comb(strat.k, strat.ell) ** strat.m


def _check_support(strat: Stratification, cap: int) -> int:
    size = support_size(strat)
    if size > cap:
        raise SupportTooLarge(f"{size} assignments exceed the cap of {cap}")
    return size


def _within_patterns(strat: Stratification) -> np.ndarray:
    """All ``C(k, ell)`` within-stratum 0/1 patterns, lexicographic by treated slots."""
    combos = list(itertools.combinations(range(strat.k), strat.ell))
    pats = np.zeros((len(combos), strat.k), dtype=np.int8)
    for r, c in enumerate(combos):
        pats[r, list(c)] = 1
    return pats


def assignment_block(strat: Stratification, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the enumeration as an ``(S, n)`` 0/1 matrix.

    Stratum 0 is the most significant digit, so rows follow
    ``itertools.product`` order over strata.
    """
    pats = _within_patterns(strat)
    c = pats.shape[0]
    flat = np.arange(start, stop, dtype=np.int64)
    out = np.empty((flat.size, strat.n), dtype=np.int8)
    for j in range(strat.m - 1, -1, -1):
        out[:, strat.blocks[j]] = pats[flat % c]
        flat //= c
    return out


def iter_assignment_blocks(strat: Stratification, cap: int = DEFAULT_SUPPORT_CAP, chunk: int = 1 << 16):
    """Yield the enumeration in contiguous ``(S, n)`` chunks."""
    size = _check_support(strat, cap)
    for start in range(0, size, chunk):
        yield assignment_block(strat, start, min(size, start + chunk))


def enumerate_assignments(strat: Stratification, cap: int = DEFAULT_SUPPORT_CAP) -> Iterator[tuple[Assignment, float]]:
    """Every assignment in the support together with its probability."""
    size = _check_support(strat, cap)
    prob = 1.0 / size

    def gen():
        for block in iter_assignment_blocks(strat, cap):
            for row in block:
                yield Assignment(row), prob

    return gen()


def observe(pop: FinitePopulation, a: Assignment, strat: Stratification) -> ObservedExperiment:
    validate(pop, strat)
    if a.d.size != pop.n:
        raise LengthMismatch(f"assignment has {a.d.size} entries for {pop.n} units")
    y = np.where(a.d == 1, pop.y1, pop.y0)
    return ObservedExperiment(y=y, d=a.d, strat=strat, x=pop.x.copy())
