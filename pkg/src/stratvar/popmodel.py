"""Finite populations, stratifications and the (infeasible) true estimands.

Unit indices are 0-based throughout the library. A stratification is stored
as an ``(m, k)`` integer array whose rows are the strata; the order of the
rows is the stratum index ``j`` and the order within a row is preserved so
that enumeration is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadTreatedCount,
    EmptyCluster,
    NonFinite,
    NonPartition,
    SizeMismatch,
)


def _as_covariates(x, n: int) -> np.ndarray:
    if x is None:
        return np.empty((n, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(n, -1) if n else x.reshape(0, 0)
    if x.shape[0] != n:
        raise SizeMismatch(f"covariate rows {x.shape[0]} != units {n}")
    return x


@dataclass(frozen=True)
class FinitePopulation:
    """Fixed units carrying both potential outcomes and covariates."""

    y1: np.ndarray
    y0: np.ndarray
    x: np.ndarray = field(default=None)

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float).reshape(-1)
        y0 = np.asarray(self.y0, dtype=float).reshape(-1)
        if y1.shape != y0.shape:
            raise SizeMismatch(f"y1 has {y1.size} units but y0 has {y0.size}")
        x = _as_covariates(self.x, y1.size)
        if not (np.isfinite(y1).all() and np.isfinite(y0).all()):
            raise NonFinite("potential outcomes must be finite")
        for arr in (y1, y0, x):
            arr.flags.writeable = False
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_units(cls, units: Iterable[Sequence]) -> "FinitePopulation":
        """Build from ``(y1, y0)`` or ``(y1, y0, x)`` tuples."""
        rows = list(units)
        y1 = [u[0] for u in rows]
        y0 = [u[1] for u in rows]
        if rows and len(rows[0]) > 2:
            xs = [np.atleast_1d(np.asarray(u[2], dtype=float)) for u in rows]
            dims = {len(v) for v in xs}
            if len(dims) != 1:
                raise SizeMismatch("units disagree on covariate dimension")
            x = np.vstack(xs)
        else:
            x = None
        return cls(y1, y0, x)

    @property
    def n(self) -> int:
        return self.y1.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def effects(self) -> np.ndarray:
        return self.y1 - self.y0

    def scaled(self, c: float) -> "FinitePopulation":
        return FinitePopulation(c * self.y1, c * self.y0, self.x)

    def take(self, index) -> "FinitePopulation":
        index = np.asarray(index, dtype=int)
        return FinitePopulation(self.y1[index], self.y0[index], self.x[index])


@dataclass(frozen=True)
class Stratification:
    """Partition of ``0..n-1`` into ``m`` strata of common size ``k``.

    ``ell`` units are treated in every stratum.
    """

    blocks: np.ndarray
    ell: int

    def __post_init__(self):
        blocks = np.asarray(self.blocks)
        if blocks.ndim != 2 or blocks.shape[0] == 0:
            raise SizeMismatch("strata must form a non-empty (m, k) array")
        if not np.issubdtype(blocks.dtype, np.integer):
            raise NonPartition("stratum members must be integer unit indices")
        m, k = blocks.shape
        if not np.array_equal(np.sort(blocks, axis=None), np.arange(m * k)):
            raise NonPartition("strata must be disjoint and cover 0..n-1 exactly")
        ell = int(self.ell)
        if not 1 <= ell <= k - 1:
            raise BadTreatedCount(f"ell={ell} outside [1, {k - 1}]")
        blocks = blocks.astype(np.intp, copy=True)
        blocks.flags.writeable = False
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "ell", ell)

    @classmethod
    def from_sets(cls, strata: Sequence[Sequence[int]], ell: int) -> "Stratification":
        strata = [list(s) for s in strata]
        sizes = {len(s) for s in strata}
        if len(sizes) != 1:
            raise SizeMismatch(f"strata have unequal sizes {sorted(sizes)}")
        return cls(np.array(strata, dtype=np.intp), ell)

    @classmethod
    def from_labels(cls, labels: Sequence, ell: int) -> "Stratification":
        """Group unit positions by label; strata numbered by first appearance."""
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls.from_sets(list(groups.values()), ell)

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    @property
    def k(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.blocks.size

    @property
    def eta(self) -> float:
        return self.ell / self.k

    def labels(self) -> np.ndarray:
        """Stratum index of every unit."""
        out = np.empty(self.n, dtype=np.intp)
        out[self.blocks] = np.arange(self.m)[:, None]
        return out

    def stratum_means(self, values: np.ndarray) -> np.ndarray:
        """Within-stratum means of a per-unit array (leading axis = units)."""
        return np.asarray(values, dtype=float)[self.blocks].mean(axis=1)


def validate(pop: FinitePopulation, strat: Stratification):
    """Check that ``pop`` and ``strat`` describe the same ``n`` units.

    The single-object invariants are enforced when each object is built;
    this adds the cross-object checks and returns the inputs unchanged.
    """
    if pop.n != strat.n:
        raise SizeMismatch(f"population has {pop.n} units but strata cover {strat.n}")
    return pop, strat


@dataclass(frozen=True)
class Cluster:
    members: np.ndarray  # (g, 2) rows of (y1, y0)
    x: np.ndarray

    def __post_init__(self):
        members = np.asarray(self.members, dtype=float).reshape(-1, 2)
        if members.shape[0] == 0:
            raise EmptyCluster("cluster has no members")
        if not np.isfinite(members).all():
            raise NonFinite("member outcomes must be finite")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))

    @property
    def size(self) -> int:
        return self.members.shape[0]


@dataclass(frozen=True)
class ClusterPopulation:
    clusters: tuple

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.clusters:
            raise EmptyCluster("no clusters")

    def unit_ate(self) -> float:
        """Average effect over every within-cluster unit."""
        effects = np.concatenate([c.members[:, 0] - c.members[:, 1] for c in self.clusters])
        return float(effects.mean())


def collapse_clusters(cpop: ClusterPopulation) -> FinitePopulation:
    """Replace each cluster by one unit whose outcomes are cluster totals
    divided by the mean cluster size."""
    for c in cpop.clusters:
        if c.size == 0:
            raise EmptyCluster("cluster has no members")
    totals = np.array([c.members.sum(axis=0) for c in cpop.clusters])
    mean_size = np.mean([c.size for c in cpop.clusters])
    x = np.vstack([c.x for c in cpop.clusters]) if cpop.clusters[0].x.size else None
    return FinitePopulation(totals[:, 0] / mean_size, totals[:, 1] / mean_size, x)


@dataclass(frozen=True)
class Estimands:
    ate: float
    stratum_ates: np.ndarray
    stratum_means: np.ndarray  # (m, 2): columns are treated / control means


def estimands(pop: FinitePopulation, strat: Stratification) -> Estimands:
    validate(pop, strat)
    means = np.column_stack([strat.stratum_means(pop.y1), strat.stratum_means(pop.y0)])
    return Estimands(
        ate=float(pop.y1.mean() - pop.y0.mean()),
        stratum_ates=strat.stratum_means(pop.effects),
        stratum_means=means,
    )
