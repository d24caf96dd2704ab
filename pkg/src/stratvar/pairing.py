"""Matched-pairs stratifications of units and pairing plans over strata."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    MultivariateUnsupported,
    NoCovariates,
    NonPartition,
    OddCount,
    TooFewStrata,
)
from .popmodel import Stratification

UNIT_METHODS = ("good", "bad")
STRATA_METHODS = ("adjacent_by_mean", "antipodal_by_mean", "greedy_nonbipartite")


@dataclass(frozen=True)
class PairingPlan:
    """A permutation of the strata; consecutive entries form the pairs.

    With odd ``m`` the last stratum of ``order`` is left unpaired.
    """

    order: tuple

    def __post_init__(self):
        order = tuple(int(j) for j in self.order)
        if sorted(order) != list(range(len(order))):
            raise NonPartition("pairing order must be a permutation of the strata")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, m: int) -> "PairingPlan":
        return cls(tuple(range(m)))

    @classmethod
    def from_pairs(cls, pairs, leftover=None) -> "PairingPlan":
        order = [j for pair in pairs for j in pair]
        if leftover is not None:
            order.append(leftover)
        return cls(tuple(order))

    @property
    def m(self) -> int:
        return len(self.order)

    @property
    def pairs(self) -> list:
        o = self.order
        return [(o[2 * j], o[2 * j + 1]) for j in range(len(o) // 2)]

    @property
    def leftover(self):
        return self.order[-1] if len(self.order) % 2 else None

    def index_arrays(self):
        """``(first, second)`` stratum indices of the pairs, as arrays."""
        o = np.asarray(self.order[: 2 * (len(self.order) // 2)], dtype=np.intp)
        return o[0::2], o[1::2]


def _scalar(x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] == 0:
            raise NoCovariates(f"{what} requires covariates")
        if x.shape[1] != 1:
            raise MultivariateUnsupported(f"{what} sorts on a scalar covariate; got p={x.shape[1]}")
        x = x[:, 0]
    return x


def match_units(x, method: str = "good") -> Stratification:
    """Form matched pairs (``k=2, ell=1``) by sorting a scalar covariate.

    ``good`` pairs adjacent units in sorted order; ``bad`` pairs the smallest
    with the largest, the second smallest with the second largest, and so on.
    """
    if method not in UNIT_METHODS:
        raise ValueError(f"unknown unit matching method {method!r}")
    x = _scalar(x, "unit matching")
    n = x.size
    if n == 0 or n % 2:
        raise OddCount(f"need a positive even number of units, got {n}")
    s = np.argsort(x, kind="stable")
    if method == "good":
        blocks = s.reshape(-1, 2)
    else:
        blocks = np.column_stack([s[: n // 2], s[::-1][: n // 2]])
    return Stratification(blocks, 1)


def stratum_covariate_means(strat: Stratification, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] == 0:
        raise NoCovariates("pairing strata requires covariates")
    return x[strat.blocks].mean(axis=1)


def _greedy(xbar: np.ndarray) -> list:
    m = xbar.shape[0]
    i, j = np.triu_indices(m, k=1)
    dist = np.sqrt(((xbar[i] - xbar[j]) ** 2).sum(axis=1))
    # lexsort: last key is primary; ties fall back to (i, j)
    rank = np.lexsort((j, i, dist))
    used = np.zeros(m, dtype=bool)
    order = []
    for r in rank:
        a, b = i[r], j[r]
        if used[a] or used[b]:
            continue
        used[a] = used[b] = True
        order += [int(a), int(b)]
        if len(order) >= m - 1:
            break
    order += [int(j) for j in np.flatnonzero(~used)]
    return order


def pair_strata(strat: Stratification, x, method: str = "adjacent_by_mean") -> PairingPlan:
    """Pair strata on their covariate means.

    ``adjacent_by_mean`` sorts the means and pairs neighbours,
    ``antipodal_by_mean`` pairs the smallest with the largest, and
    ``greedy_nonbipartite`` repeatedly joins the two closest unpaired strata
    (Euclidean distance, ties to the lowest indices). Sorting methods need a
    scalar covariate.
    """
    if method not in STRATA_METHODS:
        raise ValueError(f"unknown stratum pairing method {method!r}")
    if strat.m < 2:
        raise TooFewStrata("pairing needs at least two strata")
    xbar = stratum_covariate_means(strat, x)
    if method == "greedy_nonbipartite":
        return PairingPlan(tuple(_greedy(xbar)))
    if xbar.shape[1] != 1:
        raise MultivariateUnsupported(f"{method} sorts on a scalar covariate; got p={xbar.shape[1]}")
    s = [int(j) for j in np.argsort(xbar[:, 0], kind="stable")]
    if method == "adjacent_by_mean":
        return PairingPlan(tuple(s))
    m = len(s)
    order = []
    for t in range(m // 2):
        order += [s[t], s[m - 1 - t]]
    if m % 2:
        order.append(s[m // 2])
    return PairingPlan(tuple(order))


def within_pair_distance(plan: PairingPlan, xbar: np.ndarray, power: float = 1.0) -> float:
    """Total ``||xbar_a - xbar_b||**power`` over the plan's pairs."""
    xbar = np.asarray(xbar, dtype=float)
    if xbar.ndim == 1:
        xbar = xbar[:, None]
    a, b = plan.index_arrays()
    return float((np.sqrt(((xbar[a] - xbar[b]) ** 2).sum(axis=1)) ** power).sum())
