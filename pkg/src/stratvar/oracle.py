"""Exact design-based moments by enumerating every assignment, plus the
closed-form variance and bias expressions they are checked against."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimators as est
from .assign import DEFAULT_SUPPORT_CAP, iter_assignment_blocks, support_size
from .errors import TooFewStrata
from .pairing import PairingPlan
from .popmodel import FinitePopulation, Stratification, estimands, validate

STATISTICS = ("delta_hat", "paired", "imai", "fogarty", "coarse", "alt")


@dataclass(frozen=True)
class ExactMoments:
    mean: float
    variance: float
    support_size: int


@dataclass(frozen=True)
class StratumSpreads:
    s2_1: np.ndarray
    s2_0: np.ndarray
    s2_delta: np.ndarray


def stratum_spreads(pop: FinitePopulation, strat: Stratification) -> StratumSpreads:
    validate(pop, strat)

    def s2(v):
        return np.var(v[strat.blocks], axis=1, ddof=1)

    return StratumSpreads(s2(pop.y1), s2(pop.y0), s2(pop.effects))


def exact_variance(pop: FinitePopulation, strat: Stratification) -> float:
    """Closed-form design variance of the difference in means."""
    sp = stratum_spreads(pop, strat)
    eta = strat.eta
    terms = sp.s2_1 / eta + sp.s2_0 / (1 - eta) - sp.s2_delta
    return math.fsum(terms) / (strat.n * strat.m)


def _statistic(name: str, strat: Stratification, plan: PairingPlan, R):
    """Batch kernel ``(y, d) -> values`` for a named statistic."""
    if name == "delta_hat":
        return lambda y, d: est.stratum_effect_kernel(y, d, strat).mean(axis=-1)
    if name == "paired":
        return lambda y, d: est.paired_kernel(est.stratum_effect_kernel(y, d, strat), plan)
    if name == "imai":
        return lambda y, d: est.imai_kernel(est.stratum_effect_kernel(y, d, strat))
    if name == "fogarty":
        design = R if isinstance(R, est.ProjectionDesign) else est.ProjectionDesign(R)
        return lambda y, d: est.fogarty_kernel(est.stratum_effect_kernel(y, d, strat), design)
    if name == "coarse":
        if min(strat.ell, strat.k - strat.ell) < 2:
            raise est.SingletonArm("coarse estimator needs two units per arm")
        return lambda y, d: est.coarse_kernel(y, d, strat)
    if name == "alt":
        return lambda y, d: est.alt_kernel(y, d, strat, plan)
    raise ValueError(f"unknown statistic {name!r}")


def statistic_values(pop, strat, statistic="delta_hat", plan=None, R=None, cap=DEFAULT_SUPPORT_CAP) -> np.ndarray:
    """The statistic evaluated at every assignment, in enumeration order."""
    validate(pop, strat)
    plan = plan or PairingPlan.identity(strat.m)
    if statistic == "fogarty" and R is None:
        R = est.fogarty_design(strat, pop.x)
    fn = _statistic(statistic, strat, plan, R)
    chunks = []
    for d in iter_assignment_blocks(strat, cap):
        y = np.where(d == 1, pop.y1, pop.y0)
        chunks.append(np.asarray(fn(y, d), dtype=float).reshape(-1))
    return np.concatenate(chunks)


def exact_moments(pop, strat, plan=None, statistic="delta_hat", R=None, cap=DEFAULT_SUPPORT_CAP) -> ExactMoments:
    """Exact mean and variance of a statistic under the uniform assignment law.

    Sums are compensated (``math.fsum``) and therefore independent of chunking.
    """
    values = statistic_values(pop, strat, statistic, plan, R, cap)
    size = values.size
    mean = math.fsum(values) / size
    var = math.fsum((values - mean) ** 2) / size
    return ExactMoments(mean, var, size)


def _plan_order(strat, plan):
    plan = plan or PairingPlan.identity(strat.m)
    if plan.m != strat.m:
        raise TooFewStrata(f"plan covers {plan.m} strata but the design has {strat.m}")
    return plan


def bias_paired(pop, strat, plan=None) -> float:
    """Exact bias of the paired-strata estimator.

    ``sum_pairs (D_a - D_b)**2 / m**2``, plus ``D_leftover**2 / m**2`` when
    ``m`` is odd: the unpaired stratum enters the squared term of the
    estimator with no cross product to cancel its mean.
    """
    plan = _plan_order(strat, plan)
    delta = estimands(pop, strat).stratum_ates
    a, b = plan.index_arrays()
    parts = list((delta[a] - delta[b]) ** 2)
    if plan.leftover is not None:
        parts.append(delta[plan.leftover] ** 2)
    return math.fsum(parts) / strat.m**2


def bias_imai(pop, strat) -> float:
    if strat.m < 2:
        raise TooFewStrata("Imai bias needs m >= 2")
    e = estimands(pop, strat)
    return math.fsum((e.stratum_ates - e.ate) ** 2) / (strat.m * (strat.m - 1))


def bias_fogarty(pop, strat, R=None) -> float:
    if R is None:
        R = est.fogarty_design(strat, pop.x)
    design = R if isinstance(R, est.ProjectionDesign) else est.ProjectionDesign(R)
    return float(design.quadratic_form(estimands(pop, strat).stratum_ates))


def bias_coarse(pop, strat) -> float:
    return math.fsum(stratum_spreads(pop, strat).s2_delta) / (strat.n * strat.m)


def corollary_condition(pop, strat, plan=None):
    """Sign condition equivalent to ``bias_paired <= bias_imai``.

    Returns ``(holds, lhs, rhs)`` with
    ``lhs = (1/m) sum_pairs (D_a - D)(D_b - D)`` and
    ``rhs = -sum_j (D_j - D)**2 / (2 m (m-1))``. For odd ``m`` the left side
    also carries ``-(D_left**2 - (D_left - D)**2) / (2m)`` so the equivalence
    stays exact with the leftover stratum.
    """
    plan = _plan_order(strat, plan)
    m = strat.m
    if m < 2:
        raise TooFewStrata("corollary condition needs m >= 2")
    e = estimands(pop, strat)
    c = e.stratum_ates - e.ate
    a, b = plan.index_arrays()
    parts = list(c[a] * c[b])
    if plan.leftover is not None:
        j = plan.leftover
        parts += [-0.5 * e.stratum_ates[j] ** 2, 0.5 * c[j] ** 2]
    lhs = math.fsum(parts) / m
    rhs = -math.fsum(c**2) / (2 * m * (m - 1))
    return lhs >= rhs, lhs, rhs


__all__ = [
    "ExactMoments",
    "StratumSpreads",
    "stratum_spreads",
    "exact_variance",
    "exact_moments",
    "statistic_values",
    "bias_paired",
    "bias_imai",
    "bias_fogarty",
    "bias_coarse",
    "corollary_condition",
    "support_size",
]
