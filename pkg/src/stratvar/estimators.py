"""Difference in means, five variance estimators, and normal-theory intervals.

The public functions take an :class:`ObservedExperiment`. Each one is a thin
wrapper over a kernel that accepts batches: ``y`` and ``d`` may carry any
number of leading axes (one per assignment), and the kernel returns one value
per batch entry. The exact-enumeration oracle calls the same kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .assign import ObservedExperiment
from .errors import (
    BadAlpha,
    LeverageOne,
    NoCovariates,
    OutOfRange,
    RankDeficient,
    SingletonArm,
    TooFewStrata,
)
from .pairing import PairingPlan
from .popmodel import Stratification

KINDS = ("paired", "imai", "fogarty", "coarse", "alt")
RANK_TOL = 1e-10
LEVERAGE_TOL = 1e-10


@dataclass(frozen=True)
class StratumEffects:
    delta_hat: np.ndarray
    overall: float


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    kind: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    alpha: float
    center: float
    half_width: float
    clamped: bool = False

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


# -- kernels -----------------------------------------------------------------


def stratum_effect_kernel(y, d, strat: Stratification) -> np.ndarray:
    """Per-stratum differences in means, shape ``(..., m)``."""
    yb = np.asarray(y, dtype=float)[..., strat.blocks]
    db = np.asarray(d)[..., strat.blocks]
    treated = np.where(db == 1, yb, 0.0).sum(axis=-1)
    control = np.where(db == 0, yb, 0.0).sum(axis=-1)
    return treated / strat.ell - control / (strat.k - strat.ell)


def paired_kernel(delta_hat, plan: PairingPlan) -> np.ndarray:
    """``(tau2 - kappa) / m`` computed through its sum-of-squares form.

    ``m**2 * V = sum_pairs (D_a - D_b)**2 (+ D_leftover**2)`` is algebraically
    identical and cannot round below zero.
    """
    dh = np.asarray(delta_hat, dtype=float)
    m = dh.shape[-1]
    if m < 2:
        raise TooFewStrata("the paired estimator needs m >= 2")
    a, b = plan.index_arrays()
    ss = ((dh[..., a] - dh[..., b]) ** 2).sum(axis=-1)
    if plan.leftover is not None:
        ss = ss + dh[..., plan.leftover] ** 2
    return ss / m**2


def tau2_kappa(delta_hat, plan: PairingPlan):
    dh = np.asarray(delta_hat, dtype=float)
    m = dh.shape[-1]
    a, b = plan.index_arrays()
    tau2 = (dh**2).mean(axis=-1)
    kappa = 2.0 / m * (dh[..., a] * dh[..., b]).sum(axis=-1)
    return tau2, kappa


def imai_kernel(delta_hat) -> np.ndarray:
    dh = np.asarray(delta_hat, dtype=float)
    m = dh.shape[-1]
    if m < 2:
        raise TooFewStrata("the Imai estimator needs m >= 2")
    centered = dh - dh.mean(axis=-1, keepdims=True)
    return (centered**2).sum(axis=-1) / (m * (m - 1))


class ProjectionDesign:
    """Leverages and a residual operator for an ``m x L`` design matrix.

    Only the ``L x L`` normal equations are ever formed, so the hat matrix is
    never materialized.
    """

    def __init__(self, R):
        R = np.asarray(R, dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        if R.ndim != 2 or R.shape[1] == 0:
            raise RankDeficient("design matrix must be m x L with L >= 1")
        gram = R.T @ R
        eig = np.linalg.eigvalsh(gram)
        if eig[0] <= RANK_TOL * max(eig[-1], np.finfo(float).tiny):
            raise RankDeficient(f"R'R is singular (eigenvalue ratio {eig[0] / eig[-1] if eig[-1] else 0:.3g})")
        self.R = R
        self.gram = gram
        # solve() is LU with partial pivoting; the system is L x L
        self.gram_inv_Rt = np.linalg.solve(gram, R.T)
        self.leverage = np.einsum("jl,lj->j", R, self.gram_inv_Rt)
        if self.leverage.max() > 1.0 - LEVERAGE_TOL:
            raise LeverageOne(f"max leverage {self.leverage.max():.12g} is numerically 1")
        self.scale = 1.0 / np.sqrt(1.0 - self.leverage)

    @property
    def m(self) -> int:
        return self.R.shape[0]

    def residual(self, u) -> np.ndarray:
        """``(I - H) u`` along the last axis."""
        u = np.asarray(u, dtype=float)
        return u - (u @ self.gram_inv_Rt.T) @ self.R.T

    def quadratic_form(self, delta) -> np.ndarray:
        """``delta' D^-1/2 (I - H) D^-1/2 delta / m**2`` with ``D = diag(I - H)``."""
        u = np.asarray(delta, dtype=float) * self.scale
        r = self.residual(u)
        return (r**2).sum(axis=-1) / self.m**2

    def hat_matrix(self) -> np.ndarray:
        """Dense ``H``; diagnostics and tests only."""
        return self.R @ self.gram_inv_Rt


def fogarty_design(strat: Stratification, x) -> np.ndarray:
    """Intercept plus centered stratum covariate means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] == 0:
        raise NoCovariates("the default Fogarty design needs covariates")
    xbar = x[strat.blocks].mean(axis=1)
    return np.column_stack([np.ones(strat.m), xbar - x.mean(axis=0)])


def fogarty_kernel(delta_hat, design: ProjectionDesign) -> np.ndarray:
    return design.quadratic_form(delta_hat)


def coarse_kernel(y, d, strat: Stratification) -> np.ndarray:
    ell, k = strat.ell, strat.k
    if min(ell, k - ell) < 2:
        raise SingletonArm("within-stratum sample variances need at least two units per arm")
    yb = np.asarray(y, dtype=float)[..., strat.blocks]
    db = np.asarray(d)[..., strat.blocks]
    total = 0.0
    for arm, count, share in ((1, ell, strat.eta), (0, k - ell, 1.0 - strat.eta)):
        mask = db == arm
        mean = np.where(mask, yb, 0.0).sum(axis=-1, keepdims=True) / count
        s2 = np.where(mask, (yb - mean) ** 2, 0.0).sum(axis=-1) / (count - 1)
        total = total + s2 / share
    return total.sum(axis=-1) / (strat.n * strat.m)


def alt_kernel(y, d, strat: Stratification, plan: PairingPlan) -> np.ndarray:
    if strat.m < 2:
        raise TooFewStrata("the alternative estimator needs m >= 2")
    y = np.asarray(y, dtype=float)
    d = np.asarray(d)
    yb = y[..., strat.blocks]
    db = d[..., strat.blocks]
    a, b = plan.index_arrays()
    n, m = strat.n, strat.m
    out = 0.0
    for arm, per_stratum, share in ((1, strat.ell, strat.eta), (0, strat.k - strat.ell, 1.0 - strat.eta)):
        mask = d == arm
        count = per_stratum * m
        mu = np.where(mask, y, 0.0).sum(axis=-1, keepdims=True) / count
        sigma2 = np.where(mask, (y - mu) ** 2, 0.0).sum(axis=-1) / count
        # cross products averaged over the per_stratum**2 unit pairs; with
        # matched pairs there is exactly one
        arm_means = np.where(db == arm, yb, 0.0).sum(axis=-1) / per_stratum
        varsigma = 2.0 / m * (arm_means[..., a] * arm_means[..., b]).sum(axis=-1)
        out = out + (sigma2 + mu[..., 0] ** 2 - varsigma) / share
    return out / n


# -- observed-data API -------------------------------------------------------


def diff_in_means(obs: ObservedExperiment) -> StratumEffects:
    dh = stratum_effect_kernel(obs.y, obs.d, obs.strat)
    treated = obs.y[obs.d == 1].mean()
    control = obs.y[obs.d == 0].mean()
    return StratumEffects(delta_hat=dh, overall=float(treated - control))


def var_paired(obs: ObservedExperiment, plan: PairingPlan | None = None) -> VarianceEstimate:
    plan = plan or PairingPlan.identity(obs.strat.m)
    _check_plan(plan, obs.strat)
    dh = stratum_effect_kernel(obs.y, obs.d, obs.strat)
    value = float(paired_kernel(dh, plan))
    tau2, kappa = tau2_kappa(dh, plan)
    return VarianceEstimate(value, "paired", {"tau2": float(tau2), "kappa": float(kappa)})


def var_imai(obs: ObservedExperiment) -> VarianceEstimate:
    dh = stratum_effect_kernel(obs.y, obs.d, obs.strat)
    return VarianceEstimate(float(imai_kernel(dh)), "imai")


def var_fogarty(obs: ObservedExperiment, R=None) -> VarianceEstimate:
    design = R if isinstance(R, ProjectionDesign) else ProjectionDesign(
        fogarty_design(obs.strat, obs.x) if R is None else R
    )
    dh = stratum_effect_kernel(obs.y, obs.d, obs.strat)
    value = float(fogarty_kernel(dh, design))
    return VarianceEstimate(value, "fogarty", {"max_leverage": float(design.leverage.max())})


def var_coarse(obs: ObservedExperiment) -> VarianceEstimate:
    return VarianceEstimate(float(coarse_kernel(obs.y, obs.d, obs.strat)), "coarse")


def var_alt(obs: ObservedExperiment, plan: PairingPlan | None = None) -> VarianceEstimate:
    plan = plan or PairingPlan.identity(obs.strat.m)
    _check_plan(plan, obs.strat)
    value = float(alt_kernel(obs.y, obs.d, obs.strat, plan))
    return VarianceEstimate(value, "alt", {"negative": value < 0})


def _check_plan(plan: PairingPlan, strat: Stratification):
    if strat.m < 2:
        raise TooFewStrata("pairing-based estimators need m >= 2")
    if plan.m != strat.m:
        raise TooFewStrata(f"plan covers {plan.m} strata but the design has {strat.m}")


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise OutOfRange(f"quantile level {p} outside (0, 1)")
    return NormalDist().inv_cdf(p)


def confidence_interval(effects: StratumEffects, v: VarianceEstimate, alpha: float = 0.05) -> ConfidenceInterval:
    """``delta_hat +/- z_{1-alpha/2} * sqrt(V)``; a negative ``V`` is clamped to zero and flagged."""
    if not 0.0 < alpha < 1.0:
        raise BadAlpha(f"alpha={alpha} outside (0, 1)")
    clamped = v.value < 0
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(max(v.value, 0.0))
    center = float(effects.overall)
    return ConfidenceInterval(center - half, center + half, alpha, center, half, clamped)


def estimate(obs: ObservedExperiment, kind: str, plan: PairingPlan | None = None, R=None) -> VarianceEstimate:
    """Dispatch on estimator name."""
    if kind == "paired":
        return var_paired(obs, plan)
    if kind == "imai":
        return var_imai(obs)
    if kind == "fogarty":
        return var_fogarty(obs, R)
    if kind == "coarse":
        return var_coarse(obs)
    if kind == "alt":
        return var_alt(obs, plan)
    raise ValueError(f"unknown estimator {kind!r}")
