"""Simulation study: fixed populations drawn from two polynomial models,
matched-pairs Monte Carlo coverage/length, and closed-form variance limits."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import estimators as est
from .assign import draw_assignment_array, substream
from .errors import OddCount, ReplicationFailed, StratvarError, TooLarge
from .pairing import PairingPlan, match_units, pair_strata
from .popmodel import FinitePopulation, Stratification, estimands

ESTIMATORS = ("paired", "imai", "fogarty", "alt")
POPULATION_STREAM = 0


def _poly_shift(coefs, shift):
    """Coefficients (ascending) of ``sum_j a_j x**j`` after adding ``shift``."""
    out = list(coefs)
    out[0] = out[0] + shift
    return tuple(out)


@dataclass(frozen=True)
class DgpSpec:
    """``Y(d) = mu_d + f_d(X) + eps_d`` with ``X ~ U[0,1]``, ``eps_d ~ N(0,1)``.

    ``f1``/``f0`` are polynomial coefficients in ascending powers, kept as
    exact fractions so the limit calculations stay exact.
    """

    model: str
    f1: tuple
    f0: tuple
    mu1: float = 0.25
    mu0: float = 0.0

    @classmethod
    def model1(cls) -> "DgpSpec":
        # f0 = 20(x - 1/2), f1 = 10(x - 1/2)
        return cls("model1", (Fraction(-5), Fraction(10)), (Fraction(-10), Fraction(20)))

    @classmethod
    def model2(cls) -> "DgpSpec":
        # f0 = 40(x^2 - 4/3), f1 = 10(x^2 - 4/3)
        return cls(
            "model2",
            (Fraction(-40, 3), Fraction(0), Fraction(10)),
            (Fraction(-160, 3), Fraction(0), Fraction(40)),
        )

    @classmethod
    def named(cls, model) -> "DgpSpec":
        key = str(model).lower().removeprefix("model")
        if key == "1":
            return cls.model1()
        if key == "2":
            return cls.model2()
        raise ValueError(f"unknown model {model!r}")

    def mean1(self, x):
        return self.mu1 + np.polynomial.polynomial.polyval(x, [float(c) for c in self.f1])

    def mean0(self, x):
        return self.mu0 + np.polynomial.polynomial.polyval(x, [float(c) for c in self.f0])


def generate_population(dgp: DgpSpec, n: int, seed: int) -> FinitePopulation:
    """Draw ``n`` i.i.d. units once; deterministic in ``seed``."""
    if n < 2:
        raise TooLarge("population needs at least two units")
    rng = substream(seed, POPULATION_STREAM)
    x = rng.uniform(0.0, 1.0, size=n)
    eps = rng.standard_normal(size=(2, n))
    return FinitePopulation(dgp.mean1(x) + eps[1], dgp.mean0(x) + eps[0], x[:, None])


def subsample(pop: FinitePopulation, n_sub: int, seed: int) -> FinitePopulation:
    """A uniformly random ``n_sub``-subset, fixed by ``seed``; original order kept."""
    if n_sub > pop.n:
        raise TooLarge(f"cannot draw {n_sub} units from {pop.n}")
    if n_sub % 2:
        raise OddCount("subsample size must be even")
    rng = substream(seed, POPULATION_STREAM, 1)
    idx = np.sort(rng.choice(pop.n, size=n_sub, replace=False))
    return pop.take(idx)


# -- closed-form limits ------------------------------------------------------


def _uniform_moment(power: int) -> Fraction:
    return Fraction(1, power + 1)


def _expect(coefs) -> Fraction:
    return sum((Fraction(c) * _uniform_moment(j) for j, c in enumerate(coefs)), Fraction(0))


def _polymul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += Fraction(x) * Fraction(y)
    return out


def _cov(a, b) -> Fraction:
    return _expect(_polymul(a, b)) - _expect(a) * _expect(b)


@dataclass(frozen=True)
class LimitSummary:
    v: float
    v_obs: float
    v_im: float
    v_f: float

    def as_tuple(self):
        return (self.v_obs, self.v, self.v_im, self.v_f)


def analytic_limits(dgp: DgpSpec, eta: float = 0.5, k: int = 2) -> LimitSummary:
    """Limits of ``n * Var`` and of ``n * E[V-hat]`` for each estimator.

    With unit-variance independent noise, ``Var[Y(d)|X] = 1`` and
    ``Var[Y(1)-Y(0)|X] = 2``; the CATE is the polynomial ``mu1-mu0+f1-f0``.
    """
    eta = Fraction(eta).limit_denominator(10**6)
    n1 = max(len(dgp.f1), len(dgp.f0))
    f1 = list(dgp.f1) + [0] * (n1 - len(dgp.f1))
    f0 = list(dgp.f0) + [0] * (n1 - len(dgp.f0))
    cate = [Fraction(a) - Fraction(b) for a, b in zip(f1, f0)]
    x = [Fraction(0), Fraction(1)]
    var_cate = _cov(cate, cate)
    var_x = _cov(x, x)
    blp_resid = var_cate - _cov(cate, x) ** 2 / var_x
    v_obs = 1 / eta + 1 / (1 - eta)
    v = v_obs - 2
    return LimitSummary(
        v=float(v),
        v_obs=float(v_obs),
        v_im=float(v_obs + k * var_cate),
        v_f=float(v_obs + k * blp_resid),
    )


# -- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    dgp: DgpSpec
    population_size: int
    master_seed: int
    replications: int = 5000
    alpha: float = 0.05
    match_method: str = "good"
    estimators: tuple = ESTIMATORS
    base_population_size: int = 1000

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise OddCount("population_size must be a positive even integer")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.match_method not in ("good", "bad"):
            raise ValueError(f"unknown match method {self.match_method!r}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class EstimatorSummary:
    coverage: float
    avg_length: float
    mc_se: float
    mean_variance: float


@dataclass(frozen=True)
class SimReport:
    results: dict
    delta_n: float
    replications: int
    n: int
    config: SimConfig | None = None
    extras: dict = field(default_factory=dict)


def _replication_chunk(pop, strat, plan, design, kinds, seed, reps, alpha, z):
    d = np.stack([draw_assignment_array(strat, substream(seed, r + 1)) for r in reps])
    y = np.where(d == 1, pop.y1, pop.y0)
    dh = est.stratum_effect_kernel(y, d, strat)
    center = dh.mean(axis=-1)
    out = {}
    for kind in kinds:
        if kind == "paired":
            v = est.paired_kernel(dh, plan)
        elif kind == "imai":
            v = est.imai_kernel(dh)
        elif kind == "fogarty":
            v = est.fogarty_kernel(dh, design)
        elif kind == "alt":
            v = est.alt_kernel(y, d, strat, plan)
        else:
            v = est.coarse_kernel(y, d, strat)
        out[kind] = (center, np.asarray(v, dtype=float))
    return out


def monte_carlo(
    pop: FinitePopulation,
    strat: Stratification,
    plan: PairingPlan,
    *,
    replications: int,
    seed: int,
    alpha: float = 0.05,
    estimators=ESTIMATORS,
    threads: int = 1,
    chunk: int = 250,
) -> SimReport:
    """Coverage and average length of each estimator's interval for the fixed ATE.

    Replication ``r`` uses the stream ``(seed, r + 1)``; results are reduced
    in replication order, so the report does not depend on ``threads``.
    """
    if not 0 < alpha < 1:
        raise est.BadAlpha(f"alpha={alpha} outside (0, 1)")
    kinds = tuple(estimators)
    delta_n = estimands(pop, strat).ate
    z = est.normal_quantile(1 - alpha / 2)
    design = None
    if "fogarty" in kinds:
        design = est.ProjectionDesign(est.fogarty_design(strat, pop.x))
    batches = [range(s, min(replications, s + chunk)) for s in range(0, replications, chunk)]

    def run(reps):
        try:
            return _replication_chunk(pop, strat, plan, design, kinds, seed, reps, alpha, z)
        except StratvarError as exc:
            raise ReplicationFailed(reps.start, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, batches))
    else:
        parts = [run(b) for b in batches]

    results = {}
    for kind in kinds:
        center = np.concatenate([p[kind][0] for p in parts])
        var = np.concatenate([p[kind][1] for p in parts])
        half = z * np.sqrt(np.maximum(var, 0.0))
        covered = (center - half <= delta_n) & (delta_n <= center + half)
        cov = float(covered.mean())
        results[kind] = EstimatorSummary(
            coverage=cov,
            avg_length=math.fsum(2 * half) / replications,
            mc_se=math.sqrt(cov * (1 - cov) / replications),
            mean_variance=math.fsum(var) / replications,
        )
    return SimReport(results=results, delta_n=delta_n, replications=replications, n=pop.n)


def build_design(cfg: SimConfig):
    """Population, unit matching and stratum pairing for a config."""
    base_n = max(cfg.base_population_size, cfg.population_size)
    pop = generate_population(cfg.dgp, base_n, cfg.master_seed)
    if cfg.population_size < base_n:
        pop = subsample(pop, cfg.population_size, cfg.master_seed)
    strat = match_units(pop.x, cfg.match_method)
    plan = pair_strata(strat, pop.x, "adjacent_by_mean")
    return pop, strat, plan


def run_monte_carlo(cfg: SimConfig, threads: int = 1) -> SimReport:
    pop, strat, plan = build_design(cfg)
    report = monte_carlo(
        pop,
        strat,
        plan,
        replications=cfg.replications,
        seed=cfg.master_seed,
        alpha=cfg.alpha,
        estimators=cfg.estimators,
        threads=threads,
    )
    return SimReport(report.results, report.delta_n, report.replications, report.n, cfg)
