"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts on it.
"""

import math
import time

import numpy as np
from scipy import integrate

from conftest import random_instance
from stratvar import (
    Cluster,
    ClusterPopulation,
    ObservedExperiment,
    PairingPlan,
    Stratification,
    collapse_clusters,
    confidence_interval,
    diff_in_means,
    draw_assignment,
    estimands,
    match_units,
    observe,
    pair_strata,
    substream,
    var_alt,
    var_coarse,
    var_fogarty,
    var_imai,
    var_paired,
)
from stratvar import oracle
from stratvar import estimators as est
from stratvar.errors import LeverageOne
from stratvar.simlab import DgpSpec, SimConfig, analytic_limits, run_monte_carlo

SEED = 20261016


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# -- 1 -----------------------------------------------------------------------


def _corollary_consistent(pop, strat, plan):
    holds, lhs, rhs = oracle.corollary_condition(pop, strat, plan)
    gap = oracle.bias_imai(pop, strat) - oracle.bias_paired(pop, strat, plan)
    if abs(gap) <= 1e-12 * max(1.0, oracle.bias_imai(pop, strat)):
        # an exact tie (always the case for m = 2) is decided by rounding;
        # both sides must then agree that it is a tie
        return close(lhs, rhs, 1e-12)
    return holds == (gap > 0)


def test_criterion_1_bias_identities(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    designs = [(m, k, ell) for m in (2, 3, 4) for k in (2, 3, 4) for ell in range(1, k)]
    failures, checks, instances = [], 0, 0
    fogarty_q2 = coarse = 0
    for m, k, ell in designs:
        for _ in range(12):
            instances += 1
            pop, strat = random_instance(rng, m, k, ell)
            tag = f"m={m} k={k} ell={ell} #{instances}"
            var = oracle.exact_variance(pop, strat)
            mom = oracle.exact_moments(pop, strat, statistic="delta_hat")
            checks += 2
            if not close(mom.mean, estimands(pop, strat).ate, 1e-12):
                failures.append(f"{tag}: E[delta_hat]")
            if not close(mom.variance, var, 1e-12):
                failures.append(f"{tag}: Var[delta_hat]")

            plans = {
                "adjacent": pair_strata(strat, pop.x, "adjacent_by_mean"),
                "antipodal": pair_strata(strat, pop.x, "antipodal_by_mean"),
                "random": PairingPlan(tuple(int(j) for j in rng.permutation(m))),
            }
            for name, plan in plans.items():
                gap = oracle.exact_moments(pop, strat, plan, "paired").mean - var
                checks += 2
                if not close(gap, oracle.bias_paired(pop, strat, plan), 1e-12):
                    failures.append(f"{tag}: paired bias ({name})")
                if not _corollary_consistent(pop, strat, plan):
                    failures.append(f"{tag}: corollary ({name})")

            gap = oracle.exact_moments(pop, strat, statistic="imai").mean - var
            checks += 1
            if not close(gap, oracle.bias_imai(pop, strat), 1e-12):
                failures.append(f"{tag}: imai bias")

            designs_R = {"intercept": np.ones((m, 1)), "intercept+xbar": est.fogarty_design(strat, pop.x)}
            for name, R in designs_R.items():
                try:
                    design = est.ProjectionDesign(R)
                except LeverageOne:
                    continue
                fogarty_q2 += name != "intercept"
                gap = oracle.exact_moments(pop, strat, statistic="fogarty", R=design).mean - var
                checks += 1
                if not close(gap, oracle.bias_fogarty(pop, strat, design), 1e-10):
                    failures.append(f"{tag}: fogarty bias ({name})")

            if min(ell, k - ell) >= 2:
                coarse += 1
                gap = oracle.exact_moments(pop, strat, statistic="coarse").mean - var
                checks += 1
                if not close(gap, oracle.bias_coarse(pop, strat), 1e-12):
                    failures.append(f"{tag}: coarse bias")
    elapsed = time.perf_counter() - start
    ok = not failures and instances >= 200 and elapsed < 60
    detail = (f"{instances} instances, {checks} identities ({fogarty_q2} with covariate Fogarty design, "
              f"{coarse} coarse), {len(failures)} failures, {elapsed:.1f}s")
    if failures:
        detail += "; first: " + failures[0]
    verdict("criterion 1 (bias identities by enumeration)", ok, detail)


# -- 2 -----------------------------------------------------------------------


def _random_obs(rng, m, k, ell):
    y = rng.uniform(-5, 5, m * k)
    strat = Stratification(rng.permutation(m * k).reshape(m, k), ell)
    d = draw_assignment(strat, rng).d
    return ObservedExperiment(y, d, strat, x=rng.uniform(size=(m * k, 1)))


def test_criterion_2_algebraic_identities(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED + 2)
    bad = []
    for i in range(10_000):
        m = int(rng.integers(2, 41))
        k = int(rng.integers(2, 6))
        obs = _random_obs(rng, m, k, int(rng.integers(1, k)))
        plan = PairingPlan(tuple(int(j) for j in rng.permutation(m)))
        v = var_paired(obs, plan)
        dh = [float(t) for t in diff_in_means(obs).delta_hat]
        ss = math.fsum((dh[a] - dh[b]) ** 2 for a, b in plan.pairs)
        if plan.leftover is not None:
            ss += dh[plan.leftover] ** 2
        by_definition = (v.metadata["tau2"] - v.metadata["kappa"]) / m
        if v.value < 0 or not close(m**2 * v.value, ss, 1e-12) or not close(by_definition, v.value, 1e-12):
            bad.append(f"paired dataset {i}")
    for i in range(1_000):
        m = int(rng.integers(2, 41))
        k = int(rng.integers(2, 6))
        obs = _random_obs(rng, m, k, int(rng.integers(1, k)))
        if not close(var_fogarty(obs, np.ones(m)).value, var_imai(obs).value, 1e-12):
            bad.append(f"fogarty(iota) dataset {i}")
    for i in range(1_000):
        m = 2 * int(rng.integers(1, 21))
        obs = _random_obs(rng, m, 2, 1)
        plan = PairingPlan(tuple(int(j) for j in rng.permutation(m)))
        merged = Stratification(np.array([np.concatenate([obs.strat.blocks[a], obs.strat.blocks[b]])
                                          for a, b in plan.pairs]), 2)
        if not close(var_alt(obs, plan).value, var_coarse(ObservedExperiment(obs.y, obs.d, merged)).value, 1e-12):
            bad.append(f"alt/collapsed coarse dataset {i}")
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 30
    verdict("criterion 2 (algebraic identities)", ok,
            f"10000 paired + 1000 fogarty + 1000 alt datasets, {len(bad)} failures, {elapsed:.1f}s"
            + (f"; first: {bad[0]}" if bad else ""))


# -- 3 -----------------------------------------------------------------------


def _quadrature(dgp):
    cate = lambda x: dgp.mean1(x) - dgp.mean0(x)
    e = lambda f: integrate.quad(f, 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
    mc = e(cate)
    var_cate = e(lambda x: (cate(x) - mc) ** 2)
    cov = e(lambda x: (cate(x) - mc) * (x - 0.5))
    return 4.0, 2.0, 4.0 + 2 * var_cate, 4.0 + 2 * (var_cate - 12 * cov**2)


def test_criterion_3_limits(verdict):
    start = time.perf_counter()
    expected = {"model1": (4, 2, 62 / 3, 4), "model2": (4, 2, 164, 14)}
    problems = []
    for name, target in expected.items():
        dgp = DgpSpec.named(name)
        got = analytic_limits(dgp).as_tuple()
        if any(abs(g - t) > 1e-12 for g, t in zip(got, target)):
            problems.append(f"{name} closed form {got}")
        if any(abs(g - q) > 1e-8 for g, q in zip(got, _quadrature(dgp))):
            problems.append(f"{name} quadrature")
    rep = run_monte_carlo(SimConfig(DgpSpec.model2(), 1000, SEED, replications=5000,
                                    estimators=("paired", "imai", "fogarty")))
    scaled = {k: rep.n * s.mean_variance for k, s in rep.results.items()}
    bands = {"paired": (4, 0.6), "fogarty": (14, 2), "imai": (164, 20)}
    for kind, (center, width) in bands.items():
        if abs(scaled[kind] - center) > width:
            problems.append(f"n*mean({kind})={scaled[kind]:.3f} outside {center}+/-{width}")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 300
    detail = ("limits (4, 2, 62/3, 4) and (4, 2, 164, 14) exact and match quadrature; model 2 n*mean V: "
              + ", ".join(f"{k}={v:.3f}" for k, v in scaled.items()) + f"; {elapsed:.1f}s")
    if problems:
        detail += "; problems: " + "; ".join(problems)
    verdict("criterion 3 (limits)", ok, detail)


# -- 4 -----------------------------------------------------------------------


def test_criterion_4_table_replication(verdict):
    start = time.perf_counter()
    m1 = DgpSpec.model1()
    good = run_monte_carlo(SimConfig(m1, 1000, SEED, replications=5000, match_method="good"), threads=4).results
    bad = run_monte_carlo(SimConfig(m1, 1000, SEED, replications=5000, match_method="bad"), threads=4).results
    m2 = run_monte_carlo(SimConfig(DgpSpec.model2(), 1000, SEED, replications=5000), threads=4).results
    checks = {
        "model1 good paired coverage >= 0.99": good["paired"].coverage >= 0.99,
        "model1 good paired length 0.245+/-0.02": abs(good["paired"].avg_length - 0.245) <= 0.02,
        "model1 good imai length 0.565+/-0.05": abs(good["imai"].avg_length - 0.565) <= 0.05,
        "model1 good fogarty length 0.247+/-0.02": abs(good["fogarty"].avg_length - 0.247) <= 0.02,
        "model1 bad alt coverage <= 0.90": bad["alt"].coverage <= 0.90,
    }
    for kind in ("paired", "imai", "fogarty"):
        checks[f"model1 bad {kind} coverage in [0.935, 0.965]"] = 0.935 <= bad[kind].coverage <= 0.965
    lp, lf, li = (m2[k].avg_length for k in ("paired", "fogarty", "imai"))
    checks["model2 length order paired < fogarty < imai"] = lp < lf < li
    checks["model2 fogarty/paired within 15% of sqrt(14)/2"] = abs(lf / lp / (math.sqrt(14) / 2) - 1) <= 0.15
    checks["model2 imai/paired within 15% of sqrt(164)/2"] = abs(li / lp / (math.sqrt(164) / 2) - 1) <= 0.15
    elapsed = time.perf_counter() - start
    checks["runtime < 15 min"] = elapsed < 900
    cells = "; ".join(
        f"{label} {k} {r[k].coverage:.3f}/{r[k].avg_length:.3f}"
        for label, r in (("m1 good", good), ("m1 bad", bad), ("m2 good", m2))
        for k in ("paired", "imai", "fogarty", "alt")
    )
    failed = [name for name, ok in checks.items() if not ok]
    detail = f"coverage/length: {cells}; {elapsed:.1f}s"
    if failed:
        detail += "; failed: " + ", ".join(failed)
    verdict("criterion 4 (table replication bands)", not failed, detail)


# -- 5 -----------------------------------------------------------------------


def _random_clusters(rng, count):
    clusters = []
    for _ in range(count):
        g = int(rng.integers(1, 7))
        clusters.append(Cluster(rng.uniform(-5, 5, (g, 2)), rng.uniform(size=1)))
    return ClusterPopulation(clusters)


def test_criterion_5_cluster_collapse(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED + 5)
    bad = []
    for i in range(100):
        # alternate matched pairs with strata of four so the coarse estimator is exercised too
        k = 2 if i % 2 else 4
        cpop = _random_clusters(rng, k * int(rng.integers(3, 9)))
        pop = collapse_clusters(cpop)
        if not close(float(pop.y1.mean() - pop.y0.mean()), cpop.unit_ate(), 1e-12):
            bad.append(f"population {i}: collapsed ATE")
        if k == 2:
            strat = match_units(pop.x)
        else:
            strat = Stratification(np.argsort(pop.x[:, 0], kind="stable").reshape(-1, 4), 2)
        if not close(estimands(pop, strat).ate, cpop.unit_ate(), 1e-12):
            bad.append(f"population {i}: estimand")
        plan = pair_strata(strat, pop.x, "adjacent_by_mean")
        obs = observe(pop, draw_assignment(strat, substream(SEED, i)), strat)
        effects = diff_in_means(obs)
        values = [var_paired(obs, plan), var_imai(obs), var_fogarty(obs), var_alt(obs, plan)]
        if k == 4:
            values.append(var_coarse(obs))
        for v in values:
            ci = confidence_interval(effects, v)
            if not (np.isfinite(v.value) and ci.lower <= ci.upper):
                bad.append(f"population {i}: {v.kind}")
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 5
    verdict("criterion 5 (cluster collapse)", ok,
            f"100 cluster populations, {len(bad)} failures, {elapsed:.2f}s" + (f"; first: {bad[0]}" if bad else ""))
