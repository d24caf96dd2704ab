"""``stratvar`` command line: pair, assign, estimate, oracle, simulate.

Exit status is 0 on success, 1 on a domain error (its class name is printed
on stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from . import estimators as est
from . import io as sio
from . import oracle
from .assign import draw_assignment, substream
from .errors import ParseError, StratvarError
from .pairing import STRATA_METHODS, PairingPlan, pair_strata
from .simlab import ESTIMATORS, DgpSpec, SimConfig, run_monte_carlo

METHOD_ALIASES = {
    "adjacent": "adjacent_by_mean",
    "antipodal": "antipodal_by_mean",
    "greedy": "greedy_nonbipartite",
    **{m: m for m in STRATA_METHODS},
}

CONFIG_KEYS = {
    "model": "model",
    "n": "population_size",
    "population_size": "population_size",
    "seed": "master_seed",
    "master_seed": "master_seed",
    "match": "match_method",
    "match_method": "match_method",
    "replications": "replications",
    "alpha": "alpha",
    "estimators": "estimators",
    "base_n": "base_population_size",
    "base_population_size": "base_population_size",
}
REQUIRED_CONFIG = ("model", "population_size", "master_seed", "match_method")


def parse_config(path) -> SimConfig:
    """Strict JSON config parse; unknown keys and invariant violations are errors."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    fields = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ParseError(f"{path}: unknown key {key!r}")
        target = CONFIG_KEYS[key]
        if target in fields:
            raise ParseError(f"{path}: key {key!r} given twice")
        fields[target] = value
    for key in REQUIRED_CONFIG:
        if key not in fields:
            raise ParseError(f"{path}: missing key {key!r}")
    try:
        fields["dgp"] = DgpSpec.named(fields.pop("model"))
        for key in ("population_size", "master_seed", "replications", "base_population_size"):
            if key in fields and (isinstance(fields[key], bool) or not isinstance(fields[key], int)):
                raise ParseError(f"{path}: key {key!r} must be an integer")
        if "alpha" in fields:
            fields["alpha"] = float(fields["alpha"])
            if not 0 < fields["alpha"] < 1:
                raise ParseError(f"{path}: key 'alpha' must lie in (0, 1)")
        if "estimators" in fields:
            ests = fields["estimators"]
            fields["estimators"] = tuple(ests.split(",") if isinstance(ests, str) else ests)
        return SimConfig(**fields)
    except ParseError:
        raise
    except (ValueError, TypeError, StratvarError) as exc:
        raise ParseError(f"{path}: {exc}") from None


def _manifest(command, args, **extra):
    m = {"command": command, "tool_version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        m[key] = value
    m.update(extra)
    return m


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_pair(args):
    strat, labels, x = sio.read_strata_covariates(args.data)
    plan = pair_strata(strat, x, METHOD_ALIASES[args.method])
    _emit(sio.write_csv(["stratum", "pair_id", "slot"], sio.plan_rows(plan, labels), _manifest("pair", args)), args.out)


def cmd_assign(args):
    lp = sio.read_population(args.population, ell=args.ell)
    a = draw_assignment(lp.strat, substream(args.seed, 0))
    rows = [[uid, str(int(di))] for uid, di in zip(lp.unit_ids, a.d)]
    _emit(sio.write_csv(["unit_id", "d"], rows, _manifest("assign", args)), args.out)


def _plan_for(args, labels, m):
    if args.pairing:
        return sio.read_plan(args.pairing, labels)
    return PairingPlan.identity(m)


def cmd_estimate(args):
    lo = sio.read_observed(args.data)
    obs = lo.obs
    kinds = [k.strip() for k in args.estimators.split(",") if k.strip()]
    for k in kinds:
        if k not in est.KINDS:
            raise ParseError(f"unknown estimator {k!r}; choose from {', '.join(est.KINDS)}")
    plan = _plan_for(args, lo.stratum_labels, obs.strat.m)
    effects = est.diff_in_means(obs)
    rows = []
    for kind in kinds:
        v = est.estimate(obs, kind, plan)
        ci = est.confidence_interval(effects, v, args.alpha)
        flags = []
        if ci.clamped:
            flags.append("clamped_negative")
        if "max_leverage" in v.metadata:
            flags.append(f"max_leverage={sio.fmt(v.metadata['max_leverage'])}")
        rows.append([kind, effects.overall, v.value, ci.lower, ci.upper, ";".join(flags)])
    header = ["estimator", "delta_hat", "variance", "ci_lower", "ci_upper", "flags"]
    _emit(sio.write_csv(header, rows, _manifest("estimate", args)), args.out)


def cmd_oracle(args):
    lp = sio.read_population(args.population, ell=args.ell)
    plan = sio.read_plan(args.plan, lp.stratum_labels) if args.plan else PairingPlan.identity(lp.strat.m)
    pop, strat = lp.pop, lp.strat
    mom = oracle.exact_moments(pop, strat, plan, args.statistic, cap=args.cap)
    bias = {
        "delta_hat": lambda: 0.0,
        "paired": lambda: oracle.bias_paired(pop, strat, plan),
        "imai": lambda: oracle.bias_imai(pop, strat),
        "fogarty": lambda: oracle.bias_fogarty(pop, strat),
        "coarse": lambda: oracle.bias_coarse(pop, strat),
        "alt": lambda: None,
    }[args.statistic]()
    record = {
        "mean": mom.mean,
        "variance": mom.variance,
        "support_size": mom.support_size,
        "closed_form_variance": oracle.exact_variance(pop, strat),
        "bias_closed_form": bias,
        "manifest": _manifest("oracle", args),
    }
    _emit(json.dumps(record, indent=2, sort_keys=True) + "\n", args.out)


def cmd_simulate(args):
    cfg = parse_config(args.config)
    report = run_monte_carlo(cfg, threads=args.threads)
    rows = [
        [cfg.dgp.model, str(report.n), cfg.match_method, kind, s.coverage, s.avg_length, s.mc_se]
        for kind, s in report.results.items()
    ]
    config_echo = json.loads(Path(args.config).read_text())
    text = sio.write_csv(
        ["model", "n", "match", "estimator", "coverage", "avg_length", "mc_se"],
        rows,
        _manifest("simulate", args, seed=cfg.master_seed, config_echo=config_echo,
                  delta_n=sio.fmt(report.delta_n)),
    )
    _emit(text, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stratvar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", help="pair strata on covariate means")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="adjacent", choices=sorted(METHOD_ALIASES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("assign", help="draw one stratified assignment")
    p.add_argument("--population", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ell", type=int, default=1, help="treated units per stratum")
    p.add_argument("--out")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("estimate", help="point estimate, variances and intervals")
    p.add_argument("--data", required=True)
    p.add_argument("--estimators", default="paired,imai,fogarty,alt")
    p.add_argument("--pairing")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="exact moments by enumerating assignments")
    p.add_argument("--population", required=True)
    p.add_argument("--plan")
    p.add_argument("--statistic", default="paired", choices=oracle.STATISTICS)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="Monte Carlo coverage and length study")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (StratvarError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
