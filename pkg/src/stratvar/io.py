"""CSV readers and writers for populations, observed data, clusters and plans.

Lines starting with ``#`` are comments; writers use them for the run manifest.
Floats are written with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assign import ObservedExperiment
from .errors import ParseError
from .pairing import PairingPlan
from .popmodel import Cluster, ClusterPopulation, FinitePopulation, Stratification


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _read_rows(path, required):
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError(f"{path}: no header row")
    reader = csv.DictReader(lines)
    header = [h.strip() for h in reader.fieldnames or []]
    reader.fieldnames = header
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
    xcols = sorted((h for h in header if h.startswith("x") and h[1:].isdigit()), key=lambda h: int(h[1:]))
    rows = list(reader)
    return rows, xcols


def _real(row, col, path, lineno):
    try:
        return float(row[col])
    except (TypeError, ValueError):
        raise ParseError(f"{path}: line {lineno}: column {col!r} is not a real number: {row[col]!r}") from None


def _covariates(rows, xcols, path):
    if not xcols:
        return None
    return np.array([[_real(r, c, path, i + 2) for c in xcols] for i, r in enumerate(rows)])


@dataclass(frozen=True)
class LabeledPopulation:
    pop: FinitePopulation
    strat: Stratification
    unit_ids: list
    stratum_labels: list


@dataclass(frozen=True)
class LabeledObservation:
    obs: ObservedExperiment
    unit_ids: list
    stratum_labels: list


def _stratification(rows, ell, path):
    labels = [r["stratum"].strip() for r in rows]
    order = list(dict.fromkeys(labels))
    return Stratification.from_labels(labels, ell), order


def read_population(path, ell: int = 1) -> LabeledPopulation:
    rows, xcols = _read_rows(path, ["unit_id", "y1", "y0", "stratum"])
    y1 = [_real(r, "y1", path, i + 2) for i, r in enumerate(rows)]
    y0 = [_real(r, "y0", path, i + 2) for i, r in enumerate(rows)]
    strat, order = _stratification(rows, ell, path)
    pop = FinitePopulation(y1, y0, _covariates(rows, xcols, path))
    return LabeledPopulation(pop, strat, [r["unit_id"].strip() for r in rows], order)


def read_observed(path) -> LabeledObservation:
    """Observed data; the treated count per stratum is read off ``d``."""
    rows, xcols = _read_rows(path, ["unit_id", "y", "d", "stratum"])
    y = [_real(r, "y", path, i + 2) for i, r in enumerate(rows)]
    try:
        d = np.array([int(r["d"]) for r in rows])
    except ValueError:
        raise ParseError(f"{path}: column 'd' must hold 0/1 integers") from None
    if not np.isin(d, (0, 1)).all():
        raise ParseError(f"{path}: column 'd' must hold 0/1 integers")
    labels = [r["stratum"].strip() for r in rows]
    first = labels[0]
    ell = int(sum(di for di, lab in zip(d, labels) if lab == first))
    strat, order = _stratification(rows, ell, path)
    obs = ObservedExperiment(y=y, d=d, strat=strat, x=_covariates(rows, xcols, path))
    return LabeledObservation(obs, [r["unit_id"].strip() for r in rows], order)


def read_strata_covariates(path):
    """Stratum labels and covariates from any CSV with a ``stratum`` column."""
    rows, xcols = _read_rows(path, ["stratum"])
    labels = [r["stratum"].strip() for r in rows]
    # ell is irrelevant for pairing; 1 is valid for every k >= 2
    strat = Stratification.from_labels(labels, 1)
    x = _covariates(rows, xcols, path)
    return strat, list(dict.fromkeys(labels)), (np.empty((len(rows), 0)) if x is None else x)


def read_clusters(path) -> ClusterPopulation:
    rows, xcols = _read_rows(path, ["cluster_id", "member_id", "y1", "y0"])
    groups: dict = {}
    for i, r in enumerate(rows):
        cid = r["cluster_id"].strip()
        x = tuple(_real(r, c, path, i + 2) for c in xcols)
        entry = groups.setdefault(cid, {"members": [], "x": x})
        if entry["x"] != x:
            raise ParseError(f"{path}: line {i + 2}: covariates differ within cluster {cid!r}")
        entry["members"].append((_real(r, "y1", path, i + 2), _real(r, "y0", path, i + 2)))
    return ClusterPopulation(tuple(Cluster(np.array(g["members"]), np.array(g["x"])) for g in groups.values()))


def read_plan(path, stratum_labels) -> PairingPlan:
    rows, _ = _read_rows(path, ["stratum", "pair_id", "slot"])
    index = {lab: j for j, lab in enumerate(stratum_labels)}
    paired, leftover = [], []
    for i, r in enumerate(rows):
        lab = r["stratum"].strip()
        if lab not in index:
            raise ParseError(f"{path}: line {i + 2}: unknown stratum {lab!r}")
        pid = r["pair_id"].strip()
        if pid == "":
            leftover.append(index[lab])
            continue
        try:
            paired.append((int(pid), int(r["slot"]), index[lab]))
        except ValueError:
            raise ParseError(f"{path}: line {i + 2}: pair_id and slot must be integers") from None
    if len(leftover) > 1:
        raise ParseError(f"{path}: more than one unpaired stratum")
    order = [j for _, _, j in sorted(paired)] + leftover
    if sorted(order) != list(range(len(stratum_labels))):
        raise ParseError(f"{path}: plan must list every stratum exactly once")
    return PairingPlan(tuple(order))


def manifest_lines(manifest: dict) -> list:
    return ["# manifest " + json.dumps(manifest, sort_keys=True)]


def write_csv(header, rows, manifest: dict | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        for line in manifest_lines(manifest):
            buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def plan_rows(plan: PairingPlan, stratum_labels):
    rows = []
    for pid, pair in enumerate(plan.pairs, start=1):
        for slot, j in enumerate(pair, start=1):
            rows.append([stratum_labels[j], str(pid), str(slot)])
    if plan.leftover is not None:
        rows.append([stratum_labels[plan.leftover], "", ""])
    return rows


def read_report(text: str) -> list:
    """Parse an emitted CSV report back into dicts (comments skipped)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_manifest(text: str) -> dict | None:
    for ln in text.splitlines():
        if ln.startswith("# manifest "):
            return json.loads(ln[len("# manifest "):])
    return None
