"""Experiment harness: grid execution, persistence, and report tables.

The factorial design crosses network size, true block count, block size
scheme, density and density ratio.  Every (cell, replicate) pair is one
work unit: a single network is generated and every configured method
runs on that same network, so method comparisons are paired.  All
randomness is derived by hashing (master seed, cell, replicate, method)
so any record can be replayed in isolation and results are identical
for any worker count.

Records are appended to a CSV with a fixed schema::

    n,k_true,size_scheme,b,r,method,replicate,seed,k_hat,mse_true,curve,wall_ms,status

``curve`` serialises the per-K risk or criterion values as "K:value;"
pairs.  ``wall_ms`` is the only field excluded from the determinism
contract.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DesignCell,
    ReplicateRecord,
    accuracy,
    bias_variance_from_estimates,
    confusion,
    mse_vs_truth,
    risk_estimate_grid,
    true_risk_oracle,
    variance_decomposition,
)
from .criteria import (
    IC_KINDS,
    greedy_modularity,
    infomap,
    information_criterion,
    select_model_ic,
)
from .folds import SCHEMES, make_assignment
from .generate import sample_network
from .risk import cv_risk, mse_loss
from .sbm import fit_sbm, mle_block_probabilities
from .validation import check_rng

RECORD_FIELDS = (
    "n",
    "k_true",
    "size_scheme",
    "b",
    "r",
    "method",
    "replicate",
    "seed",
    "k_hat",
    "mse_true",
    "curve",
    "wall_ms",
    "status",
)

RECORDS_FILE = "records.csv"
MANIFEST_FILE = "run_manifest.json"

OUTPUT_ENV_VAR = "BLOCKCV_OUTPUT"

CV_METHOD_NAMES = SCHEMES
OTHER_METHOD_NAMES = ("aic", "bic", "loglik", "modularity", "infomap", "risk-min")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV_VAR, "results")


@dataclass
class ExperimentConfig:
    """Grid, replication and execution settings for one run."""

    nodes: tuple[int, ...] = (30, 60, 120, 300)
    blocks: tuple[int, ...] = (1, 2, 3, 4, 5)
    size_schemes: tuple[str, ...] = ("equal", "powerlaw")
    densities: tuple[float, ...] = (0.01, 0.05, 0.1)
    ratios: tuple[float, ...] = (3.0, 4.0, 5.0)
    replications: int = 312
    fold_counts: tuple[int, ...] = (3, 5, 10)
    methods: tuple[str, ...] = (
        "latin",
        "random",
        "node",
        "aic",
        "bic",
        "loglik",
        "modularity",
        "infomap",
        "risk-min",
    )
    k_max: int = 11
    master_seed: int = 0
    output_dir: str = field(default_factory=default_output_dir)
    workers: int = 1

    def __post_init__(self):
        for name in ("nodes", "blocks", "size_schemes", "densities", "ratios", "fold_counts", "methods"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must be non-empty")
            setattr(self, name, value)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for b, r in itertools.product(self.densities, self.ratios):
            if r * b > 1.0 + 1e-12:
                raise ValueError(f"invalid cell: r*b = {r * b} > 1")
        unknown = set(self.methods) - set(CV_METHOD_NAMES) - set(OTHER_METHOD_NAMES)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")

    def cells(self) -> list[DesignCell]:
        return [
            DesignCell(n, k, scheme, b, r)
            for n, k, scheme, b, r in itertools.product(
                self.nodes, self.blocks, self.size_schemes, self.densities, self.ratios
            )
        ]

    def method_ids(self) -> list[str]:
        """Concrete method identifiers, CV schemes expanded over fold counts."""
        ids = []
        for name in self.methods:
            if name in CV_METHOD_NAMES:
                ids.extend(f"{name}-{v}" for v in self.fold_counts)
            else:
                ids.append(name)
        return ids

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


def desk_config(**overrides) -> ExperimentConfig:
    """Reduced grid for desk-scale runs (minutes, not days)."""
    settings = dict(
        nodes=(30, 60),
        blocks=(1, 2, 3),
        size_schemes=("equal",),
        densities=(0.05, 0.1),
        ratios=(4.0, 5.0),
        replications=100,
        fold_counts=(3, 10),
        k_max=5,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def derive_seed(master_seed: int, cell: DesignCell, replicate: int, purpose: str) -> int:
    """Stable 63-bit stream seed for one (cell, replicate, purpose).

    Pure SHA-256 hash of a canonical key string; independent of
    execution order, worker count and Python hash randomisation.
    """
    key = (
        f"{master_seed}|{cell.n}|{cell.k_true}|{cell.size_scheme}"
        f"|{cell.b:g}|{cell.r:g}|{replicate}|{purpose}"
    )
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# ---------------------------------------------------------------------------
# per-unit execution
# ---------------------------------------------------------------------------

def _cv_method(method: str) -> tuple[str, int] | None:
    parts = method.rsplit("-", 1)
    if len(parts) == 2 and parts[0] in CV_METHOD_NAMES and parts[1].isdigit():
        return parts[0], int(parts[1])
    return None


def run_unit(config: ExperimentConfig, cell: DesignCell, replicate: int) -> list[ReplicateRecord]:
    """Run every configured method on one freshly generated network."""
    _, _, P = cell.truth()
    network_rng = check_rng(derive_seed(config.master_seed, cell, replicate, "network"))
    Y = sample_network(P, network_rng)
    k_range = range(1, min(config.k_max, cell.n) + 1)

    full_fits = {}

    def full_fit(k: int):
        if k not in full_fits:
            fit_rng = check_rng(derive_seed(config.master_seed, cell, replicate, f"fit-k{k}"))
            full_fits[k] = fit_sbm(Y, k, rng=fit_rng)
        return full_fits[k]

    records = []
    for method in config.method_ids():
        seed = derive_seed(config.master_seed, cell, replicate, method)
        started = time.perf_counter()
        try:
            k_hat, curve, mse = _run_method(
                method, Y, P, cell, k_range, seed, full_fit
            )
            status = "ok"
        except Exception as exc:  # failures become rows, not crashes
            k_hat, curve, mse = 0, {}, float("nan")
            status = f"error:{type(exc).__name__}:{exc}"
        wall_ms = (time.perf_counter() - started) * 1000.0
        records.append(
            ReplicateRecord(
                cell=cell,
                method=method,
                replicate=replicate,
                seed=seed,
                k_hat=k_hat,
                mse_true=mse,
                curve=curve,
                wall_ms=wall_ms,
                status=status,
            )
        )
    return records


def _run_method(method, Y, P, cell, k_range, seed, full_fit):
    rng = check_rng(seed)
    cv = _cv_method(method)
    if cv is not None:
        scheme, n_folds = cv
        assignment = make_assignment(scheme, cell.n, n_folds, rng)
        curve = {}
        for k in k_range:
            curve[k] = cv_risk(Y, k, assignment, rng).risk_per_validated
        k_hat = min(curve, key=lambda k: (curve[k], k))
        return k_hat, curve, mse_vs_truth(P, full_fit(k_hat))
    if method in IC_KINDS:
        curve = {}
        for k in k_range:
            fit = full_fit(k)
            curve[k] = information_criterion(method, fit.log_likelihood, k, cell.n).value
        k_hat = min(curve, key=lambda k: (curve[k], k))
        return k_hat, curve, mse_vs_truth(P, full_fit(k_hat))
    if method == "modularity":
        result = greedy_modularity(Y)
        mse = _community_mse(Y, P, result.labels)
        return result.n_communities, {result.n_communities: result.score}, mse
    if method == "infomap":
        result = infomap(Y, rng)
        mse = _community_mse(Y, P, result.labels)
        return result.n_communities, {result.n_communities: result.score}, mse
    if method == "risk-min":
        curve = {k: mse_vs_truth(P, full_fit(k)) for k in k_range}
        k_hat = min(curve, key=lambda k: (curve[k], k))
        return k_hat, curve, curve[k_hat]
    raise ValueError(f"unknown method {method!r}")


def _community_mse(Y, P, labels) -> float:
    """MSE of the block-probability refit implied by detected communities."""
    B = mle_block_probabilities(Y, labels)
    pred = B[np.ix_(labels - 1, labels - 1)].copy()
    np.fill_diagonal(pred, 0.0)
    return mse_loss(P, pred, ~np.eye(P.shape[0], dtype=bool))


# ---------------------------------------------------------------------------
# records persistence
# ---------------------------------------------------------------------------

def record_key(rec: ReplicateRecord) -> tuple:
    c = rec.cell
    return (c.n, c.k_true, c.size_scheme, f"{c.b:g}", f"{c.r:g}", rec.method, rec.replicate)


def record_to_row(rec: ReplicateRecord) -> dict:
    c = rec.cell
    curve = ";".join(f"{k}:{repr(float(v))}" for k, v in sorted(rec.curve.items()))
    return {
        "n": c.n,
        "k_true": c.k_true,
        "size_scheme": c.size_scheme,
        "b": f"{c.b:g}",
        "r": f"{c.r:g}",
        "method": rec.method,
        "replicate": rec.replicate,
        "seed": rec.seed,
        "k_hat": rec.k_hat,
        "mse_true": repr(float(rec.mse_true)),
        "curve": curve,
        "wall_ms": f"{rec.wall_ms:.3f}",
        "status": rec.status,
    }


def row_to_record(row: dict) -> ReplicateRecord:
    cell = DesignCell(
        n=int(row["n"]),
        k_true=int(row["k_true"]),
        size_scheme=row["size_scheme"],
        b=float(row["b"]),
        r=float(row["r"]),
    )
    curve = {}
    if row["curve"]:
        for pair in row["curve"].split(";"):
            k, v = pair.split(":")
            curve[int(k)] = float(v)
    return ReplicateRecord(
        cell=cell,
        method=row["method"],
        replicate=int(row["replicate"]),
        seed=int(row["seed"]),
        k_hat=int(row["k_hat"]),
        mse_true=float(row["mse_true"]),
        curve=curve,
        wall_ms=float(row["wall_ms"]),
        status=row["status"],
    )


def load_records(records_dir) -> list[ReplicateRecord]:
    path = Path(records_dir) / RECORDS_FILE
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return [row_to_record(row) for row in csv.DictReader(fh)]


def records_equal(dir_a, dir_b) -> bool:
    """Compare two record sets, ignoring order and wall time."""

    def canonical(records):
        rows = []
        for rec in records:
            row = record_to_row(rec)
            row.pop("wall_ms")
            rows.append(tuple(row.values()))
        return sorted(rows)

    return canonical(load_records(dir_a)) == canonical(load_records(dir_b))


def _unit_worker(args):
    config, cell, replicate = args
    return run_unit(config, cell, replicate)


def run_experiment(config: ExperimentConfig, max_units: int | None = None) -> Path:
    """Execute the configured grid, appending records as units finish.

    Idempotent resume: units whose method rows are all present on disk
    are skipped, and recomputed units only append the missing rows, so
    an interrupted run converges to the same record set as a clean one.
    ``max_units`` stops after that many units (used to exercise resume).
    Returns the output directory.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": json.loads(config.to_json()),
        "version": __version__,
        "master_seed": config.master_seed,
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))

    existing = {record_key(rec) for rec in load_records(out)}
    method_ids = config.method_ids()
    units = [
        (cell, rep)
        for cell in config.cells()
        for rep in range(config.replications)
    ]
    pending = [
        (cell, rep)
        for cell, rep in units
        if any(
            (cell.n, cell.k_true, cell.size_scheme, f"{cell.b:g}", f"{cell.r:g}", m, rep)
            not in existing
            for m in method_ids
        )
    ]
    if max_units is not None:
        pending = pending[:max_units]

    path = out / RECORDS_FILE
    write_header = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        if write_header:
            writer.writeheader()

        def consume(results):
            for records in results:
                for rec in records:
                    if record_key(rec) in existing:
                        continue
                    writer.writerow(record_to_row(rec))
                fh.flush()

        if config.workers > 1:
            args = [(config, cell, rep) for cell, rep in pending]
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                consume(pool.map(_unit_worker, args, chunksize=1))
        else:
            consume(run_unit(config, cell, rep) for cell, rep in pending)
    return out


# ---------------------------------------------------------------------------
# report tables
# ---------------------------------------------------------------------------

TABLE_IDS = (
    "overall-accuracy",
    "fold-accuracy-plot",
    "cv-accuracy-by-size",
    "cv-accuracy-by-density",
    "cv-mse-by-size",
    "ic-accuracy-by-size",
    "ic-accuracy-by-density",
    "ic-mse-by-size",
    "cd-accuracy-by-size",
    "cd-accuracy-by-density",
    "cd-mse-by-size",
    "confusion",
    "true-risk-min",
)


def _ok(records):
    return [r for r in records if r.status == "ok"]


def _methods_present(records):
    return sorted({r.method for r in records})


def _best_cv_variants(records):
    """The paper-style comparison set: highest-V latin/random, lowest-V node."""
    present = _methods_present(records)
    chosen = []
    for scheme, want_max in (("latin", True), ("random", True), ("node", False)):
        folds = [int(m.split("-")[1]) for m in present if m.startswith(f"{scheme}-")]
        if folds:
            v = max(folds) if want_max else min(folds)
            chosen.append(f"{scheme}-{v}")
    return chosen


def _accuracy_value(records) -> float:
    return accuracy(records).accuracy if records else float("nan")


def _mse_value(records) -> float:
    vals = [r.mse_true for r in records if np.isfinite(r.mse_true)]
    return float(np.mean(vals)) if vals else float("nan")


def _grouped_table(records, methods, row_field, col_field, value):
    rows = []
    row_values = sorted({getattr(r.cell, row_field) for r in records})
    col_values = sorted({getattr(r.cell, col_field) for r in records})
    for rv in row_values:
        for method in methods:
            subset = [r for r in records if r.method == method and getattr(r.cell, row_field) == rv]
            if not subset:
                continue
            row = {row_field: rv, "method": method}
            for cv_ in col_values:
                cell_records = [r for r in subset if getattr(r.cell, col_field) == cv_]
                row[f"{col_field}={cv_:g}" if isinstance(cv_, float) else f"{col_field}={cv_}"] = (
                    value(cell_records) if cell_records else float("nan")
                )
            rows.append(row)
    return rows


def report(records, table_id: str, k_max: int | None = None, method: str | None = None):
    """Build one summary table as a list of dict rows.

    ``table_id`` selects the layout (see ``TABLE_IDS``); ``confusion``
    additionally needs the method to tabulate.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to report on")
    if table_id == "overall-accuracy":
        rows = []
        for m in _methods_present(records):
            summary = accuracy([r for r in records if r.method == m])
            rows.append(
                {
                    "method": m,
                    "average": summary.accuracy,
                    "ci_low": summary.ci_low,
                    "ci_high": summary.ci_high,
                    "count": summary.count,
                }
            )
        rows.sort(key=lambda row: -row["average"])
        return rows
    if table_id == "fold-accuracy-plot":
        rows = []
        for m in _methods_present(records):
            cv = _cv_method(m)
            if cv is None:
                continue
            summary = accuracy([r for r in records if r.method == m])
            rows.append(
                {
                    "scheme": cv[0],
                    "n_folds": cv[1],
                    "accuracy": summary.accuracy,
                    "ci_low": summary.ci_low,
                    "ci_high": summary.ci_high,
                }
            )
        rows.sort(key=lambda row: (row["scheme"], row["n_folds"]))
        return rows
    if table_id.startswith(("cv-", "ic-", "cd-")):
        group = table_id.split("-")[0]
        if group == "cv":
            methods = _best_cv_variants(records)
        elif group == "ic":
            methods = _best_cv_variants(records)[:1] + [
                m for m in ("bic", "aic") if m in _methods_present(records)
            ]
        else:
            methods = _best_cv_variants(records)[:1] + [
                m for m in ("modularity", "infomap") if m in _methods_present(records)
            ]
        value = _mse_value if table_id.endswith("mse-by-size") else _accuracy_value
        if table_id.endswith("by-density"):
            return _grouped_table(records, methods, "b", "r", value)
        return _grouped_table(records, methods, "n", "k_true", value)
    if table_id == "confusion":
        if method is None:
            raise ValueError("confusion table needs a method")
        k_max = k_max or max(max(r.cell.k_true for r in records), max(r.k_hat for r in _ok(records)))
        table = confusion([r for r in _ok(records) if r.method == method], k_max)
        rows = []
        for i in range(table.shape[0]):
            label = str(i + 1) if i < k_max else f">{k_max}"
            row = {"k_hat": label}
            for j in range(k_max):
                row[f"k_true={j + 1}"] = table[i, j]
            rows.append(row)
        return rows
    if table_id == "true-risk-min":
        return _true_risk_min_table(records)
    raise ValueError(f"unknown table id {table_id!r}; expected one of {TABLE_IDS}")


def _true_risk_min_table(records):
    """Counts of the true-risk-minimising K per (n, K_true), over (b, r) cells."""
    subset = [r for r in _ok(records) if r.method == "risk-min" and r.curve]
    if not subset:
        raise ValueError("no risk-min records present")
    k_values = sorted({k for r in subset for k in r.curve})
    rows = []
    for n in sorted({r.cell.n for r in subset}):
        counts = {}
        cells = {
            (r.cell.k_true, r.cell.size_scheme, r.cell.b, r.cell.r)
            for r in subset
            if r.cell.n == n
        }
        for k_true, scheme, b, rr in cells:
            group = [
                r
                for r in subset
                if r.cell.n == n
                and r.cell.k_true == k_true
                and r.cell.size_scheme == scheme
                and r.cell.b == b
                and r.cell.r == rr
            ]
            mean_curve = {
                k: float(np.mean([g.curve[k] for g in group])) for k in k_values
                if all(k in g.curve for g in group)
            }
            k_star = min(mean_curve, key=lambda k: (mean_curve[k], k))
            counts[(k_star, k_true)] = counts.get((k_star, k_true), 0) + 1
        for k_star in k_values:
            row = {"n": n, "risk_min": k_star}
            for k_true in k_values:
                row[f"k_true={k_true}"] = counts.get((k_star, k_true), 0)
            rows.append(row)
    return rows


def write_table_csv(path, rows) -> None:
    if not rows:
        raise ValueError("refusing to write an empty table")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# variance study
# ---------------------------------------------------------------------------

def variance_study(
    cell: DesignCell,
    candidate_k: int,
    n_networks: int,
    n_assignments: int,
    master_seed: int = 0,
    schemes=SCHEMES,
    fold_counts=(3, 5, 10),
    output_dir=None,
    oracle_replicates: int = 500,
):
    """Risk-estimator variance decomposition on one generating cell.

    For every scheme and fold count, computes an
    ``n_networks x n_assignments`` grid of risk estimates for the
    ``candidate_k``-block estimator, the law-of-total-variance split of
    its variability into fold-assignment and network parts, and the
    squared bias / variance / MSE against a Monte Carlo estimate of the
    true risk.  Writes three CSVs when ``output_dir`` is given and
    returns the rows.
    """
    estimate_rows = []
    decomposition_rows = []
    bias_rows = []
    oracle_rng = check_rng(derive_seed(master_seed, cell, 0, f"true-risk-k{candidate_k}"))
    true_risk = true_risk_oracle(cell, candidate_k, oracle_replicates, oracle_rng)
    for scheme in schemes:
        for n_folds in fold_counts:
            rng = check_rng(derive_seed(master_seed, cell, 0, f"vargrid-{scheme}-{n_folds}"))
            grid = risk_estimate_grid(
                scheme, n_folds, cell, n_networks, n_assignments, candidate_k, rng
            )
            for m in range(n_networks):
                for f in range(n_assignments):
                    estimate_rows.append(
                        {
                            "scheme": scheme,
                            "n_folds": n_folds,
                            "network": m,
                            "fold_draw": f,
                            "risk": repr(float(grid[m, f])),
                        }
                    )
            total_sd, fold_share, network_share = variance_decomposition(grid)
            decomposition_rows.append(
                {
                    "scheme": scheme,
                    "n_folds": n_folds,
                    "total_sd": total_sd,
                    "fold_share": fold_share,
                    "network_share": network_share,
                }
            )
            bias_sq, variance, mse = bias_variance_from_estimates(grid, true_risk)
            bias_rows.append(
                {
                    "scheme": scheme,
                    "n_folds": n_folds,
                    "bias_sq": bias_sq,
                    "variance": variance,
                    "mse": mse,
                    "true_risk": true_risk,
                }
            )
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(out / "variance_estimates.csv", estimate_rows)
        write_table_csv(out / "variance_decomposition.csv", decomposition_rows)
        write_table_csv(out / "bias_variance.csv", bias_rows)
    return estimate_rows, decomposition_rows, bias_rows
