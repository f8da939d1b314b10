"""Command line interface.

Subcommands mirror the library surface: ``generate`` a network,
``fit`` one block count, ``cv`` a risk curve, ``select`` with one
method, ``experiment`` for the full grid, ``report`` for summary
tables, ``variance-study`` for the estimator-variance decomposition,
and ``folds`` to dump fold matrices.  The default output directory can
be set through the ``BLOCKCV_OUTPUT`` environment variable.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .analysis import DesignCell
from .criteria import IC_KINDS, greedy_modularity, infomap, select_model_ic
from .experiment import (
    ExperimentConfig,
    TABLE_IDS,
    default_output_dir,
    desk_config,
    load_records,
    report as build_report,
    run_experiment,
    variance_study as run_variance_study,
    write_table_csv,
)
from .folds import SCHEMES, make_assignment, write_fold_csv
from .generate import (
    read_dense_csv,
    read_edge_list,
    sample_network,
    write_dense_csv,
    write_edge_list,
)
from .risk import risk_curve_rows, select_model_cv
from .sbm import fit_sbm
from .validation import check_adjacency, check_rng


def _load_network(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return check_adjacency(read_dense_csv(path))
    return check_adjacency(read_edge_list(path))


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


@click.group()
def main():
    """Model selection for directed stochastic block models."""


@main.command()
@click.option("--nodes", "-n", type=int, required=True)
@click.option("--blocks", "-k", type=int, required=True)
@click.option("--size-scheme", type=click.Choice(["equal", "powerlaw"]), default="equal", show_default=True)
@click.option("--density", "-b", type=float, required=True, help="between-block tie probability")
@click.option("--ratio", "-r", type=float, required=True, help="within/between density ratio")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fmt", type=click.Choice(["edgelist", "csv"]), default="edgelist", show_default=True)
@click.option("--out", type=click.Path(), required=True)
def generate(nodes, blocks, size_scheme, density, ratio, seed, fmt, out):
    """Sample one network from a planted-partition SBM cell."""
    cell = DesignCell(nodes, blocks, size_scheme, density, ratio)
    _, _, P = cell.truth()
    Y = sample_network(P, check_rng(seed))
    if fmt == "csv":
        write_dense_csv(out, Y.astype(int))
    else:
        write_edge_list(out, Y)
    click.echo(f"wrote {int(Y.sum())} edges on {nodes} nodes to {out}")


@main.command()
@click.option("--network", "-i", "network_path", type=click.Path(exists=True), required=True,
              help="edge list ('n=<nodes>' header) or dense .csv")
@click.option("--blocks", "-k", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def fit(network_path, blocks, seed):
    """Fit one block count on the full network; prints the fit record."""
    Y = _load_network(network_path)
    result = fit_sbm(Y, blocks, rng=check_rng(seed))
    click.echo(result.to_json())


@main.command()
@click.option("--network", "-i", "network_path", type=click.Path(exists=True), required=True)
@click.option("--scheme", type=click.Choice(list(SCHEMES)), default="latin", show_default=True)
@click.option("--folds", "-v", type=int, default=10, show_default=True)
@click.option("--k-max", type=int, default=11, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="risk curve CSV (default: stdout)")
def cv(network_path, scheme, folds, k_max, seed, out):
    """Cross-validated risk curve for one network."""
    Y = _load_network(network_path)
    best_k, curve = select_model_cv(
        Y, range(1, min(k_max, Y.shape[0]) + 1), scheme, folds, check_rng(seed)
    )
    rows = risk_curve_rows(curve)
    if out:
        write_table_csv(out, rows)
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"selected K = {best_k}", err=True)


@main.command()
@click.option("--network", "-i", "network_path", type=click.Path(exists=True), required=True)
@click.option("--method", "-m", required=True,
              help="latin-10 / random-5 / node-3 style, or aic, bic, loglik, modularity, infomap")
@click.option("--k-max", type=int, default=11, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def select(network_path, method, k_max, seed):
    """Run one selection method on one network; prints the result."""
    Y = _load_network(network_path)
    rng = check_rng(seed)
    k_range = range(1, min(k_max, Y.shape[0]) + 1)
    parts = method.rsplit("-", 1)
    if len(parts) == 2 and parts[0] in SCHEMES and parts[1].isdigit():
        best_k, curve = select_model_cv(Y, k_range, parts[0], int(parts[1]), rng)
        values = {est.n_blocks: est.risk_per_validated for est in curve}
    elif method in IC_KINDS:
        best_k, curve = select_model_ic(Y, k_range, method, rng)
        values = {c.n_blocks: c.value for c in curve}
    elif method == "modularity":
        result = greedy_modularity(Y)
        best_k, values = result.n_communities, {result.n_communities: result.score}
    elif method == "infomap":
        result = infomap(Y, rng)
        best_k, values = result.n_communities, {result.n_communities: result.score}
    else:
        raise click.BadParameter(f"unknown method {method!r}")
    click.echo(json.dumps({"method": method, "k_hat": best_k, "curve": values}))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config; overrides every flag below")
@click.option("--preset", type=click.Choice(["full", "desk"]), default="desk", show_default=True)
@click.option("--nodes", default=None, help="comma-separated, e.g. 30,60")
@click.option("--blocks", default=None)
@click.option("--size-schemes", default=None, help="comma-separated: equal,powerlaw")
@click.option("--densities", default=None)
@click.option("--ratios", default=None)
@click.option("--replications", type=int, default=None)
@click.option("--fold-counts", default=None)
@click.option("--methods", default=None)
@click.option("--k-max", type=int, default=None)
@click.option("--master-seed", type=int, default=None)
@click.option("--out", default=None, help=f"output directory (default ${'{'}BLOCKCV_OUTPUT{'}'} or ./results)")
@click.option("--workers", type=int, default=None)
def experiment(config_path, preset, **flags):
    """Run the simulation grid and append replicate records."""
    if config_path:
        config = ExperimentConfig.from_file(config_path)
    else:
        overrides = {}
        for key, cast in (
            ("nodes", _int_list),
            ("blocks", _int_list),
            ("size_schemes", lambda s: tuple(s.split(","))),
            ("densities", _float_list),
            ("ratios", _float_list),
            ("fold_counts", _int_list),
            ("methods", lambda s: tuple(s.split(","))),
        ):
            if flags[key] is not None:
                overrides[key] = cast(flags[key])
        for key in ("replications", "k_max", "master_seed", "workers"):
            if flags[key] is not None:
                overrides[key] = flags[key]
        if flags["out"] is not None:
            overrides["output_dir"] = flags["out"]
        config = desk_config(**overrides) if preset == "desk" else ExperimentConfig(**overrides)
    out = run_experiment(config)
    click.echo(f"records in {out / 'records.csv'}")


@main.command("report")
@click.option("--records", "records_dir", type=click.Path(exists=True), default=default_output_dir)
@click.option("--table", "table_id", type=click.Choice(list(TABLE_IDS)), required=True)
@click.option("--method", default=None, help="method for the confusion table")
@click.option("--k-max", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="CSV path (default: stdout)")
def report_cmd(records_dir, table_id, method, k_max, out):
    """Build one summary table from stored records."""
    records = load_records(records_dir)
    rows = build_report(records, table_id, k_max=k_max, method=method)
    if out:
        write_table_csv(out, rows)
        click.echo(f"wrote {out}")
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


@main.command("variance-study")
@click.option("--nodes", "-n", type=int, default=60, show_default=True)
@click.option("--blocks", "-k", type=int, default=2, show_default=True)
@click.option("--size-scheme", type=click.Choice(["equal", "powerlaw"]), default="equal", show_default=True)
@click.option("--density", "-b", type=float, default=0.05, show_default=True)
@click.option("--ratio", "-r", type=float, default=5.0, show_default=True)
@click.option("--candidate-k", type=int, default=3, show_default=True)
@click.option("--networks", "-m", type=int, default=100, show_default=True)
@click.option("--fold-draws", "-f", type=int, default=100, show_default=True)
@click.option("--fold-counts", default="3,5,10", show_default=True)
@click.option("--oracle-replicates", type=int, default=500, show_default=True)
@click.option("--master-seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def variance_study_cmd(nodes, blocks, size_scheme, density, ratio, candidate_k,
                       networks, fold_draws, fold_counts, oracle_replicates,
                       master_seed, out):
    """Variance decomposition of the CV risk estimators on one cell."""
    cell = DesignCell(nodes, blocks, size_scheme, density, ratio)
    out = out or str(Path(default_output_dir()) / "variance-study")
    _, decomposition, bias_rows = run_variance_study(
        cell,
        candidate_k,
        networks,
        fold_draws,
        master_seed=master_seed,
        fold_counts=_int_list(fold_counts),
        output_dir=out,
        oracle_replicates=oracle_replicates,
    )
    for row in decomposition:
        click.echo(
            f"{row['scheme']:>6} V={row['n_folds']:<2} sd={row['total_sd']:.3e} "
            f"fold_share={row['fold_share']:.2f}"
        )
    click.echo(f"CSVs in {out}")


@main.command("folds")
@click.option("--nodes", "-n", type=int, required=True)
@click.option("--folds", "-v", "n_folds", type=int, required=True)
@click.option("--scheme", type=click.Choice(list(SCHEMES)), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def folds_cmd(nodes, n_folds, scheme, seed, out):
    """Write one fold assignment matrix as CSV (diagonal rendered -1)."""
    assignment = make_assignment(scheme, nodes, n_folds, check_rng(seed))
    write_fold_csv(out, assignment)
    click.echo(f"wrote {scheme} assignment for n={nodes}, V={n_folds} to {out}")


if __name__ == "__main__":
    main()
