"""Scoring and summarising replicate outcomes.

Works on :class:`ReplicateRecord` rows produced by the experiment
harness (or built directly in tests): selection accuracy with normal or
exact binomial confidence intervals, confusion tables, mean squared
error against the generating tie probabilities, the variance and bias
structure of cross-validated risk estimators, and the block count that
actually minimises the true risk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .folds import make_assignment
from .generate import (
    equal_block_sizes,
    memberships_from_sizes,
    planted_partition,
    powerlaw_block_sizes,
    sample_network,
    tie_probabilities,
)
from .risk import cv_risk, mse_loss
from .sbm import FittedSbm, fit_sbm, predict_probabilities
from .validation import check_rng, child_rngs

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass
class DesignCell:
    """One cell of the generating design."""

    n: int
    k_true: int
    size_scheme: str  # "equal" or "powerlaw"
    b: float
    r: float

    def block_sizes(self) -> np.ndarray:
        if self.size_scheme == "equal":
            return equal_block_sizes(self.n, self.k_true)
        if self.size_scheme == "powerlaw":
            return powerlaw_block_sizes(self.n, self.k_true)
        raise ValueError(f"unknown size scheme {self.size_scheme!r}")

    def truth(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Generating (block matrix, membership, tie probability matrix)."""
        B = planted_partition(self.k_true, self.b, self.r)
        membership = memberships_from_sizes(self.block_sizes())
        return B, membership, tie_probabilities(B, membership)


@dataclass
class ReplicateRecord:
    """Outcome of one (cell, method, replicate) run."""

    cell: DesignCell
    method: str
    replicate: int
    seed: int
    k_hat: int
    mse_true: float
    curve: dict[int, float] = field(default_factory=dict)
    wall_ms: float = 0.0
    status: str = "ok"


@dataclass
class AccuracySummary:
    method: str
    accuracy: float
    ci_low: float
    ci_high: float
    count: int


def accuracy(records, exact_ci: bool = False) -> AccuracySummary:
    """Fraction of records selecting the true block count, with a 95% CI.

    Records whose status is not ``"ok"`` count as incorrect selections.
    The default interval is the normal approximation
    ``p +- 1.96 * sqrt(p(1-p)/N)`` clipped to [0, 1]; ``exact_ci`` swaps
    in the Clopper-Pearson interval.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    hits = sum(1 for rec in records if rec.status == "ok" and rec.k_hat == rec.cell.k_true)
    count = len(records)
    p_hat = hits / count
    if exact_ci:
        low, high = _clopper_pearson(hits, count)
    else:
        half = Z_95 * math.sqrt(p_hat * (1.0 - p_hat) / count)
        low, high = max(0.0, p_hat - half), min(1.0, p_hat + half)
    methods = {rec.method for rec in records}
    name = methods.pop() if len(methods) == 1 else "mixed"
    return AccuracySummary(name, p_hat, low, high, count)


def _clopper_pearson(hits: int, count: int, level: float = 0.95):
    from scipy.stats import beta

    alpha = 1.0 - level
    low = 0.0 if hits == 0 else float(beta.ppf(alpha / 2, hits, count - hits + 1))
    high = 1.0 if hits == count else float(beta.ppf(1 - alpha / 2, hits + 1, count - hits))
    return low, high


def confusion(records, k_max: int) -> np.ndarray:
    """Column-normalised confusion table of selected vs true block counts.

    Rows 1..k_max hold the selected counts; row k_max+1 is an overflow
    bucket for selections above ``k_max``.  Columns are indexed by true
    block count 1..k_max and each non-empty column sums to one.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    table = np.zeros((k_max + 1, k_max))
    for rec in records:
        col = rec.cell.k_true - 1
        if not 0 <= col < k_max:
            raise ValueError(f"true block count {rec.cell.k_true} outside 1..{k_max}")
        row = rec.k_hat - 1 if rec.k_hat <= k_max else k_max
        table[row, col] += 1.0
    totals = table.sum(axis=0)
    return table / np.where(totals > 0, totals, 1.0)


def mse_vs_truth(P, fit: FittedSbm) -> float:
    """Mean squared error of the fitted tie probabilities against truth."""
    P = np.asarray(P, dtype=float)
    pred = predict_probabilities(fit)
    cells = ~np.eye(P.shape[0], dtype=bool)
    return mse_loss(P, pred, cells)


def exact_recovery(labels_a, labels_b) -> bool:
    """True when two labelings agree up to a relabelling of the blocks."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    pairs = {(x, y) for x, y in zip(a.tolist(), b.tolist())}
    firsts = [x for x, _ in pairs]
    seconds = [y for _, y in pairs]
    return len(firsts) == len(set(firsts)) == len(set(seconds))


def risk_estimate_grid(
    scheme: str,
    n_folds: int,
    cell: DesignCell,
    n_networks: int,
    n_assignments: int,
    candidate_k: int,
    rng=None,
) -> np.ndarray:
    """Matrix of risk estimates over networks x fold assignments.

    Entry (m, f) is the per-validated cross-validated risk of the
    ``candidate_k``-block estimator on network m under fold draw f.
    """
    rng = check_rng(rng)
    _, _, P = cell.truth()
    net_rngs = child_rngs(rng, n_networks)
    grid = np.empty((n_networks, n_assignments))
    for m in range(n_networks):
        net_rng = net_rngs[m]
        Y = sample_network(P, net_rng)
        fold_rngs = child_rngs(net_rng, n_assignments)
        for f in range(n_assignments):
            assignment = make_assignment(scheme, cell.n, n_folds, fold_rngs[f])
            est = cv_risk(Y, candidate_k, assignment, fold_rngs[f])
            grid[m, f] = est.risk_per_validated
    return grid


def variance_decomposition(grid: np.ndarray) -> tuple[float, float, float]:
    """Split total risk-estimate variance into fold and network parts.

    By the law of total variance (population form, so the shares are an
    exact identity): total = mean over networks of the within-network
    variance across fold draws, plus the variance across networks of
    the within-network means.  Returns (total standard deviation, fold
    share, network share); a degenerate zero total reports (0, 0, 0).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[0] < 2 or grid.shape[1] < 2:
        raise ValueError("need at least a 2x2 grid of estimates")
    fold_part = grid.var(axis=1, ddof=0).mean()
    network_part = grid.mean(axis=1).var(ddof=0)
    total = fold_part + network_part
    if total <= 0.0:
        return 0.0, 0.0, 0.0
    return float(math.sqrt(total)), float(fold_part / total), float(network_part / total)


def bias_variance_of_risk(
    scheme: str,
    n_folds: int,
    cell: DesignCell,
    true_risk: float,
    n_replicates: int,
    candidate_k: int,
    rng=None,
) -> tuple[float, float, float]:
    """Squared bias, variance and MSE of a CV risk estimator.

    Each replicate draws a fresh network and a fresh fold assignment
    and computes the per-validated risk estimate of the
    ``candidate_k``-block estimator; the supplied ``true_risk`` is the
    target.  The population-variance form makes
    ``bias^2 + variance = mse`` an exact identity.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 replicates")
    rng = check_rng(rng)
    _, _, P = cell.truth()
    rep_rngs = child_rngs(rng, n_replicates)
    estimates = np.empty(n_replicates)
    for i in range(n_replicates):
        Y = sample_network(P, rep_rngs[i])
        assignment = make_assignment(scheme, cell.n, n_folds, rep_rngs[i])
        estimates[i] = cv_risk(Y, candidate_k, assignment, rep_rngs[i]).risk_per_validated
    return bias_variance_from_estimates(estimates, true_risk)


def bias_variance_from_estimates(estimates, true_risk: float):
    """(bias^2, variance, mse) of risk estimates against a known target."""
    estimates = np.asarray(estimates, dtype=float).ravel()
    mean = estimates.mean()
    bias_sq = (mean - true_risk) ** 2
    variance = estimates.var(ddof=0)
    mse = ((estimates - true_risk) ** 2).mean()
    return float(bias_sq), float(variance), float(mse)


def true_risk_oracle(
    cell: DesignCell, candidate_k: int, n_replicates: int = 500, rng=None
) -> float:
    """Monte Carlo estimate of the true predictive risk of a K-block fit.

    Averages ``mse(P, P_hat) + mean p(1-p)`` over full-data fits on
    fresh networks: the irreducible Bernoulli variance plus the
    estimation error of the fitted tie probabilities.
    """
    rng = check_rng(rng)
    _, _, P = cell.truth()
    off = ~np.eye(cell.n, dtype=bool)
    noise = float((P[off] * (1.0 - P[off])).mean())
    rep_rngs = child_rngs(rng, n_replicates)
    total = 0.0
    for i in range(n_replicates):
        Y = sample_network(P, rep_rngs[i])
        fit = fit_sbm(Y, candidate_k, rng=rep_rngs[i])
        total += mse_vs_truth(P, fit)
    return total / n_replicates + noise


def true_risk_minimizer(P, Y, k_range, rng=None, fits=None) -> int:
    """Block count whose full-data fit minimises MSE against truth.

    Simulation-only diagnostic (requires the generating ``P``); ties go
    to the smallest K.
    """
    rng = check_rng(rng)
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values:
        raise ValueError("k_range is empty")
    k_rngs = child_rngs(rng, len(k_values))
    losses = []
    for i, k in enumerate(k_values):
        if fits is not None and k in fits:
            fit = fits[k]
        else:
            fit = fit_sbm(Y, k, rng=k_rngs[i])
            if fits is not None:
                fits[k] = fit
        losses.append(mse_vs_truth(P, fit))
    return k_values[int(np.argmin(losses))]
