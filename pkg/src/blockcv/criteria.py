"""Non-CV model selection: information criteria and community detection.

AIC and BIC penalise the complete log-likelihood of full-data SBM fits
with ``d = K^2 + K - 1`` free parameters (K^2 block probabilities plus
the K-1 free entries of the membership prior); BIC scales the penalty
by ``log(n*(n-1))``, the number of observable dyads.  A bare
log-likelihood pseudo-criterion is included as a diagnostic for what
selection without any penalty does.

The community detectors pick the number of blocks implicitly: greedy
agglomerative modularity maximisation for directed graphs, and a
two-level map-equation (infomap style) minimiser built on the
stationary flow of a teleporting random walk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .sbm import FittedSbm, fit_sbm
from .validation import check_adjacency, check_membership, check_rng, child_rngs

IC_KINDS = ("aic", "bic", "loglik")
TELEPORT = 0.15
FLOW_TOL = 1e-10
MERGE_TOL = 1e-12


@dataclass
class InformationCriterion:
    kind: str
    value: float
    dof: int
    n_blocks: int


@dataclass
class CommunityResult:
    """Labels plus the score of a community detection run.

    ``score`` is the directed modularity for the greedy maximiser and
    the map-equation codelength (bits) for infomap.
    """

    labels: np.ndarray
    n_communities: int
    score: float
    method: str


def degrees_of_freedom(n_blocks: int) -> int:
    """Free parameters of a K-block directed SBM: K^2 + K - 1."""
    return n_blocks * n_blocks + n_blocks - 1


def aic(log_likelihood: float, n_blocks: int) -> InformationCriterion:
    """Akaike information criterion: -2*logL + 2*d."""
    if not np.isfinite(log_likelihood):
        raise ValueError("log-likelihood must be finite")
    d = degrees_of_freedom(n_blocks)
    return InformationCriterion("aic", -2.0 * log_likelihood + 2.0 * d, d, n_blocks)


def bic(log_likelihood: float, n_blocks: int, n: int) -> InformationCriterion:
    """Bayesian information criterion: -2*logL + d*log(n*(n-1))."""
    if not np.isfinite(log_likelihood):
        raise ValueError("log-likelihood must be finite")
    if n < 2:
        raise ValueError("n must be at least 2")
    d = degrees_of_freedom(n_blocks)
    value = -2.0 * log_likelihood + d * np.log(n * (n - 1))
    return InformationCriterion("bic", float(value), d, n_blocks)


def information_criterion(
    kind: str, log_likelihood: float, n_blocks: int, n: int
) -> InformationCriterion:
    """Evaluate one criterion; ``loglik`` is the no-penalty diagnostic."""
    if kind == "aic":
        return aic(log_likelihood, n_blocks)
    if kind == "bic":
        return bic(log_likelihood, n_blocks, n)
    if kind == "loglik":
        return InformationCriterion(
            "loglik", -2.0 * log_likelihood, degrees_of_freedom(n_blocks), n_blocks
        )
    raise ValueError(f"unknown criterion {kind!r}; expected one of {IC_KINDS}")


def select_model_ic(
    Y,
    k_range,
    kind: str = "bic",
    rng=None,
    fits: dict[int, FittedSbm] | None = None,
) -> tuple[int, list[InformationCriterion]]:
    """Pick the block count minimising an information criterion.

    Fits each candidate K on the full data (precomputed fits may be
    passed in so several criteria can share them); ties go to the
    smallest K.
    """
    Y = check_adjacency(Y)
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values:
        raise ValueError("k_range is empty")
    if k_values[-1] > Y.shape[0]:
        raise ValueError("largest candidate K exceeds the number of nodes")
    rng = check_rng(rng)
    k_rngs = child_rngs(rng, len(k_values))
    curve = []
    for i, k in enumerate(k_values):
        if fits is not None and k in fits:
            fit = fits[k]
        else:
            fit = fit_sbm(Y, k, rng=k_rngs[i])
            if fits is not None:
                fits[k] = fit
        curve.append(information_criterion(kind, fit.log_likelihood, k, Y.shape[0]))
    values = np.array([c.value for c in curve])
    best_k = k_values[int(np.argmin(values))]
    return best_k, curve


# ---------------------------------------------------------------------------
# directed modularity
# ---------------------------------------------------------------------------

def directed_modularity(Y, labels) -> float:
    """Directed modularity of a labelling.

    ``Q = (1/m) * sum_{i != j} (Y_ij - kout_i * kin_j / m) * [label_i == label_j]``
    with in/out degrees taken from ``Y`` and ``m`` the total edge count.
    Note the sum excludes i == j, so the one-community partition scores
    ``sum_i kout_i * kin_i / m^2`` rather than zero.
    """
    Y = np.asarray(Y, dtype=float)
    m = Y.sum()
    if m < 1:
        raise ValueError("modularity needs at least one edge")
    labels = check_membership(labels, n=Y.shape[0])
    k_out = Y.sum(axis=1)
    k_in = Y.sum(axis=0)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    return float(((Y - np.outer(k_out, k_in) / m) * same).sum() / m)


@dataclass
class _MergeTrace:
    """Partitions and candidate scores recorded along a greedy merge path."""

    partition_scores: list[tuple[int, float]] = field(default_factory=list)
    candidate_scores: dict[int, list[float]] = field(default_factory=dict)


def greedy_modularity(Y, return_trace: bool = False):
    """Agglomerative directed-modularity maximisation.

    Starts from singleton communities and repeatedly applies the merge
    with the largest modularity gain (ties broken by the
    lexicographically smallest pair of community representatives) all
    the way down to a single community, then returns the partition with
    the highest modularity seen anywhere on the path.
    """
    Y = check_adjacency(Y)
    n = Y.shape[0]
    m = Y.sum()
    if m < 1:
        raise ValueError("modularity needs at least one edge")

    E = Y.copy()
    k_out = Y.sum(axis=1)
    k_in = Y.sum(axis=0)
    labels = np.arange(n)  # community representative per node
    alive = np.arange(n)
    Q = directed_modularity(Y, labels + 1)
    best_q = Q
    best_labels = labels.copy()
    trace = _MergeTrace()
    trace.partition_scores.append((n, Q))

    while alive.size > 1:
        sub_e = E[np.ix_(alive, alive)]
        gains = (
            sub_e
            + sub_e.T
            - (np.outer(k_out[alive], k_in[alive]) + np.outer(k_in[alive], k_out[alive])) / m
        ) / m
        iu = np.triu_indices(alive.size, k=1)
        pair_gains = gains[iu]
        # first max in upper-triangular order = lexicographically smallest pair
        pick = int(np.argmax(pair_gains))
        a = int(alive[iu[0][pick]])
        b = int(alive[iu[1][pick]])
        if return_trace:
            trace.candidate_scores[alive.size] = (Q + pair_gains).tolist()
        Q += float(pair_gains[pick])
        E[a, :] += E[b, :]
        E[:, a] += E[:, b]
        E[b, :] = 0.0
        E[:, b] = 0.0
        k_out[a] += k_out[b]
        k_in[a] += k_in[b]
        labels[labels == b] = a
        alive = alive[alive != b]
        trace.partition_scores.append((alive.size, Q))
        if Q > best_q + MERGE_TOL:
            best_q = Q
            best_labels = labels.copy()

    compact = _compact_labels(best_labels)
    result = CommunityResult(compact, int(compact.max()), best_q, "modularity")
    if return_trace:
        return result, trace
    return result


def _compact_labels(labels: np.ndarray) -> np.ndarray:
    """Map arbitrary representatives to 1..K preserving first appearance."""
    _, inverse = np.unique(labels, return_inverse=True)
    order = {}
    out = np.empty(labels.size, dtype=int)
    for i, g in enumerate(inverse):
        if g not in order:
            order[g] = len(order) + 1
        out[i] = order[g]
    return out


# ---------------------------------------------------------------------------
# map equation (infomap)
# ---------------------------------------------------------------------------

def stationary_flow(Y, teleport: float = TELEPORT, tol: float = FLOW_TOL):
    """Visit rates and dyad-level flow of a teleporting random walk.

    Power iteration on ``p <- tel/n + (1-tel) * p T`` with dangling rows
    teleporting uniformly; returns the stationary ``p`` and the flow
    matrix ``F[i, j] = p_i * (tel/n + (1-tel) * T_ij)`` whose rows and
    columns both sum to ``p``.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    k_out = Y.sum(axis=1)
    T = np.where(k_out[:, None] > 0, Y / np.where(k_out[:, None] > 0, k_out[:, None], 1.0), 1.0 / n)
    p = np.full(n, 1.0 / n)
    for _ in range(100000):
        p_next = teleport / n + (1.0 - teleport) * (p @ T)
        if np.abs(p_next - p).max() < tol:
            p = p_next
            break
        p = p_next
    p = p / p.sum()
    F = p[:, None] * (teleport / n + (1.0 - teleport) * T)
    return p, F


def _plogp(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    positive = x > 0
    out[positive] = x[positive] * np.log2(x[positive])
    return out


def map_codelength(p, F, labels) -> float:
    """Two-level map-equation codelength (bits) of a partition.

    ``L = plogp(q) - 2 sum_m plogp(q_m) + sum_m plogp(p_m) - sum_i plogp(p_i)``
    where ``q_m`` is module m's exit flow and ``p_m = q_m + sum_{i in m} p_i``.
    """
    labels = np.asarray(labels, dtype=int)
    mods, inverse = np.unique(labels, return_inverse=True)
    k = mods.size
    onehot = np.zeros((labels.size, k))
    onehot[np.arange(labels.size), inverse] = 1.0
    W = onehot.T @ F @ onehot
    p_mod = onehot.T @ np.asarray(p, dtype=float)
    q = W.sum(axis=1) - np.diagonal(W)
    usage = q + p_mod
    return float(
        _plogp(q.sum()) - 2.0 * _plogp(q).sum() + _plogp(usage).sum() - _plogp(p).sum()
    )


def infomap(
    Y,
    rng=None,
    teleport: float = TELEPORT,
    anneal: bool = False,
    n_anneal_sweeps: int = 30,
) -> CommunityResult:
    """Two-level map-equation community detection.

    Greedy pairwise merges from singletons run while the codelength
    strictly decreases, followed by a deterministic refinement pass that
    moves single nodes while any move improves the codelength by more
    than 1e-12.  The optional annealing pass (geometric cooling, seeded
    by ``rng``) explores label moves around the greedy optimum before
    the final refinement; it is off by default so results are
    reproducible without a seed.
    """
    Y = check_adjacency(Y)
    if Y.sum() < 1:
        raise ValueError("map equation needs at least one edge")
    n = Y.shape[0]
    rng = check_rng(rng)
    p, F = stationary_flow(Y, teleport)

    labels = np.arange(n)
    W = F.copy()
    p_mod = p.copy()
    alive = np.arange(n)
    L = map_codelength(p, F, labels + 1)

    while alive.size > 1:
        sub = W[np.ix_(alive, alive)]
        q = sub.sum(axis=1) - np.diagonal(sub)
        usage = q + p_mod[alive]
        q_total = q.sum()
        cross = sub + sub.T
        q_pair = q[:, None] + q[None, :] - cross
        usage_pair = usage[:, None] + usage[None, :] - cross
        q_total_pair = q_total - cross
        delta = (
            _plogp(q_total_pair)
            - _plogp(q_total)
            - 2.0 * (_plogp(q_pair) - _plogp(q)[:, None] - _plogp(q)[None, :])
            + (_plogp(usage_pair) - _plogp(usage)[:, None] - _plogp(usage)[None, :])
        )
        iu = np.triu_indices(alive.size, k=1)
        pair_delta = delta[iu]
        pick = int(np.argmin(pair_delta))
        if pair_delta[pick] >= -MERGE_TOL:
            break
        a = int(alive[iu[0][pick]])
        b = int(alive[iu[1][pick]])
        W[a, :] += W[b, :]
        W[:, a] += W[:, b]
        W[b, :] = 0.0
        W[:, b] = 0.0
        p_mod[a] += p_mod[b]
        labels[labels == b] = a
        alive = alive[alive != b]
        L += float(pair_delta[pick])

    labels = _compact_labels(labels) - 1
    L = map_codelength(p, F, labels + 1)
    if anneal:
        labels, L = _anneal_moves(p, F, labels, L, rng, n_anneal_sweeps)
    labels, L = _refine_moves(p, F, labels, L)
    labels = _compact_labels(labels)
    return CommunityResult(labels, int(labels.max()), L, "infomap")


def _refine_moves(p, F, labels, L):
    """Deterministic single-node moves while they improve the codelength.

    Module exit flows and usages are maintained incrementally, so one
    candidate evaluation costs O(1) given the per-node module flow sums.
    """
    n = labels.size
    k = int(labels.max()) + 1
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    flow_to = F @ onehot        # flow_to[i, m] = flow i -> module m
    flow_from = F.T @ onehot    # flow_from[i, m] = flow module m -> i
    p_mod = onehot.T @ p
    W = onehot.T @ F @ onehot
    q = W.sum(axis=1) - np.diagonal(W)
    usage = q + p_mod
    q_total = q.sum()
    self_flow = np.diagonal(F)

    improved = True
    while improved:
        improved = False
        for i in range(n):
            a = labels[i]
            # emptied modules fall out naturally: their new q and usage are 0
            q_a_new = q[a] - (p[i] - flow_to[i, a]) + (flow_from[i, a] - self_flow[i])
            usage_a_new = q_a_new + p_mod[a] - p[i]
            q_b_new = q + p[i] - flow_to[i] - self_flow[i] - flow_from[i]
            usage_b_new = q_b_new + p_mod + p[i]
            q_total_new = q_total - q[a] - q + q_a_new + q_b_new
            delta = (
                _plogp(q_total_new)
                - _plogp(q_total)
                - 2.0 * (_plogp(q_a_new) + _plogp(q_b_new) - _plogp(q[a]) - _plogp(q))
                + (
                    _plogp(usage_a_new)
                    + _plogp(usage_b_new)
                    - _plogp(usage[a])
                    - _plogp(usage)
                )
            )
            delta[a] = 0.0
            b = int(np.argmin(delta))
            if delta[b] < -MERGE_TOL:
                labels[i] = b
                flow_to[:, a] -= F[:, i]
                flow_to[:, b] += F[:, i]
                flow_from[:, a] -= F[i, :]
                flow_from[:, b] += F[i, :]
                p_mod[a] -= p[i]
                p_mod[b] += p[i]
                q[a] = q_a_new
                q[b] = q_b_new[b]
                usage[a] = q[a] + p_mod[a]
                usage[b] = q[b] + p_mod[b]
                q_total = q.sum()
                L += float(delta[b])
                improved = True
    labels = _compact_labels(labels) - 1
    L = map_codelength(p, F, labels + 1)
    return labels, L


def _anneal_moves(p, F, labels, L, rng, n_sweeps):
    """Seeded simulated-annealing pass over single-node relabellings."""
    n = labels.size
    temperature = max(abs(L), 1.0) * 1e-3
    best_labels, best_L = labels.copy(), L
    for _ in range(n_sweeps):
        for i in rng.permutation(n):
            candidates = np.unique(labels)
            c = int(candidates[rng.integers(candidates.size)])
            if c == labels[i]:
                continue
            old = labels[i]
            labels[i] = c
            trial = map_codelength(p, F, labels + 1)
            delta = trial - L
            if delta < 0 or rng.random() < np.exp(-delta / temperature):
                L = trial
                if L < best_L:
                    best_L, best_labels = L, labels.copy()
            else:
                labels[i] = old
        temperature *= 0.95
    return best_labels.copy(), best_L


# ---------------------------------------------------------------------------
# estimator wrappers
# ---------------------------------------------------------------------------

class InformationCriterionSelector(BaseEstimator):
    """Block-count selection by penalised full-data likelihood.

    Attributes after ``fit``: ``best_k_``, ``criterion_curve_`` and
    ``fits_`` (the shared full-data fits keyed by K).
    """

    def __init__(self, criterion="bic", k_max=11, random_state=None):
        self.criterion = criterion
        self.k_max = k_max
        self.random_state = random_state

    def fit(self, Y, y=None):
        Y = check_adjacency(Y)
        rng = check_rng(self.random_state)
        fits: dict[int, FittedSbm] = {}
        k_range = range(1, min(self.k_max, Y.shape[0]) + 1)
        best_k, curve = select_model_ic(Y, k_range, self.criterion, rng, fits=fits)
        self.best_k_ = best_k
        self.criterion_curve_ = curve
        self.fits_ = fits
        return self


class GreedyModularity(BaseEstimator):
    """Community detection by greedy directed-modularity maximisation.

    Attributes after ``fit``: ``labels_``, ``n_communities_``, ``modularity_``.
    """

    def fit(self, Y, y=None):
        result = greedy_modularity(Y)
        self.labels_ = result.labels
        self.n_communities_ = result.n_communities
        self.modularity_ = result.score
        return self


class InfomapCommunities(BaseEstimator):
    """Community detection by two-level map-equation minimisation.

    Attributes after ``fit``: ``labels_``, ``n_communities_``, ``codelength_``.
    """

    def __init__(self, teleport=TELEPORT, anneal=False, random_state=None):
        self.teleport = teleport
        self.anneal = anneal
        self.random_state = random_state

    def fit(self, Y, y=None):
        result = infomap(
            Y,
            rng=check_rng(self.random_state),
            teleport=self.teleport,
            anneal=self.anneal,
        )
        self.labels_ = result.labels
        self.n_communities_ = result.n_communities
        self.codelength_ = result.score
        return self
