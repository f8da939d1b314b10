"""Directed SBM estimation: spectral initialisation plus mean-field EM.

Fitting a K-block model to a (possibly partially observed) directed
adjacency matrix proceeds in two stages.  Held-out dyads are first
imputed with the training density and the nodes are clustered by
k-means on the leading K left singular vectors of the imputed matrix.
That hard labelling seeds a mean-field variational EM which alternates
soft membership updates with closed-form block-probability and prior
updates until the block matrix reaches a fixed point.

All estimation respects a boolean training mask: dyads outside the mask
contribute nothing to any estimate, so permuting their values leaves
the fit bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .validation import check_adjacency, check_mask, check_membership, check_rng

PROB_CLAMP = 1e-9
PRIOR_CLAMP = 1e-12
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100


@dataclass
class FittedSbm:
    """Result of one SBM fit for a fixed block count.

    ``labels`` is the 1-based hard assignment (row-wise argmax of the
    responsibilities, ties to the smallest label); ``log_likelihood`` is
    the complete log-likelihood of the training dyads at the hard
    labels and fitted block matrix.
    """

    n_blocks: int
    block_matrix: np.ndarray
    responsibilities: np.ndarray
    labels: np.ndarray
    prior: np.ndarray
    log_likelihood: float
    n_iter: int
    converged: bool

    def to_json(self) -> str:
        """Serialize to a structured text record."""
        return json.dumps(
            {
                "n_blocks": self.n_blocks,
                "block_matrix": self.block_matrix.tolist(),
                "labels": self.labels.tolist(),
                "prior": self.prior.tolist(),
                "log_likelihood": self.log_likelihood,
                "n_iter": self.n_iter,
                "converged": self.converged,
            }
        )

    @classmethod
    def from_json(cls, text: str, responsibilities: np.ndarray | None = None) -> "FittedSbm":
        d = json.loads(text)
        labels = np.asarray(d["labels"], dtype=int)
        if responsibilities is None:
            responsibilities = np.zeros((labels.size, d["n_blocks"]))
            responsibilities[np.arange(labels.size), labels - 1] = 1.0
        return cls(
            n_blocks=d["n_blocks"],
            block_matrix=np.asarray(d["block_matrix"], dtype=float),
            responsibilities=responsibilities,
            labels=labels,
            prior=np.asarray(d["prior"], dtype=float),
            log_likelihood=float(d["log_likelihood"]),
            n_iter=int(d["n_iter"]),
            converged=bool(d["converged"]),
        )


def kmeans(points, n_clusters: int, rng=None) -> np.ndarray:
    """Lloyd's algorithm with kmeans++ seeding and restarts.

    Runs 10 restarts of at most 100 iterations each and returns the
    1-based labelling with the lowest within-cluster sum of squares.
    A cluster that empties during an update is reseeded with the point
    farthest from its current centre.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n_clusters > n:
        raise ValueError(f"cannot form {n_clusters} clusters from {n} points")
    if n_clusters == 1:
        return np.ones(n, dtype=int)
    rng = check_rng(rng)
    best_labels = None
    best_wcss = np.inf
    for _ in range(KMEANS_RESTARTS):
        labels, wcss = _lloyd_once(pts, n_clusters, rng)
        if wcss < best_wcss - 1e-12:
            best_wcss = wcss
            best_labels = labels
    return best_labels + 1


def _lloyd_once(pts: np.ndarray, k: int, rng) -> tuple[np.ndarray, float]:
    n = pts.shape[0]
    centers = _kmeanspp_seeds(pts, k, rng)
    labels = None
    for _ in range(KMEANS_MAX_ITER):
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        for c in range(k):
            member = new_labels == c
            if member.any():
                centers[c] = pts[member].mean(axis=0)
            else:
                farthest = int(dist[np.arange(n), new_labels].argmax())
                centers[c] = pts[farthest]
                new_labels[farthest] = c
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    wcss = float(dist[np.arange(n), labels].sum())
    return labels, wcss


def _kmeanspp_seeds(pts: np.ndarray, k: int, rng) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[int(rng.integers(n))]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[c] = pts[int(rng.integers(n))]
        else:
            centers[c] = pts[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((pts - centers[c]) ** 2).sum(axis=1))
    return centers


def spectral_clustering(Y_imputed, n_blocks: int, rng=None) -> np.ndarray:
    """Cluster nodes by k-means on the leading left singular vectors.

    ``Y_imputed`` is a real matrix (held-out dyads already filled in).
    The rows of the ``n x K`` matrix of leading columns of U from the
    SVD are the per-node sender profiles that get clustered.
    """
    Y_imputed = np.asarray(Y_imputed, dtype=float)
    n = Y_imputed.shape[0]
    if n_blocks > n:
        raise ValueError(f"n_blocks={n_blocks} exceeds n={n}")
    if n_blocks == 1:
        return np.ones(n, dtype=int)
    try:
        U, _, _ = np.linalg.svd(Y_imputed, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"SVD failed: {exc}") from exc
    return kmeans(U[:, :n_blocks], n_blocks, rng)


class EstimationError(RuntimeError):
    """Raised when a fit cannot be produced (e.g. SVD failure)."""


def impute_heldout(Y, mask=None) -> np.ndarray:
    """Replace unobserved dyads with the training density.

    Returns a float copy of ``Y`` where every masked-out off-diagonal
    entry holds the mean of the observed entries; the diagonal stays 0.
    """
    Y = np.asarray(Y, dtype=float)
    mask = check_mask(mask, Y.shape[0])
    out = Y.copy()
    density = Y[mask].mean()
    out[~mask] = density
    np.fill_diagonal(out, 0.0)
    return out


def mle_block_probabilities(Y, labels, mask=None) -> np.ndarray:
    """Closed-form block tie probability estimates given hard labels.

    ``B[l, k]`` is the observed-edge fraction among training dyads from
    block l to block k; block pairs with no training dyads fall back to
    the overall training density.
    """
    Y = np.asarray(Y, dtype=float)
    mask = check_mask(mask, Y.shape[0])
    labels = check_membership(labels, n=Y.shape[0])
    K = int(labels.max())
    onehot = np.zeros((Y.shape[0], K))
    onehot[np.arange(Y.shape[0]), labels - 1] = 1.0
    maskf = mask.astype(float)
    edges = onehot.T @ (Y * maskf) @ onehot
    possible = onehot.T @ maskf @ onehot
    density = (Y * maskf).sum() / maskf.sum()
    return np.where(possible > 0, edges / np.where(possible > 0, possible, 1.0), density)


def complete_log_likelihood(Y, B, labels, mask=None) -> float:
    """Bernoulli log-likelihood of the training dyads at hard labels.

    Sums ``Y*log(b) + (1-Y)*log(1-b)`` over masked dyads with the block
    probabilities clamped to ``[1e-9, 1 - 1e-9]`` so empty or saturated
    blocks stay finite.
    """
    Y = np.asarray(Y, dtype=float)
    mask = check_mask(mask, Y.shape[0])
    B = np.clip(np.asarray(B, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    labels = check_membership(labels, n=Y.shape[0], n_blocks=B.shape[0])
    P = B[np.ix_(labels - 1, labels - 1)]
    terms = Y * np.log(P) + (1.0 - Y) * np.log1p(-P)
    return float(terms[mask].sum())


def variational_em(
    Y,
    n_blocks: int,
    mask=None,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FittedSbm:
    """Mean-field EM for the directed SBM on masked data.

    The soft memberships start at 0.9 on the init label and spread the
    rest evenly.  Each E-step accumulates, for every node, the expected
    log-likelihood of its observed outgoing and incoming dyads under
    each candidate block, plus the log prior, and renormalises row-wise
    through log-sum-exp.  Each M-step re-estimates the block matrix from
    responsibility-weighted edge counts (empty denominators fall back to
    the training density) and the prior from the mean responsibilities.
    Iteration stops when ``max |delta B| < tol`` or after ``max_iter``
    rounds; running out of iterations is reported through the
    ``converged`` flag rather than an error.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    mask = check_mask(mask, n)
    if n_blocks > n:
        raise ValueError(f"n_blocks={n_blocks} exceeds n={n}")
    K = n_blocks

    maskf = mask.astype(float)
    density = (Y * maskf).sum() / maskf.sum()
    observed_edges = Y * maskf
    observed_gaps = (1.0 - Y) * maskf

    if K == 1:
        tau = np.ones((n, 1))
    else:
        if init is None:
            raise ValueError("an init labelling is required when n_blocks > 1")
        init = check_membership(init, n=n, n_blocks=K)
        tau = np.full((n, K), 0.1 / (K - 1))
        tau[np.arange(n), init - 1] = 0.9

    def m_step(tau):
        numer = tau.T @ observed_edges @ tau
        denom = tau.T @ maskf @ tau
        B = np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), density)
        return B, tau.mean(axis=0)

    B, prior = m_step(tau)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        Bc = np.clip(B, PROB_CLAMP, 1.0 - PROB_CLAMP)
        log_b = np.log(Bc)
        log_nb = np.log1p(-Bc)
        # outgoing dyads use mask[i, j], incoming use mask[j, i]
        log_tau = (
            np.log(np.clip(prior, PRIOR_CLAMP, None))[None, :]
            + (observed_edges @ tau) @ log_b.T
            + (observed_gaps @ tau) @ log_nb.T
            + (observed_edges.T @ tau) @ log_b
            + (observed_gaps.T @ tau) @ log_nb
        )
        log_tau -= log_tau.max(axis=1, keepdims=True)
        tau = np.exp(log_tau)
        tau /= tau.sum(axis=1, keepdims=True)
        B_new, prior = m_step(tau)
        delta = np.abs(B_new - B).max()
        B = B_new
        if delta < tol:
            converged = True
            break

    labels = tau.argmax(axis=1).astype(int) + 1
    log_lik = complete_log_likelihood(Y, B, labels, mask)
    return FittedSbm(
        n_blocks=K,
        block_matrix=B,
        responsibilities=tau,
        labels=labels,
        prior=prior,
        log_likelihood=log_lik,
        n_iter=n_iter,
        converged=converged,
    )


def fit_sbm(
    Y,
    n_blocks: int,
    mask=None,
    rng=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FittedSbm:
    """Full fitting pipeline: impute, spectral initialisation, EM."""
    Y = np.asarray(Y, dtype=float)
    mask = check_mask(mask, Y.shape[0])
    rng = check_rng(rng)
    if n_blocks == 1:
        init = None
    else:
        init = spectral_clustering(impute_heldout(Y, mask), n_blocks, rng)
    return variational_em(Y, n_blocks, mask, init, tol=tol, max_iter=max_iter)


def predict_probabilities(fit: FittedSbm, soft: bool = False) -> np.ndarray:
    """Dyad-level tie probability predictions from a fit.

    The default hard-assignment rule reads ``B[label_i, label_j]`` off
    the fitted block matrix.  With ``soft=True`` predictions average the
    block matrix under the soft memberships instead; the hard rule is
    what the selection pipelines use.
    """
    if soft:
        P = fit.responsibilities @ fit.block_matrix @ fit.responsibilities.T
    else:
        idx = fit.labels - 1
        P = fit.block_matrix[np.ix_(idx, idx)]
    P = P.copy()
    np.fill_diagonal(P, 0.0)
    return P


class DirectedSBM(BaseEstimator):
    """Directed stochastic block model estimator for a fixed block count.

    Parameters
    ----------
    n_blocks : int
        Number of blocks K.
    tol, max_iter : float, int
        EM stopping rule (max block-matrix change and iteration cap).
    random_state : int | np.random.Generator | None
        Seeds the spectral initialisation.

    Attributes (after ``fit``)
    --------------------------
    block_matrix_ : (K, K) fitted tie probabilities
    labels_ : (n,) 1-based hard memberships
    responsibilities_ : (n, K) soft memberships
    prior_ : (K,) fitted membership prior
    log_likelihood_ : complete log-likelihood at the hard labels
    n_iter_, converged_ : EM diagnostics
    """

    def __init__(self, n_blocks=2, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, random_state=None):
        self.n_blocks = n_blocks
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, Y, y=None, mask=None):
        Y = check_adjacency(Y)
        rng = check_rng(self.random_state)
        result = fit_sbm(Y, self.n_blocks, mask=mask, rng=rng, tol=self.tol, max_iter=self.max_iter)
        self.result_ = result
        self.block_matrix_ = result.block_matrix
        self.labels_ = result.labels
        self.responsibilities_ = result.responsibilities
        self.prior_ = result.prior
        self.log_likelihood_ = result.log_likelihood
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def predict_proba(self, soft: bool = False) -> np.ndarray:
        """Tie probability matrix for the fitted network."""
        if not hasattr(self, "result_"):
            raise RuntimeError("call fit before predict_proba")
        return predict_probabilities(self.result_, soft=soft)
