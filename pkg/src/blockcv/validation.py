"""Input validation helpers shared across the package.

Conventions used throughout:

* adjacency matrices are dense ``n x n`` arrays of 0/1 with a zero
  diagonal (directed, no self-ties);
* block and fold labels are 1-based integers;
* training masks are boolean ``n x n`` arrays, ``True`` meaning the dyad
  is observed, with an all-``False`` diagonal;
* randomness always flows through an explicit :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import numpy as np


def check_rng(seed=None) -> np.random.Generator:
    """Return a Generator from a seed, an existing Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_rngs(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Derive independent child generators in a fixed order.

    Used wherever work items (folds, candidate block counts) may be
    evaluated concurrently: each item gets its own stream so results do
    not depend on evaluation order.
    """
    seeds = rng.integers(0, 2**63 - 1, size=count)
    return [np.random.default_rng(int(s)) for s in seeds]


def check_adjacency(Y) -> np.ndarray:
    """Validate and return an adjacency matrix as a float array."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {Y.shape}")
    if Y.shape[0] < 1:
        raise ValueError("adjacency matrix must have at least one node")
    if np.diagonal(Y).any():
        raise ValueError("adjacency matrix must have a zero diagonal (no self-ties)")
    vals = np.unique(Y)
    if not np.isin(vals, (0.0, 1.0)).all():
        raise ValueError("adjacency entries must be 0 or 1")
    return Y


def check_mask(mask, n: int) -> np.ndarray:
    """Validate a training mask; ``None`` means every off-diagonal dyad."""
    if mask is None:
        return ~np.eye(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, n):
        raise ValueError(f"mask shape {mask.shape} does not match n={n}")
    if np.diagonal(mask).any():
        raise ValueError("mask diagonal must be False")
    if not mask.any():
        raise ValueError("training mask is empty")
    return mask


def check_membership(labels, n: int | None = None, n_blocks: int | None = None) -> np.ndarray:
    """Validate a 1-based membership vector."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ValueError("membership vector must be one-dimensional")
    if n is not None and labels.size != n:
        raise ValueError(f"membership length {labels.size} does not match n={n}")
    if labels.size and labels.min() < 1:
        raise ValueError("block labels are 1-based; found a label < 1")
    if n_blocks is not None and labels.size and labels.max() > n_blocks:
        raise ValueError(
            f"label {labels.max()} out of range for {n_blocks} blocks"
        )
    return labels


def check_block_matrix(B) -> np.ndarray:
    """Validate a square matrix of tie probabilities."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 1:
        raise ValueError(f"block matrix must be square and non-empty, got {B.shape}")
    if (B < 0).any() or (B > 1).any():
        raise ValueError("block tie probabilities must lie in [0, 1]")
    return B
