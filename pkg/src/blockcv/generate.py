"""Directed stochastic block model generators.

The generating model: each node carries a latent 1-based block label,
and every ordered pair of distinct nodes receives an independent
Bernoulli tie whose probability depends only on the pair of labels
through a block tie probability matrix.  The experiment grid uses
"densely connected communities" matrices (a common within-block rate
``r * b`` on the diagonal, ``b`` elsewhere) with either equal or
power-law block sizes.
"""

from __future__ import annotations

import math

import numpy as np

from .validation import check_block_matrix, check_membership, check_rng

PARETO_SHAPE = 1.5


def planted_partition(n_blocks: int, b: float, r: float) -> np.ndarray:
    """Block matrix with within-block rate ``r * b`` and between rate ``b``.

    Parameters
    ----------
    n_blocks : int
        Number of blocks (K >= 1).
    b : float
        Between-block tie probability.
    r : float
        Within/between density ratio, must exceed 1 and satisfy
        ``r * b <= 1``.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if not 0.0 <= b <= 1.0:
        raise ValueError("b must be a probability")
    if r <= 1.0:
        raise ValueError("density ratio r must exceed 1")
    if r * b > 1.0 + 1e-12:
        raise ValueError(f"r*b = {r * b} is not a valid probability")
    B = np.full((n_blocks, n_blocks), b, dtype=float)
    np.fill_diagonal(B, min(r * b, 1.0))
    return B


def equal_block_sizes(n: int, n_blocks: int) -> np.ndarray:
    """Split ``n`` nodes into blocks whose sizes differ by at most one.

    The remainder goes to the leading blocks, so sizes are non-increasing.
    """
    if n_blocks < 1 or n < 1:
        raise ValueError("n and n_blocks must be positive")
    if n_blocks > n:
        raise ValueError(f"cannot split {n} nodes into {n_blocks} blocks")
    base, rem = divmod(n, n_blocks)
    sizes = np.full(n_blocks, base, dtype=int)
    sizes[:rem] += 1
    return sizes


def powerlaw_block_sizes(n: int, n_blocks: int) -> np.ndarray:
    """Deterministic power-law block sizes.

    Sizes are the expected order statistics (largest first) of
    ``n_blocks`` iid Pareto draws with shape 1.5 and minimum
    ``n / (3 * n_blocks)``, rounded to integers summing to ``n`` by the
    largest-remainder method.  The minimum is chosen so every block has
    expected size ``n / n_blocks``.  No randomness is involved.
    """
    if n_blocks < 1 or n < 1:
        raise ValueError("n and n_blocks must be positive")
    if n_blocks > n:
        raise ValueError(f"cannot split {n} nodes into {n_blocks} blocks")
    alpha = PARETO_SHAPE
    x_min = n / (3.0 * n_blocks)
    # E[X_(r)] for the r-th smallest of K iid Pareto(alpha, x_min):
    #   x_min * G(K+1) * G(K-r+1-1/a) / (G(K-r+1) * G(K+1-1/a))
    K = n_blocks
    expected = np.empty(K)
    for r in range(1, K + 1):
        lg = (
            math.lgamma(K + 1)
            + math.lgamma(K - r + 1 - 1 / alpha)
            - math.lgamma(K - r + 1)
            - math.lgamma(K + 1 - 1 / alpha)
        )
        expected[r - 1] = x_min * math.exp(lg)
    expected = expected[::-1]  # largest block first
    sizes = np.sort(_largest_remainder(expected, n))[::-1]
    if (sizes <= 0).any():
        raise ValueError(
            f"power-law sizes for n={n}, K={n_blocks} include an empty block"
        )
    return sizes


def _largest_remainder(values: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative values to integers that sum to ``total``."""
    floors = np.floor(values).astype(int)
    remainders = values - floors
    missing = total - floors.sum()
    order = np.argsort(-remainders, kind="stable")
    floors[order[:missing]] += 1
    return floors


def memberships_from_sizes(sizes) -> np.ndarray:
    """Block-contiguous membership vector: ``sizes[0]`` ones, then twos, ..."""
    sizes = np.asarray(sizes, dtype=int)
    if (sizes < 0).any():
        raise ValueError("block sizes must be non-negative")
    return np.repeat(np.arange(1, sizes.size + 1), sizes)


def tie_probabilities(B, membership) -> np.ndarray:
    """Expand a block matrix to the full dyad-level probability matrix.

    ``P[i, j] = B[label_i, label_j]`` for ``i != j`` and ``P[i, i] = 0``.
    """
    B = check_block_matrix(B)
    labels = check_membership(membership, n_blocks=B.shape[0])
    P = B[np.ix_(labels - 1, labels - 1)]
    np.fill_diagonal(P, 0.0)
    return P


def sample_network(P, rng=None) -> np.ndarray:
    """Draw one directed network: independent Bernoulli(P[i, j]) dyads."""
    P = np.asarray(P, dtype=float)
    if (P < 0).any() or (P > 1).any():
        raise ValueError("tie probabilities must lie in [0, 1]")
    rng = check_rng(rng)
    Y = (rng.random(P.shape) < P).astype(float)
    np.fill_diagonal(Y, 0.0)
    return Y


def write_edge_list(path, Y) -> None:
    """Write a network as 1-indexed "i j" pairs with an ``n=<nodes>`` header."""
    Y = np.asarray(Y)
    rows, cols = np.nonzero(Y)
    with open(path, "w") as fh:
        fh.write(f"n={Y.shape[0]}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i + 1} {j + 1}\n")


def read_edge_list(path) -> np.ndarray:
    """Read a network written by :func:`write_edge_list`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("n="):
            raise ValueError(f"expected 'n=<nodes>' header, got {header!r}")
        n = int(header[2:])
        Y = np.zeros((n, n))
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j = (int(tok) for tok in line.split())
            if i == j:
                raise ValueError(f"self-tie {i} -> {j} is not allowed")
            Y[i - 1, j - 1] = 1.0
    return Y


def write_dense_csv(path, M) -> None:
    """Write a matrix as integer CSV rows."""
    np.savetxt(path, np.asarray(M), fmt="%d", delimiter=",")


def read_dense_csv(path) -> np.ndarray:
    """Read a matrix written by :func:`write_dense_csv`."""
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return M
