"""Clustering and estimation accuracy metrics.

The adjusted Rand index follows the Hubert-Arabie chance correction
computed from the contingency table; it can be negative for
worse-than-chance agreement.  Two degenerate identical partitions
(both all-singletons or both one group) get ARI 1 by convention.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .model import Partition

__all__ = ["adjusted_rand_index", "rmse_beta", "khat_summary"]


def _labels(p) -> np.ndarray:
    if isinstance(p, Partition):
        return p.assignment
    return np.asarray(p, dtype=np.int64)


def adjusted_rand_index(p1, p2) -> float:
    """Chance-corrected agreement between two partitions of the same set."""
    a = _labels(p1)
    b = _labels(p2)
    if a.shape != b.shape:
        raise DataError(f"partition lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    index = comb2(table).sum()
    row = comb2(table.sum(axis=1)).sum()
    col = comb2(table.sum(axis=0)).sum()
    expected = row * col / comb2(n)
    maximum = 0.5 * (row + col)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def rmse_beta(beta_hat: np.ndarray, beta_true: np.ndarray) -> float:
    """Root mean squared row-wise error sqrt(mean_i ||bhat_i - b_i||^2)."""
    beta_hat = np.atleast_2d(np.asarray(beta_hat, dtype=float))
    beta_true = np.atleast_2d(np.asarray(beta_true, dtype=float))
    if beta_hat.shape != beta_true.shape:
        raise DataError(f"shape mismatch: {beta_hat.shape} vs {beta_true.shape}")
    diff = beta_hat - beta_true
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", diff, diff))))


def khat_summary(khats, true_k: int) -> tuple[float, float, float]:
    """Mean, standard error of the mean, and fraction equal to true_k.

    A single value gets se = 0 by convention.
    """
    k = np.asarray(list(khats), dtype=float)
    if k.size == 0:
        raise DataError("empty list of group-count estimates")
    mean = float(k.mean())
    se = float(k.std(ddof=1) / np.sqrt(k.size)) if k.size > 1 else 0.0
    per = float(np.mean(k == true_k))
    return mean, se, per
