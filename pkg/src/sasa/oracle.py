"""Weighted least squares with a known partition, and its standard errors.

With group indicator W (n*p x K*p, Kronecker-expanded) and U = (Z, XW),
the oracle estimator is

    (eta, alpha) = (U' Omega U)^{-1} U' Omega y,     Omega = diag(I_{n_i}/n_i)

Per-location coefficients expand as beta_i = alpha_{g(i)}.  Standard
errors come from the sandwich

    se_k = sigma * sqrt[ e_k' (U'OU)^{-1} U'O O U (U'OU)^{-1} e_k ]

and the error variance from the residual sum of squares over
m - q - K*p degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError
from .model import Dataset, Partition

__all__ = [
    "OracleFit",
    "oracle_fit",
    "solve_partition",
    "residuals",
    "sigma2_hat",
    "coef_se",
    "min_group_gap",
    "gap_rule",
]


@dataclass(frozen=True)
class OracleFit:
    """Oracle WLS output: eta (q,), alpha (K, p), error variance and the
    standard errors of the stacked (eta, alpha) coordinates."""

    eta: np.ndarray
    alpha: np.ndarray
    sigma2: float
    se: np.ndarray
    partition: Partition

    @property
    def beta(self) -> np.ndarray:
        """Per-location coefficients expanded by group membership."""
        return self.alpha[self.partition.assignment - 1]


def _design(dataset: Dataset, partition: Partition) -> np.ndarray:
    """U = (Z, XW): columns are q global covariates then p per group."""
    if partition.n != dataset.n:
        raise DataError(f"partition has {partition.n} locations, dataset {dataset.n}")
    m, q, p, k = dataset.m, dataset.q, dataset.p, partition.k
    u = np.zeros((m, q + k * p))
    if q:
        u[:, :q] = dataset.Z_stacked
    lab_of_row = partition.assignment[dataset.loc_of_row] - 1
    cols = q + lab_of_row[:, None] * p + np.arange(p)[None, :]
    np.put_along_axis(u, cols, dataset.X_stacked, axis=1)
    return u


def _omega_row_weights(dataset: Dataset) -> np.ndarray:
    return (1.0 / dataset.n_i)[dataset.loc_of_row]


def _solve_normal(u: np.ndarray, w: np.ndarray, rhs: np.ndarray):
    """Solve (U' diag(w) U) x = rhs, returning (x, cho_factor)."""
    a = u.T @ (u * w[:, None])
    try:
        chol = scipy.linalg.cho_factor(a, lower=True)
    except scipy.linalg.LinAlgError:
        raise DataError("partition design rank-deficient") from None
    return scipy.linalg.cho_solve(chol, rhs), chol


def solve_partition(dataset: Dataset, partition: Partition) -> tuple[np.ndarray, np.ndarray]:
    """The WLS solve alone: returns (eta, alpha) without variance terms.

    Used wherever the coefficients are needed but the residual degrees
    of freedom may be zero (e.g. the singleton-partition initializer on
    tiny datasets).
    """
    u = _design(dataset, partition)
    w = _omega_row_weights(dataset)
    sol, _ = _solve_normal(u, w, u.T @ (w * dataset.y_stacked))
    q, p = dataset.q, dataset.p
    return sol[:q], sol[q:].reshape(partition.k, p)


def oracle_fit(dataset: Dataset, partition: Partition) -> OracleFit:
    """WLS fit assuming the group structure is known."""
    eta, alpha = solve_partition(dataset, partition)
    beta = alpha[partition.assignment - 1]
    sigma2 = sigma2_hat(dataset, eta, beta, partition.k)
    se = coef_se(dataset, partition, sigma2)
    return OracleFit(eta=eta, alpha=alpha, sigma2=float(sigma2), se=se,
                     partition=partition)


def residuals(dataset: Dataset, eta: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Stacked residuals y - Z eta - X beta_i."""
    fitted = np.einsum("ij,ij->i", dataset.X_stacked,
                       np.atleast_2d(beta)[dataset.loc_of_row])
    if dataset.q:
        fitted = fitted + dataset.Z_stacked @ np.atleast_1d(eta)
    return dataset.y_stacked - fitted


def sigma2_hat(dataset: Dataset, eta, beta, k: int) -> float:
    """RSS over m - q - K*p degrees of freedom (K from the fit)."""
    dof = dataset.m - dataset.q - int(k) * dataset.p
    if dof <= 0:
        raise DataError(f"nonpositive degrees of freedom: m - q - K*p = {dof}")
    r = residuals(dataset, eta, beta)
    return float(r @ r) / dof


def coef_se(dataset: Dataset, partition: Partition, sigma2: float) -> np.ndarray:
    """Sandwich standard errors for each coordinate of (eta, alpha)."""
    u = _design(dataset, partition)
    w = _omega_row_weights(dataset)
    a = u.T @ (u * w[:, None])
    c = u.T @ (u * (w * w)[:, None])
    try:
        chol = scipy.linalg.cho_factor(a, lower=True)
    except scipy.linalg.LinAlgError:
        raise DataError("partition design rank-deficient") from None
    inner = scipy.linalg.cho_solve(chol, c)
    b = scipy.linalg.cho_solve(chol, inner.T)
    return np.sqrt(sigma2 * np.diag(b))


def min_group_gap(alpha: np.ndarray) -> float:
    """Smallest Euclidean distance between distinct group coefficients."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    k = alpha.shape[0]
    if k < 2:
        raise DataError("gap undefined for a single group")
    diff = alpha[:, None, :] - alpha[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return float(d[np.triu_indices(k, k=1)].min())


def gap_rule(alpha: np.ndarray, lam: float, gamma: float = 3.0) -> dict:
    """Post-fit diagnostic: is the minimal group gap beyond the penalty
    plateau gamma*lambda?  (The plateau onset is where the concave
    penalty's derivative vanishes, so gaps beyond it are not shrunk.)"""
    b_n = min_group_gap(alpha)
    threshold = gamma * lam
    return {"b_n": b_n, "threshold": threshold, "ok": bool(b_n > threshold)}
