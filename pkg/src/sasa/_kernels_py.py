"""Pure-NumPy ADMM iteration loop.

This is the fallback twin of the compiled kernel in ``_kernels.pyx``;
both expose ``run_admm`` with the same signature and semantics, and the
solver picks one at import time (see ``_backend``).

One iteration of the cycle (beta, eta, delta, v):

    rhs   = b0 + vartheta * scatter(delta - v/vartheta)
    beta  = solve(M, rhs)            (M prefactored, constant per fit)
    eta   = solve(ZtOZ, ZOy - ZOX @ beta)
    sigma = (beta_i - beta_j) + v/vartheta
    delta = prox(sigma, lam_eff)
    v    += vartheta * (beta_i - beta_j - delta)

Stopping is on the primal residual ||A beta - delta|| alone; the dual
residual and the penalized objective are tracked as diagnostics.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from .penalty import scad_prox_rows, scad_value

STATUS_CONVERGED = 0
STATUS_MAXITER = 1
STATUS_DIVERGED = 2


def _scatter_pairs(w: np.ndarray, pair_i: np.ndarray, pair_j: np.ndarray,
                   n: int) -> np.ndarray:
    """Apply the transposed difference operator: out_i = sum_{j>i} w_ij
    - sum_{j<i} w_ji, vectorised column by column."""
    p = w.shape[1]
    out = np.empty((n, p))
    for l in range(p):
        out[:, l] = (np.bincount(pair_i, weights=w[:, l], minlength=n)
                     - np.bincount(pair_j, weights=w[:, l], minlength=n))
    return out


def run_admm(beta, eta, delta, v, pair_i, pair_j, lam_eff,
             gamma, vartheta, tol, max_iter,
             chol_m, b0, chol_z, zox, zoy,
             y, z_stack, x_stack, offsets, inv_ni, loc_of_row):
    """Run the update cycle until the primal residual drops below tol.

    Returns (beta, eta, delta, v, iters, status, primal, dual, objective)
    where the last three are per-iteration traces of length iters.
    """
    beta = np.array(beta, dtype=float)
    eta = np.array(eta, dtype=float)
    delta = np.array(delta, dtype=float)
    v = np.array(v, dtype=float)
    n, p = beta.shape
    q = eta.shape[0]
    inv_vt = 1.0 / vartheta
    w_obs = inv_ni[loc_of_row]

    primal_hist = np.empty(max_iter)
    dual_hist = np.empty(max_iter)
    obj_hist = np.empty(max_iter)
    status = STATUS_MAXITER
    iters = 0

    for it in range(max_iter):
        w = delta - inv_vt * v
        rhs = b0 + vartheta * _scatter_pairs(w, pair_i, pair_j, n).ravel()
        beta = cho_solve((chol_m, True), rhs, check_finite=False).reshape(n, p)
        if q:
            eta = cho_solve((chol_z, True), zoy - zox @ beta.ravel(),
                            check_finite=False)
        gap = beta[pair_i] - beta[pair_j]
        sigma = gap + inv_vt * v
        new_delta = scad_prox_rows(sigma, lam_eff, gamma, vartheta)
        r = gap - new_delta
        v = v + vartheta * r
        primal = float(np.linalg.norm(r))
        dual = vartheta * float(np.linalg.norm(
            _scatter_pairs(new_delta - delta, pair_i, pair_j, n)))
        delta = new_delta

        fitted = np.einsum("ij,ij->i", x_stack, beta[loc_of_row])
        if q:
            fitted = fitted + z_stack @ eta
        resid = y - fitted
        loss = 0.5 * float(np.dot(w_obs * resid, resid))
        pen = float(np.sum(scad_value(np.sqrt(np.einsum("ij,ij->i", gap, gap)),
                                      lam_eff, gamma)))
        primal_hist[it] = primal
        dual_hist[it] = dual
        obj_hist[it] = loss + pen
        iters = it + 1

        if not np.isfinite(primal):
            status = STATUS_DIVERGED
            break
        if primal < tol:
            status = STATUS_CONVERGED
            break

    return (beta, eta, delta, v, iters, status,
            primal_hist[:iters].copy(), dual_hist[:iters].copy(),
            obj_hist[:iters].copy())
