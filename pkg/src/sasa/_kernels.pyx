# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM iteration loop.

Twin of ``_kernels_py.run_admm`` (same signature, same update order,
same stopping rule); the whole iteration runs in C with the two
prefactored Cholesky systems solved via LAPACK dpotrs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt
from scipy.linalg.cython_lapack cimport dpotrs

cnp.import_array()

STATUS_CONVERGED = 0
STATUS_MAXITER = 1
STATUS_DIVERGED = 2


cdef inline double _scad_value(double t, double lam, double gamma) noexcept nogil:
    if t <= lam:
        return lam * t
    if t <= gamma * lam:
        return (2.0 * gamma * lam * t - t * t - lam * lam) / (2.0 * (gamma - 1.0))
    return 0.5 * (gamma + 1.0) * lam * lam


def run_admm(const double[:, ::1] beta0, const double[::1] eta0,
             const double[:, ::1] delta0, const double[:, ::1] v0,
             const long long[::1] pair_i, const long long[::1] pair_j,
             const double[::1] lam_eff,
             double gamma, double vartheta, double tol, int max_iter,
             const double[::1, :] chol_m, const double[::1] b0,
             const double[::1, :] chol_z, const double[:, ::1] zox,
             const double[::1] zoy,
             const double[::1] y, const double[:, ::1] z_stack,
             const double[:, ::1] x_stack,
             const long long[::1] offsets, const double[::1] inv_ni,
             const long long[::1] loc_of_row):
    cdef int n = beta0.shape[0]
    cdef int p = beta0.shape[1]
    cdef int q = eta0.shape[0]
    cdef Py_ssize_t n_pairs = delta0.shape[0]
    cdef int nb = n * p
    cdef double inv_vt = 1.0 / vartheta

    beta_arr = np.array(beta0, dtype=np.float64)
    eta_arr = np.array(eta0, dtype=np.float64)
    delta_arr = np.array(delta0, dtype=np.float64)
    v_arr = np.array(v0, dtype=np.float64)
    rhs_arr = np.empty(nb, dtype=np.float64)
    eta_rhs_arr = np.empty(q, dtype=np.float64)
    primal_arr = np.empty(max_iter, dtype=np.float64)
    dual_arr = np.empty(max_iter, dtype=np.float64)
    obj_arr = np.empty(max_iter, dtype=np.float64)
    scratch_arr = np.empty((n, p), dtype=np.float64)

    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] eta = eta_arr
    cdef double[:, ::1] delta = delta_arr
    cdef double[:, ::1] v = v_arr
    cdef double[::1] rhs = rhs_arr
    cdef double[::1] eta_rhs = eta_rhs_arr
    cdef double[::1] primal_hist = primal_arr
    cdef double[::1] dual_hist = dual_arr
    cdef double[::1] obj_hist = obj_arr
    cdef double[:, ::1] scatter = scratch_arr

    cdef int st_conv = STATUS_CONVERGED
    cdef int st_maxiter = STATUS_MAXITER
    cdef int st_div = STATUS_DIVERGED
    cdef int status = st_maxiter
    cdef int iters = 0
    cdef int it, info, one = 1
    cdef char lo = b'L'
    cdef Py_ssize_t k, i, j, l, r
    cdef int qi, bi
    cdef double w, acc, gnorm, snorm, dnew, thr_soft, thr_pl, factor, le
    cdef double mid_scale = 1.0 - 1.0 / ((gamma - 1.0) * vartheta)
    cdef double primal_sq, dual_sq, loss, pen, resid, d_old, primal

    with nogil:
        for it in range(max_iter):
            # ---- beta update: rhs = b0 + vartheta * A^T (delta - v/vartheta)
            for l in range(nb):
                rhs[l] = b0[l]
            for k in range(n_pairs):
                i = pair_i[k]
                j = pair_j[k]
                for l in range(p):
                    w = vartheta * (delta[k, l] - inv_vt * v[k, l])
                    rhs[i * p + l] += w
                    rhs[j * p + l] -= w
            info = 0
            # dpotrs reads but never writes the factor; const-cast is safe.
            dpotrs(&lo, &nb, &one, <double*><void*>&chol_m[0, 0], &nb,
                   &rhs[0], &nb, &info)
            for i in range(n):
                for l in range(p):
                    beta[i, l] = rhs[i * p + l]

            # ---- eta update: solve ZtOZ eta = zoy - zox @ vec(beta)
            if q > 0:
                for qi in range(q):
                    acc = zoy[qi]
                    for l in range(nb):
                        acc -= zox[qi, l] * rhs[l]
                    eta_rhs[qi] = acc
                dpotrs(&lo, &q, &one, <double*><void*>&chol_z[0, 0], &q,
                       &eta_rhs[0], &q, &info)
                for qi in range(q):
                    eta[qi] = eta_rhs[qi]

            # ---- delta prox, v update, primal residual, penalty term
            primal_sq = 0.0
            pen = 0.0
            for i in range(n):
                for l in range(p):
                    scatter[i, l] = 0.0
            for k in range(n_pairs):
                i = pair_i[k]
                j = pair_j[k]
                le = lam_eff[k]
                gnorm = 0.0
                snorm = 0.0
                for l in range(p):
                    w = beta[i, l] - beta[j, l]
                    gnorm += w * w
                    w += inv_vt * v[k, l]
                    snorm += w * w
                gnorm = sqrt(gnorm)
                snorm = sqrt(snorm)
                pen += _scad_value(gnorm, le, gamma)

                thr_soft = le * (1.0 + inv_vt)
                thr_pl = gamma * le
                if snorm <= thr_soft:
                    factor = 1.0 - (le * inv_vt) / snorm if snorm > 0.0 else 0.0
                    if factor < 0.0:
                        factor = 0.0
                elif snorm <= thr_pl:
                    factor = 1.0 - (gamma * le / ((gamma - 1.0) * vartheta)) / snorm
                    if factor < 0.0:
                        factor = 0.0
                    factor /= mid_scale
                else:
                    factor = 1.0

                for l in range(p):
                    w = beta[i, l] - beta[j, l]
                    dnew = factor * (w + inv_vt * v[k, l])
                    d_old = delta[k, l]
                    delta[k, l] = dnew
                    resid = w - dnew
                    v[k, l] += vartheta * resid
                    primal_sq += resid * resid
                    scatter[i, l] += dnew - d_old
                    scatter[j, l] -= dnew - d_old

            dual_sq = 0.0
            for i in range(n):
                for l in range(p):
                    dual_sq += scatter[i, l] * scatter[i, l]

            # ---- objective trace: weighted half-RSS plus penalty
            loss = 0.0
            for i in range(n):
                for r in range(offsets[i], offsets[i + 1]):
                    resid = y[r]
                    for l in range(p):
                        resid -= x_stack[r, l] * beta[i, l]
                    for qi in range(q):
                        resid -= z_stack[r, qi] * eta[qi]
                    loss += 0.5 * inv_ni[i] * resid * resid

            primal = sqrt(primal_sq)
            primal_hist[it] = primal
            dual_hist[it] = vartheta * sqrt(dual_sq)
            obj_hist[it] = loss + pen
            iters = it + 1

            if not isfinite(primal):
                status = st_div
                break
            if primal < tol:
                status = st_conv
                break

    return (beta_arr, eta_arr, delta_arr, v_arr, iters, status,
            primal_arr[:iters].copy(), dual_arr[:iters].copy(),
            obj_arr[:iters].copy())
