# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics mirror ``_kernels_py`` exactly; keep both in sync.  These loops
dominate the separated-surface fit (sectional assembly runs once per
direction per sweep per term) and the Monte Carlo stage (separated-model
evaluation and latent-space pre-image blending run once per MC sample).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def sectional_system(cnp.int64_t[::1] elem_idx,
                     double[::1] shp_left, double[::1] shp_right,
                     double[::1] coef_mass, double[::1] coef_rhs,
                     Py_ssize_t n_nodes):
    cdef Py_ssize_t ns = elem_idx.shape[0]
    M_arr = np.zeros((n_nodes, n_nodes))
    f_arr = np.zeros(n_nodes)
    cdef double[:, ::1] M = M_arr
    cdef double[::1] f = f_arr
    cdef Py_ssize_t s, i
    cdef double l, r, cm, cr, lr
    for s in range(ns):
        i = elem_idx[s]
        l = shp_left[s]
        r = shp_right[s]
        cm = coef_mass[s]
        cr = coef_rhs[s]
        lr = cm * l * r
        M[i, i] += cm * l * l
        M[i, i + 1] += lr
        M[i + 1, i] += lr
        M[i + 1, i + 1] += cm * r * r
        f[i] += cr * l
        f[i + 1] += cr * r
    return M_arr, f_arr


def eval_separated(double[:, ::1] nodes, cnp.int64_t[::1] n_nodes,
                   double[:, :, ::1] coeffs, double[::1] sigmas,
                   double[:, ::1] H):
    cdef Py_ssize_t nq = H.shape[0]
    cdef Py_ssize_t nd = H.shape[1]
    cdef Py_ssize_t nf = sigmas.shape[0]
    out_arr = np.zeros(nq)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t q, j, i, n, lo, hi, mid
    cdef double h, term, t, x0, x1
    for q in range(nq):
        for j in range(nf):
            term = sigmas[j]
            for i in range(nd):
                n = n_nodes[i]
                h = H[q, i]
                if h <= nodes[i, 0]:
                    term *= coeffs[j, i, 0]
                elif h >= nodes[i, n - 1]:
                    term *= coeffs[j, i, n - 1]
                else:
                    lo = 0
                    hi = n - 1
                    while hi - lo > 1:
                        mid = (lo + hi) >> 1
                        if nodes[i, mid] <= h:
                            lo = mid
                        else:
                            hi = mid
                    x0 = nodes[i, lo]
                    x1 = nodes[i, lo + 1]
                    t = (h - x0) / (x1 - x0)
                    term *= (1.0 - t) * coeffs[j, i, lo] + t * coeffs[j, i, lo + 1]
            out[q] += term
    return out_arr


def preimage_blend(double[:, ::1] Z, double[:, ::1] Z_train,
                   double[:, ::1] X_train, double eps_hit):
    cdef Py_ssize_t nq = Z.shape[0]
    cdef Py_ssize_t k = Z.shape[1]
    cdef Py_ssize_t ns = Z_train.shape[0]
    cdef Py_ssize_t d = X_train.shape[0]
    out_arr = np.zeros((d, nq))
    cdef double[:, ::1] out = out_arr
    d2_arr = np.empty(ns)
    cdef double[::1] d2 = d2_arr
    cdef Py_ssize_t q, i, c, best
    cdef double acc, diff, dmin, eps2, w, wsum
    eps2 = eps_hit * eps_hit
    for q in range(nq):
        dmin = -1.0
        best = 0
        for i in range(ns):
            acc = 0.0
            for c in range(k):
                diff = Z[q, c] - Z_train[i, c]
                acc += diff * diff
            d2[i] = acc
            if dmin < 0.0 or acc < dmin:
                dmin = acc
                best = i
        if dmin < eps2 or dmin == 0.0:
            for c in range(d):
                out[c, q] = X_train[c, best]
            continue
        wsum = 0.0
        for i in range(ns):
            w = dmin / d2[i]
            d2[i] = w
            wsum += w
        for i in range(ns):
            w = d2[i] / wsum
            for c in range(d):
                out[c, q] += w * X_train[c, i]
    return out_arr
