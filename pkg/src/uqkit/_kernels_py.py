"""Pure-numpy implementations of the hot kernels.

Reference semantics for the compiled core in ``_kernels_cy``; selected at
import time by ``_backend`` when the extension is unavailable or disabled.
Both implementations must agree to floating-point roundoff -- the backend
equivalence tests compare them directly.
"""

from __future__ import annotations

import numpy as np

_PREIMAGE_CHUNK = 2048


def sectional_system(elem_idx, shp_left, shp_right, coef_mass, coef_rhs,
                     n_nodes):
    """Assemble the weighted sectional normal system for one direction.

    Sample ``s`` sits in element ``elem_idx[s]`` and touches the two hat
    functions with values ``shp_left[s]``/``shp_right[s]``.  Returns the
    (n_nodes, n_nodes) matrix ``M = sum c_m psi psi^T`` and right-hand side
    ``f = sum c_r psi``.
    """
    i = np.asarray(elem_idx, dtype=np.int64)
    left = np.asarray(shp_left, dtype=float)
    right = np.asarray(shp_right, dtype=float)
    cm = np.asarray(coef_mass, dtype=float)
    cr = np.asarray(coef_rhs, dtype=float)
    n = int(n_nodes)
    size = n * n
    flat = np.concatenate([i * n + i, i * n + (i + 1),
                           (i + 1) * n + i, (i + 1) * n + (i + 1)])
    vals = np.concatenate([cm * left * left, cm * left * right,
                           cm * left * right, cm * right * right])
    M = np.bincount(flat, weights=vals, minlength=size).reshape(n, n)
    f = (np.bincount(i, weights=cr * left, minlength=n)
         + np.bincount(i + 1, weights=cr * right, minlength=n))
    return M, f


def eval_separated(nodes, n_nodes, coeffs, sigmas, H):
    """Evaluate a sum of rank-one sectional products at the rows of ``H``.

    ``nodes`` is (nd, max_n) padded node coordinates with ``n_nodes[i]``
    valid entries per dimension; ``coeffs`` is (nf, nd, max_n) nodal values.
    Out-of-mesh coordinates clamp to the boundary nodes.
    """
    nodes = np.asarray(nodes, dtype=float)
    n_nodes = np.asarray(n_nodes, dtype=np.int64)
    coeffs = np.asarray(coeffs, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    H = np.asarray(H, dtype=float)
    nq, nd = H.shape
    out = np.zeros(nq)
    for j in range(sigmas.size):
        term = np.full(nq, sigmas[j])
        for i in range(nd):
            n = n_nodes[i]
            term *= np.interp(H[:, i], nodes[i, :n], coeffs[j, i, :n])
        out += term
    return out


def preimage_blend(Z, Z_train, X_train, eps_hit):
    """Inverse-square-distance blend of training outputs, (d, nq) result.

    A query within ``eps_hit`` of a training coordinate (or exactly on one)
    returns that training output column unchanged.
    """
    Z = np.asarray(Z, dtype=float)
    Z_train = np.asarray(Z_train, dtype=float)
    X_train = np.asarray(X_train, dtype=float)
    nq, k = Z.shape
    d = X_train.shape[0]
    eps2 = float(eps_hit) ** 2
    out = np.empty((d, nq))
    for start in range(0, nq, _PREIMAGE_CHUNK):
        stop = min(start + _PREIMAGE_CHUNK, nq)
        zc = Z[start:stop]
        # direct differences: the quadratic expansion would cancel
        # catastrophically near training coordinates and miss exact hits
        d2 = np.zeros((stop - start, Z_train.shape[0]))
        for c in range(k):
            diff = zc[:, c][:, None] - Z_train[:, c][None, :]
            d2 += diff * diff
        dmin = d2.min(axis=1)
        hits = (dmin < eps2) | (dmin == 0.0)
        W = np.empty_like(d2)
        np.divide(dmin[:, None], d2, out=W, where=~hits[:, None])
        if hits.any():
            W[hits] = 0.0
            W[hits, d2[hits].argmin(axis=1)] = 1.0
        W /= W.sum(axis=1)[:, None]
        out[:, start:stop] = X_train @ W.T
    return out
