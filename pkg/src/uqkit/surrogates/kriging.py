"""Ordinary Kriging with a spherical variogram.

Weights for a query point solve the bordered system

    [ Gamma  1 ] [ w  ]   [ gamma(h) ]
    [ 1^T    0 ] [ mu ] = [ 1        ]

whose last row enforces sum(w) = 1 through the Lagrange multiplier ``mu``.
The factorization is computed once at fit time; batch prediction uses the
dual form ``alpha^T rhs`` with ``alpha = K^{-1} [y; 0]``, which is the same
linear algebra without materializing per-query weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist, pdist, squareform

from ..container import save_container
from ..errors import ConfigError, NumericalError

SEMIVARIOGRAM_BINS = 15
_PREDICT_CHUNK = 8192


def spherical_variogram(delta, C0: float, C1: float, a: float):
    """Spherical model: 0 at zero lag, C0 nugget just above, sill C0+C1.

    gamma(delta) = C0 + C1 * (1.5 (delta/a) - 0.5 (delta/a)^3) on (0, a],
    the sill beyond the range, and exactly 0 at delta = 0.
    """
    if a <= 0:
        raise ConfigError(f"variogram range must be positive, got {a}")
    if C0 < 0 or C1 < 0:
        raise ConfigError("nugget and partial sill must be >= 0")
    delta = np.asarray(delta, dtype=float)
    if (delta < 0).any():
        raise ConfigError("distances must be >= 0")
    r = np.minimum(delta / a, 1.0)
    gamma = C0 + C1 * (1.5 * r - 0.5 * r ** 3)
    gamma = np.where(delta == 0.0, 0.0, gamma)
    return float(gamma) if gamma.ndim == 0 else gamma


def empirical_semivariogram(H, y, n_bins: int = SEMIVARIOGRAM_BINS):
    """Binned semivariances up to half the maximum pairwise distance.

    Returns (distances, semivariances, pair counts); bins with fewer than
    two pairs are dropped.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    dists = pdist(H)
    semis = 0.5 * pdist(y[:, None], metric="sqeuclidean")
    dmax = dists.max() / 2.0
    if dmax <= 0:
        raise NumericalError("all training points coincide")
    edges = np.linspace(0.0, dmax, n_bins + 1)
    which = np.digitize(dists, edges[1:-1])
    keep = dists <= dmax
    centers, values, counts = [], [], []
    for b in range(n_bins):
        mask = keep & (which == b)
        if mask.sum() < 2:
            continue
        centers.append(dists[mask].mean())
        values.append(semis[mask].mean())
        counts.append(int(mask.sum()))
    return np.asarray(centers), np.asarray(values), np.asarray(counts)


def fit_variogram_range(H, y, C0: float, C1: float) -> float:
    """Least-squares range for the spherical model on the binned cloud."""
    centers, values, _ = empirical_semivariogram(H, y)
    dmax = float(pdist(np.atleast_2d(H)).max())
    if centers.size == 0:
        # too few pairs to bin (tiny training sets): take the full spread
        return dmax

    def loss(a):
        return float(np.sum(
            (spherical_variogram(centers, C0, C1, a) - values) ** 2))

    res = minimize_scalar(loss, bounds=(1e-9 * dmax, dmax), method="bounded")
    return float(res.x)


@dataclass(frozen=True, eq=False)
class OkModel:
    """Fitted ordinary-kriging interpolant."""

    H: np.ndarray   # (ns, nd) training inputs
    y: np.ndarray   # (ns,) training values
    C0: float
    C1: float
    a: float

    @property
    def ns(self) -> int:
        return self.H.shape[0]

    @property
    def nd(self) -> int:
        return self.H.shape[1]

    @cached_property
    def _lu(self):
        n = self.ns
        K = np.empty((n + 1, n + 1))
        K[:n, :n] = spherical_variogram(squareform(pdist(self.H)),
                                        self.C0, self.C1, self.a)
        K[n, :n] = 1.0
        K[:n, n] = 1.0
        K[n, n] = 0.0
        lu, piv = scipy.linalg.lu_factor(K, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= 1e-14 * max(pivots.max(), 1.0):
            raise NumericalError("singular kriging system "
                                 "(collinear or duplicate points?)")
        return lu, piv

    @cached_property
    def _dual(self):
        rhs = np.concatenate([self.y, [0.0]])
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)

    def _rhs(self, Hq: np.ndarray) -> np.ndarray:
        """(ns+1, m) bordered right-hand sides for the query rows."""
        gamma = spherical_variogram(cdist(self.H, Hq), self.C0, self.C1,
                                    self.a)
        return np.vstack([gamma, np.ones((1, Hq.shape[0]))])

    def weights(self, h):
        """Solve the bordered system for one query; returns (w, mu)."""
        h = np.asarray(h, dtype=float).ravel()
        if h.size != self.nd:
            raise ConfigError(f"expected {self.nd} input coordinates")
        sol = scipy.linalg.lu_solve(self._lu, self._rhs(h[None, :])[:, 0],
                                    check_finite=False)
        return sol[:-1], float(sol[-1])

    def eval(self, h) -> float:
        w, _ = self.weights(h)
        return float(w @ self.y)

    def predict(self, Hq) -> np.ndarray:
        """Batch prediction through the dual coefficients (chunked)."""
        Hq = np.atleast_2d(np.asarray(Hq, dtype=float))
        if Hq.shape[1] != self.nd:
            raise ConfigError(f"expected {self.nd} input columns")
        out = np.empty(Hq.shape[0])
        for start in range(0, Hq.shape[0], _PREDICT_CHUNK):
            stop = min(start + _PREDICT_CHUNK, Hq.shape[0])
            out[start:stop] = self._dual @ self._rhs(Hq[start:stop])
        return out

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"C0": self.C0, "C1": self.C1, "a": self.a,
                **(extra_meta or {})}
        save_container(path, "ok", meta, {"H": self.H, "y": self.y})

    @classmethod
    def from_arrays(cls, meta, arrays) -> "OkModel":
        return cls(H=arrays["H"], y=arrays["y"], C0=float(meta["C0"]),
                   C1=float(meta["C1"]), a=float(meta["a"]))


def fit_ok(H, y, variogram=None) -> OkModel:
    """Fit ordinary kriging; ``variogram`` is ``(C0, C1, a)`` or None.

    Auto mode uses a zero nugget, the sample variance of ``y`` as the sill,
    and a least-squares range against the empirical binned semivariogram.
    Exact duplicate inputs with identical values are dropped with a warning;
    duplicates with conflicting values are rejected.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size != H.shape[0]:
        raise ConfigError("fit_ok: y length must match rows of H")
    if H.shape[0] < 2:
        raise ConfigError("fit_ok needs at least 2 samples")
    if not (np.isfinite(H).all() and np.isfinite(y).all()):
        raise ConfigError("fit_ok: inputs must be finite")

    uniq, first, inverse = np.unique(H, axis=0, return_index=True,
                                     return_inverse=True)
    if uniq.shape[0] < H.shape[0]:
        for g in range(uniq.shape[0]):
            vals = y[inverse == g]
            if vals.size > 1 and not np.all(vals == vals[0]):
                raise ConfigError(
                    f"duplicate input row {uniq[g].tolist()} with "
                    "conflicting values")
        warnings.warn(f"dropped {H.shape[0] - uniq.shape[0]} duplicate "
                      "training points", stacklevel=2)
        H, y = uniq, y[first]
        if H.shape[0] < 2:
            raise ConfigError("fewer than 2 distinct samples after "
                              "deduplication")

    if variogram is None:
        C0 = 0.0
        C1 = float(np.var(y, ddof=1))
        if C1 == 0.0:
            C1 = 1.0  # constant data: any positive sill interpolates it
            a = 1.0 if H.shape[0] < 2 else max(float(pdist(H).max()), 1.0)
        else:
            a = fit_variogram_range(H, y, C0, C1)
    else:
        C0, C1, a = (float(v) for v in variogram)
    if C0 + C1 <= 0:
        raise ConfigError("sill C0 + C1 must be positive")
    model = OkModel(H=H, y=y, C0=C0, C1=C1, a=a)
    model._lu  # factorize eagerly so singular systems fail at fit time
    return model
