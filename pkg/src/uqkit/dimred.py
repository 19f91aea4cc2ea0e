"""Linear and kernel PCA with forward/backward maps.

Both reductions center the data (the training outputs for PCA, the Gram
matrix for kPCA) and retain either a fixed number of components or the
smallest number whose eigenvalue-energy fraction reaches a target.

The kernel PCA backward map (pre-image) blends training outputs with
inverse-square-distance weights in latent space; a query landing on a
training coordinate (within ``eps_hit``) returns that training output
exactly.

Eigenvector signs are arbitrary; both fits canonicalize each retained
component so its latent coordinate over the training set correlates
nonnegatively with the component average of the outputs.  This keeps signs
stable across sample sizes and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import _backend
from .container import load_container, save_container
from .errors import ConfigError, NumericalError

DEFAULT_ENERGY = 0.80
DEFAULT_BETA = 0.1

# Relative threshold below which a slightly negative eigenvalue is treated
# as rounding noise; anything more negative means a broken Gram matrix.
_EIG_CLAMP_REL = 1e-10


def energy_fraction(eigenvalues, k: int) -> float:
    """Share of the spectrum carried by the leading ``k`` eigenvalues."""
    lam = _clamped_spectrum(np.asarray(eigenvalues, dtype=float))
    total = lam.sum()
    if total <= 0.0:
        raise NumericalError("energy_fraction: all-zero spectrum")
    k = int(k)
    if k < 0 or k > lam.size:
        raise ConfigError(f"k={k} outside spectrum of length {lam.size}")
    return float(lam[:k].sum() / total)


def _clamped_spectrum(lam: np.ndarray) -> np.ndarray:
    if lam.size == 0:
        raise ConfigError("empty spectrum")
    top = lam.max(initial=0.0)
    floor = -_EIG_CLAMP_REL * max(top, 1.0)
    if (lam < floor).any():
        raise NumericalError(
            f"spectrum has eigenvalue {lam.min():.3e} below the clamping "
            f"floor {floor:.3e}; Gram matrix is numerically broken")
    return np.clip(lam, 0.0, None)


def _select_k(lam: np.ndarray, k: int | None, energy: float | None) -> int:
    if k is not None and energy is not None:
        raise ConfigError("give either a fixed k or an energy target, not both")
    if k is not None:
        k = int(k)
        if not 1 <= k <= lam.size:
            raise ConfigError(f"k={k} must be in [1, {lam.size}]")
        return k
    tau = DEFAULT_ENERGY if energy is None else float(energy)
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"energy target {tau} must lie in (0, 1]")
    total = lam.sum()
    if total <= 0.0:
        raise NumericalError("cannot select k by energy: spectrum is "
                             "identically zero (k = 0)")
    fractions = np.cumsum(lam) / total
    return int(np.searchsorted(fractions, tau - 1e-12) + 1)


def _anchor_signs(vectors: np.ndarray, latent: np.ndarray,
                  X: np.ndarray) -> np.ndarray:
    """Flip component signs so latent coordinates correlate >= 0 with the
    output component-averages; returns the per-component sign vector."""
    anchor = X.mean(axis=0)
    anchor = anchor - anchor.mean()
    signs = np.ones(latent.shape[1])
    for i in range(latent.shape[1]):
        if float(latent[:, i] @ anchor) < 0:
            signs[i] = -1.0
    vectors *= signs[None, :]
    latent *= signs[None, :]
    return signs


def _as_output_matrix(X) -> np.ndarray:
    """Accept a TrainingSet or a (d, ns) array of output columns."""
    X = getattr(X, "X", X)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("training outputs must form a (d, ns) matrix")
    return X


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Linear reduction: eigenpairs of the centered covariance of outputs."""

    Ustar: np.ndarray        # (d, k), orthonormal columns
    eigenvalues: np.ndarray  # (min(d, ns),), descending
    k: int
    data_mean: np.ndarray    # (d,)

    def forward(self, x) -> np.ndarray:
        """Map output-space vectors to reduced coordinates z = U*^T (x - mean)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if x.shape[-1 if not single else 0] != self.data_mean.size and single:
            raise ConfigError(f"expected vectors of length {self.data_mean.size}")
        cols = x[:, None] if single else np.asarray(x).T  # (d, m)
        if cols.shape[0] != self.data_mean.size:
            raise ConfigError(f"expected vectors of length {self.data_mean.size}")
        z = self.Ustar.T @ (cols - self.data_mean[:, None])
        return z[:, 0] if single else z.T

    def backward(self, z) -> np.ndarray:
        """Reconstruct x = U* z + mean."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        rows = z[None, :] if single else z
        if rows.shape[1] != self.k:
            raise ConfigError(f"expected reduced coordinates of length {self.k}")
        x = (self.Ustar @ rows.T) + self.data_mean[:, None]
        return x[:, 0] if single else x.T

    def save(self, path) -> None:
        save_container(path, "pca", {"k": self.k},
                       {"Ustar": self.Ustar, "eigenvalues": self.eigenvalues,
                        "data_mean": self.data_mean})

    @classmethod
    def load(cls, path) -> "PcaModel":
        _, meta, arrays = load_container(path, expect_kind="pca")
        return cls(Ustar=arrays["Ustar"], eigenvalues=arrays["eigenvalues"],
                   k=int(meta["k"]), data_mean=arrays["data_mean"])


def fit_pca(X, k: int | None = None, energy: float | None = None) -> PcaModel:
    """Diagonalize the centered covariance of the output columns.

    Exactly one of ``k`` (fixed dimension) or ``energy`` (smallest k whose
    eigenvalue-energy fraction reaches the target) may be given; default is
    the 0.80 energy target.
    """
    X = _as_output_matrix(X)
    d, ns = X.shape
    if ns < 2:
        raise ConfigError(f"fit_pca needs at least 2 samples, got {ns}")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    lam = s ** 2
    kk = _select_k(lam, k, energy)
    Ustar = np.ascontiguousarray(U[:, :kk])
    _anchor_signs(Ustar, Xc.T @ Ustar, X)
    return PcaModel(Ustar=Ustar, eigenvalues=lam, k=kk, data_mean=mean)


def gaussian_kernel(xi, xj, beta: float) -> float:
    """exp(-beta * ||xi - xj||^2)."""
    if beta <= 0:
        raise ConfigError(f"kernel width beta must be positive, got {beta}")
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape:
        raise ConfigError("kernel arguments must have equal length")
    diff = xi - xj
    return float(np.exp(-beta * np.dot(diff, diff)))


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared distances between columns of A (d,n) and B (d,m)."""
    a2 = np.sum(A * A, axis=0)
    b2 = np.sum(B * B, axis=0)
    sq = a2[:, None] + b2[None, :] - 2.0 * (A.T @ B)
    return np.clip(sq, 0.0, None)


@dataclass(frozen=True, eq=False)
class KpcaModel:
    """Kernel PCA state: eigenpairs of the double-centered Gram matrix.

    Keeps the training outputs (needed by the pre-image map) plus the Gram
    centering statistics so out-of-sample vectors get the same correction
    applied at fit time.
    """

    beta: float
    Vstar: np.ndarray            # (ns, k), orthonormal columns
    eigenvalues: np.ndarray      # (ns,), descending
    training_outputs: np.ndarray  # (d, ns)
    gram_row_means: np.ndarray   # (ns,)
    gram_total_mean: float
    k: int
    latent: np.ndarray = field(default=None)   # (ns, k) fitted coordinates
    eps_hit: float = 0.0

    @property
    def ns(self) -> int:
        return self.training_outputs.shape[1]

    def forward(self, x) -> np.ndarray:
        """Centered kernel projection z = V*^T g_c(x)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        cols = x[:, None] if single else np.asarray(x).T  # (d, m)
        if cols.shape[0] != self.training_outputs.shape[0]:
            raise ConfigError("output-space dimension mismatch")
        g = np.exp(-self.beta * _sq_dists(self.training_outputs, cols))
        gc = (g - g.mean(axis=0)[None, :] - self.gram_row_means[:, None]
              + self.gram_total_mean)
        z = self.Vstar.T @ gc
        return z[:, 0] if single else z.T

    def backward(self, z) -> np.ndarray:
        """Pre-image: inverse-square-distance blend of training outputs."""
        if self.ns == 0:
            raise ConfigError("degenerate model: no training outputs")
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        rows = z[None, :] if single else z
        if rows.shape[1] != self.k:
            raise ConfigError(f"expected reduced coordinates of length {self.k}")
        x = _backend.preimage_blend(np.ascontiguousarray(rows),
                                    np.ascontiguousarray(self.latent),
                                    np.ascontiguousarray(self.training_outputs),
                                    self.eps_hit)
        return x[:, 0] if single else x.T

    def backward_weights(self, z) -> np.ndarray:
        """Blend weights for one latent coordinate (diagnostic helper)."""
        z = np.asarray(z, dtype=float).ravel()
        d2 = np.sum((self.latent - z[None, :]) ** 2, axis=1)
        hit = np.where(d2 < self.eps_hit ** 2)[0]
        w = np.zeros(self.ns)
        if hit.size:
            w[d2.argmin()] = 1.0
            return w
        inv = d2.min() / d2
        return inv / inv.sum()

    def save(self, path) -> None:
        save_container(path, "kpca",
                       {"k": self.k, "beta": self.beta,
                        "gram_total_mean": self.gram_total_mean,
                        "eps_hit": self.eps_hit},
                       {"Vstar": self.Vstar, "eigenvalues": self.eigenvalues,
                        "training_outputs": self.training_outputs,
                        "gram_row_means": self.gram_row_means,
                        "latent": self.latent})

    @classmethod
    def load(cls, path) -> "KpcaModel":
        _, meta, arrays = load_container(path, expect_kind="kpca")
        return cls(beta=float(meta["beta"]), Vstar=arrays["Vstar"],
                   eigenvalues=arrays["eigenvalues"],
                   training_outputs=arrays["training_outputs"],
                   gram_row_means=arrays["gram_row_means"],
                   gram_total_mean=float(meta["gram_total_mean"]),
                   k=int(meta["k"]), latent=arrays["latent"],
                   eps_hit=float(meta["eps_hit"]))


def gram_matrix(X, beta: float) -> np.ndarray:
    """Gaussian Gram matrix of the output columns (uncentered)."""
    if beta <= 0:
        raise ConfigError(f"kernel width beta must be positive, got {beta}")
    X = _as_output_matrix(X)
    sq = _sq_dists(X, X)
    np.fill_diagonal(sq, 0.0)
    G = np.exp(-beta * sq)
    return (G + G.T) / 2.0


def fit_kpca(X, beta: float = DEFAULT_BETA, k: int | None = None,
             energy: float | None = None) -> KpcaModel:
    """Build, double-center, and diagonalize the Gaussian Gram matrix."""
    X = _as_output_matrix(X)
    d, ns = X.shape
    if ns < 2:
        raise ConfigError(f"fit_kpca needs at least 2 samples, got {ns}")
    G = gram_matrix(X, beta)
    if not np.isfinite(G).all():
        raise NumericalError("non-finite kernel values in the Gram matrix")
    row_means = G.mean(axis=1)
    total_mean = float(G.mean())
    Gc = G - row_means[:, None] - row_means[None, :] + total_mean
    lam, V = np.linalg.eigh(Gc)
    lam = lam[::-1]
    V = V[:, ::-1]
    lam = _clamped_spectrum(lam)
    kk = _select_k(lam, k, energy)
    Vstar = np.ascontiguousarray(V[:, :kk])
    latent = Vstar * lam[:kk][None, :]   # rows: fitted coordinates
    _anchor_signs(Vstar, latent, X)
    diameter = float(pdist(latent).max()) if ns > 1 else 0.0
    return KpcaModel(beta=float(beta), Vstar=Vstar,
                     eigenvalues=lam, training_outputs=X,
                     gram_row_means=row_means, gram_total_mean=total_mean,
                     k=kk, latent=latent, eps_hit=1e-12 * diameter)


def load_reduction(path):
    """Load either reduction model by its container kind tag."""
    kind, _, _ = load_container(path)
    if kind == "pca":
        return PcaModel.load(path)
    if kind == "kpca":
        return KpcaModel.load(path)
    raise ConfigError(f"{path}: not a reduction model (kind '{kind}')")
