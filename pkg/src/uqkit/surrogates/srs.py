"""Separated response surface: greedy rank-one fitting on 1D FE meshes.

The surface is a sum of rank-one terms, each the product of univariate
sectional modes represented by nodal values on a uniform mesh with linear
shape functions.  Terms are computed greedily against the current residual;
each rank-one term is resolved by alternating directions: with all modes
but one frozen, the free mode solves a small weighted least-squares system,
optionally augmented with a gradient-penalty smoothing term.

Three nested loops: greedy over terms, alternation sweeps until the term
amplitude stabilizes, and the per-direction sectional solves inside each
sweep.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .. import _backend
from ..container import save_container
from ..errors import ConfigError, NumericalError

DEFAULT_NII = 10
DEFAULT_MARGIN = 0.05
DEFAULT_SMOOTHING = 1e-3
DEFAULT_TOL_ALT = 1e-6
DEFAULT_TOL_GREEDY = 1e-4
DEFAULT_MAX_RANK = 20
DEFAULT_MAX_SWEEPS = 50


def quadrature_weights(H, mode: str = "uniform", _mc_points: int = 200,
                       _mc_seed: int = 20240) -> np.ndarray:
    """Weights turning the sample sum into a quadrature, normalized to 1.

    ``uniform`` is the Monte Carlo rule w_k = 1/ns.  ``voronoi`` weights each
    sample by its Voronoi cell share of the sampled box: exact midpoint cells
    in one dimension, a seeded nearest-neighbor volume estimate (``_mc_points``
    per sample) in higher dimensions.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    ns, nd = H.shape
    if ns < 1:
        raise ConfigError("quadrature_weights: empty sample set")
    if mode == "uniform":
        return np.full(ns, 1.0 / ns)
    if mode != "voronoi":
        raise ConfigError(f"unknown quadrature mode '{mode}'")
    if ns == 1:
        return np.array([1.0])
    if nd == 1:
        x = H[:, 0]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        edges = np.concatenate([[xs[0]], (xs[1:] + xs[:-1]) / 2.0, [xs[-1]]])
        lengths = np.diff(edges)
        total = lengths.sum()
        if total <= 0:
            return np.full(ns, 1.0 / ns)
        w = np.empty(ns)
        w[order] = lengths / total
        return w
    from scipy.spatial import cKDTree
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(_mc_seed)))
    lo, hi = H.min(axis=0), H.max(axis=0)
    cloud = rng.uniform(lo, hi, size=(_mc_points * ns, nd))
    _, nearest = cKDTree(H).query(cloud)
    counts = np.bincount(nearest, minlength=ns)
    return counts / counts.sum()


@dataclass(frozen=True, eq=False)
class SectionalMesh:
    """Uniform 1D node grid covering the training range of one input."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.size < 2 or (np.diff(nodes) <= 0).any():
            raise ConfigError("mesh needs >= 2 strictly increasing nodes")
        object.__setattr__(self, "nodes", nodes)

    @property
    def nii(self) -> int:
        return self.nodes.size

    @classmethod
    def covering(cls, values, nii: int, margin: float = DEFAULT_MARGIN
                 ) -> "SectionalMesh":
        values = np.asarray(values, dtype=float)
        lo, hi = values.min(), values.max()
        span = hi - lo
        if span == 0.0:
            span = max(abs(lo), 1.0)
        pad = margin * span
        return cls(np.linspace(lo - pad, hi + pad, int(nii)))

    def locate(self, values):
        """Element index plus left/right hat-function values per sample.

        Out-of-mesh values clamp onto the boundary element.
        """
        x = np.clip(np.asarray(values, dtype=float),
                    self.nodes[0], self.nodes[-1])
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1,
                      0, self.nii - 2)
        t = (x - self.nodes[idx]) / (self.nodes[idx + 1] - self.nodes[idx])
        return idx.astype(np.int64), 1.0 - t, t

    def gradient_penalty(self) -> np.ndarray:
        """G^T G for the piecewise-constant slope operator (one integration
        point per element)."""
        h = np.diff(self.nodes)
        n = self.nii
        G = np.zeros((n - 1, n))
        rows = np.arange(n - 1)
        G[rows, rows] = -1.0 / h
        G[rows, rows + 1] = 1.0 / h
        return G.T @ G


@dataclass(frozen=True, eq=False)
class SrsModel:
    """Fitted separated surface: amplitudes + unit-norm sectional modes."""

    sigmas: np.ndarray          # (nf,)
    coeffs: np.ndarray          # (nf, nd, max_nii) padded nodal values
    meshes: tuple               # nd SectionalMesh
    lambda_smooth: float
    quad_weights: np.ndarray    # (ns,) training weights
    residual_history: np.ndarray = field(default=None)  # weighted RMS per rank
    sweep_counts: np.ndarray = field(default=None)

    @property
    def nd(self) -> int:
        return len(self.meshes)

    @property
    def rank(self) -> int:
        return self.sigmas.size

    def _packed(self):
        max_n = max(m.nii for m in self.meshes)
        nodes = np.zeros((self.nd, max_n))
        n_nodes = np.zeros(self.nd, dtype=np.int64)
        for i, m in enumerate(self.meshes):
            nodes[i, :m.nii] = m.nodes
            n_nodes[i] = m.nii
        return nodes, n_nodes

    def predict(self, H) -> np.ndarray:
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.shape[1] != self.nd:
            raise ConfigError(f"expected {self.nd} input columns")
        nodes, n_nodes = self._packed()
        return _backend.eval_separated(
            np.ascontiguousarray(nodes), n_nodes,
            np.ascontiguousarray(self.coeffs),
            np.ascontiguousarray(self.sigmas),
            np.ascontiguousarray(H))

    def eval(self, h) -> float:
        return float(self.predict(np.asarray(h, dtype=float)[None, :])[0])

    def clamp_count(self, H) -> int:
        """How many query coordinates fall outside the sectional meshes."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        count = 0
        for i, m in enumerate(self.meshes):
            count += int(((H[:, i] < m.nodes[0])
                          | (H[:, i] > m.nodes[-1])).sum())
        return count

    def save(self, path, extra_meta: dict | None = None) -> None:
        nodes, n_nodes = self._packed()
        meta = {"lambda_smooth": self.lambda_smooth, "nd": self.nd,
                **(extra_meta or {})}
        save_container(path, "srs", meta,
                       {"sigmas": self.sigmas, "coeffs": self.coeffs,
                        "nodes": nodes, "n_nodes": n_nodes,
                        "quad_weights": self.quad_weights,
                        "residual_history": self.residual_history,
                        "sweep_counts": self.sweep_counts})

    @classmethod
    def from_arrays(cls, meta, arrays) -> "SrsModel":
        n_nodes = arrays["n_nodes"]
        meshes = tuple(SectionalMesh(arrays["nodes"][i, :int(n)])
                       for i, n in enumerate(n_nodes))
        return cls(sigmas=arrays["sigmas"], coeffs=arrays["coeffs"],
                   meshes=meshes, lambda_smooth=float(meta["lambda_smooth"]),
                   quad_weights=arrays["quad_weights"],
                   residual_history=arrays.get("residual_history"),
                   sweep_counts=arrays.get("sweep_counts"))


def _weighted_rms(w: np.ndarray, e: np.ndarray) -> float:
    return float(np.sqrt(np.dot(w, e * e)))


def _solve_sectional(M, f, penalty, smoothing):
    lam = 0.0
    if smoothing > 0.0:
        tr_pen = np.trace(penalty)
        lam = smoothing * np.trace(M) / tr_pen if tr_pen > 0 else 0.0
    system = M + lam * penalty
    try:
        cho = scipy.linalg.cho_factor(system, check_finite=False)
        return scipy.linalg.cho_solve(cho, f, check_finite=False)
    except scipy.linalg.LinAlgError:
        empty = np.flatnonzero(np.diag(M) == 0.0)
        hint = (f" (shape functions {empty.tolist()} have no sample in "
                "their support)" if empty.size else "")
        raise NumericalError(
            "singular sectional system" + hint +
            "; use smoothing > 0 or a coarser mesh") from None


def fit_srs(H, y, nii=DEFAULT_NII, smoothing: float = DEFAULT_SMOOTHING,
            max_rank: int = DEFAULT_MAX_RANK, tol_alt: float = DEFAULT_TOL_ALT,
            tol_greedy: float = DEFAULT_TOL_GREEDY,
            max_alt_iters: int = DEFAULT_MAX_SWEEPS,
            weights=None, margin: float = DEFAULT_MARGIN) -> SrsModel:
    """Greedy alternating-directions fit of the separated surface.

    Parameters
    ----------
    H, y : training inputs (ns, nd) and scalar targets (ns,).
    nii : nodes per sectional mesh; an int or one value per dimension.
    smoothing : scale-relative gradient-penalty factor; each sectional solve
        uses ``lambda = smoothing * trace(M) / trace(G^T G)``.  0 disables.
    max_rank, tol_greedy : greedy loop budget and stop ratio sigma_j/sigma_1.
    tol_alt, max_alt_iters : alternation stop (relative change of the term
        amplitude) and sweep budget.
    weights : quadrature weights; None/str forms are passed to
        :func:`quadrature_weights`.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ns, nd = H.shape
    if y.size != ns:
        raise ConfigError("fit_srs: y length must match rows of H")
    if not np.isfinite(y).all() or not np.isfinite(H).all():
        raise ConfigError("fit_srs: inputs must be finite")
    if smoothing < 0:
        raise ConfigError("smoothing factor must be >= 0")
    nii_per_dim = ([int(nii)] * nd if np.isscalar(nii)
                   else [int(v) for v in nii])
    if len(nii_per_dim) != nd:
        raise ConfigError("nii must be scalar or one value per dimension")
    if ns < nd * max(nii_per_dim):
        warnings.warn(f"only {ns} samples for {nd}x{max(nii_per_dim)} "
                      "sectional unknowns; fit may be underdetermined",
                      stacklevel=2)
    if weights is None or isinstance(weights, str):
        w = quadrature_weights(H, weights or "uniform")
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != ns:
            raise ConfigError("weights length must match sample count")

    meshes = [SectionalMesh.covering(H[:, i], nii_per_dim[i], margin)
              for i in range(nd)]
    locs = [m.locate(H[:, i]) for i, m in enumerate(meshes)]
    penalties = [m.gradient_penalty() for m in meshes]

    def gather(i, a):
        idx, left, right = locs[i]
        return a[idx] * left + a[idx + 1] * right

    residual = y.copy()
    history = [_weighted_rms(w, residual)]
    sigmas, term_coeffs, sweeps_used = [], [], []
    tiny = 1e-300

    for _ in range(max_rank):
        modes = [np.ones(m.nii) for m in meshes]
        vals = [np.ones(ns) for _ in range(nd)]
        sigma_prev = None
        sweeps = 0
        for sweeps in range(1, max_alt_iters + 1):
            for g in range(nd):
                theta = np.ones(ns)
                for i in range(nd):
                    if i != g:
                        theta *= vals[i]
                idx, left, right = locs[g]
                M, f = _backend.sectional_system(
                    idx, np.ascontiguousarray(left),
                    np.ascontiguousarray(right),
                    np.ascontiguousarray(w * theta * theta),
                    np.ascontiguousarray(w * theta * residual),
                    meshes[g].nii)
                modes[g] = _solve_sectional(M, f, penalties[g], smoothing)
                vals[g] = gather(g, modes[g])
            term = np.ones(ns)
            for i in range(nd):
                term *= vals[i]
            sigma_now = _weighted_rms(w, term)
            if sigma_prev is not None and (
                    abs(sigma_now - sigma_prev) <= tol_alt * max(sigma_now, tiny)):
                break
            sigma_prev = sigma_now

        norms = [_weighted_rms(w, vals[i]) for i in range(nd)]
        if min(norms) <= 0.0:
            break  # alternation produced a null mode: nothing left to extract
        sigma_j = float(np.prod(norms))
        term_coeffs.append([modes[i] / norms[i] for i in range(nd)])
        sigmas.append(sigma_j)
        sweeps_used.append(sweeps)
        residual = residual - term
        history.append(_weighted_rms(w, residual))
        if sigma_j < tol_greedy * sigmas[0] or history[-1] == 0.0:
            break

    if not sigmas:
        raise NumericalError("fit_srs extracted no terms (zero target?)")

    max_n = max(m.nii for m in meshes)
    coeffs = np.zeros((len(sigmas), nd, max_n))
    for j, term in enumerate(term_coeffs):
        for i in range(nd):
            coeffs[j, i, :meshes[i].nii] = term[i]
    return SrsModel(sigmas=np.asarray(sigmas), coeffs=coeffs,
                    meshes=tuple(meshes), lambda_smooth=float(smoothing),
                    quad_weights=w, residual_history=np.asarray(history),
                    sweep_counts=np.asarray(sweeps_used, dtype=np.int64))


def eval_srs(model: SrsModel, h) -> float:
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        return model.eval(h)
    return model.predict(h)
