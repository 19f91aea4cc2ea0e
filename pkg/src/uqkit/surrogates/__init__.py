"""Scalar response surfaces over the input space.

Three families behind one fit/evaluate interface: the separated response
surface (greedy rank-one sectional fit), ordinary kriging, and a
second-order polynomial surface.  Every fitted model exposes
``predict(H) -> values`` and ``eval(h) -> float``, saves to the common
container format under its kind tag, and is immutable once fitted.

Screened surrogates (fitted on a subset of input dimensions) are wrapped in
:class:`ScreenedSurrogate`, which keeps the full-input signature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..container import load_container
from ..errors import ConfigError
from .kriging import OkModel, empirical_semivariogram, fit_ok, \
    fit_variogram_range, spherical_variogram
from .polynomial import PrsModel, design_matrix, fit_prs, monomial_names, \
    n_coefficients
from .srs import SectionalMesh, SrsModel, eval_srs, fit_srs, \
    quadrature_weights

_MODEL_KINDS = {"srs": SrsModel, "ok": OkModel, "prs": PrsModel}

__all__ = [
    "OkModel", "PrsModel", "ScreenedSurrogate", "SectionalMesh", "SrsModel",
    "design_matrix", "empirical_semivariogram", "eval_srs", "fit_ok",
    "fit_prs", "fit_srs", "fit_surrogate", "fit_variogram_range",
    "load_surrogate", "monomial_names", "n_coefficients",
    "quadrature_weights", "save_surrogate", "spherical_variogram",
]


@dataclass(frozen=True, eq=False)
class ScreenedSurrogate:
    """Adapter evaluating an inner model on a subset of input columns."""

    model: object
    active_dims: tuple
    nd_full: int

    def predict(self, Hq) -> np.ndarray:
        Hq = np.atleast_2d(np.asarray(Hq, dtype=float))
        if Hq.shape[1] != self.nd_full:
            raise ConfigError(f"expected {self.nd_full} input columns")
        return self.model.predict(Hq[:, list(self.active_dims)])

    def eval(self, h) -> float:
        return float(self.predict(np.asarray(h, dtype=float)[None, :])[0])


def fit_surrogate(kind: str, H, y, **options):
    if kind == "srs":
        return fit_srs(H, y, **options)
    if kind == "ok":
        return fit_ok(H, y, **options)
    if kind == "prs":
        return fit_prs(H, y, **options)
    raise ConfigError(f"unknown surrogate kind '{kind}' "
                      "(expected srs, ok, or prs)")


def save_surrogate(model, path, active_dims=None, nd_full=None,
                   extra_meta: dict | None = None) -> None:
    """Save any surrogate; screening metadata rides along in the header."""
    if isinstance(model, ScreenedSurrogate):
        active_dims = list(model.active_dims)
        nd_full = model.nd_full
        model = model.model
    meta = dict(extra_meta or {})
    if active_dims is not None:
        meta["active_dims"] = [int(i) for i in active_dims]
        meta["nd_full"] = int(nd_full)
    model.save(path, extra_meta=meta)


def load_surrogate(path):
    kind, meta, arrays = load_container(path)
    cls = _MODEL_KINDS.get(kind)
    if cls is None:
        raise ConfigError(f"{path}: not a surrogate container (kind '{kind}')")
    model = cls.from_arrays(meta, arrays)
    if "active_dims" in meta:
        return ScreenedSurrogate(model=model,
                                 active_dims=tuple(meta["active_dims"]),
                                 nd_full=int(meta["nd_full"]))
    return model
