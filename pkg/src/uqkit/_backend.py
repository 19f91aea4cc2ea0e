"""Kernel backend selection.

The compiled core in ``_kernels_cy`` and the numpy implementations in
``_kernels_py`` expose the same three functions with identical semantics.
Routing follows the measurements in ``benchmarks/bench_kernels.py``:

* ``sectional_system`` and ``eval_separated`` are loop-shaped (small
  per-sample state, no large matrix products) and run ~3-4x faster
  compiled;
* ``preimage_blend`` is dominated by a dense matrix product, so the numpy
  path (backed by BLAS) wins by a similar factor at production sizes and
  is used even when the extension is present.

Setting UQKIT_PURE_PYTHON to a non-empty value other than ``0`` forces the
numpy implementations everywhere; ``BACKEND`` names the active choice for
the compiled-eligible kernels ("cython" or "python").
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("UQKIT_PURE_PYTHON", "0") not in ("", "0")

if not _force_py:
    try:
        from . import _kernels_cy as _compiled
        BACKEND = "cython"
    except ImportError:
        _compiled = _kernels_py
        BACKEND = "python"
else:
    _compiled = _kernels_py
    BACKEND = "python"


def sectional_system(elem_idx, shp_left, shp_right, coef_mass, coef_rhs,
                     n_nodes):
    return _compiled.sectional_system(elem_idx, shp_left, shp_right,
                                      coef_mass, coef_rhs, n_nodes)


def eval_separated(nodes, n_nodes, coeffs, sigmas, H):
    return _compiled.eval_separated(nodes, n_nodes, coeffs, sigmas, H)


def preimage_blend(Z, Z_train, X_train, eps_hit):
    return _kernels_py.preimage_blend(Z, Z_train, X_train, eps_hit)
