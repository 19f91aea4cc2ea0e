"""Second-order polynomial response surface fit by least squares.

Monomial ordering is fixed: constant, the linear terms, the squares, then
the cross products h_i h_j with i < j.  Higher orders are rejected: sparse
tails of the sampling make high-order polynomial fits oscillate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..container import save_container
from ..errors import ConfigError, NumericalError


def n_coefficients(nd: int) -> int:
    return 1 + 2 * nd + nd * (nd - 1) // 2


def monomial_names(nd: int) -> list[str]:
    names = ["1"]
    names += [f"h{i + 1}" for i in range(nd)]
    names += [f"h{i + 1}^2" for i in range(nd)]
    names += [f"h{i + 1}*h{j + 1}" for i in range(nd)
              for j in range(i + 1, nd)]
    return names


def design_matrix(H) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    ns, nd = H.shape
    cols = [np.ones(ns)]
    cols += [H[:, i] for i in range(nd)]
    cols += [H[:, i] ** 2 for i in range(nd)]
    cols += [H[:, i] * H[:, j] for i in range(nd) for j in range(i + 1, nd)]
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class PrsModel:
    coefficients: np.ndarray
    nd: int

    def predict(self, Hq) -> np.ndarray:
        Hq = np.atleast_2d(np.asarray(Hq, dtype=float))
        if Hq.shape[1] != self.nd:
            raise ConfigError(f"expected {self.nd} input columns")
        return design_matrix(Hq) @ self.coefficients

    def eval(self, h) -> float:
        h = np.asarray(h, dtype=float).ravel()
        if h.size != self.nd:
            raise ConfigError(f"expected {self.nd} input coordinates")
        return float(self.predict(h[None, :])[0])

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"nd": self.nd, **(extra_meta or {})}
        save_container(path, "prs", meta, {"coefficients": self.coefficients})

    @classmethod
    def from_arrays(cls, meta, arrays) -> "PrsModel":
        return cls(coefficients=arrays["coefficients"], nd=int(meta["nd"]))


def fit_prs(H, y, order: int = 2) -> PrsModel:
    """Least-squares coefficients via an orthogonal factorization of A.

    Solves the same minimizer as the normal equations (A^T A) c = A^T y.
    """
    if order != 2:
        raise ConfigError("only second-order polynomial surfaces are "
                          "supported (higher orders oscillate on sparse "
                          "sample tails)")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    ns, nd = H.shape
    if y.size != ns:
        raise ConfigError("fit_prs: y length must match rows of H")
    p = n_coefficients(nd)
    if ns < p:
        raise ConfigError(f"fit_prs needs at least {p} samples for nd={nd}, "
                          f"got {ns}")
    A = design_matrix(H)
    c, _, rank, sv = np.linalg.lstsq(A, y, rcond=None)
    if rank < p:
        _, _, Vt = np.linalg.svd(A, full_matrices=False)
        names = monomial_names(nd)
        deficient = []
        for null_vec in Vt[rank:]:
            deficient.append(names[int(np.argmax(np.abs(null_vec)))])
        raise NumericalError(
            "rank-deficient design matrix; dependent monomial directions: "
            + ", ".join(sorted(set(deficient))))
    return PrsModel(coefficients=c, nd=nd)
