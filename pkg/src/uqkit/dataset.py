"""Input distributions, reproducible sampling, and training-set handling.

Sampling uses numpy's Philox generator, a counter-based RNG with a stable
cross-platform stream.  Seeding convention: a study is identified by one
integer seed; independent streams for different pipeline stages are derived
with :func:`derive_seed`, which feeds ``SeedSequence([seed, stream])``.
Draws are row-ordered, so the first ``m`` samples of an ``n``-sample draw
(same seed) equal the full ``m``-sample draw -- the property the sampling
convergence driver relies on to reuse earlier samples.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import load_container, save_container
from .errors import ConfigError


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(seed: int, stream: int) -> int:
    """Derive an independent integer sub-seed for a named stage stream."""
    ss = np.random.SeedSequence([int(seed), int(stream)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class InputDistribution:
    """Per-dimension normal laws for the stochastic inputs.

    Dimensions are mutually uncorrelated; only the normal law is supported,
    but each dimension carries a law tag so other laws can be added without
    a format change.
    """

    means: np.ndarray
    stds: np.ndarray
    laws: tuple = ()

    def __post_init__(self):
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        stds = np.atleast_1d(np.asarray(self.stds, dtype=float))
        if means.shape != stds.shape or means.ndim != 1:
            raise ConfigError("means and stds must be 1-d arrays of equal length")
        if means.size == 0:
            raise ConfigError("distribution needs at least one dimension")
        if not (np.isfinite(means).all() and np.isfinite(stds).all()):
            raise ConfigError("distribution parameters must be finite")
        if (stds < 0).any():
            raise ConfigError("std must be >= 0 for every dimension")
        laws = self.laws or ("normal",) * means.size
        if len(laws) != means.size:
            raise ConfigError("one law tag per dimension required")
        for law in laws:
            if law != "normal":
                raise ConfigError(f"unsupported law '{law}' (only 'normal')")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "laws", tuple(laws))

    @property
    def nd(self) -> int:
        return self.means.size


def sample_inputs(dist: InputDistribution, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. input vectors; returns an (n, nd) matrix.

    Deterministic given ``seed``; column ``j`` is N(mean_j, std_j^2).
    """
    if n < 1:
        raise ConfigError("sample_inputs: requested an empty draw (n < 1)")
    gen = _rng(seed)
    z = gen.standard_normal((int(n), dist.nd))
    return dist.means + dist.stds * z


def qoi_average(x) -> float:
    """Scalar quantity of interest: the component average of an output vector."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ConfigError("qoi_average: empty vector")
    return float(x.mean())


def qoi_average_columns(X: np.ndarray) -> np.ndarray:
    """qoi_average applied to every column of a (d, ns) output matrix."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ConfigError("qoi_average_columns: empty matrix")
    return X.mean(axis=0)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Paired inputs ``H`` (ns, nd) and outputs ``X`` (d, ns).

    Column ``i`` of ``X`` is the model output for row ``i`` of ``H``.
    Immutable after construction; safe to share across workers.
    """

    H: np.ndarray
    X: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if H.ndim != 2 or X.ndim != 2:
            raise ConfigError("H and X must be matrices")
        if X.shape[1] != H.shape[0]:
            raise ConfigError(f"column count of X ({X.shape[1]}) must equal "
                              f"row count of H ({H.shape[0]})")
        if H.shape[0] < 1 or X.shape[0] < 1:
            raise ConfigError("training set needs ns >= 1 and d >= 1")
        if not (np.isfinite(H).all() and np.isfinite(X).all()):
            raise ConfigError("training set entries must be finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "X", X)

    @property
    def ns(self) -> int:
        return self.H.shape[0]

    @property
    def nd(self) -> int:
        return self.H.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[0]

    def save(self, path) -> None:
        meta = {"ns": self.ns, "nd": self.nd, "d": self.d,
                "seed": self.seed, **self.meta}
        # X sample-contiguous (column-major), H row-major.
        save_container(path, "training_set", meta,
                       {"H": np.ascontiguousarray(self.H),
                        "X": np.asfortranarray(self.X)})

    @classmethod
    def load(cls, path) -> "TrainingSet":
        _, meta, arrays = load_container(path, expect_kind="training_set")
        extra = {k: v for k, v in meta.items()
                 if k not in ("ns", "nd", "d", "seed")}
        return cls(H=arrays["H"], X=arrays["X"], seed=meta.get("seed"),
                   meta=extra)

    def to_csv(self, path) -> None:
        """Interoperability export: one sample per row, h-values then x-values."""
        header = ",".join([f"h{i + 1}" for i in range(self.nd)]
                          + [f"x{j + 1}" for j in range(self.d)])
        table = np.hstack([self.H, self.X.T])
        np.savetxt(path, table, fmt="%.17g", delimiter=",",
                   header=header, comments="")


def assemble_training_set(H, outputs, seed: int | None = None,
                          meta: dict | None = None) -> TrainingSet:
    """Stack per-sample output vectors into a TrainingSet.

    ``outputs`` is a sequence of d-vectors, one per row of ``H``, in order.
    """
    H = np.asarray(H, dtype=float)
    outputs = [np.asarray(o, dtype=float).ravel() for o in outputs]
    if len(outputs) != H.shape[0]:
        raise ConfigError(f"got {len(outputs)} outputs for {H.shape[0]} input rows")
    lengths = {o.size for o in outputs}
    if len(lengths) > 1:
        raise ConfigError("all outputs must have the same length")
    X = np.column_stack(outputs)
    return TrainingSet(H=H, X=X, seed=seed, meta=meta or {})


def parse_distribution_config(path) -> InputDistribution:
    """Read the key-value distribution spec (one ``[dimension.i]`` block each).

    Example::

        [dimension.1]
        mean = 1.2
        std = 0.12
    """
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"distribution config not found: {path}")
    parser.read(path)
    blocks = []
    for section in parser.sections():
        if not section.startswith("dimension."):
            continue
        try:
            index = int(section.split(".", 1)[1])
        except ValueError:
            raise ConfigError(f"bad section name [{section}]") from None
        blocks.append((index, parser[section]))
    if not blocks:
        raise ConfigError(f"{path}: no [dimension.N] sections found")
    blocks.sort()
    means, stds, laws = [], [], []
    for index, block in blocks:
        try:
            means.append(float(block["mean"]))
            stds.append(float(block["std"]))
        except KeyError as exc:
            raise ConfigError(f"[dimension.{index}] missing key {exc}") from None
        laws.append(block.get("law", "normal"))
    return InputDistribution(means=np.array(means), stds=np.array(stds),
                             laws=tuple(laws))


def write_distribution_config(dist: InputDistribution, path) -> None:
    lines = []
    for i in range(dist.nd):
        lines.append(f"[dimension.{i + 1}]")
        lines.append(f"mean = {dist.means[i]!r}")
        lines.append(f"std = {dist.stds[i]!r}")
        lines.append(f"law = {dist.laws[i]}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
