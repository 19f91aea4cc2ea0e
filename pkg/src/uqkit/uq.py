"""Monte Carlo propagation and distribution comparison machinery.

Histograms are uniform-bin frequency tables; the Kullback-Leibler
divergence compares two of them after rebinning onto a shared partition
(union domain, larger bin count) and additively smoothing both sides so
empty bins stay finite.  The smoothing scale 1/(max sample count * bins)
vanishes as sampling grows.  ``kl_reference`` is the divergence from the
uniform histogram (the entropy of the histogram), used to express KL
values relative to an absolute reference.

The sampling-size convergence driver grows a training set geometrically,
refits the kernel reduction, and stops when the KL divergence between the
latent-coordinate histograms of consecutive iterations drops below
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataset import InputDistribution, sample_inputs
from .dimred import fit_kpca
from .errors import ConfigError, NumericalError

DEFAULT_BINS = 40
DEFAULT_KL_TOL = 1e-2
DEFAULT_SCREEN_THRESHOLD = 0.1


@dataclass(frozen=True, eq=False)
class Histogram:
    """Normalized frequencies over uniform bins of [lo, hi]."""

    lo: float
    hi: float
    freqs: np.ndarray
    sample_count: int

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        if self.lo >= self.hi:
            raise ConfigError(f"histogram domain [{self.lo}, {self.hi}] "
                              "is empty")
        if freqs.size < 1 or (freqs < 0).any():
            raise ConfigError("histogram frequencies must be nonnegative")
        if abs(freqs.sum() - 1.0) > 1e-12:
            raise ConfigError("histogram frequencies must sum to 1")
        object.__setattr__(self, "freqs", freqs)

    @property
    def n_bins(self) -> int:
        return self.freqs.size

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return (e[:-1] + e[1:]) / 2.0

    def save(self, path) -> None:
        """Plain-text table: header comments plus bin-center/frequency rows."""
        lines = ["# uqkit histogram",
                 f"# lo = {self.lo!r}",
                 f"# hi = {self.hi!r}",
                 f"# n_bins = {self.n_bins}",
                 f"# sample_count = {self.sample_count}"]
        for c, f in zip(self.centers, self.freqs):
            lines.append(f"{c!r} {f!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Histogram":
        meta, freqs = {}, []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                continue
            freqs.append(float(line.split()[1]))
        try:
            return cls(lo=float(meta["lo"]), hi=float(meta["hi"]),
                       freqs=np.asarray(freqs),
                       sample_count=int(meta["sample_count"]))
        except KeyError as exc:
            raise ConfigError(f"{path}: malformed histogram file "
                              f"(missing {exc})") from None


def build_histogram(samples, n_bins: int = DEFAULT_BINS,
                    domain=None) -> Histogram:
    """Count samples into uniform bins; frequencies are counts / n.

    Interior bins are right-open, so a sample exactly on an inner edge goes
    to the bin on its right; the domain maximum lands in the last bin.  The
    automatic domain is [min, max] of the samples, expanded symmetrically
    when all samples coincide.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ConfigError("build_histogram: empty sample set")
    if n_bins < 2:
        raise ConfigError("build_histogram needs n_bins >= 2")
    if domain is None:
        lo, hi = float(samples.min()), float(samples.max())
        if lo == hi:
            pad = max(abs(lo), 1.0) * 1e-9
            lo, hi = lo - pad, hi + pad
    else:
        lo, hi = (float(v) for v in domain)
        if lo >= hi:
            raise ConfigError(f"histogram domain [{lo}, {hi}] is empty")
    counts, _ = np.histogram(samples, bins=n_bins, range=(lo, hi))
    return Histogram(lo=lo, hi=hi, freqs=counts / samples.size,
                     sample_count=int(samples.size))


def rebin(hist: Histogram, lo: float, hi: float, n_bins: int) -> Histogram:
    """Redistribute bin mass onto a new uniform partition by overlap share."""
    if lo >= hi:
        raise ConfigError("rebin: empty target domain")
    old_edges = hist.edges
    new_edges = np.linspace(lo, hi, n_bins + 1)
    freqs = np.zeros(n_bins)
    for m in range(hist.n_bins):
        a, b = old_edges[m], old_edges[m + 1]
        if hist.freqs[m] == 0.0:
            continue
        first = max(int(np.searchsorted(new_edges, a, side="right")) - 1, 0)
        for ell in range(first, n_bins):
            c, d = new_edges[ell], new_edges[ell + 1]
            if c >= b:
                break
            overlap = min(b, d) - max(a, c)
            if overlap > 0:
                freqs[ell] += hist.freqs[m] * overlap / (b - a)
    total = freqs.sum()
    if total <= 0:
        raise ConfigError("rebin: no mass falls inside the target domain")
    return Histogram(lo=lo, hi=hi, freqs=freqs / total,
                     sample_count=hist.sample_count)


def _common_partition(p: Histogram, q: Histogram):
    if p.lo == q.lo and p.hi == q.hi and p.n_bins == q.n_bins:
        return p, q
    lo, hi = min(p.lo, q.lo), max(p.hi, q.hi)
    n = max(p.n_bins, q.n_bins)
    if lo >= hi:
        raise ConfigError("histograms span a zero-width union domain")
    return rebin(p, lo, hi, n), rebin(q, lo, hi, n)


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """Discrete KL divergence D(p || q) with additive smoothing.

    Both histograms are rebinned onto their common partition, then offset
    by eps = 1 / (max sample count * bins) and renormalized, which keeps
    empty bins finite; natural logarithm.  Zero iff the smoothed histograms
    match bin-wise.
    """
    p, q = _common_partition(p, q)
    eps = 1.0 / (max(p.sample_count, q.sample_count) * p.n_bins)
    pf = p.freqs + eps
    qf = q.freqs + eps
    pf = pf / pf.sum()
    qf = qf / qf.sum()
    value = float(np.sum(pf * np.log(pf / qf)))
    if value < -1e-9:
        raise NumericalError(f"KL divergence evaluated to {value}")
    return max(value, 0.0)


def kl_reference(p: Histogram) -> float:
    """Divergence of p from the uniform histogram: sum p log(n p) over p > 0.

    This is the (negated, shifted) entropy of the histogram and serves as
    the normalization reference for relative KL values.
    """
    mask = p.freqs > 0
    pf = p.freqs[mask]
    return float(np.sum(pf * np.log(p.n_bins * pf)))


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    variance: float
    std: float
    n: int


def summary_stats(samples) -> StatsSummary:
    """Sample mean and unbiased (1/(n-1)) variance."""
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < 2:
        raise ConfigError("summary_stats needs at least 2 samples")
    mean = float(samples.mean())
    var = float(samples.var(ddof=1))
    return StatsSummary(mean=mean, variance=var, std=math.sqrt(var), n=n)


def spearman(u, v) -> float:
    """Spearman rank correlation; ties get average ranks."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise ConfigError("spearman: inputs must have equal length")
    if u.size < 3:
        raise ConfigError("spearman needs at least 3 observations")
    ru = rankdata(u)
    rv = rankdata(v)
    if np.all(ru == ru[0]) or np.all(rv == rv[0]):
        raise NumericalError("spearman: zero rank variance (constant input)")
    return float(np.corrcoef(ru, rv)[0, 1])


@dataclass(frozen=True)
class ScreeningResult:
    coefficients: np.ndarray   # one Spearman coefficient per input dimension
    keep: np.ndarray           # boolean flags, |SpC| >= threshold
    threshold: float

    @property
    def active_dims(self) -> list:
        return [int(i) for i in np.flatnonzero(self.keep)]

    def table(self) -> str:
        rows = ["dim spearman keep"]
        for i, (c, k) in enumerate(zip(self.coefficients, self.keep)):
            rows.append(f"h{i + 1} {c:+.6f} {'yes' if k else 'no'}")
        return "\n".join(rows)


def screen_inputs(latent, H, threshold: float = DEFAULT_SCREEN_THRESHOLD
                  ) -> ScreeningResult:
    """Flag input dimensions whose rank correlation with the latent
    coordinate falls below the threshold."""
    latent = np.asarray(latent, dtype=float).ravel()
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != latent.size:
        raise ConfigError("screen_inputs: sample counts differ")
    coeffs = np.array([spearman(latent, H[:, i]) for i in range(H.shape[1])])
    keep = np.abs(coeffs) >= threshold
    return ScreeningResult(coefficients=coeffs, keep=keep,
                           threshold=threshold)


def mc_propagate(surrogates, backmap, dist: InputDistribution, n_mc: int,
                 seed: int, qoi=None) -> np.ndarray:
    """Propagate input uncertainty through surrogates + backward map.

    For each drawn input the latent coordinate is predicted (one surrogate
    per retained component), mapped back to output space, and summarized by
    the quantity of interest (the component average unless ``qoi`` is
    given).  Deterministic given ``seed``.
    """
    if n_mc < 1:
        raise ConfigError("mc_propagate: n_mc must be >= 1")
    surrogates = list(surrogates)
    if len(surrogates) != backmap.k:
        raise ConfigError(f"{len(surrogates)} surrogates for a backward map "
                          f"of latent dimension {backmap.k}")
    H = sample_inputs(dist, n_mc, seed)
    Z = np.column_stack([np.asarray(s.predict(H), dtype=float).ravel()
                         for s in surrogates])
    X = backmap.backward(Z)          # (n_mc, d) rows
    if qoi is None:
        return X.mean(axis=1)
    return np.array([qoi(x) for x in X])


@dataclass(frozen=True)
class ConvergenceStep:
    ns: int
    kl_to_previous: float     # nan on the first step
    dkl0: float
    relative_kl: float
    energy_fraction_1: float


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    schedule: tuple
    final_ns: int
    converged: bool
    kl_tol: float
    latent_histogram: Histogram = field(default=None)

    def to_log(self) -> str:
        lines = [f"# uqkit convergence report (kl_tol = {self.kl_tol!r})"]
        for i, s in enumerate(self.schedule, start=1):
            lines.append(
                f"step={i} ns={s.ns} kl_to_previous={s.kl_to_previous!r} "
                f"dkl0={s.dkl0!r} relative_kl={s.relative_kl!r} "
                f"energy1={s.energy_fraction_1!r}")
        lines.append(f"final_ns={self.final_ns} "
                     f"converged={'yes' if self.converged else 'no'}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_log())


def _normalized_first_latent(model) -> np.ndarray:
    """First latent coordinate divided by sqrt(lambda_1).

    Raw coordinates scale with the eigenvalue, which itself grows with the
    sample count; the normalized coordinate is comparable across iterations
    of the sampling driver.  (Signs are already anchored at fit time.)
    """
    lam1 = model.eigenvalues[0]
    if lam1 <= 0.0:
        return np.zeros(model.ns)
    return model.latent[:, 0] / math.sqrt(lam1)


def converge_sampling(full_model, dist: InputDistribution, start: int = 100,
                      growth: float = 1.5, kl_tol: float = DEFAULT_KL_TOL,
                      n_bins: int = DEFAULT_BINS, seed: int = 0,
                      beta: float = 0.1, max_ns: int = 20000
                      ) -> ConvergenceReport:
    """Grow the training set until the latent histogram stabilizes in KL.

    ``full_model`` maps an (n, nd) block of input rows to a (d, n) block of
    output columns.  Samples are drawn once per iteration with the same
    seed; the counter-based generator guarantees earlier draws are a prefix
    of later ones, so previous samples (and their outputs) are reused.
    """
    if start < 10:
        raise ConfigError("converge_sampling: start must be >= 10")
    if growth <= 1.0:
        raise ConfigError("converge_sampling: growth must be > 1")
    schedule = []
    X_parts, n_done = [], 0
    prev_hist = None
    converged = False
    ns = int(start)
    last_hist = None
    while True:
        H = sample_inputs(dist, ns, seed)
        new = H[n_done:]
        try:
            X_parts.append(np.asarray(full_model(new), dtype=float))
        except Exception as exc:
            index = _locate_model_failure(full_model, new, n_done)
            raise NumericalError(
                f"full model failed on sample index {index}: {exc}") from exc
        n_done = ns
        X = np.hstack(X_parts)
        model = fit_kpca(X, beta=beta, k=1)
        latent = _normalized_first_latent(model)
        hist = build_histogram(latent, n_bins)
        total = float(model.eigenvalues.sum())
        energy1 = (float(model.eigenvalues[0]) / total if total > 0
                   else float("nan"))
        if prev_hist is None:
            schedule.append(ConvergenceStep(
                ns=ns, kl_to_previous=float("nan"), dkl0=kl_reference(hist),
                relative_kl=float("nan"), energy_fraction_1=energy1))
        else:
            kl = kl_divergence(hist, prev_hist)
            dkl0 = kl_reference(hist)
            rel = kl / dkl0 if dkl0 > 0 else float("inf")
            schedule.append(ConvergenceStep(
                ns=ns, kl_to_previous=kl, dkl0=dkl0, relative_kl=rel,
                energy_fraction_1=energy1))
            if kl < kl_tol:
                converged = True
        prev_hist = hist
        last_hist = hist
        if converged:
            break
        next_ns = int(math.ceil(growth * ns))
        if next_ns > max_ns:
            break
        ns = next_ns
    return ConvergenceReport(schedule=tuple(schedule), final_ns=n_done,
                             converged=converged, kl_tol=kl_tol,
                             latent_histogram=last_hist)


def _locate_model_failure(full_model, H_block, offset: int) -> int:
    for i, row in enumerate(np.atleast_2d(H_block)):
        try:
            full_model(row[None, :])
        except Exception:
            return offset + i
    return offset


def mode_split(hist: Histogram, smooth_bins: int = 5):
    """Locate a two-mode structure; returns (bimodal, minor_mass, split).

    Peaks and the valley are found on a moving-average profile (raw bin
    counts are noisy exactly where it matters, in the low-density gap);
    masses are then split from the raw frequencies at the valley bin edge.
    Modes qualify when the smoothed valley is no higher than half the
    smaller smoothed peak.  Returns ``(False, nan, nan)`` for unimodal
    shapes.
    """
    f = hist.freqs
    n = f.size
    kernel = np.ones(min(smooth_bins, n))
    sm = np.convolve(f, kernel, mode="same") / np.convolve(
        np.ones(n), kernel, mode="same")
    peaks = [i for i in range(n)
             if (i == 0 or sm[i] >= sm[i - 1])
             and (i == n - 1 or sm[i] > sm[i + 1]) and sm[i] > 0]
    if len(peaks) < 2:
        return False, float("nan"), float("nan")
    peaks.sort(key=lambda i: sm[i], reverse=True)
    primary = peaks[0]
    for second in peaks[1:]:
        a, b = sorted((primary, second))
        if b - a <= 1:
            continue
        valley = a + 1 + int(np.argmin(sm[a + 1:b]))
        if sm[valley] <= 0.5 * min(sm[primary], sm[second]):
            left = float(f[:valley].sum())
            right = float(f[valley:].sum())
            split = float(hist.edges[valley])
            return True, min(left, right), split
    return False, float("nan"), float("nan")
