"""Command-line front end: generate -> reduce -> fit -> uq -> compare.

Each stage writes its artifacts plus a ``manifest_<stage>.json`` capturing
the fully resolved parameters; ``uqkit replay MANIFEST`` re-executes a
stage from that record.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import configparser
import functools
import json
import shlex
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import (InputDistribution, TrainingSet, assemble_training_set,
                      parse_distribution_config, sample_inputs)
from .dimred import fit_kpca, fit_pca, load_reduction
from .errors import ConfigError, NumericalError
from .manifest import load_manifest, write_manifest
from .surrogates import (ScreenedSurrogate, fit_surrogate, load_surrogate,
                         monomial_names, save_surrogate)
from .synthetic import SyntheticModelSpec, synthetic_crash_batch
from .uq import (build_histogram, converge_sampling, kl_divergence,
                 kl_reference, mc_propagate, mode_split, screen_inputs,
                 summary_stats)

DEFAULT_NS = 2366
DEFAULT_N_MC = 50000
DEFAULT_SEED = 20240
DEFAULT_BINS = 40
DEFAULT_KL_TOL = 1e-2


# ---------------------------------------------------------------------------
# configuration plumbing

def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser.read(path)
    return parser


def _cfg(parser, section: str, key: str, default=None, cast=str):
    if parser is None or section not in parser or key not in parser[section]:
        return default
    raw = parser[section][key]
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected "
                          f"{cast.__name__}") from None


def _distribution_params(config_path) -> dict:
    dist = parse_distribution_config(config_path)
    return {"means": dist.means.tolist(), "stds": dist.stds.tolist(),
            "laws": list(dist.laws)}


def _distribution(params: dict) -> InputDistribution:
    return InputDistribution(means=np.asarray(params["means"]),
                             stds=np.asarray(params["stds"]),
                             laws=tuple(params.get("laws", ())))


def _model_runner(params: dict):
    """Full-order model from resolved params: built-in synthetic model or an
    external executable mapping an input CSV of h rows to an output CSV of
    x rows (``exec:<command>``)."""
    model = params.get("model", "synthetic")
    if model == "synthetic":
        spec = SyntheticModelSpec(**params.get("synthetic_spec", {}))
        return lambda H: synthetic_crash_batch(H, spec)
    if model.startswith("exec:"):
        command = shlex.split(model[len("exec:"):])

        def run(H):
            H = np.atleast_2d(np.asarray(H, dtype=float))
            with tempfile.TemporaryDirectory(prefix="uqkit-oracle-") as tmp:
                h_path = Path(tmp) / "inputs.csv"
                x_path = Path(tmp) / "outputs.csv"
                np.savetxt(h_path, H, fmt="%.17g", delimiter=",")
                proc = subprocess.run(command + [str(h_path), str(x_path)],
                                      capture_output=True, text=True)
                if proc.returncode != 0:
                    raise NumericalError(
                        f"external model exited with {proc.returncode}: "
                        f"{proc.stderr.strip()}")
                X_rows = np.loadtxt(x_path, delimiter=",", ndmin=2)
            if X_rows.shape[0] != H.shape[0]:
                raise NumericalError("external model returned "
                                     f"{X_rows.shape[0]} rows for "
                                     f"{H.shape[0]} inputs")
            return X_rows.T
        return run
    raise ConfigError(f"unknown model '{model}' (use 'synthetic' or "
                      "'exec:<command>')")


# ---------------------------------------------------------------------------
# stage implementations (shared by the CLI commands and `replay`)

def _stage_generate(params: dict, out: Path):
    dist = _distribution(params["distribution"])
    runner = _model_runner(params)
    H = sample_inputs(dist, params["ns"], params["seed"])
    X = runner(H)
    ts = assemble_training_set(H, list(np.asarray(X).T), seed=params["seed"],
                               meta={"model": params.get("model",
                                                         "synthetic")})
    ts_path = out / "training_set.npz"
    ts.save(ts_path)
    outputs = [ts_path]
    if params.get("csv"):
        csv_path = out / "training_set.csv"
        ts.to_csv(csv_path)
        outputs.append(csv_path)
    return outputs, []


def _stage_reduce(params: dict, out: Path):
    ts = TrainingSet.load(params["training"])
    method = params["method"]
    if method == "pca":
        model = fit_pca(ts.X, k=params.get("k"), energy=params.get("energy"))
    elif method == "kpca":
        model = fit_kpca(ts.X, beta=params["beta"], k=params.get("k"),
                         energy=params.get("energy"))
    else:
        raise ConfigError(f"unknown reduction method '{method}'")
    model_path = out / f"model_{method}.npz"
    model.save(model_path)
    report_path = out / "energy_report.txt"
    lam = np.clip(model.eigenvalues, 0.0, None)
    total = lam.sum()
    lines = ["# uqkit energy report", f"method = {method}",
             f"selected_k = {model.k}", f"n_eigenvalues = {lam.size}"]
    if method == "kpca":
        lines.insert(2, f"beta = {params['beta']!r}")
    cumulative = 0.0
    for i in range(min(10, lam.size)):
        frac = float(lam[i] / total) if total > 0 else float("nan")
        cumulative += frac
        lines.append(f"fraction_{i + 1} = {frac!r}")
        lines.append(f"cumulative_{i + 1} = {cumulative!r}")
    report_path.write_text("\n".join(lines) + "\n")
    return [model_path, report_path], [params["training"]]


def _surrogate_options(params: dict) -> dict:
    kind = params["surrogate"]
    if kind == "srs":
        return {"nii": params.get("nii", 10),
                "smoothing": params.get("smoothing", 1e-3),
                "max_rank": params.get("max_rank", 20)}
    if kind == "ok":
        return {"variogram": params.get("variogram")}
    return {}


def _latent_coordinates(reduction, ts: TrainingSet) -> np.ndarray:
    latent = getattr(reduction, "latent", None)
    if latent is not None:
        return np.asarray(latent)
    return reduction.forward(ts.X.T)


def _stage_fit(params: dict, out: Path):
    ts = TrainingSet.load(params["training"])
    reduction = load_reduction(params["reduction"])
    kind = params["surrogate"]
    Z = _latent_coordinates(reduction, ts)
    threshold = params.get("screen_threshold", 0.0)
    options = _surrogate_options(params)
    outputs = []
    diag_lines = ["# uqkit surrogate diagnostics", f"kind = {kind}",
                  f"k = {reduction.k}",
                  f"screen_threshold = {threshold!r}"]
    for comp in range(reduction.k):
        y = Z[:, comp]
        active = list(range(ts.nd))
        screening = None
        if threshold > 0:
            screening = screen_inputs(y, ts.H, threshold)
            active = screening.active_dims
            if not active:   # never screen away every input
                active = [int(np.argmax(np.abs(screening.coefficients)))]
        model = fit_surrogate(kind, ts.H[:, active], y, **options)
        if active != list(range(ts.nd)):
            model = ScreenedSurrogate(model=model, active_dims=tuple(active),
                                      nd_full=ts.nd)
        suffix = "" if reduction.k == 1 else f"_c{comp}"
        path = out / f"surrogate_{kind}{suffix}.npz"
        save_surrogate(model, path,
                       extra_meta={"component": comp,
                                   "training": str(params["training"])})
        outputs.append(path)
        diag_lines.append(f"component = {comp}")
        if screening is not None:
            diag_lines.append("screening:")
            diag_lines.append(screening.table())
        diag_lines.append(f"active_dims = {active}")
        inner = model.model if isinstance(model, ScreenedSurrogate) else model
        if kind == "srs":
            diag_lines.append(f"rank = {inner.rank}")
            diag_lines.append(f"lambda_smooth = {inner.lambda_smooth!r}")
            for j, r in enumerate(inner.residual_history):
                diag_lines.append(f"residual_rms_{j} = {r!r}")
            for j, s in enumerate(inner.sigmas, start=1):
                diag_lines.append(f"sigma_{j} = {s!r}")
        elif kind == "ok":
            diag_lines.append(f"variogram_C0 = {inner.C0!r}")
            diag_lines.append(f"variogram_C1 = {inner.C1!r}")
            diag_lines.append(f"variogram_a = {inner.a!r}")
        elif kind == "prs":
            for name, c in zip(monomial_names(len(active)),
                               inner.coefficients):
                diag_lines.append(f"coef[{name}] = {c!r}")
    diag_path = out / f"diagnostics_{kind}.txt"
    diag_path.write_text("\n".join(diag_lines) + "\n")
    outputs.append(diag_path)
    return outputs, [params["training"], params["reduction"]]


def _stage_uq(params: dict, out: Path):
    reduction = load_reduction(params["reduction"])
    surrogates = [load_surrogate(p) for p in params["surrogate_files"]]
    dist = _distribution(params["distribution"])
    samples = mc_propagate(surrogates, reduction, dist, params["n_mc"],
                           params["seed"])
    hist = build_histogram(samples, params["bins"])
    stats = summary_stats(samples)

    from .container import save_container
    samples_path = out / "qoi_samples.npz"
    save_container(samples_path, "qoi_samples",
                   {"n_mc": params["n_mc"], "seed": params["seed"]},
                   {"samples": samples})
    hist_path = out / "histogram_qoi.txt"
    hist.save(hist_path)

    clamp_counts = {}
    H = sample_inputs(dist, params["n_mc"], params["seed"])
    for i, s in enumerate(surrogates):
        inner = s.model if isinstance(s, ScreenedSurrogate) else s
        if hasattr(inner, "clamp_count"):
            Hq = (H[:, list(s.active_dims)]
                  if isinstance(s, ScreenedSurrogate) else H)
            clamp_counts[f"surrogate_{i}"] = inner.clamp_count(Hq)
    summary = {
        "n_mc": params["n_mc"],
        "seed": params["seed"],
        "mean": stats.mean,
        "variance": stats.variance,
        "std": stats.std,
        "histogram": {"lo": hist.lo, "hi": hist.hi, "n_bins": hist.n_bins,
                      "dkl0": kl_reference(hist)},
        "clamp_counts": clamp_counts,
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2)
                            + "\n")
    return ([samples_path, hist_path, summary_path],
            [params["reduction"], *params["surrogate_files"]])


def _stage_compare(params: dict, out: Path):
    from .uq import Histogram
    ref = Histogram.load(params["ref"])
    approx = Histogram.load(params["approx"])
    kl = kl_divergence(ref, approx)
    dkl0 = kl_reference(ref)
    result = {"kl": kl, "dkl0": dkl0,
              "relative_kl": kl / dkl0 if dkl0 > 0 else float("inf")}
    compare_path = out / "compare.json"
    compare_path.write_text(json.dumps(result, sort_keys=True, indent=2)
                            + "\n")
    return [compare_path], [params["ref"], params["approx"]]


def _stage_converge(params: dict, out: Path):
    dist = _distribution(params["distribution"])
    runner = _model_runner(params)
    report = converge_sampling(runner, dist, start=params["start"],
                               growth=params["growth"],
                               kl_tol=params["kl_tol"],
                               n_bins=params["bins"], seed=params["seed"],
                               beta=params.get("beta", 0.1),
                               max_ns=params.get("max_ns", 20000))
    log_path = out / "convergence.log"
    report.save(log_path)
    return [log_path], []


def _stage_pipeline(params: dict, out: Path):
    outputs, _ = _stage_generate(params["generate"], out)
    ts_path = outputs[0]
    reduce_params = {**params["reduce"], "training": str(ts_path)}
    red_outputs, _ = _stage_reduce(reduce_params, out)
    fit_params = {**params["fit"], "training": str(ts_path),
                  "reduction": str(red_outputs[0])}
    fit_outputs, _ = _stage_fit(fit_params, out)
    surrogate_files = [str(p) for p in fit_outputs[:-1]]
    uq_params = {**params["uq"], "reduction": str(red_outputs[0]),
                 "surrogate_files": surrogate_files,
                 "distribution": params["generate"]["distribution"]}
    uq_outputs, _ = _stage_uq(uq_params, out)

    # reference: QoI of the training set itself (direct simulation)
    ts = TrainingSet.load(ts_path)
    ref_hist = build_histogram(ts.X.mean(axis=0), params["uq"]["bins"])
    ref_path = out / "histogram_reference.txt"
    ref_hist.save(ref_path)
    from .uq import Histogram
    approx_hist = Histogram.load(uq_outputs[1])
    kl = kl_divergence(ref_hist, approx_hist)
    dkl0 = kl_reference(ref_hist)
    bimodal, minor, split = mode_split(approx_hist)
    summary = {
        "kl_to_reference": kl,
        "dkl0_reference": dkl0,
        "relative_kl": kl / dkl0 if dkl0 > 0 else float("inf"),
        "surrogate": params["fit"]["surrogate"],
        "bimodal": bool(bimodal),
        "minor_mode_mass": minor,
        "mode_split_at": split,
    }
    summary_path = out / "pipeline_summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2)
                            + "\n")
    all_outputs = (list(outputs) + list(red_outputs) + list(fit_outputs)
                   + list(uq_outputs) + [ref_path, summary_path])
    return all_outputs, []


_STAGES = {
    "generate": _stage_generate,
    "reduce": _stage_reduce,
    "fit": _stage_fit,
    "uq": _stage_uq,
    "compare": _stage_compare,
    "converge": _stage_converge,
    "pipeline": _stage_pipeline,
}


def run_stage(command: str, params: dict, out) -> list:
    """Execute a stage and write its manifest; returns the output paths."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    outputs, inputs = _STAGES[command](params, out)
    wall = time.perf_counter() - start
    write_manifest(out / f"manifest_{command}.json", command, params,
                   inputs, outputs, wall)
    return outputs


# ---------------------------------------------------------------------------
# click wiring

def _exit_on_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)
        except OSError as exc:
            click.echo(f"i/o failure: {exc}", err=True)
            sys.exit(4)
    return wrapper


_out_option = click.option(
    "--out", default=".", envvar="UQKIT_OUT", show_default=True,
    help="Output directory (UQKIT_OUT overrides the default).")
_seed_option = click.option("--seed", type=int, default=None,
                            help=f"RNG seed [default: {DEFAULT_SEED}].")


@click.group()
@click.version_option(version=__version__)
def main():
    """Surrogate-based Monte Carlo uncertainty propagation toolkit."""


@main.command()
@click.option("--config", required=True, help="Distribution / pipeline config.")
@click.option("--model", default=None,
              help="'synthetic' (default) or 'exec:<command>'.")
@click.option("--model-spec", default=None,
              help="Synthetic model spec file overriding built-in constants.")
@click.option("--ns", type=int, default=None,
              help=f"Training samples [default: {DEFAULT_NS}].")
@click.option("--csv", is_flag=True, help="Also write a CSV export.")
@_seed_option
@_out_option
@_exit_on_errors
def generate(config, model, model_spec, ns, csv, seed, out):
    """Sample inputs, run the full-order model, write a training set."""
    cp = _read_ini(config)
    params = {
        "distribution": _distribution_params(config),
        "ns": ns if ns is not None else _cfg(cp, "training", "ns",
                                             DEFAULT_NS, int),
        "seed": seed if seed is not None else _cfg(cp, "training", "seed",
                                                   DEFAULT_SEED, int),
        "model": model or _cfg(cp, "training", "model", "synthetic"),
        "csv": bool(csv),
    }
    if model_spec:
        spec = SyntheticModelSpec.load(model_spec)
        params["synthetic_spec"] = {
            f: getattr(spec, f) for f in spec.__dataclass_fields__}
    for path in run_stage("generate", params, out):
        click.echo(path)


@main.command()
@click.option("--training", required=True, help="Training-set container.")
@click.option("--method", type=click.Choice(["pca", "kpca"]),
              default="kpca", show_default=True)
@click.option("--beta", type=float, default=0.1, show_default=True,
              help="Gaussian kernel width (kpca).")
@click.option("--k", type=int, default=None, help="Fixed latent dimension.")
@click.option("--energy", type=float, default=None,
              help="Eigenvalue-energy target selecting k [default: 0.80].")
@_out_option
@_exit_on_errors
def reduce(training, method, beta, k, energy, out):
    """Fit the dimensionality reduction and report eigenvalue energy."""
    if k is None and energy is None:
        energy = 0.80
    params = {"training": training, "method": method, "beta": beta,
              "k": k, "energy": energy}
    for path in run_stage("reduce", params, out):
        click.echo(path)


@main.command()
@click.option("--training", required=True)
@click.option("--reduction", required=True, help="Reduction model container.")
@click.option("--surrogate", type=click.Choice(["srs", "ok", "prs"]),
              required=True)
@click.option("--nii", type=int, default=10, show_default=True,
              help="Sectional mesh nodes per dimension (srs).")
@click.option("--smoothing", type=float, default=1e-3, show_default=True,
              help="Scale-relative smoothing factor (srs).")
@click.option("--max-rank", type=int, default=20, show_default=True)
@click.option("--screen-threshold", type=float, default=0.1,
              show_default=True, help="|Spearman| below this discards an "
              "input dimension; 0 disables screening.")
@click.option("--variogram", default=None,
              help="Explicit 'C0,C1,a' (ok); default fits automatically.")
@_out_option
@_exit_on_errors
def fit(training, reduction, surrogate, nii, smoothing, max_rank,
        screen_threshold, variogram, out):
    """Fit a response surface per retained latent component."""
    params = {"training": training, "reduction": reduction,
              "surrogate": surrogate, "nii": nii, "smoothing": smoothing,
              "max_rank": max_rank, "screen_threshold": screen_threshold}
    if variogram:
        parts = [float(v) for v in variogram.split(",")]
        if len(parts) != 3:
            raise ConfigError("--variogram expects 'C0,C1,a'")
        params["variogram"] = parts
    for path in run_stage("fit", params, out):
        click.echo(path)


@main.command()
@click.option("--surrogate-file", "surrogate_files", multiple=True,
              required=True, help="One per latent component, in order.")
@click.option("--reduction", required=True)
@click.option("--config", required=True, help="Distribution config.")
@click.option("--n-mc", type=int, default=None,
              help=f"Monte Carlo samples [default: {DEFAULT_N_MC}].")
@click.option("--bins", type=int, default=None,
              help=f"Histogram bins [default: {DEFAULT_BINS}].")
@_seed_option
@_out_option
@_exit_on_errors
def uq(surrogate_files, reduction, config, n_mc, bins, seed, out):
    """Monte Carlo propagation through surrogate + backward map."""
    cp = _read_ini(config)
    params = {
        "surrogate_files": list(surrogate_files),
        "reduction": reduction,
        "distribution": _distribution_params(config),
        "n_mc": n_mc if n_mc is not None else _cfg(cp, "uq", "n_mc",
                                                   DEFAULT_N_MC, int),
        "seed": seed if seed is not None else _cfg(cp, "uq", "seed",
                                                   DEFAULT_SEED + 1, int),
        "bins": bins if bins is not None else _cfg(cp, "uq", "bins",
                                                   DEFAULT_BINS, int),
    }
    for path in run_stage("uq", params, out):
        click.echo(path)


@main.command()
@click.option("--ref", required=True, help="Reference histogram file.")
@click.option("--approx", required=True, help="Histogram compared against it.")
@_out_option
@_exit_on_errors
def compare(ref, approx, out):
    """KL divergence, uniform-reference divergence, and their ratio."""
    params = {"ref": ref, "approx": approx}
    outputs = run_stage("compare", params, out)
    result = json.loads(Path(outputs[0]).read_text())
    click.echo(f"kl = {result['kl']!r}")
    click.echo(f"dkl0 = {result['dkl0']!r}")
    click.echo(f"relative_kl = {result['relative_kl']!r}")


@main.command()
@click.option("--config", required=True, help="Distribution / pipeline config.")
@click.option("--kl-tol", type=float, default=None,
              help=f"KL stop tolerance [default: {DEFAULT_KL_TOL}].")
@click.option("--start", type=int, default=None,
              help="Initial sample count [default: 100].")
@click.option("--growth", type=float, default=None,
              help="Geometric growth factor [default: 1.5].")
@click.option("--max-ns", type=int, default=None,
              help="Sample budget [default: 20000].")
@click.option("--bins", type=int, default=None,
              help=f"Histogram bins [default: {DEFAULT_BINS}].")
@_seed_option
@_out_option
@_exit_on_errors
def converge(config, kl_tol, start, growth, max_ns, bins, seed, out):
    """Select the training-set size by KL stabilization of the latent
    histogram."""
    cp = _read_ini(config)
    params = {
        "distribution": _distribution_params(config),
        "model": _cfg(cp, "training", "model", "synthetic"),
        "start": start if start is not None else _cfg(cp, "converge", "start",
                                                      100, int),
        "growth": growth if growth is not None else _cfg(cp, "converge",
                                                         "growth", 1.5, float),
        "kl_tol": kl_tol if kl_tol is not None else _cfg(
            cp, "converge", "kl_tol", DEFAULT_KL_TOL, float),
        "max_ns": max_ns if max_ns is not None else _cfg(cp, "converge",
                                                         "max_ns", 20000, int),
        "bins": bins if bins is not None else _cfg(cp, "converge", "bins",
                                                   DEFAULT_BINS, int),
        "seed": seed if seed is not None else _cfg(cp, "converge", "seed",
                                                   DEFAULT_SEED, int),
        "beta": _cfg(cp, "reduce", "beta", 0.1, float),
    }
    for path in run_stage("converge", params, out):
        click.echo(path)


@main.command()
@click.option("--config", required=True, help="Pipeline config.")
@click.option("--surrogate", type=click.Choice(["srs", "ok", "prs"]),
              default=None, help="Overrides [surrogate] kind.")
@_seed_option
@_out_option
@_exit_on_errors
def pipeline(config, surrogate, seed, out):
    """Run generate -> reduce -> fit -> uq -> compare from one config."""
    cp = _read_ini(config)
    base_seed = seed if seed is not None else _cfg(cp, "training", "seed",
                                                   DEFAULT_SEED, int)
    kind = surrogate or _cfg(cp, "surrogate", "kind", "srs")
    params = {
        "generate": {
            "distribution": _distribution_params(config),
            "ns": _cfg(cp, "training", "ns", DEFAULT_NS, int),
            "seed": base_seed,
            "model": _cfg(cp, "training", "model", "synthetic"),
            "csv": False,
        },
        "reduce": {
            "method": _cfg(cp, "reduce", "method", "kpca"),
            "beta": _cfg(cp, "reduce", "beta", 0.1, float),
            "k": _cfg(cp, "reduce", "k", None, int),
            "energy": _cfg(cp, "reduce", "energy", None, float),
        },
        "fit": {
            "surrogate": kind,
            "nii": _cfg(cp, "surrogate", "nii", 10, int),
            "smoothing": _cfg(cp, "surrogate", "smoothing", 1e-3, float),
            "max_rank": _cfg(cp, "surrogate", "max_rank", 20, int),
            "screen_threshold": _cfg(cp, "surrogate", "screen_threshold",
                                     0.1, float),
        },
        "uq": {
            "n_mc": _cfg(cp, "uq", "n_mc", DEFAULT_N_MC, int),
            "seed": _cfg(cp, "uq", "seed", base_seed + 1, int),
            "bins": _cfg(cp, "uq", "bins", DEFAULT_BINS, int),
        },
    }
    if params["reduce"]["k"] is None and params["reduce"]["energy"] is None:
        params["reduce"]["energy"] = 0.80
    for path in run_stage("pipeline", params, out):
        click.echo(path)


@main.command()
@click.argument("manifest_path")
@_out_option
@_exit_on_errors
def replay(manifest_path, out):
    """Re-execute a stage from its manifest."""
    manifest = load_manifest(manifest_path)
    for path in run_stage(manifest["command"], manifest["params"], out):
        click.echo(path)


if __name__ == "__main__":
    main()
