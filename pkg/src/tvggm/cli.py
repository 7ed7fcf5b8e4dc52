"""Batch command-line interface: fit, tune, and benchmark runs.

Machine outputs (JSON/CSV) go to the output directory together with a
manifest that digests every file; stderr carries human diagnostics.
Exit codes: 0 ok, 2 configuration error, 3 data error, 4 solver
non-convergence (partial outputs are kept and flagged).

Setting the environment variable TVGGM_DETERMINISTIC to a non-empty value
forces single-worker execution and zeroes recorded runtimes, so repeated
runs are byte-identical.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .dataset import detrend, load_csv, log_returns, standardize
from .errors import (ConvergenceError, DataError, GenerationError,
                     ParameterError, TvggmError)
from .kernels import KernelSpec
from .likelihood import AdmmSettings
from .pipeline import FitConfig, fit_path, fit_with_tuning
from .simulate import (compute_metrics, sample_observations,
                       simulate_time_invariant, simulate_time_varying)
from .tuning import TuningGrid

SCHEMA_VERSION = 1

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4


def _deterministic():
    return bool(os.environ.get("TVGGM_DETERMINISTIC"))


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(outdir, config_echo, inputs, seeds, outputs):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "config": config_echo,
        "input_digests": {str(p): _sha256(p) for p in inputs},
        "seeds": list(seeds),
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ParameterError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ParameterError("config root must be a JSON object")
    return cfg


def _merged(cfg, section, args, keys):
    """Section values from the config file, overridden by set CLI flags."""
    out = dict(cfg.get(section, {}))
    for key in keys:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            out[key] = val
    return out


def _prepare_data(cfg_data):
    path = cfg_data.get("input")
    if not path:
        raise ParameterError("no input CSV configured")
    data = load_csv(path)
    if cfg_data.get("log_returns"):
        data = log_returns(data)
    hm = cfg_data.get("detrend_bandwidth")
    if hm:
        data = detrend(data, float(hm))
    if cfg_data.get("standardize"):
        data = standardize(data)
    return data, [path]


def _write_edges_json(outdir, path_obj, names):
    records = []
    for t, edges, om in zip(path_obj.times, path_obj.edge_sets,
                            path_obj.precisions):
        pairs = []
        for u, v in edges:
            weight = None if om is None else float(om[u, v])
            pairs.append([names[u], names[v], weight])
        records.append({"time": t, "edges": pairs})
    fp = os.path.join(outdir, "edges.json")
    with open(fp, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "fits": records},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return fp


def _write_precision_csv(outdir, path_obj):
    fp = os.path.join(outdir, "precision.csv")
    with open(fp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "row", "col", "value"])
        for t, om in zip(path_obj.times, path_obj.precisions):
            if om is None:
                continue
            rows, cols = np.nonzero(om)
            for r, c in zip(rows, cols):
                if r <= c:
                    writer.writerow([f"{t:.10g}", r, c, f"{om[r, c]:.12g}"])
    return fp


def _write_diagnostics(outdir, path_obj, extra=None):
    fp = os.path.join(outdir, "diagnostics.json")
    payload = {"schema_version": SCHEMA_VERSION,
               "per_time": list(path_obj.diagnostics)}
    if extra:
        payload.update(extra)
    with open(fp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return fp


def _path_failures(path_obj):
    return [d for d in path_obj.diagnostics if "error" in d]


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    data_cfg = _merged(cfg, "data", args,
                       ["input", "log_returns", "detrend_bandwidth",
                        "standardize"])
    fit_cfg = _merged(cfg, "fit", args,
                      ["method", "solver", "kernel", "h", "d", "lam",
                       "fit_times", "as_correlation"])
    outdir = args.output_dir or cfg.get("output_dir", "tvggm_out")
    os.makedirs(outdir, exist_ok=True)

    data, inputs = _prepare_data(data_cfg)
    spec = KernelSpec(fit_cfg.get("kernel", "epanechnikov"),
                      float(fit_cfg.get("h", 0.2)))
    config = FitConfig(
        method=fit_cfg.get("method", "loggle"),
        solver=fit_cfg.get("solver", "pseudo"),
        kernel=spec,
        d=fit_cfg.get("d", 0.1),
        lam=fit_cfg.get("lam", 0.25),
        fit_times=tuple(fit_cfg.get("fit_times", (0.5,))),
        as_correlation=bool(fit_cfg.get("as_correlation", False)),
    )
    path_obj = fit_path(data, config)
    outputs = [
        _write_edges_json(outdir, path_obj, data.names),
        _write_precision_csv(outdir, path_obj),
        _write_diagnostics(outdir, path_obj),
    ]
    outputs.append(_write_manifest(
        outdir, {"data": data_cfg, "fit": fit_cfg}, inputs, [], outputs))
    failures = _path_failures(path_obj)
    if failures:
        print(f"{len(failures)} fit time(s) failed; see diagnostics.json",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return 0


def _sector_outputs(outdir, path_obj, names, sectors_path):
    label = {}
    with open(sectors_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DataError(f"{sectors_path}: expected name,label header")
        for row in reader:
            if row:
                label[row[0].strip()] = row[1].strip()
    missing = [n for n in names if n not in label]
    if missing:
        raise DataError(f"{sectors_path}: no label for {missing[0]!r}")

    counts_fp = os.path.join(outdir, "edge_count_series.csv")
    with open(counts_fp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "n_edges"])
        for t, edges in zip(path_obj.times, path_obj.edge_sets):
            writer.writerow([f"{t:.10g}", len(edges)])

    groups = sorted(set(label.values()))
    within_fp = os.path.join(outdir, "within_group_series.csv")
    with open(within_fp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "group", "edges_within", "edges_touching",
                         "proportion"])
        for t, edges in zip(path_obj.times, path_obj.edge_sets):
            for g in groups:
                within = touching = 0
                for u, v in edges:
                    lu, lv = label[names[u]], label[names[v]]
                    if g in (lu, lv):
                        touching += 1
                        if lu == lv == g:
                            within += 1
                prop = within / touching if touching else 0.0
                writer.writerow([f"{t:.10g}", g, within, touching,
                                 f"{prop:.6g}"])
    return [counts_fp, within_fp]


def cmd_tune(args) -> int:
    cfg = _load_config(args.config)
    data_cfg = _merged(cfg, "data", args,
                       ["input", "log_returns", "detrend_bandwidth",
                        "standardize", "sectors"])
    tune_cfg = _merged(cfg, "tune", args,
                       ["h_grid", "d_grid", "lambda_grid", "V",
                        "vote_threshold", "edge_cap_multiplier",
                        "coarse_keep"])
    fit_cfg = _merged(cfg, "fit", args,
                      ["method", "solver", "kernel", "fit_times",
                       "as_correlation"])
    outdir = args.output_dir or cfg.get("output_dir", "tvggm_out")
    os.makedirs(outdir, exist_ok=True)

    data, inputs = _prepare_data(data_cfg)
    grid = TuningGrid(
        h_grid=tuple(tune_cfg.get("h_grid", (0.2, 0.3))),
        d_grid=tuple(tune_cfg.get("d_grid", (0.0, 0.05, 0.1, 0.2, 1.0))),
        lambda_grid=tuple(tune_cfg.get("lambda_grid",
                                       (0.35, 0.3, 0.25, 0.2, 0.15))),
        V=int(tune_cfg.get("V", 5)),
        vote_threshold=float(tune_cfg.get("vote_threshold", 0.8)),
        edge_cap_multiplier=float(tune_cfg.get("edge_cap_multiplier", 5.0)),
        coarse_keep=int(tune_cfg.get("coarse_keep", 2)),
    )
    fit_times = tuple(fit_cfg.get("fit_times", (0.1, 0.3, 0.5, 0.7, 0.9)))
    path_obj, cv = fit_with_tuning(
        data, grid, fit_times,
        solver=fit_cfg.get("solver", "pseudo"),
        method=fit_cfg.get("method", "loggle"),
        kernel_kind=fit_cfg.get("kernel", "epanechnikov"),
        as_correlation=bool(fit_cfg.get("as_correlation", False)))

    scores_fp = os.path.join(outdir, "cv_scores.csv")
    with open(scores_fp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h", "d", "lambda", "fold", "score"])
        for k, h, d, lam, fold, score in cv.rows:
            writer.writerow([f"{cv.fit_times[k]:.10g}", f"{h:.10g}",
                             f"{d:.10g}", f"{lam:.10g}", fold,
                             f"{score:.12g}"])
    summary_fp = os.path.join(outdir, "selection.json")
    with open(summary_fp, "w", encoding="utf-8") as fh:
        json.dump({
            "schema_version": SCHEMA_VERSION,
            "selected_h": cv.selected_h,
            "per_time": [{"t": t, "d": d, "lambda": lam}
                         for t, (d, lam) in zip(cv.fit_times, cv.selected)],
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")

    outputs = [scores_fp, summary_fp,
               _write_edges_json(outdir, path_obj, data.names),
               _write_precision_csv(outdir, path_obj),
               _write_diagnostics(outdir, path_obj)]
    sectors = data_cfg.get("sectors")
    if sectors:
        inputs.append(sectors)
        outputs.extend(_sector_outputs(outdir, path_obj, data.names, sectors))
    outputs.append(_write_manifest(
        outdir, {"data": data_cfg, "tune": tune_cfg, "fit": fit_cfg},
        inputs, [], outputs))
    if _path_failures(path_obj):
        print("some fit times failed; see diagnostics.json", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return 0


def _default_bench_grid():
    return TuningGrid(h_grid=(0.2, 0.3),
                      d_grid=(0.0, 0.2, 1.0),
                      lambda_grid=(0.35, 0.32, 0.29, 0.26, 0.23, 0.2, 0.17))


def _bench_task(task):
    """One (seed, method) benchmark cell; must stay import-level for
    process pools."""
    kind, p, N, seed, method, grid_kwargs, fit_times = task
    grid = TuningGrid(**grid_kwargs)
    simulate = (simulate_time_varying if kind == "time_varying"
                else simulate_time_invariant)
    t0 = time.perf_counter()
    used_seed = seed
    for attempt in range(50):
        # Retry with a large stride so fallback seeds never collide with
        # the models other benchmark seeds draw.
        used_seed = seed + 10_007 * attempt
        try:
            model = simulate(p, used_seed)
            data = sample_observations(model, N)
            break
        except GenerationError:
            continue
    else:
        raise GenerationError(
            f"no PD model found for seed {seed} after 50 attempts")
    if used_seed != seed:
        print(f"seed {seed}: generation fell back to seed {used_seed}",
              file=sys.stderr)

    sd = data.values.std(axis=0, ddof=1)
    data_std = standardize(data)
    # Smoothing is done on the correlation scale, matching the estimation
    # protocol used for the reported simulations.
    path_obj, _ = fit_with_tuning(data_std, grid, fit_times, method=method,
                                  as_correlation=True)
    estimates = []
    for k in range(len(fit_times)):
        om = path_obj.precisions[k]
        if om is None:
            raise ConvergenceError(
                f"no estimate at t={fit_times[k]:g} "
                f"({path_obj.diagnostics[k].get('error')})")
        # Undo the standardization: x was divided by sd, so the precision
        # on the original scale is diag(1/sd) om diag(1/sd).
        om = om / sd[:, None] / sd[None, :]
        estimates.append((path_obj.edge_sets[k], om))
    report = compute_metrics(model, estimates, fit_times)
    runtime_ms = 0.0 if _deterministic() \
        else (time.perf_counter() - t0) * 1000.0
    return {"method": method, "p": p, "seed": seed, "fdr": report.fdr,
            "power": report.power, "f1": report.f1, "kl": report.kl,
            "runtime_ms": runtime_ms}


def run_bench(kind, p, N, seeds, methods, grid=None, fit_times=None,
              threads=None):
    """Run the benchmark protocol; returns rows in deterministic order."""
    grid = grid or _default_bench_grid()
    if fit_times is None:
        fit_times = tuple(np.round(np.linspace(0.1, 0.9, 9), 10))
    tasks = [(kind, p, N, seed, method,
              dataclasses.asdict(grid), tuple(fit_times))
             for seed in seeds for method in methods]
    if _deterministic() or (threads is not None and threads <= 1):
        results = [_bench_task(t) for t in tasks]
    else:
        workers = threads or os.cpu_count() or 1
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_bench_task, tasks))
    return results


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    bench_cfg = _merged(cfg, "bench", args,
                        ["kind", "p", "N", "seeds", "methods"])
    outdir = args.output_dir or cfg.get("output_dir", "tvggm_out")
    os.makedirs(outdir, exist_ok=True)
    kind = bench_cfg.get("kind", "time_varying")
    if kind not in ("time_varying", "time_invariant"):
        raise ParameterError(f"unknown generator kind {kind!r}")
    p = int(bench_cfg.get("p", 30))
    N = int(bench_cfg.get("N", 300))
    seeds = [int(s) for s in bench_cfg.get("seeds", range(1, 11))]
    methods = list(bench_cfg.get("methods", ("loggle", "kernel", "invar")))
    tune_cfg = cfg.get("tune", {})
    grid = _default_bench_grid()
    if tune_cfg:
        grid = dataclasses.replace(
            grid, **{k: tuple(v) if isinstance(v, list) else v
                     for k, v in tune_cfg.items()})

    rows = run_bench(kind, p, N, seeds, methods, grid=grid,
                     threads=args.threads)
    metrics_fp = os.path.join(outdir, "metrics.csv")
    with open(metrics_fp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "p", "seed", "fdr", "power", "f1", "kl",
                         "runtime_ms"])
        for row in rows:
            writer.writerow([row["method"], row["p"], row["seed"],
                             f"{row['fdr']:.6f}", f"{row['power']:.6f}",
                             f"{row['f1']:.6f}", f"{row['kl']:.6f}",
                             f"{row['runtime_ms']:.3f}"])
    _write_manifest(outdir, {"bench": bench_cfg}, [], seeds, [metrics_fp])
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tvggm",
        description="Time-varying sparse Gaussian graphical model estimation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--output-dir", help="directory for output files")
        sp.add_argument("--threads", type=int,
                        help="worker count (default: available parallelism)")

    fit = sub.add_parser("fit", help="fit at fixed parameters")
    common(fit)
    fit.add_argument("--input", help="input CSV")
    fit.add_argument("--method", choices=["loggle", "kernel", "invar"])
    fit.add_argument("--solver", choices=["likelihood", "pseudo"])
    fit.add_argument("--kernel", choices=["epanechnikov", "gaussian"])
    fit.add_argument("--h", type=float, help="smoothing bandwidth")
    fit.add_argument("--d", type=float, help="neighborhood half-width")
    fit.add_argument("--lam", type=float, help="sparsity level")
    fit.add_argument("--fit-times", type=float, nargs="+")
    fit.add_argument("--log-returns", action="store_const", const=True)
    fit.add_argument("--detrend-bandwidth", type=float)
    fit.add_argument("--standardize", action="store_const", const=True)
    fit.set_defaults(func=cmd_fit)

    tune = sub.add_parser("tune", help="cross-validated fit")
    common(tune)
    tune.add_argument("--input")
    tune.add_argument("--method", choices=["loggle", "kernel", "invar"])
    tune.add_argument("--solver", choices=["likelihood", "pseudo"])
    tune.add_argument("--kernel", choices=["epanechnikov", "gaussian"])
    tune.add_argument("--h-grid", type=float, nargs="+")
    tune.add_argument("--d-grid", type=float, nargs="+")
    tune.add_argument("--lambda-grid", type=float, nargs="+")
    tune.add_argument("--V", type=int)
    tune.add_argument("--vote-threshold", type=float)
    tune.add_argument("--fit-times", type=float, nargs="+")
    tune.add_argument("--sectors", help="name,label CSV for group summaries")
    tune.add_argument("--log-returns", action="store_const", const=True)
    tune.add_argument("--detrend-bandwidth", type=float)
    tune.add_argument("--standardize", action="store_const", const=True)
    tune.set_defaults(func=cmd_tune)

    bench = sub.add_parser("bench", help="simulation benchmark")
    common(bench)
    bench.add_argument("--kind", choices=["time_varying", "time_invariant"])
    bench.add_argument("--p", type=int)
    bench.add_argument("--N", type=int)
    bench.add_argument("--seeds", type=int, nargs="+")
    bench.add_argument("--methods", nargs="+",
                       choices=["loggle", "kernel", "invar"])
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, GenerationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except TvggmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
