"""Command-line interface: fit, forecast, backtest, simulate, scan.

Exit codes: 1 usage error, 2 data error, 3 numerical failure.  Errors are
mirrored as machine-readable JSON on standard error.  Every output file is
written atomically (temp file + rename) and CSVs carry ``# meta:`` comment
headers with the package version, the seed, and a hash of the effective
configuration; the wall-clock timestamp sits on its own meta line so that
outputs are byte-identical across reruns modulo that line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, dgp, forecast as forecast_mod, pipeline
from .dataio import PanelData, load_csv, load_model, save_model, standardize
from .errors import DataError, NumericsError, SvineFactorError
from .factors import select_k
from .mvine import build_structure, structure_table
from .paircop import PairCopula

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(USAGE_EXIT)


def _emit_error(kind, message, code=None):
    payload = {"error": kind, "message": str(message)}
    if code is not None:
        payload["exit_code"] = code
    print(json.dumps(payload), file=sys.stderr)


def _config_hash(args):
    skip = {"func"}
    items = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    blob = json.dumps(items, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _meta_lines(args, seed):
    stable = f"# meta: {{\"version\": \"{__version__}\", \"seed\": {seed}, \"config_hash\": \"{_config_hash(args)}\"}}"
    stamp = f"# meta-timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S')}"
    return stable + "\n" + stamp + "\n"


def _write_csv(path, header_cells, rows, args, seed):
    lines = [",".join(str(c) for c in header_cells)]
    for row in rows:
        lines.append(",".join(_fmt(c) for c in row))
    _atomic_write_text(path, _meta_lines(args, seed) + "\n".join(lines) + "\n")


def _fmt(cell):
    if isinstance(cell, float):
        return f"{cell:.17g}"
    return str(cell)


def _parse_families(spec):
    if spec == "all":
        return "all"
    return tuple(s.strip() for s in spec.split(",") if s.strip())


def _parse_alphas(spec):
    return [float(s) for s in spec.split(",") if s.strip()]


def _load_panel(path, has_header, do_standardize):
    panel = load_csv(path, has_header=has_header)
    return standardize(panel) if do_standardize else panel


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SVF_THREADS")
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_fit(args):
    t0 = time.time()
    panel = _load_panel(args.data, args.header, not args.no_standardize)
    k = "auto" if args.k == "auto" else int(args.k)
    opts = pipeline.FitOptions(
        starts=args.starts, seed=args.seed, k_max=args.kmax, threads=_threads(args)
    )
    fitted = pipeline.fit(panel, k=k, p=args.p, families=_parse_families(args.families), opts=opts)
    save_model(fitted, args.out)
    if args.acf_lags:
        _print_factor_acf(fitted.rotated_factors, args.acf_lags)
    print(
        f"fit: objective={fitted.objective_value:.6f} K={fitted.k} p={fitted.p} "
        f"runtime={time.time() - t0:.2f}s -> {args.out}"
    )
    return 0


def _print_factor_acf(rotated, lags):
    """Per-factor autocorrelations, the manual aid for choosing the order p."""
    t_len, k = rotated.shape
    for j in range(k):
        col = rotated[:, j] - rotated[:, j].mean()
        denom = float(col @ col)
        acf = [float(col[lag:] @ col[:-lag]) / denom for lag in range(1, lags + 1)]
        print(f"acf factor {j + 1}: " + " ".join(f"{a:+.3f}" for a in acf), file=sys.stderr)


def _cmd_forecast(args):
    t0 = time.time()
    model = load_model(args.model)
    ens = forecast_mod.forecast(model, args.horizon, args.paths, seed=args.seed)
    alphas = _parse_alphas(args.alphas)
    header = ["step", "series"] + [f"q{a:g}" for a in alphas] + ["mean"]
    rows = []
    for step in range(args.horizon):
        for i in range(ens.paths.shape[2]):
            qs = [forecast_mod.var_from_ensemble(ens, i, step, a) for a in alphas]
            rows.append([step + 1, model.series_names[i]] + qs + [float(ens.paths[:, step, i].mean())])
    _write_csv(args.out, header, rows, args, args.seed)
    print(
        f"forecast: horizon={args.horizon} paths={args.paths} series={ens.paths.shape[2]} "
        f"runtime={time.time() - t0:.2f}s -> {args.out}"
    )
    return 0


def _cmd_backtest(args):
    t0 = time.time()
    panel = _load_panel(args.data, args.header, not args.no_standardize)
    train = PanelData(
        values=panel.values[: args.train_end],
        series_names=panel.series_names,
        means=panel.means,
        stdevs=panel.stdevs,
    )
    k = "auto" if args.k == "auto" else int(args.k)
    opts = pipeline.FitOptions(
        starts=args.starts, seed=args.seed, k_max=args.kmax, threads=_threads(args)
    )
    fitted = pipeline.fit(train, k=k, p=args.p, families=_parse_families(args.families), opts=opts)
    rows = forecast_mod.expanding_backtest(
        fitted,
        panel.values,
        args.train_end,
        alphas=_parse_alphas(args.alphas),
        n_paths=args.paths,
        seed=args.seed,
        series_index=args.series,
        fixed_margins=args.fixed_margins,
        abs_returns=args.abs_returns,
    )
    header = ["step", "alpha", "var", "realized", "score", "violation"]
    _write_csv(
        args.out,
        header,
        [[r.step, r.alpha, r.var, r.realized, r.score, int(r.violation)] for r in rows],
        args,
        args.seed,
    )
    by_alpha = {}
    for r in rows:
        by_alpha.setdefault(r.alpha, []).append(r)
    summary = " ".join(
        f"alpha={a:g}:viol={sum(r.violation for r in rs)}/{len(rs)}" for a, rs in sorted(by_alpha.items())
    )
    print(f"backtest: objective={fitted.objective_value:.6f} {summary} runtime={time.time() - t0:.2f}s -> {args.out}")
    return 0


def _cmd_simulate(args):
    t0 = time.time()
    with open(args.spec) as fh:
        doc = json.load(fh)
    spec = _spec_from_json(doc)
    if args.reps:
        spec = dgp.SimulationSpec(**{**_spec_kwargs(spec), "n_reps": args.reps})
    opts = pipeline.FitOptions(
        starts=args.starts, seed=args.seed, maxfev=100, xatol=1e-3, threads=_threads(args)
    )
    report = dgp.run_study(spec, pipeline_opts=opts)
    rows = report.csv_rows()
    _write_csv(args.out, rows[0], rows[1:], args, spec.seed)
    cell = report.cells[0]
    print(
        f"simulate: cells={len(report.cells)} reps={spec.n_reps} "
        f"rmse_params={cell.rmse_params_mean:.4f} runtime={time.time() - t0:.2f}s -> {args.out}"
    )
    return 0


def _spec_kwargs(spec):
    return {
        "mvine": spec.mvine,
        "margin": spec.margin,
        "loading_mean": spec.loading_mean,
        "loading_var": spec.loading_var,
        "ar_coef": spec.ar_coef,
        "noise_var": spec.noise_var,
        "t_len": spec.t_len,
        "n_dim": spec.n_dim,
        "n_reps": spec.n_reps,
        "seed": spec.seed,
        "warmup": spec.warmup,
    }


def _spec_from_json(doc):
    try:
        k, p = int(doc["k"]), int(doc["p"])
        structure = build_structure(k, p)
        entries = doc["copulas"]
        if len(entries) != structure.n_classes:
            raise DataError(
                f"spec needs {structure.n_classes} copulas for (k={k}, p={p}), got {len(entries)}"
            )
        copulas = {}
        for cid, entry in zip(structure.class_order, entries):
            copulas[cid] = PairCopula(
                entry["family"], float(entry["parameter"]), int(entry.get("reflection", 0))
            )
        from .mvine import MVineModel

        return dgp.SimulationSpec(
            mvine=MVineModel(structure=structure, copulas=copulas),
            margin=doc.get("margin", "standard_normal"),
            loading_mean=float(doc.get("loading_mean", 1.0)),
            loading_var=float(doc.get("loading_var", 1.0)),
            ar_coef=float(doc.get("ar_coef", 0.5)),
            noise_var=float(doc.get("noise_var", 1.0)),
            t_len=int(doc.get("t_len", 500)),
            n_dim=int(doc.get("n_dim", 100)),
            n_reps=int(doc.get("n_reps", 1)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid simulation spec: {exc}") from exc


def _cmd_scan(args):
    t0 = time.time()
    panel = load_csv(args.data, has_header=args.header)
    factors = panel.values
    structure = build_structure(2, args.p)
    step = args.step
    n_steps = int(round(args.max / step))
    thetas = [i * step for i in range(n_steps + 1)]
    grid = [(a, b) for a in thetas for b in thetas]
    values = pipeline.contour_scan(factors, grid, structure, _parse_families(args.families))
    rows = [[g[0], g[1], v] for g, v in zip(grid, values)]
    _write_csv(args.out, ["theta1", "theta2", "objective"], rows, args, args.seed)
    finite = np.isfinite(values)
    best = int(np.argmax(np.where(finite, values, -np.inf)))
    print(
        f"scan: grid={len(grid)} best=({grid[best][0]:.4f}, {grid[best][1]:.4f}) "
        f"objective={values[best]:.6f} runtime={time.time() - t0:.2f}s -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_common_fit_args(sub):
    sub.add_argument("--data", required=True, help="input CSV panel")
    sub.add_argument("--header", action="store_true", help="first CSV row is a header")
    sub.add_argument("--no-standardize", action="store_true")
    sub.add_argument("--k", default="auto", help="factor count or 'auto'")
    sub.add_argument("--kmax", type=int, default=8)
    sub.add_argument("--p", type=int, default=1, help="Markov order")
    sub.add_argument("--families", default="all", help="comma list or 'all'")
    sub.add_argument("--starts", type=int, default=8)
    sub.add_argument("--acf-lags", type=int, default=0, help="print per-factor ACFs (stderr)")


def build_parser():
    parser = _Parser(prog="svf", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="worker cap (or SVF_THREADS)")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("fit", help="fit a model to a CSV panel")
    _add_common_fit_args(sub)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True, help="model JSON path")
    sub.set_defaults(func=_cmd_fit)

    sub = subs.add_parser("forecast", help="Monte-Carlo predictive quantiles")
    sub.add_argument("--model", required=True)
    sub.add_argument("--horizon", type=int, required=True)
    sub.add_argument("--paths", type=int, default=1000)
    sub.add_argument("--alphas", default="0.05,0.10,0.90,0.95")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_forecast)

    sub = subs.add_parser("backtest", help="expanding-window one-step VaR backtest")
    _add_common_fit_args(sub)
    sub.add_argument("--train-end", type=int, required=True)
    sub.add_argument("--expanding", action="store_true", help="expanding window (the default mode)")
    sub.add_argument("--fixed-margins", action="store_true")
    sub.add_argument("--abs-returns", action="store_true")
    sub.add_argument("--series", type=int, default=0, help="target series index")
    sub.add_argument("--alphas", default="0.05,0.10,0.90,0.95")
    sub.add_argument("--paths", type=int, default=1000)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_backtest)

    sub = subs.add_parser("simulate", help="replication study from a spec JSON")
    sub.add_argument("--spec", required=True)
    sub.add_argument("--reps", type=int, default=0, help="override the spec's rep count")
    sub.add_argument("--starts", type=int, default=4)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_simulate)

    sub = subs.add_parser("scan", help="objective contours over a (theta1, theta2) grid")
    sub.add_argument("--data", required=True, help="CSV of T x 2 factors")
    sub.add_argument("--header", action="store_true")
    sub.add_argument("--p", type=int, default=1)
    sub.add_argument("--families", default="frank")
    sub.add_argument("--step", type=float, default=np.pi / 32)
    sub.add_argument("--max", type=float, default=2 * np.pi)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_scan)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        _emit_error("data", exc, DATA_EXIT)
        return DATA_EXIT
    except NumericsError as exc:
        _emit_error("numerical", exc, NUMERIC_EXIT)
        return NUMERIC_EXIT
    except SvineFactorError as exc:  # any other package error counts as data
        _emit_error("data", exc, DATA_EXIT)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
