"""Command-line entry point ``qdetect``.

Exit codes: 0 success, 2 configuration or grid error, 3 numerical
consistency failure, 4 comparison tolerance exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, analysis, io, meanfield
from .config import load_config, with_engines
from .errors import (
    CapacityError,
    ConfigError,
    FitWindowError,
    GridMismatchError,
    LatticeError,
    NumericalError,
)
from .lattice import load_graph
from .runner import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_TOLERANCE, run_experiment

OUTPUT_ENV = "QDETECT_OUTPUT_DIR"

_CONFIG_ERRORS = (ConfigError, LatticeError, GridMismatchError, FitWindowError, CapacityError, ValueError)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    raise exc


def _err(msg: str) -> None:
    print(f"qdetect: {msg}", file=sys.stderr)


def _out_base(args) -> Path | None:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else None


def _run_one(config_path: str, out: str | None, tolerance: float | None, engines=None) -> tuple[str, int, str, dict]:
    try:
        cfg = load_config(config_path)
        if engines:
            cfg = with_engines(cfg, engines)
        res = run_experiment(cfg, Path(out) if out else None, tolerance)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _exit_code(exc)
        return config_path, code, str(exc), {}
    summary = {"name": res.name, "output_dir": str(res.output_dir), "files": res.files,
               "comparisons": res.comparisons, "fit": res.fit}
    return config_path, res.exit_code, res.message, summary


def cmd_run(args) -> int:
    target = Path(args.config)
    base = _out_base(args)
    if target.is_dir():
        configs = sorted(str(p) for p in target.glob("*.ini"))
        if not configs:
            _err(f"no *.ini files in {target}")
            return EXIT_CONFIG
        outs = [str(base / Path(c).stem) if base else None for c in configs]
        jobs = max(1, args.jobs)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, configs, outs, [args.tolerance] * len(configs)))
        else:
            results = [_run_one(c, o, args.tolerance) for c, o in zip(configs, outs)]
    else:
        results = [_run_one(str(target), str(base) if base else None, args.tolerance)]

    worst = EXIT_OK
    for path, code, message, summary in results:
        status = "ok" if code == EXIT_OK else f"exit {code}"
        line = f"{path}: {status}"
        if summary:
            line += f" -> {summary['output_dir']}"
        print(line)
        if message:
            _err(f"{path}: {message}")
        worst = max(worst, code)
    return worst


def cmd_compare(args) -> int:
    tol = args.tolerance
    if args.config:
        if not args.engines or len(args.engines.split(",")) != 2:
            _err("--engines needs two comma-separated engine names")
            return EXIT_CONFIG
        engines = [e.strip() for e in args.engines.split(",")]
        base = _out_base(args)
        path, code, message, summary = _run_one(args.config, str(base) if base else None, tol, engines)
        if message:
            _err(message)
        if summary:
            print(json.dumps(summary["comparisons"], indent=2, sort_keys=True))
        return code
    if len(args.series) != 2:
        _err("give two series CSV files, or --config with --engines")
        return EXIT_CONFIG
    try:
        a, b = (io.read_series_csv(p) for p in args.series)
        report = analysis.compare_series(a, b, resample=args.resample).to_dict()
    except Exception as exc:  # noqa: BLE001
        _err(str(exc))
        return _exit_code(exc)
    exceeded = tol is not None and report["max_rel_err"] > tol
    doc = {"reference": args.series[0], "other": args.series[1], "tolerance": tol,
           "exceeded": exceeded, **report}
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        io.write_json(doc, args.out)
    return EXIT_TOLERANCE if exceeded else EXIT_OK


def cmd_fit(args) -> int:
    try:
        s = io.read_series_csv(args.series)
        if args.plateau == "estimate":
            plateau = analysis.estimate_plateau(s, args.tail_fraction).value
        elif args.plateau == "zero":
            plateau = 0.0
        else:
            plateau = float(args.plateau)
        window = (args.t_min, args.t_max)
        if args.mode == "power":
            fit = analysis.fit_power_law(s, window, plateau)
        else:
            fit = analysis.fit_exponential(s, window, plateau)
    except Exception as exc:  # noqa: BLE001
        _err(str(exc))
        return _exit_code(exc)
    doc = {"mode": args.mode, "plateau": plateau, **fit.to_dict()}
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        io.write_json(doc, args.out)
    return EXIT_OK


def cmd_meanfield(args) -> int:
    try:
        sol = meanfield.mf_solve(args.N, args.tau)
        s = meanfield.mf_series(sol, args.ell, args.n_max)
    except Exception as exc:  # noqa: BLE001
        _err(str(exc))
        return _exit_code(exc)
    summary = {
        "N": sol.N, "tau": sol.tau, "x": sol.x, "xi": sol.xi,
        "lambda2": [sol.lambda2.real, sol.lambda2.imag],
        "singular": sol.singular,
        "total_detection": str(meanfield.mf_total_detection(sol.N, args.ell)),
    }
    base = _out_base(args)
    if base is None:
        sys.stdout.write("n,t,P,p\n")
        for n, t, P, p in s.rows():
            sys.stdout.write(f"{n},{t!r},{P!r},{p!r}\n")
        return EXIT_OK
    base.mkdir(parents=True, exist_ok=True)
    io.write_series_csv(s, base / "meanfield.csv")
    io.write_json(summary, base / "meanfield.json")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_graph_check(args) -> int:
    try:
        h, d = load_graph(args.graph)
    except Exception as exc:  # noqa: BLE001
        _err(str(exc))
        return _exit_code(exc)
    m = h.matrix
    iu = [(i, j) for i in range(m.shape[0]) for j in range(i, m.shape[0]) if m[i, j] != 0]
    doc = {"sites": h.n_sites, "nonzero_entries": len(iu), "detected_sites": d.detected_sites(),
           "system_sites": len(d.system), "notes": list(h.notes)}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdetect", description="Survival and first-detection statistics "
                                "of a tight-binding particle under repeated projective measurement.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one config file or every *.ini in a directory")
    r.add_argument("--config", required=True, help="config file or directory of configs")
    r.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    r.add_argument("--tolerance", type=float, help="fail with exit 4 if any engine differs by more than this")
    r.add_argument("--jobs", type=int, default=1, help="parallel experiments in batch mode")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare two series files or two engines of one config")
    c.add_argument("series", nargs="*", help="reference and other series CSV")
    c.add_argument("--config", help="config to run with --engines")
    c.add_argument("--engines", help="two engines, e.g. exact,absorbing")
    c.add_argument("--out", help="output path (JSON file, or directory with --config)")
    c.add_argument("--tolerance", type=float)
    c.add_argument("--resample", action="store_true", help="interpolate the second series onto the first")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("fit", help="fit a power law or exponential to a series CSV")
    f.add_argument("series")
    f.add_argument("--t-min", type=float, required=True)
    f.add_argument("--t-max", type=float, required=True)
    f.add_argument("--plateau", default="zero", help="zero, estimate or a number")
    f.add_argument("--tail-fraction", type=float, default=0.1)
    f.add_argument("--mode", choices=("power", "exponential"), default="power")
    f.add_argument("--out", help="write the fit JSON here")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("meanfield", help="closed-form complete-graph series")
    m.add_argument("--N", type=int, required=True)
    m.add_argument("--tau", type=float, required=True)
    m.add_argument("--ell", type=int, required=True)
    m.add_argument("--n-max", type=int, default=100)
    m.add_argument("--out", help="directory for meanfield.csv and meanfield.json (default: CSV to stdout)")
    m.set_defaults(func=cmd_meanfield)

    g = sub.add_parser("graph-check", help="validate a custom graph file")
    g.add_argument("graph")
    g.set_defaults(func=cmd_graph_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
