"""Command-line front end: ``simulate``, ``identify`` and ``benchmark``.

Exit codes: 0 on success, 1 on a runtime or numerical failure, 2 on a usage
error.  Diagnostics go to standard error at the level named by ``SYSID_LOG``
(``error``, ``warn``, ``info`` or ``debug``; default ``warn``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import em, io
from .arma import ArmaModel, condition_initial
from .benchmark import ESTIMATORS, BenchmarkConfig, make_scenario, run_estimator, run_monte_carlo
from .model import Dataset
from .posterior import estimate_noise_variance

log = logging.getLogger("kbsysid")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    """Bad flags or inputs; reported with exit status 2."""


def _setup_logging():
    name = os.environ.get("SYSID_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(name, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if name not in _LEVELS:
        log.warning("ignoring unknown SYSID_LOG=%r", name)


def _noise_var(text: str):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("noise variance must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbsysid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a random system, input model and dataset")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n", type=int, required=True, help="FIR length")
    s.add_argument("--N", type=int, required=True, help="number of observed samples")
    s.add_argument("--system-order", type=int, default=40)
    s.add_argument("--arma-order", type=int, default=8)
    s.add_argument("--snr", type=float, default=20.0)
    s.add_argument("--out", type=Path, required=True)

    i = sub.add_parser("identify", help="estimate an impulse response from data.csv")
    i.add_argument("--data", type=Path, required=True)
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--method", choices=ESTIMATORS, required=True)
    i.add_argument("--arma", type=Path, help="ARMA input model (JSON), needed by mean and joint")
    i.add_argument("--noise-var", type=_noise_var, default="auto", help="noise variance or 'auto'")
    i.add_argument("--ic", type=Path, help="true past inputs (CSV), needed by oracle")
    i.add_argument("--cov-mode", choices=("transient", "stationary"), default="stationary")
    i.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("benchmark", help="run the Monte Carlo comparison")
    b.add_argument("--config", type=Path, required=True)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--parallel", type=int, help="worker processes (0 = all cores)")
    return p


def cmd_simulate(args) -> int:
    if args.n < 2 or args.N < args.n:
        raise UsageError(f"need n >= 2 and N >= n, got n={args.n}, N={args.N}")
    if args.system_order < 2 or args.system_order % 2 or args.arma_order < 0 or args.arma_order % 2:
        raise UsageError("orders must be even (system order >= 2)")
    if not args.snr > 0:
        raise UsageError("snr must be positive")
    scen = make_scenario(args.seed, 0, args.n, args.N, args.system_order, args.arma_order, args.snr)
    data = scen.dataset(args.N)
    sigma2 = scen.sigma2(args.N)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_series(out / "data.csv", ("t", "u", "y"), range(args.N), data.u_plus, data.y)
    io.write_series(out / "ic.csv", ("t", "u"), range(-(args.n - 1), 0), data.u_minus_true)
    io.write_series(out / "g_true.csv", ("k", "g"), range(args.n), scen.g)
    (out / "arma.json").write_text(scen.model.to_json() + "\n")
    io.write_json(out / "meta.json", {
        "sigma2": sigma2,
        "snr": args.snr,
        "n": args.n,
        "N": args.N,
        "system_order": args.system_order,
        "arma_order": args.arma_order,
        "seeds": scen.seeds,
    })
    log.info("wrote simulation to %s", out)
    return 0


def _load_dataset(args) -> Dataset:
    try:
        u, y = io.read_data(args.data)
        ic = io.read_initial(args.ic, args.n) if args.ic else None
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if args.n < 2 or y.size < args.n:
        raise UsageError(f"need 2 <= n <= N, got n={args.n}, N={y.size}")
    return Dataset(u_plus=u, y=y, n=args.n, u_minus_true=ic)


def cmd_identify(args) -> int:
    if args.method in ("mean", "joint") and args.arma is None:
        raise UsageError(f"--method {args.method} requires --arma")
    if args.method == "oracle" and args.ic is None:
        raise UsageError("--method oracle requires --ic")
    data = _load_dataset(args)
    model = None
    if args.arma is not None:
        try:
            model = ArmaModel.from_json(args.arma.read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"{args.arma}: {exc}") from exc
    if args.noise_var == "auto":
        sigma2 = estimate_noise_variance(data.y, data.u_plus, data.n)
        source = "estimated"
    else:
        sigma2, source = args.noise_var, "given"
    # a perfect least-squares fit gives zero; keep the posterior well defined
    sigma2_used = max(sigma2, np.finfo(float).tiny) if source == "estimated" else sigma2
    cond = condition_initial(data.u_plus, model, data.n, args.cov_mode) if args.method in ("mean", "joint") else None
    res = run_estimator(args.method, data, sigma2_used, model, em.EmOptions(), args.cov_mode, cond)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_series(out / "g_hat.csv", ("k", "g"), range(data.n), res.g_hat)
    io.write_json(out / "result.json", {**res.to_dict(), "sigma2": sigma2, "noise_var_source": source,
                                        "cov_mode": args.cov_mode, "n": data.n, "N": data.N})
    return 0


def cmd_benchmark(args) -> int:
    try:
        obj = json.loads(args.config.read_text())
        if not isinstance(obj, dict):
            raise ValueError("config must be a JSON object")
        config = BenchmarkConfig.from_dict(obj)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from exc
    if args.parallel is not None and args.parallel < 0:
        raise UsageError("--parallel must be >= 0")
    progress = lambda rid: log.info("run %d done", rid)  # noqa: E731
    records, summary = run_monte_carlo(config, args.parallel, progress)
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_records(args.out / "records.csv", records)
    io.write_json(args.out / "summary.json", {"config": config.to_dict(), "summary": summary})
    for N, row in summary.items():
        cells = "  ".join(f"{k}={v['mean']:.1f}±{v['stderr']:.1f}" for k, v in row.items())
        print(f"N={N}: {cells}")
    return 0


_COMMANDS = {"simulate": cmd_simulate, "identify": cmd_identify, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kbsysid {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        log.debug("%s", traceback.format_exc())
        print(json.dumps(diag), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
