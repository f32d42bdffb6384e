"""Command-line interface: ``glrsm {detect, simulate, gen-quantiles, scan-profile}``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from glrsm.ci import ArgmaxLawTable
from glrsm.errors import ConfigurationError, ConvergenceError, DegenerateContrastError, DomainError, InsufficientDataError
from glrsm.models import ModelSpec
from glrsm.pipeline import PipelineConfig, detect, summarize
from glrsm.scan import ScanConfig, default_h, scan_series
from glrsm.sim import MODEL_NAMES, PiecewiseSpec, builtin_model, run_replications

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

log = logging.getLogger("glrsm")


class InputError(ValueError):
    pass


def read_series(path) -> np.ndarray:
    """Single-column CSV with an optional header line."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 1:
                raise InputError(f"{path}:{lineno}: expected one column, got {len(row)}")
            try:
                v = float(row[0])
            except ValueError:
                if lineno == 1 and not values:
                    continue  # header
                raise InputError(f"{path}:{lineno}: cannot parse {row[0]!r} as a number") from None
            if not np.isfinite(v):
                raise InputError(f"{path}:{lineno}: non-finite value {row[0]!r}")
            values.append(v)
    if not values:
        raise InputError(f"{path}: no observations")
    return np.asarray(values)


def _parse_orders(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"cannot parse orders {text!r}") from None


def _model_from_args(args) -> ModelSpec:
    orders = _parse_orders(args.orders)
    if args.model == "garch":
        if orders not in ((), (1, 1)):
            raise ConfigurationError("GARCH orders are fixed at (1,1)")
        return ModelSpec.garch()
    if args.model == "ar":
        if len(orders) > 1:
            raise ConfigurationError("AR takes a single order p")
        return ModelSpec.ar(orders[0] if orders else 1, args.mean)
    if len(orders) != 2:
        raise ConfigurationError("ARMA needs --orders p,q")
    return ModelSpec.arma(*orders)


def _resolve_h(text: str, n: int) -> int:
    if text == "auto":
        return default_h(n)
    try:
        return int(text)
    except ValueError:
        raise InputError(f"--h must be 'auto' or an integer, got {text!r}") from None


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pipeline_from_args(args, n: int) -> PipelineConfig:
    spec = _model_from_args(args)
    return PipelineConfig.for_model(
        spec, h=_resolve_h(args.h, n), p_max=args.p_max, max_candidates=args.max_candidates,
        stride=args.stride, alpha=args.alpha, simultaneous=args.simultaneous, scan_order=args.scan_order,
    )


def cmd_detect(args) -> int:
    x = read_series(args.input)
    cfg = _pipeline_from_args(args, x.shape[0])
    res = detect(x, cfg)
    _write(args.output, res.to_json(timestamps=not args.no_timestamps) + "\n")
    if args.output not in (None, "-"):
        print(summarize(res))
    return EXIT_OK


def cmd_scan_profile(args) -> int:
    x = read_series(args.input)
    spec = _model_from_args(args)
    if spec.family.value == "arma":
        spec = ModelSpec.ar(args.scan_order)
    cfg = ScanConfig(_resolve_h(args.h, x.shape[0]), spec, stride=args.stride)
    prof = scan_series(x, cfg)
    lines = ["t,S"] + [f"{t},{s!r}" for t, s in zip(prof.positions.tolist(), prof.stats.tolist())]
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _load_spec_file(path) -> PiecewiseSpec:
    """JSON: {"segments": [{"family": "ar", "orders": [1], "theta": [...], "length": 400}, ...]}."""
    try:
        doc = json.loads(Path(path).read_text())
        segs = []
        for s in doc["segments"]:
            fam, orders = s["family"], s.get("orders", [])
            if fam == "garch":
                spec = ModelSpec.garch()
            elif fam == "ar":
                spec = ModelSpec.ar(orders[0] if orders else 1, bool(s.get("mean", False)))
            else:
                spec = ModelSpec.arma(*orders)
            segs.append((spec, tuple(s["theta"]), int(s["length"])))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed spec file ({exc})") from None
    return PiecewiseSpec(
        tuple(segs), continuity=bool(doc.get("continuity", True)),
        burn_in=int(doc.get("burn_in", 500)), name=doc.get("name", Path(path).stem),
    )


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise ConfigurationError("--reps must be >= 1")
    if (args.model is None) == (args.spec is None):
        raise ConfigurationError("give exactly one of --model or --spec")
    spec = builtin_model(args.model, not args.restart) if args.model else _load_spec_file(args.spec)
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**63)
    kw = {"alpha": args.alpha, "simultaneous": args.simultaneous}
    if args.h != "auto":
        kw["h"] = _resolve_h(args.h, spec.n)
    cfg = spec.pipeline_config(**kw)
    report = run_replications(spec, args.reps, cfg, args.alpha, seed, workers=args.threads)
    _write(args.output, report.to_json(timestamps=not args.no_timestamps) + "\n")
    if args.raw_csv:
        Path(args.raw_csv).write_text(report.raw_csv())
    if args.table or args.output not in (None, "-"):
        print(report.table())
    return EXIT_OK


def cmd_gen_quantiles(args) -> int:
    if args.paths < 10_000:
        raise ConfigurationError("--paths must be at least 10000")
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**63)
    table = ArgmaxLawTable.generate(args.R, args.delta, args.paths, seed)
    if table.truncated_mass > 1e-3:
        warnings.warn(
            f"about {100 * table.truncated_mass:.2f}% of paths have their argmax beyond R={args.R}; "
            "increase R", stacklevel=1,
        )
    _write(args.output, table.to_text())
    return EXIT_OK


def _add_model_args(p, default_model="ar"):
    p.add_argument("--model", choices=["ar", "arma", "garch"], default=default_model)
    p.add_argument("--orders", help="p for AR, p,q for ARMA")
    p.add_argument("--mean", action="store_true", help="include an intercept (AR only)")
    p.add_argument("--h", default="auto", help="window radius or 'auto'")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--scan-order", type=int, default=5, help="AR order used to scan ARMA data")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glrsm", description="Multiple change-point detection with confidence intervals.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect change-points in a single-column CSV")
    p.add_argument("--input", required=True)
    _add_model_args(p)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--simultaneous", action="store_true")
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--p-max", type=int, default=5)
    p.add_argument("--seed", type=int, help="accepted for interface uniformity; detection is deterministic")
    p.add_argument("--output", default="-")
    p.add_argument("--no-timestamps", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="unused: a single detection runs serially")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="replicate the detection pipeline on a built-in or custom model")
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--spec", help="JSON piecewise specification")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--simultaneous", action="store_true")
    p.add_argument("--h", default="auto")
    p.add_argument("--restart", action="store_true", help="restart the recursion at every change")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", default="-")
    p.add_argument("--raw-csv")
    p.add_argument("--table", action="store_true", help="print the summary table")
    p.add_argument("--no-timestamps", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes for replications")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-quantiles", help="regenerate the argmax-law quantile table")
    p.add_argument("--R", type=float, default=200.0)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_gen_quantiles)

    p = sub.add_parser("scan-profile", help="write (t, S_h(t)) as CSV")
    p.add_argument("--input", required=True)
    _add_model_args(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_scan_profile)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigurationError, InsufficientDataError, DomainError, OSError) as exc:
        print(f"glrsm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, DegenerateContrastError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"glrsm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
