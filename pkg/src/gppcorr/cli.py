"""``gppcorr`` command line.

Exit codes: 0 success, 1 usage or input error (message on stderr),
2 numerical failure (the failing stage is named on stderr).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import __version__
from .cli_io import (
    FormatError,
    RunManifest,
    atomic_write,
    fmt_float,
    load_json,
    load_model,
    model_to_dict,
    now_iso,
    read_field_csv,
    write_field_csv,
    write_tables,
)
from .covmodels import LMC, CovarianceSizeError, LocationSet
from .experiments import ExperimentConfig, JuraConfig, run_jura_pipeline, run_recovery_study, run_roc_study
from .gaussian import sample_field
from .inference import fit_sigma_mle
from .netcalc import (
    UnsupportedModelError,
    effective_range,
    lmc_ci_check,
    lmc_inverse_spectral_entry,
    marginal_corr_fn,
    partial_corr_fn,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"numerical failure in {stage}: {type(exc).__name__}: {exc}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'i,j' (1-based), got {text!r}") from None
    if i < 1 or j < 1:
        raise argparse.ArgumentTypeError("component indices are 1-based")
    return i - 1, j - 1


def _pairs(text: str) -> list:
    return [_pair(p) for p in text.split(";") if p.strip()]


def _lags(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("need step > 0 and stop >= start")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gppcorr", description="Partial-correlation networks for multivariate Gaussian processes")
    p.add_argument("--version", action="version", version=f"gppcorr {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw one field from a model")
    s.add_argument("--model", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", type=int, help="regular grid side on [0,1]^d")
    g.add_argument("--locs", help="CSV whose coordinate columns give the locations")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("fit", help="maximum-likelihood Sigma with fixed spatial parameters")
    s.add_argument("--model", required=True, help="template model (spatial parameters are kept)")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--maxiter", type=int, default=500)

    s = sub.add_parser("pcorr", help="marginal and partial cross-correlation curves")
    s.add_argument("--model", required=True)
    s.add_argument("--pairs", type=_pairs, required=True, help="'i,j' or 'i,j;k,l' (1-based)")
    s.add_argument("--lags", type=_lags, required=True, help="start:stop:step")
    s.add_argument("--anchor", type=_vector)
    s.add_argument("--direction", type=_vector)
    s.add_argument("--out", required=True)

    s = sub.add_parser("range", help="effective and partial effective cross-range")
    s.add_argument("--model", required=True)
    s.add_argument("--pair", type=_pair, required=True)
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--search-max", type=float, default=1.0)
    s.add_argument("--anchor", type=_vector)
    s.add_argument("--direction", type=_vector)
    s.add_argument("--out")

    for name, hlp in (("roc-study", "Spatial vs Independent graph recovery"),
                      ("recovery-study", "partial-correlation recovery and prediction")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", help="JSON config (schema_version 1); defaults otherwise")
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--out", required=True)

    s = sub.add_parser("jura", help="Jura-format geostatistical pipeline")
    s.add_argument("--data", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--test-count", type=int, default=200)
    s.add_argument("--no-log", action="store_true", help="data already on the log scale")
    s.add_argument("--search-max", type=float, default=5.0)

    s = sub.add_parser("lmc-check", help="process-level conditional independence in an LMC")
    s.add_argument("--model", required=True)
    s.add_argument("--pair", type=_pair, required=True)
    s.add_argument("--tol", type=float, default=1e-12)
    return p


# ---------------------------------------------------------------------------
# commands


def _direction(model, args):
    d = model.dim
    anchor = args.anchor if args.anchor is not None else np.zeros(d)
    direction = args.direction if args.direction is not None else np.eye(d)[0]
    if anchor.size != d or direction.size != d or not np.any(direction):
        raise UsageError(f"--anchor/--direction need {d} coordinates and a nonzero direction")
    return anchor, direction


def _check_pair(model, i, j):
    if max(i, j) >= model.q:
        raise UsageError(f"pair ({i + 1},{j + 1}) out of range for q={model.q}")


def cmd_simulate(args):
    model = load_model(args.model)
    if args.grid is not None:
        if args.grid < 1:
            raise UsageError("--grid must be positive")
        locs = LocationSet.grid(args.grid, model.dim)
    else:
        locs = read_field_csv(args.locs)[0].locs
    with _stage("simulation"):
        sample = sample_field(model, locs, args.seed)
    write_field_csv(sample, args.out)


def cmd_fit(args):
    model = load_model(args.model)
    sample, names = read_field_csv(args.data)
    if sample.q != model.q:
        raise UsageError(f"data has {sample.q} components, model has {model.q}")
    if isinstance(model, LMC):
        raise UsageError("fit estimates Sigma for inside-out families; the LMC is not supported")
    with _stage("Sigma maximum likelihood"):
        res = fit_sigma_mle(sample, model, maxiter=args.maxiter)
    doc = {"model": model_to_dict(res.model_hat), "fit": res.to_dict(), "components": list(names)}
    atomic_write(args.out, json.dumps(doc, indent=2) + "\n")
    if not res.converged:
        print(f"warning: optimizer stopped before convergence ({res.message})", file=sys.stderr)


def cmd_pcorr(args):
    model = load_model(args.model)
    anchor, direction = _direction(model, args)
    lines = ["i,j,lag,marginal,partial"]
    for i, j in args.pairs:
        _check_pair(model, i, j)
        try:
            pf = partial_corr_fn(model, i, j).along(anchor, direction)
        except UnsupportedModelError as exc:
            raise UsageError(str(exc)) from None
        mf = marginal_corr_fn(model, i, j).along(anchor, direction)
        with _stage("correlation evaluation"):
            m = np.atleast_1d(mf(args.lags))
            pc = np.atleast_1d(pf(args.lags))
        for h, a, b in zip(args.lags, m, pc):
            lines.append(f"{i + 1},{j + 1},{fmt_float(h)},{fmt_float(a)},{fmt_float(b)}")
    atomic_write(args.out, "\n".join(lines) + "\n")


def cmd_range(args):
    model = load_model(args.model)
    i, j = args.pair
    _check_pair(model, i, j)
    if not 0 < args.threshold < 1 or args.search_max <= 0:
        raise UsageError("need 0 < threshold < 1 and search-max > 0")
    anchor, direction = _direction(model, args)
    try:
        pf = partial_corr_fn(model, i, j).along(anchor, direction)
    except UnsupportedModelError as exc:
        raise UsageError(str(exc)) from None
    mf = marginal_corr_fn(model, i, j).along(anchor, direction)
    with _stage("range search"):
        res = {
            "pair": [i + 1, j + 1],
            "threshold": args.threshold,
            "search_max": args.search_max,
            "effective_cross_range": effective_range(mf, args.threshold, args.search_max),
            "partial_effective_cross_range": effective_range(pf, args.threshold, args.search_max),
        }
    text = json.dumps({k: (v if not (isinstance(v, float) and np.isinf(v)) else "inf") for k, v in res.items()},
                      indent=2) + "\n"
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"master_seed"}


def _study_config(args, defaults):
    doc = load_json(args.config) if args.config else {"schema_version": 1}
    if doc.pop("schema_version", None) != 1:
        raise UsageError("config needs \"schema_version\": 1")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        return defaults(master_seed=args.seed, **{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _run_study(args, argv, runner, defaults):
    cfg = _study_config(args, defaults)
    manifest = RunManifest(args.command, list(argv), cfg.to_dict(), args.seed, now_iso())
    with _stage(args.command):
        report = runner(cfg)
    write_tables(report, args.out, manifest)
    print(json.dumps(report.summary, indent=2, default=str))


def cmd_jura(args, argv):
    sample, names = read_field_csv(args.data)
    cfg = JuraConfig(test_count=args.test_count, seed=args.seed, log_transform=not args.no_log,
                     search_max=args.search_max)
    manifest = RunManifest("jura", list(argv), cfg.to_dict(), args.seed, now_iso())
    try:
        with _stage("jura pipeline"):
            report = run_jura_pipeline(sample, names, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_tables(report, args.out, manifest)
    print(json.dumps(report.summary, indent=2, default=str))


def cmd_lmc_check(args):
    model = load_model(args.model)
    if not isinstance(model, LMC):
        raise UsageError("lmc-check needs an LMC model document")
    i, j = args.pair
    _check_pair(model, i, j)
    res = lmc_ci_check(model, i, j, args.tol)
    if res.independent:
        print(f"y{i + 1} and y{j + 1} are conditionally independent at the process level")
        return
    omegas = np.geomspace(1e-2, 1e2, 401) * max(p.phi for p in model.corrs)
    with _stage("inverse spectral density"):
        vals = np.array([lmc_inverse_spectral_entry(model, w, i, j) for w in omegas])
    # report the lowest tested frequency with a clearly nonzero entry
    big = np.flatnonzero(np.abs(vals) > 1e-3)
    k = int(big[0]) if big.size else int(np.argmax(np.abs(vals)))
    print(f"y{i + 1} and y{j + 1} are NOT conditionally independent: "
          f"row r={res.witness + 1} of inv(Lambda) has a_ri*a_rj = {fmt_float(res.products[res.witness])}")
    print(f"[S_Y(omega)^-1]_{i + 1}{j + 1} = {fmt_float(vals[k])} at |omega| = {fmt_float(omegas[k])}")


class _stage:
    """Context manager turning numerical exceptions into a named NumericalFailure."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, exc, tb):
        if exc is not None and isinstance(exc, (np.linalg.LinAlgError, FloatingPointError,
                                                 ArithmeticError, CovarianceSizeError)):
            raise NumericalFailure(self.name, exc) from exc
        return False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "simulate":
            cmd_simulate(args)
        elif args.command == "fit":
            cmd_fit(args)
        elif args.command == "pcorr":
            cmd_pcorr(args)
        elif args.command == "range":
            cmd_range(args)
        elif args.command == "roc-study":
            _run_study(args, argv, run_roc_study, ExperimentConfig.roc_defaults)
        elif args.command == "recovery-study":
            _run_study(args, argv, run_recovery_study, ExperimentConfig.recovery_defaults)
        elif args.command == "jura":
            cmd_jura(args, argv)
        elif args.command == "lmc-check":
            cmd_lmc_check(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid model parameters and similar input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
