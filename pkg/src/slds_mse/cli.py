"""Command line front end: analyze | simulate | compare | recommend.

A thin shell over the library: scenario JSON in, CSV/SVG reports out.
Every number in a report comes from a library call that is unit-tested
on its own; this layer only selects methods, formats rows and maps
failures to exit codes (0 success, 2 validation failure, 3 capacity or
method failure, 4 comparison verdict FAIL).  Set SLDS_MSE_LOG to a level
name (DEBUG, INFO, ...) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .model import MseSeries, Scenario, validate_scenario
from .kalman import InnovationSolveError, average_filter_modes
from .enumeration import (
    DEFAULT_CAP,
    EnumerationCapError,
    pruned_moments,
    single_mode_slds_moments,
    skf_slds_moments,
)
from .fast import aggregate_series, merge_clusters, merge_recommendation
from .montecarlo import empirical_mse, run_monte_carlo
from .serialize import ScenarioFormatError, load_scenario
from .svgchart import write_line_chart

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_COMPARE_FAIL = 4

log = logging.getLogger("slds_mse.cli")


class CommandError(Exception):
    """Fatal command failure carrying the process exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _g17(value) -> str:
    """17 significant digits: enough to round-trip any double exactly."""
    return format(float(value), ".17g")


def _configure_logging() -> None:
    name = os.environ.get("SLDS_MSE_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slds-mse",
        description="Predict and cross-check transient filter MSE on "
                    "randomly switching linear dynamic systems.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--horizon", type=int,
                       help="override the scenario horizon")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads for Monte Carlo chunks")

    def analytic_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--svg", help="also write an SVG line chart here")
        p.add_argument("--method", default="auto",
                       choices=("auto", "exact", "pruned", "aggregate"),
                       help="analytic method (auto: aggregate when the chain "
                            "is uniform, else exact, else pruned)")
        p.add_argument("--keep", type=int,
                       help="pruning: trajectories kept per step")
        p.add_argument("--mass", type=float,
                       help="pruning: probability mass kept per step")

    p = sub.add_parser("analyze", help="analytic MSE per filter")
    common(p)
    analytic_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo MSE per filter")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare",
                       help="analytic vs Monte Carlo with agreement verdict")
    common(p)
    analytic_flags(p)
    p.add_argument("--rtol", type=float, default=0.05,
                   help="relative tolerance for the verdict (steps >= 2)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("recommend", help="pairwise mode-merge analysis")
    common(p)
    p.add_argument("--threshold", type=float, default=0.1,
                   help="relative improvement below which a pair merges")
    p.add_argument("--metric", default="mean", choices=("mean", "max", "final"),
                   help="how per-step improvements are summarized")
    p.set_defaults(func=cmd_recommend)
    return parser


def _load(args) -> Scenario:
    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        raise CommandError(EXIT_VALIDATION, f"cannot read scenario: {exc}")
    except ScenarioFormatError as exc:
        raise CommandError(EXIT_VALIDATION, str(exc))
    if args.seed is not None or args.horizon is not None:
        scenario = Scenario(
            model=scenario.model,
            horizon=args.horizon if args.horizon is not None else scenario.horizon,
            detection=scenario.detection,
            filters=scenario.filters,
            mc_samples=scenario.mc_samples,
            seed=args.seed if args.seed is not None else scenario.seed,
            tolerances=scenario.tolerances)
    violations = validate_scenario(scenario)
    if violations:
        lines = "\n".join(f"  {v}" for v in violations)
        raise CommandError(EXIT_VALIDATION,
                           f"scenario validation failed:\n{lines}")
    return scenario


def _resolve_method(scenario: Scenario, args, pairs: bool) -> str:
    leaves = (scenario.model.r ** (2 if pairs else 1)) ** scenario.horizon
    if args.method == "auto":
        if scenario.model.chain.is_uniform():
            return "aggregate"
        if leaves <= DEFAULT_CAP:
            return "exact"
        if args.keep is not None or args.mass is not None:
            return "pruned"
        raise CommandError(
            EXIT_CAPACITY,
            f"exact enumeration needs {leaves} trajectories (cap {DEFAULT_CAP}) "
            f"and the chain is not uniform; pass --keep/--mass for pruning")
    if args.method == "pruned" and args.keep is None and args.mass is None:
        raise CommandError(EXIT_CAPACITY,
                           "--method pruned requires --keep or --mass")
    return args.method


def _analytic_series(scenario: Scenario, args) -> list:
    """(FilterSpec, MseSeries) per scenario filter, honoring --method."""
    model = scenario.model
    det = scenario.detection
    n = scenario.horizon
    out = []
    for spec in scenario.filters:
        method = _resolve_method(scenario, args, pairs=(spec.kind == "skf"))
        if spec.kind == "average":
            filt = average_filter_modes(model, n)
        elif spec.kind == "single-mode":
            filt = model.modes[spec.mode - 1]
        else:
            filt = None
        t0 = time.perf_counter()
        try:
            if method == "aggregate":
                series = aggregate_series(model, det, n, filt=filt)
            elif method == "exact":
                if spec.kind == "skf":
                    series, _ = skf_slds_moments(model, det, n)
                else:
                    series, _ = single_mode_slds_moments(model, filt, n)
            else:
                series, _ = pruned_moments(model, det, n, keep=args.keep,
                                           mass=args.mass, filt=filt)
        except EnumerationCapError as exc:
            raise CommandError(EXIT_CAPACITY,
                               f"{spec.display}: {exc} (try --method aggregate "
                               f"or --keep/--mass)")
        except (ValueError, InnovationSolveError) as exc:
            raise CommandError(EXIT_CAPACITY, f"{spec.display}: {exc}")
        log.info("%s: %s method, %.1f ms", spec.display, series.method,
                 1e3 * (time.perf_counter() - t0))
        out.append((spec, series))
    return out


def _method_tag(series: MseSeries, step: int) -> str:
    if series.method == "pruned":
        return f"pruned({format(series.kept_mass[step], '.6g')})"
    return series.method


def _write_csv(path: Optional[str], header: list, rows: list) -> None:
    def emit(fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            emit(fh)


def _maybe_svg(path: Optional[str], series_list: list, title: str,
               dashed=()) -> None:
    if path is None:
        return
    chart = [(label, np.arange(len(values)), values)
             for label, values in series_list]
    write_line_chart(path, chart, title=title, dashed=dashed)


def cmd_analyze(args) -> int:
    scenario = _load(args)
    results = _analytic_series(scenario, args)
    rows = [[step, spec.display, _g17(series.mse[step]),
             _method_tag(series, step)]
            for spec, series in results
            for step in range(len(series))]
    _write_csv(args.out, ["step", "filter", "analytic_mse", "method"], rows)
    _maybe_svg(args.svg, [(spec.display, series.mse)
                          for spec, series in results],
               title="Analytic MSE by filter")
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load(args)
    runs = run_monte_carlo(scenario.model, scenario.filters,
                           scenario.detection, scenario.horizon,
                           scenario.mc_samples, scenario.seed,
                           threads=args.threads)
    rows = []
    for spec, run in zip(scenario.filters, runs):
        emp = empirical_mse(run)
        rows += [[step, spec.display, _g17(emp.mse[step]),
                  _g17(emp.stderr[step])]
                 for step in range(emp.mse.size)]
    _write_csv(args.out, ["step", "filter", "mc_mse", "mc_stderr"], rows)
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _load(args)
    results = _analytic_series(scenario, args)
    runs = run_monte_carlo(scenario.model, scenario.filters,
                           scenario.detection, scenario.horizon,
                           scenario.mc_samples, scenario.seed,
                           threads=args.threads)
    rows = []
    failures = []
    curves = []
    for (spec, series), run in zip(results, runs):
        emp = empirical_mse(run)
        curves.append((spec.display, series.mse))
        curves.append((f"{spec.display} (mc)", emp.mse))
        for step in range(len(series)):
            a, m = series.mse[step], emp.mse[step]
            rows.append([step, spec.display, _g17(a), _g17(m),
                         _g17(emp.stderr[step]), _method_tag(series, step)])
            if step < 2:
                continue
            rel = abs(a - m) / a if a > 0 else (0.0 if m == 0 else np.inf)
            if rel > args.rtol and abs(a - m) > 4.0 * emp.stderr[step]:
                failures.append((spec.display, step, a, m, rel))
    _write_csv(args.out, ["step", "filter", "analytic_mse", "mc_mse",
                          "mc_stderr", "method"], rows)
    _maybe_svg(args.svg, curves, title="Analytic vs Monte Carlo MSE",
               dashed={label for label, _ in curves if label.endswith(" (mc)")})
    if failures:
        print(f"FAIL: {len(failures)} step(s) outside rtol={args.rtol} "
              f"and the 4-stderr gate", file=sys.stderr)
        for label, step, a, m, rel in failures:
            print(f"  {label} step {step}: analytic {a:.6g} vs mc {m:.6g} "
                  f"(rel gap {rel:.3g})", file=sys.stderr)
        return EXIT_COMPARE_FAIL
    print(f"PASS: analytic and Monte Carlo MSE agree within "
          f"rtol={args.rtol} or 4 stderr for steps 2..{scenario.horizon}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    scenario = _load(args)
    if scenario.model.r < 2:
        raise CommandError(EXIT_VALIDATION,
                           "merge analysis needs at least two modes")
    report = merge_recommendation(scenario.model, scenario.detection,
                                  scenario.horizon, args.threshold,
                                  metric=args.metric)
    rows = [[pair.mode_i, pair.mode_j, _g17(pair.improvement), pair.metric,
             _g17(pair.threshold), pair.best_single_label,
             "merge" if pair.merge else "keep"]
            for pair in report.pairs]
    _write_csv(args.out, ["mode_i", "mode_j", "improvement", "metric",
                          "threshold", "best_single", "recommendation"], rows)

    adjacency = {str(k): [] for k in range(1, report.r + 1)}
    for pair in report.pairs:
        if pair.merge:
            adjacency[str(pair.mode_i)].append(pair.mode_j)
            adjacency[str(pair.mode_j)].append(pair.mode_i)
    clusters = merge_clusters(report)
    print(json.dumps({"merge_graph": adjacency,
                      "clusters": clusters}, sort_keys=True))
    for pair in report.pairs:
        verdict = "merge" if pair.merge else "keep both"
        print(f"modes {pair.mode_i}+{pair.mode_j}: improvement "
              f"{100 * pair.improvement:.1f}% ({pair.metric}) vs "
              f"{pair.best_single_label} -> {verdict}")
    if len(clusters) == 1:
        print("recommendation: merge all modes into one averaged mode; "
              "a single KF suffices")
    elif all(len(c) == 1 for c in clusters):
        print("recommendation: keep all modes; SKF recommended")
    else:
        kept = ", ".join("{" + ",".join(map(str, c)) + "}" for c in clusters)
        print(f"recommendation: SKF over merged mode groups {kept}")
    return EXIT_OK


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
