"""Command line entry point: ``confound {simulate,measure,bench,report}``.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .contexts import load_suite, save_suite
from .errors import ConfoundError, DataError, DivergenceInfinite, SupportMismatch
from .measures import (
    DIRECTIONS,
    NONE_KNOWN,
    ConfoundingReport,
    DetectionConfig,
    calibrated_threshold,
    cnf1_joint,
    cnf2_joint,
    cnf3_joint,
    measure_pair,
    thm1_joint_unconfounded_test,
    thm3_joint_confounded_test,
    thm5_joint_confounded_test,
)
from .bench import report as reports
from .bench.fixtures import GRAPHS
from .bench.runners import (
    ExperimentSpec,
    build_er_instance,
    build_three_node_suite,
    direction_from_dag,
    run_downstream_ate,
    run_er_benchmark,
    run_three_node_suite,
)
from .scm import generate_context_suite, merge_plans, random_shift_plan, single_target_plan

log = logging.getLogger("confound")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
AUTO = "auto"


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    parts = [t.strip() for t in text.split(",")]
    if any(not p for p in parts):
        raise argparse.ArgumentTypeError(f"expected comma-separated variables, got {text!r}")
    return parts


def _load_spec(args) -> ExperimentSpec:
    data = {}
    if getattr(args, "spec", None):
        try:
            data = json.loads(Path(args.spec).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read spec {args.spec}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.spec}: invalid JSON: {exc.msg}") from None
    for key in ("seeds", "samples", "workers", "threshold"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "calibrate", False):
        data["calibration"] = "null_quantile"
    try:
        return ExperimentSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad experiment spec: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if not args.out:
        raise UsageError("simulate needs --out DIR")
    spec = _load_spec(args)
    seed = args.seed
    if args.graph:
        suite = build_three_node_suite(args.graph, spec, seed)
    else:
        scm = build_er_instance(args.er_nodes, spec, seed)
        hard_plan = single_target_plan(scm, kind="hard")
        soft_plan = random_shift_plan(scm, spec.er_soft_contexts, spec.er_shift_prob, seed, include_observational=False)
        samples = args.samples if args.samples is not None else spec.er_samples[-1]
        suite = generate_context_suite(scm, merge_plans(hard_plan, soft_plan), samples, seed)
    save_suite(suite, args.out)
    print(f"wrote {len(suite.metas)} contexts ({', '.join(suite.columns)}) to {args.out}")
    return EXIT_OK


# -- measure ---------------------------------------------------------------------


def _resolve(suite, token: str) -> str:
    """Column name, or an integer node id (column index without a DAG)."""
    if token in suite.columns:
        return token
    if token.isdigit():
        idx = int(token)
        if suite.dag is not None and idx in suite.dag.nodes and suite.dag.name(idx) in suite.columns:
            return suite.dag.name(idx)
        if suite.dag is None and idx < len(suite.columns):
            return suite.columns[idx]
    suite.check_column(token)  # raises UnknownColumn
    return token


def _settings(text: str) -> tuple[int, ...]:
    return (1, 2, 3) if text == "all" else (int(text),)


def _direction(suite, i: str, j: str, requested: str) -> str:
    if requested != AUTO:
        return requested
    if suite.dag is None:
        raise UsageError("--direction auto needs a suite that carries its DAG")
    return direction_from_dag(suite.dag, i, j)


def _measure_pair(args, suite, cfg) -> ConfoundingReport:
    if len(args.pair) != 2:
        raise UsageError("--pair takes exactly two variables")
    i, j = (_resolve(suite, t) for t in args.pair)
    condition = _resolve(suite, args.condition) if args.condition else None
    settings = _settings(args.setting)
    direction = _direction(suite, i, j, args.direction) if 3 in settings else NONE_KNOWN
    if condition is not None and 3 in settings:
        if args.setting == "all":
            settings = (1, 2)
            log.warning("setting 3 has no conditional variant; skipped")
        else:
            raise UsageError("setting 3 has no conditional variant")
    return measure_pair(suite, i, j, settings=settings, condition=condition, direction=direction, cfg=cfg)


def _add(report: ConfoundingReport, suite, value, cfg) -> None:
    tau = calibrated_threshold(suite, value, cfg)
    report.add(value, value.value > tau, tau)


def _measure_set(args, suite, cfg) -> ConfoundingReport:
    S = [_resolve(suite, t) for t in args.set]
    report = ConfoundingReport(meta={"set": S})
    for setting in _settings(args.setting):
        if setting == 1:
            _add(report, suite, cnf1_joint(suite, S), cfg)
            if len(S) == 3:
                report.add_check("thm1_joint_unconfounded", S, thm1_joint_unconfounded_test(suite, S))
        elif setting == 2:
            _add(report, suite, cnf2_joint(suite, S, seed=args.seed), cfg)
            if len(S) >= 3:
                report.add_check("thm3_joint_confounded", S, thm3_joint_confounded_test(suite, S, seed=args.seed))
        else:
            _add(report, suite, cnf3_joint(suite, S, seed=args.seed), cfg)
            if len(S) >= 3 and args.direction == AUTO:
                if suite.dag is None:
                    raise UsageError("--direction auto needs a suite that carries its DAG")
                dirs = {(a, b): direction_from_dag(suite.dag, a, b) for a in S for b in S if a < b}
                check = thm5_joint_confounded_test(suite, S, dirs, seed=args.seed)
                report.add_check("thm5_joint_confounded", S, check)
    return report


CSV_FIELDS = ("measure", "setting", "value", "information", "detected", "threshold")


def _report_csv(report: ConfoundingReport) -> str:
    rows = []
    for entry in report.entries + [e for e in report.sets if "value" in e]:
        row = {k: entry.get(k) for k in CSV_FIELDS}
        row["variables"] = " ".join(entry["variables"])
        row["conditioning"] = " ".join(entry.get("conditioning", []))
        rows.append(row)
    return reports.to_csv({"schema_version": 1, "kind": "confounding", "pairs": rows})


def cmd_measure(args) -> int:
    if not args.suite:
        raise UsageError("measure needs --suite DIR")
    if (args.pair is None) == (args.set is None):
        raise UsageError("measure needs exactly one of --pair or --set")
    suite = load_suite(args.suite)
    cfg = DetectionConfig(args.threshold, "null_quantile" if args.calibrate else "fixed", seed=args.seed)
    report = _measure_pair(args, suite, cfg) if args.pair is not None else _measure_set(args, suite, cfg)
    text = _report_csv(report) if args.format == "csv" else report.to_json()
    _emit(text, args.out)
    return EXIT_OK


# -- bench / report --------------------------------------------------------------


RUNNERS = {"three-node": run_three_node_suite, "downstream": run_downstream_ate, "er": run_er_benchmark}


def cmd_bench(args) -> int:
    spec = _load_spec(args)
    if args.which == "downstream" and not args.spec:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "graphs": ["G2", "G3", "G4"]})
    result = RUNNERS[args.which](spec)
    text = reports.to_csv(result) if args.format == "csv" else reports.render(result, "json")
    _emit(text, args.out)
    log.info("%s finished in %.1fs", args.which, result.get("seconds", 0.0))
    return EXIT_OK


def cmd_report(args) -> int:
    doc = reports.load_report(args.path)
    _emit(reports.render(doc, args.format), args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="confound", description="Measure unobserved confounding from mechanism shifts.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a context suite")
    which = sim.add_mutually_exclusive_group(required=True)
    which.add_argument("--graph", choices=GRAPHS, help="three-node benchmark graph")
    which.add_argument("--er-nodes", type=int, help="random ER graph with this many observed nodes")
    sim.add_argument("--spec", help="ExperimentSpec JSON")
    sim.add_argument("--samples", type=int, help="samples per context")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", help="suite directory")
    sim.set_defaults(func=cmd_simulate)

    m = sub.add_parser("measure", help="CNF measures for a pair or a set")
    m.add_argument("--suite", help="suite directory")
    m.add_argument("--pair", type=_names, help="i,j (names or node ids)")
    m.add_argument("--set", type=_names, help="i,j,k,... (names or node ids)")
    m.add_argument("--condition", help="observed variable to condition on")
    m.add_argument("--setting", choices=("1", "2", "3", "all"), default="all")
    m.add_argument("--direction", choices=(*DIRECTIONS, AUTO), default=NONE_KNOWN)
    m.add_argument("--threshold", type=float, default=DetectionConfig.threshold)
    m.add_argument("--calibrate", action="store_true", help="threshold at the permutation-null 95th percentile")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out")
    m.add_argument("--format", choices=("json", "csv"), default="json")
    m.set_defaults(func=cmd_measure)

    b = sub.add_parser("bench", help="run a benchmark")
    b.add_argument("which", choices=tuple(RUNNERS))
    b.add_argument("--spec", help="ExperimentSpec JSON")
    b.add_argument("--seeds", type=_int_list)
    b.add_argument("--samples", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--threshold", type=float)
    b.add_argument("--calibrate", action="store_true")
    b.add_argument("--out")
    b.add_argument("--format", choices=("json", "csv"), default="json")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="render a report JSON as a table")
    r.add_argument("path")
    r.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SupportMismatch, DivergenceInfinite) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfoundError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
