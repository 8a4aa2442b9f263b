"""Command-line interface.

Subcommands: solve-qnp, check, loop, eval, report. Exit codes: 0 on
accepted/complete, 3 when the repair loop exhausts its iterations, 4 on
input errors; solve-qnp uses 0/1/2 for solved/unsolvable/resource-limit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ConfigError, RunConfig, RunRecord, evaluate_abstraction, load_instances, report, run_loop
from .pddl import PddlError, parse_domain
from .pipeline import DebugReport, PipelineBudgets, run_pipeline
from .proposer import DocError, ProposerConfig, parse_abstraction_doc, validate_doc
from .qnp import QnpError, parse_qnp
from .solver import SolveBudget, SolveStatus, format_policy, solve

EXIT_OK = 0
EXIT_UNSOLVABLE = 1
EXIT_RESOURCE_LIMIT = 2
EXIT_LOOP_EXHAUSTED = 3
EXIT_INPUT_ERROR = 4


def _cmd_solve_qnp(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
        problem = parse_qnp(text, args.file)
    except (OSError, QnpError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    result = solve(problem, SolveBudget(args.nodes, args.seconds))
    if result.status is SolveStatus.SOLVED:
        print(format_policy(result.policy, problem))
        return EXIT_OK
    if result.status is SolveStatus.UNSOLVABLE:
        print("UNSOLVABLE")
        return EXIT_UNSOLVABLE
    print("RESOURCE-LIMIT")
    return EXIT_RESOURCE_LIMIT


def _load_abstraction(abstraction_path: str, domain_path: str):
    domain_text = Path(domain_path).read_text(encoding="utf-8")
    dom = parse_domain(domain_text, domain_path)
    doc_text = Path(abstraction_path).read_text(encoding="utf-8")
    doc = parse_abstraction_doc(doc_text, dom)
    built = validate_doc(doc, dom)
    return dom, doc, built


def _cmd_check(args) -> int:
    try:
        dom, _, built = _load_abstraction(args.abstraction, args.domain)
        if isinstance(built, DebugReport):
            print("REJECTED", built.stage.value)
            print(json.dumps(built.to_json_dict(), indent=2, sort_keys=True))
            return EXIT_OK
        insts = load_instances(dom, args.instances)
    except (OSError, PddlError, DocError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    outcome = run_pipeline(built, insts, PipelineBudgets())
    if outcome.accepted:
        print("ACCEPTED")
        for name, plan in outcome.plans.items():
            print(f"{name}: {len(plan.steps)} steps: {', '.join(plan.action_names())}")
        return EXIT_OK
    print("REJECTED", outcome.report.stage.value)
    print(json.dumps(outcome.report.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_loop(args) -> int:
    try:
        if args.config:
            cfg = RunConfig.from_json_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        else:
            if not args.domain or not args.training:
                print("error: need --config or --domain plus --training", file=sys.stderr)
                return EXIT_INPUT_ERROR
            cfg = RunConfig(
                domain_path=args.domain,
                training_paths=tuple(args.training),
                eval_paths=tuple(args.eval or ()),
                proposer=ProposerConfig(kind="file", script_paths=tuple(args.script or ())),
                max_iterations=args.iterations,
                training_split=args.training_split,
            )
        if args.domain:
            cfg.domain_path = args.domain
        if args.out:
            cfg.out_dir = args.out
        record = run_loop(cfg)
    except (OSError, PddlError, ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    print(record.to_json())
    if record.accepted:
        return EXIT_OK
    return EXIT_LOOP_EXHAUSTED


def _cmd_eval(args) -> int:
    try:
        dom, _, built = _load_abstraction(args.abstraction, args.domain)
        if isinstance(built, DebugReport):
            print("error: abstraction document invalid", file=sys.stderr)
            return EXIT_INPUT_ERROR
        insts = load_instances(dom, args.instances)
    except (OSError, PddlError, DocError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    from .pipeline import run_asc

    policy = run_asc(built)
    if isinstance(policy, DebugReport):
        print(f"error: abstraction unsolvable ({policy.stage.value})", file=sys.stderr)
        return EXIT_INPUT_ERROR
    coverage, details = evaluate_abstraction(built, policy, insts)
    for d in details:
        print(json.dumps(d, sort_keys=True))
    print(f"coverage: {'n/a' if coverage is None else f'{coverage:.2f}'}")
    return EXIT_OK


def _cmd_report(args) -> int:
    records = []
    try:
        for path in args.records:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
            rec = RunRecord(
                domain=d["domain"],
                debugging=d.get("debugging", True),
                accepted=d.get("accepted", False),
                accepted_iteration=d.get("accepted_iteration"),
                stage_counts=d.get("stage_counts", {}),
                coverage=d.get("coverage"),
                evaluation=d.get("evaluation", []),
                footer=d.get("footer", ""),
            )
            records.append(rec)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    tables = report(records)
    print(tables.text, end="")
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "coverage.csv").write_text(tables.coverage_csv, encoding="utf-8")
        (out / "stages.csv").write_text(tables.stage_csv, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="absforge",
        description="Verify and repair QNP abstractions of generalized planning problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-qnp", help="solve a .qnp problem file")
    p.add_argument("file")
    p.add_argument("--nodes", type=int, default=100_000)
    p.add_argument("--seconds", type=float, default=10.0)
    p.set_defaults(func=_cmd_solve_qnp)

    p = sub.add_parser("check", help="run the staged checks on an abstraction")
    p.add_argument("--abstraction", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--instances", nargs="+", required=True)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("loop", help="run the generate-check-repair loop")
    p.add_argument("--config")
    p.add_argument("--domain")
    p.add_argument("--training", nargs="*")
    p.add_argument("--eval", nargs="*")
    p.add_argument("--script", nargs="*", help="file proposer scripted documents")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--training-split", dest="training_split")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_loop)

    p = sub.add_parser("eval", help="evaluate an accepted abstraction on instances")
    p.add_argument("--abstraction", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--instances", nargs="+", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="tabulate run records")
    p.add_argument("records", nargs="*")
    p.add_argument("--csv-dir", dest="csv_dir")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
