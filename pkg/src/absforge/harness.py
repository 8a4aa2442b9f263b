"""Generate-check-repair loop, held-out evaluation, and table reporting.

run_loop drives a proposer against the debug pipeline for at most N repair
iterations, records every proposal and verdict, and evaluates an accepted
abstraction on held-out instances. RunRecords are fully deterministic with
the file proposer (no timestamps, sorted keys), so replays are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .pddl import GpInstance, Plan, parse_domain, parse_instance, validate_plan
from .pipeline import (
    ALL_STAGES,
    DebugReport,
    PipelineBudgets,
    PromptContext,
    RefinementFailure,
    Stage,
    execute_refined_policy,
    render_prompt,
    run_pipeline,
)
from .proposer import AbstractionDoc, DocError, ProposerConfig, make_proposer, validate_doc
from .refinement import Abstraction
from .solver import Policy, SolveBudget


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    domain_path: str
    training_paths: tuple[str, ...]
    eval_paths: tuple[str, ...] = ()
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    max_iterations: int = 10  # repair-prompt bound N; N+1 proposals total
    budgets: PipelineBudgets = field(default_factory=PipelineBudgets)
    out_dir: str | None = None
    seed: int = 0
    training_split: str | None = None  # "i:d"; default: half for init when >= 4

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if not self.training_paths:
            raise ConfigError("at least one training instance is required")

    @staticmethod
    def from_json_dict(d: dict) -> "RunConfig":
        budgets = PipelineBudgets()
        b = d.get("budgets", {})
        if "solver_nodes" in b or "solver_seconds" in b:
            budgets.solver = SolveBudget(
                b.get("solver_nodes", 100_000), b.get("solver_seconds", 10.0)
            )
        budgets.reach_states = b.get("reach_states", budgets.reach_states)
        budgets.tree_nodes = b.get("tree_nodes", budgets.tree_nodes)
        budgets.exec_nodes = b.get("exec_nodes", budgets.exec_nodes)
        budgets.step_bound = b.get("step_bound", budgets.step_bound)
        return RunConfig(
            domain_path=d["domain"],
            training_paths=tuple(d.get("training", [])),
            eval_paths=tuple(d.get("evaluation", [])),
            proposer=ProposerConfig.from_json_dict(d.get("proposer", {})),
            max_iterations=d.get("max_iterations", 10),
            budgets=budgets,
            out_dir=d.get("out_dir"),
            seed=d.get("seed", 0),
            training_split=d.get("training_split"),
        )

    def split_training(self, n: int) -> tuple[int, int]:
        """(#init instances, #debug instances); explicit "i:d" wins, else the
        first half seeds generation when there are at least 4 instances."""
        if self.training_split:
            try:
                i, d = (int(x) for x in self.training_split.split(":"))
            except ValueError:
                raise ConfigError(f"bad training split '{self.training_split}'") from None
            if i < 1 or d < 1 or i + d > n:
                raise ConfigError(f"training split '{self.training_split}' does not fit {n} instances")
            return i, d
        if n >= 4:
            return n // 2, n - n // 2
        return n, n


@dataclass
class IterationRecord:
    index: int  # 1-based
    doc: dict
    outcome: str  # 'accepted' | 'rejected' | 'error'
    stage: str | None
    report: dict | None


@dataclass
class RunRecord:
    domain: str
    debugging: bool
    iterations: list[IterationRecord] = field(default_factory=list)
    accepted: bool = False
    accepted_iteration: int | None = None
    stage_counts: dict[str, int] = field(default_factory=dict)
    coverage: float | None = None
    evaluation: list[dict] = field(default_factory=list)
    aborted: str | None = None
    footer: str = ""

    def to_json_dict(self) -> dict:
        return {
            "domain": self.domain,
            "debugging": self.debugging,
            "iterations": [
                {
                    "index": it.index,
                    "doc": it.doc,
                    "outcome": it.outcome,
                    "stage": it.stage,
                    "report": it.report,
                }
                for it in self.iterations
            ],
            "accepted": self.accepted,
            "accepted_iteration": self.accepted_iteration,
            "stage_counts": self.stage_counts,
            "coverage": self.coverage,
            "evaluation": self.evaluation,
            "aborted": self.aborted,
            "footer": self.footer,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _empty_stage_counts() -> dict[str, int]:
    return {stage: 0 for stage in ALL_STAGES}


def load_instances(dom, paths) -> list[GpInstance]:
    out = []
    for p in paths:
        text = Path(p).read_text(encoding="utf-8")
        out.append(parse_instance(text, dom, str(p)))
    return out


def run_loop(cfg: RunConfig) -> RunRecord:
    """Propose, check, repair until acceptance or the iteration bound.

    Invalid documents are fed back as DOC_INVALID through the same prompt
    channel. Proposer and I/O errors abort with a partial record.
    """
    domain_text = Path(cfg.domain_path).read_text(encoding="utf-8")
    dom = parse_domain(domain_text, cfg.domain_path)
    training = load_instances(dom, cfg.training_paths)
    n_init, n_debug = cfg.split_training(len(training))
    init_insts = training[:n_init]
    debug_insts = training[-n_debug:]

    record = RunRecord(
        domain=dom.name,
        debugging=cfg.max_iterations > 0,
        stage_counts=_empty_stage_counts(),
        footer=(
            "single deterministic run (file proposer)"
            if cfg.proposer.kind == "file"
            else "stochastic proposer; rerun to average"
        ),
    )
    proposer = make_proposer(cfg.proposer)
    accepted: tuple[Abstraction, Policy] | None = None

    def doc_json(doc: AbstractionDoc | None) -> dict:
        return doc.to_json_dict() if doc is not None else {}

    doc: AbstractionDoc | None = None
    try:
        doc = proposer.propose_initial(dom, [i.source_text for i in init_insts])
    except DocError as e:
        doc = None
        first_error: str | None = str(e)
    else:
        first_error = None

    for iteration in range(1, cfg.max_iterations + 2):
        if doc is None:
            report = DebugReport(
                Stage.DOC_INVALID,
                "the abstraction document failed validation",
                {"violations": [first_error or "unparsable document"]},
            )
            outcome = "rejected"
        else:
            built = validate_doc(doc, dom)
            if isinstance(built, DebugReport):
                report = built
                outcome = "rejected"
            else:
                result = run_pipeline(built, debug_insts, cfg.budgets)
                if result.accepted:
                    record.iterations.append(
                        IterationRecord(iteration, doc_json(doc), "accepted", None, None)
                    )
                    record.accepted = True
                    record.accepted_iteration = iteration
                    accepted = (built, result.policy)
                    break
                report = result.report
                outcome = "rejected"

        record.stage_counts[report.stage.value] += 1
        record.iterations.append(
            IterationRecord(
                iteration, doc_json(doc), outcome, report.stage.value, report.to_json_dict()
            )
        )
        if iteration >= cfg.max_iterations + 1:
            break
        context = PromptContext(
            domain_text,
            tuple(i.source_text for i in debug_insts),
            doc.to_json() if doc is not None else "{}",
        )
        prompt = render_prompt(report, context)
        try:
            doc = proposer.propose_fix(prompt)
            first_error = None
        except DocError as e:
            doc = None
            first_error = str(e)
        except Exception as e:  # proposer transport errors abort the loop
            record.aborted = f"proposer error: {e}"
            break

    if accepted is not None and cfg.eval_paths:
        abstraction, policy = accepted
        eval_insts = load_instances(dom, cfg.eval_paths)
        coverage, details = evaluate_abstraction(abstraction, policy, eval_insts, cfg.budgets)
        record.coverage = coverage
        record.evaluation = details
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_record.json").write_text(record.to_json(), encoding="utf-8")
    return record


def evaluate_abstraction(
    a: Abstraction,
    policy: Policy,
    eval_insts: list[GpInstance],
    budgets: PipelineBudgets | None = None,
) -> tuple[float | None, list[dict]]:
    """Refine the policy on each held-out instance; coverage is the solved
    fraction and every claimed plan is re-validated by replay."""
    budgets = budgets or PipelineBudgets()
    if not eval_insts:
        return None, []
    details = []
    solved = 0
    for inst in eval_insts:
        result = execute_refined_policy(
            a, policy, inst, budgets.step_bound, budgets.exec_nodes
        )
        if isinstance(result, RefinementFailure):
            details.append({"instance": inst.name, "solved": False, "reason": result.reason})
            continue
        ok, bad_index = validate_plan(inst, result)
        if not ok:
            details.append(
                {
                    "instance": inst.name,
                    "solved": False,
                    "reason": f"refined plan failed validation at step {bad_index}",
                }
            )
            continue
        solved += 1
        details.append(
            {"instance": inst.name, "solved": True, "plan_length": len(result.steps)}
        )
    return solved / len(eval_insts), details


# ---------------------------------------------------------------------------
# reporting


@dataclass
class ReportTables:
    text: str
    coverage_csv: str
    stage_csv: str


def report(records: list[RunRecord]) -> ReportTables:
    """Coverage per domain (with and without debugging) and mean detected
    errors per stage, in aligned text plus CSV."""
    warning = ""
    if not records:
        warning = "warning: no run records\n"

    domains = sorted({r.domain for r in records})
    cov_rows = []
    for d in domains:
        with_dbg = [r.coverage for r in records if r.domain == d and r.debugging and r.coverage is not None]
        without = [r.coverage for r in records if r.domain == d and not r.debugging and r.coverage is not None]
        cov_rows.append(
            (
                d,
                f"{sum(with_dbg) / len(with_dbg):.2f}" if with_dbg else "-",
                f"{sum(without) / len(without):.2f}" if without else "-",
            )
        )
    mean_with = [r.coverage for r in records if r.debugging and r.coverage is not None]
    if len(domains) > 1 and mean_with:
        cov_rows.append(("mean", f"{sum(mean_with) / len(mean_with):.2f}", "-"))

    stages = list(ALL_STAGES)
    stage_rows = []
    for stage in stages:
        counts = [r.stage_counts.get(stage, 0) for r in records]
        mean = sum(counts) / len(counts) if counts else 0.0
        stage_rows.append((stage, f"{mean:.2f}"))

    lines = [warning + "Coverage on evaluation instances (by domain)"]
    header = f"{'domain':<12} {'debugged':>9} {'direct':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for name, w, wo in cov_rows:
        lines.append(f"{name:<12} {w:>9} {wo:>9}")
    lines.append("")
    lines.append("Detected errors per run (mean by stage)")
    lines.append(f"{'stage':<22} {'mean':>7}")
    lines.append("-" * 30)
    for stage, mean in stage_rows:
        lines.append(f"{stage:<22} {mean:>7}")
    footers = sorted({r.footer for r in records if r.footer})
    for f in footers:
        lines.append("")
        lines.append(f"note: {f}")

    coverage_csv = "domain,coverage_debugged,coverage_direct\n" + "\n".join(
        f"{n},{w},{wo}" for n, w, wo in cov_rows
    )
    stage_csv = "stage,mean_detected\n" + "\n".join(f"{s},{m}" for s, m in stage_rows)
    return ReportTables("\n".join(lines) + "\n", coverage_csv + "\n", stage_csv + "\n")
