"""Staged soundness checking of a QNP abstraction against ground instances.

Four checks run in order and the first failure wins:

  ASC    the abstraction itself is solvable (a policy exists);
  HLISC  each instance abstracts into a confirmed abstract instance and the
         policy executes to the abstract goal, yielding a plan sigma_h;
  HLPRC  sigma_h refines into a ground action sequence (refined-tree search);
  LLGRC  when the tree reaches full depth without success, bounded goal
         reachability localizes the abstract transition that went wrong.

Failures become stage-tagged DebugReports which serialize to JSON and render
into repair prompts for a proposer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .pddl import (
    GpInstance,
    GroundAction,
    GroundState,
    Plan,
    apply_action,
    applicable,
    bounded_goal_reachable,
    format_atom,
    ground_actions,
    holds_goal,
)
from .qnp import QnpProblem, QState, format_qstate, format_qnp, is_goal_q
from .refinement import (
    Abstraction,
    AbstractValuation,
    HlMismatch,
    UnknownHlAction,
    abstract_state,
    check_hl_instance,
    is_refinement,
    to_qstate,
    transition_consistent,
)
from .solver import (
    Policy,
    PolicyExecStatus,
    SolveBudget,
    SolveStatus,
    execute_policy_q,
    solve,
)


class Stage(str, Enum):
    DOC_INVALID = "DOC_INVALID"
    ASC_UNSOLVABLE = "ASC_UNSOLVABLE"
    ASC_TIMEOUT = "ASC_TIMEOUT"
    HLISC_BAD_INSTANCE = "HLISC_BAD_INSTANCE"
    HLISC_ABORTED = "HLISC_ABORTED"
    HLISC_TIMEOUT = "HLISC_TIMEOUT"
    HLPRC_NO_REFINEMENT = "HLPRC_NO_REFINEMENT"
    LLGRC_BAD_TRANSITION = "LLGRC_BAD_TRANSITION"


ALL_STAGES = tuple(s.value for s in Stage)


@dataclass(frozen=True)
class DebugReport:
    stage: Stage
    summary: str
    payload: dict
    instance_index: int | None = None  # 1-based position in the training list
    instance: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "summary": self.summary,
            "payload": self.payload,
            "instance_index": self.instance_index,
            "instance": self.instance,
        }


@dataclass
class PipelineBudgets:
    solver: SolveBudget = field(default_factory=SolveBudget)
    reach_states: int = 10**6
    tree_nodes: int = 10**6
    exec_nodes: int = 10**6
    step_bound: int | None = None  # None: 10 * (1 + sum of initial counts)


@dataclass(frozen=True)
class HlPlan:
    actions: tuple[str, ...]
    qstates: tuple[QState, ...]  # len(actions) + 1 entries


@dataclass
class TreeNode:
    node_id: int
    ll_state: GroundState
    hl_valuation: AbstractValuation
    expected_qstate: QState
    in_action_ll: GroundAction | None
    in_action_hl: str | None
    layer: int
    parent: int | None


@dataclass
class RefinedTree:
    nodes: list[TreeNode]
    children: dict[int, list[int]]
    depth: int
    k: int
    qnp: "QnpProblem | None" = None

    def root(self) -> TreeNode:
        return self.nodes[0]


@dataclass
class PipelineOutcome:
    accepted: bool
    policy: Policy | None = None
    plans: dict[str, Plan] = field(default_factory=dict)
    report: DebugReport | None = None


@dataclass
class RefinementFailure:
    reason: str


def default_step_bound(v0: AbstractValuation) -> int:
    return 10 * (1 + sum(c for _, c in v0.nums))


# ---------------------------------------------------------------------------
# stage 1: abstraction solvability


def run_asc(a: Abstraction, budget: SolveBudget | None = None) -> Policy | DebugReport:
    result = solve(a.qnp, budget)
    if result.status is SolveStatus.SOLVED:
        return result.policy
    if result.status is SolveStatus.UNSOLVABLE:
        return DebugReport(
            Stage.ASC_UNSOLVABLE,
            "the QNP abstraction has no solution policy",
            {"qnp": format_qnp(a.qnp)},
        )
    return DebugReport(
        Stage.ASC_TIMEOUT,
        "the QNP solver hit its resource limit (unexpected dead-end or timeout)",
        {"qnp": format_qnp(a.qnp), "nodes": result.nodes},
    )


# ---------------------------------------------------------------------------
# stage 2: abstract instance solvability


def run_hlisc(
    a: Abstraction,
    policy: Policy,
    inst: GpInstance,
    step_bound: int | None = None,
    instance_index: int | None = None,
) -> HlPlan | DebugReport:
    """Confirm the abstract instance and execute the policy on it.

    Branches are resolved by tracking the instance's concrete feature counts
    and stepping them by one per dec/inc, which fixes a single deterministic
    action sequence and its expected qstates.
    """
    checked = check_hl_instance(a, inst)
    if isinstance(checked, HlMismatch):
        return DebugReport(
            Stage.HLISC_BAD_INSTANCE,
            f"the abstracted {checked.side} state violates the QNP's "
            f"{'initial' if checked.side == 'init' else 'goal'} condition",
            {
                "side": checked.side,
                "violated": [
                    {"literal": lit, "actual": actual} for lit, actual in checked.violated
                ],
                "warnings": list(checked.warnings),
            },
            instance_index,
            inst.name,
        )

    bound = step_bound if step_bound is not None else default_step_bound(checked.init_valuation)
    counts = checked.init_valuation.num_dict()
    bools = checked.init_valuation.bool_dict()
    qstates: list[QState] = [checked.init_qstate]

    def tracked_oracle(s: QState, action) -> QState:
        from .qnp import lit_value, lit_var

        for lit in action.bool_eff:
            bools[lit_var(lit)] = lit_value(lit)
        for v in action.incs():
            counts[v] += 1
        for v in action.decs():
            counts[v] -= 1
        vals = dict(bools)
        vals.update({n: c > 0 for n, c in counts.items()})
        return QState.from_dict(vals)

    execution = execute_policy_q(policy, checked.init_qstate, a.qnp, tracked_oracle, bound)
    for s, _ in execution.trace[1:]:
        qstates.append(s)
    if execution.final is not None and execution.trace:
        qstates.append(execution.final)

    if execution.status is PolicyExecStatus.GOAL:
        return HlPlan(tuple(name for _, name in execution.trace), tuple(qstates))
    if execution.status is PolicyExecStatus.ABORTED:
        return DebugReport(
            Stage.HLISC_ABORTED,
            "policy execution aborted prematurely before reaching the abstract goal",
            {
                "stuck_qstate": format_qstate(execution.final, a.qnp),
                "steps": len(execution.trace),
                "warnings": list(checked.warnings),
            },
            instance_index,
            inst.name,
        )
    return DebugReport(
        Stage.HLISC_TIMEOUT,
        "policy execution timed out, stuck in an unexpected dead-end",
        {
            "step_bound": bound,
            "last_qstate": format_qstate(execution.final, a.qnp),
            "warnings": list(checked.warnings),
        },
        instance_index,
        inst.name,
    )


# ---------------------------------------------------------------------------
# stage 3: plan refinability (refined-tree construction)


class _TreeBudgetExceeded(Exception):
    pass


def build_refined_tree(
    a: Abstraction,
    inst: GpInstance,
    sigma: HlPlan,
    k: int | None = None,
    node_budget: int = 10**6,
    instance_index: int | None = None,
) -> Plan | DebugReport | RefinedTree:
    """Refine sigma step by step from the initial state, depth first.

    At a node of layer x the abstract action sigma.actions[x] applies; each
    applicable ground action with the mapped schema whose successor valuation
    is direction-consistent spawns a child. Success needs both goals at depth
    k: the node's qstate must equal the abstracted instance goal and the
    ground state must satisfy the instance goal. A tree that cannot reach
    depth k is an HLPRC error carrying the deepest blocked node.
    """
    if k is None:
        k = len(sigma.actions)
    if k != len(sigma.actions):
        raise ValueError("k must equal the abstract plan length")

    universe = inst.universe()
    actions = ground_actions(inst)
    from .refinement import abstract_goal

    goal_qstate = to_qstate(abstract_goal(a.mapping, inst))

    v0 = abstract_state(a.mapping, inst.init, universe)
    root = TreeNode(0, inst.init, v0, sigma.qstates[0], None, None, 0, None)
    tree = RefinedTree([root], {0: []}, 0, k, a.qnp)
    recorded: list[dict] = []  # advisory: direction-inconsistent transitions
    blocked: dict | None = None
    spent = 0

    def note_blocked(node: TreeNode, a_h: str, candidates: list[GroundAction]) -> None:
        nonlocal blocked
        if blocked is None or node.layer > blocked["layer"]:
            blocked = {
                "layer": node.layer,
                "qstate": format_qstate(to_qstate(node.hl_valuation), a.qnp),
                "hl_action": a_h,
                "candidates": [c.name for c in candidates],
            }

    def dfs(node: TreeNode) -> Plan | None:
        nonlocal spent
        if node.layer >= k:
            if to_qstate(node.hl_valuation) == goal_qstate and holds_goal(
                node.ll_state, inst.goal
            ):
                return _plan_to(tree, node)
            return None
        a_h = sigma.actions[node.layer]
        applicable_here = [g for g in actions if applicable(node.ll_state, g)]
        try:
            hl_action = a.qnp.action(a_h)
            refinements = [
                g for g in applicable_here if is_refinement(g, a_h, a.mapping)
            ]
        except (UnknownHlAction, KeyError):
            note_blocked(node, a_h, applicable_here)
            return None
        expanded = False
        for g in refinements:
            spent += 1
            if spent > node_budget:
                raise _TreeBudgetExceeded()
            child_state = apply_action(node.ll_state, g)
            child_val = abstract_state(a.mapping, child_state, universe)
            if not transition_consistent(hl_action, node.hl_valuation, child_val):
                if len(recorded) < 20:
                    recorded.append(
                        {
                            "qstate": format_qstate(to_qstate(node.hl_valuation), a.qnp),
                            "hl_action": a_h,
                            "ll_action": g.name,
                            "child_qstate": format_qstate(to_qstate(child_val), a.qnp),
                        }
                    )
                continue
            expanded = True
            child = TreeNode(
                len(tree.nodes),
                child_state,
                child_val,
                sigma.qstates[node.layer + 1],
                g,
                a_h,
                node.layer + 1,
                node.node_id,
            )
            tree.nodes.append(child)
            tree.children[child.node_id] = []
            tree.children[node.node_id].append(child.node_id)
            tree.depth = max(tree.depth, child.layer)
            found = dfs(child)
            if found is not None:
                return found
        if not expanded:
            note_blocked(node, a_h, applicable_here)
        return None

    try:
        plan = dfs(root)
    except _TreeBudgetExceeded:
        plan = None
    if plan is not None:
        return plan
    if tree.depth < k:
        payload: dict = {
            "reason": "no ground refinement reaches the required depth",
            "recorded_transitions": recorded,
        }
        if blocked is not None:
            payload.update(blocked)
        return DebugReport(
            Stage.HLPRC_NO_REFINEMENT,
            "the abstract plan cannot be refined into a ground action sequence",
            payload,
            instance_index,
            inst.name,
        )
    return tree


def _plan_to(tree: RefinedTree, node: TreeNode) -> Plan:
    steps: list[GroundAction] = []
    cur: TreeNode | None = node
    while cur is not None and cur.in_action_ll is not None:
        steps.append(cur.in_action_ll)
        cur = tree.nodes[cur.parent] if cur.parent is not None else None
    return Plan(tuple(reversed(steps)))


def audit_refined_tree(tree: RefinedTree, a: Abstraction, inst: GpInstance) -> list[str]:
    """Re-derive every edge's admission conditions; returns violations."""
    problems: list[str] = []
    for node in tree.nodes[1:]:
        parent = tree.nodes[node.parent]
        if node.layer != parent.layer + 1:
            problems.append(f"node {node.node_id}: layer is not parent layer + 1")
        try:
            if not is_refinement(node.in_action_ll, node.in_action_hl, a.mapping):
                problems.append(f"node {node.node_id}: edge action is not a refinement")
        except UnknownHlAction:
            problems.append(f"node {node.node_id}: unmapped abstract action")
            continue
        hl_action = a.qnp.action(node.in_action_hl)
        if not transition_consistent(hl_action, parent.hl_valuation, node.hl_valuation):
            problems.append(f"node {node.node_id}: edge is not direction-consistent")
        if apply_action(parent.ll_state, node.in_action_ll) != node.ll_state:
            problems.append(f"node {node.node_id}: ground successor mismatch")
    root = tree.root()
    if root.layer != 0 or root.in_action_ll is not None or root.in_action_hl is not None:
        problems.append("root must be at layer 0 with no incoming actions")
    return problems


# ---------------------------------------------------------------------------
# stage 4: ground goal reachability diagnosis


def run_llgrc(
    tree: RefinedTree,
    inst: GpInstance,
    k: int | None = None,
    reach_states: int = 10**6,
    instance_index: int | None = None,
) -> DebugReport | None:
    """Diagnose the tree bottom-up.

    A node at layer i < k with children is diagnosed when the instance goal is
    reachable from it within k-i steps while none of its children can reach it
    within k-i-1; the abstract transition into those children is then reported.
    Returns None when no node matches.
    """
    if k is None:
        k = tree.k
    if k <= 0:
        return None
    actions = ground_actions(inst)
    memo: dict[tuple[frozenset, int], bool] = {}

    def reachable(state: GroundState, bound: int) -> bool:
        key = (state.atoms, bound)
        if key not in memo:
            memo[key] = bounded_goal_reachable(
                inst, state, bound, budget=reach_states, actions=actions
            )
        return memo[key]

    ordered = sorted(tree.nodes, key=lambda n: n.layer, reverse=True)
    for node in ordered:
        if node.layer >= k:
            continue
        kids = tree.children.get(node.node_id, [])
        if not kids:
            continue
        if not reachable(node.ll_state, k - node.layer):
            continue
        if any(reachable(tree.nodes[c].ll_state, k - node.layer - 1) for c in kids):
            continue
        first = tree.nodes[kids[0]]
        return DebugReport(
            Stage.LLGRC_BAD_TRANSITION,
            "an abstract transition leads only to states that lose goal reachability",
            {
                "layer": node.layer,
                "hl_state": format_qstate(to_qstate(node.hl_valuation), tree.qnp),
                "hl_action": first.in_action_hl,
                "expected_next": format_qstate(first.expected_qstate, tree.qnp),
                "ll_state": sorted(format_atom(at) for at in node.ll_state.atoms),
                "ll_action": first.in_action_ll.name,
                "remaining_steps": k - node.layer,
            },
            instance_index,
            inst.name,
        )
    return None


# ---------------------------------------------------------------------------
# whole pipeline and evaluation-time refinement


def run_pipeline(
    a: Abstraction,
    insts: list[GpInstance],
    budgets: PipelineBudgets | None = None,
) -> PipelineOutcome:
    """ASC once, then HLISC / HLPRC / LLGRC per instance in order; the first
    failing check produces the Rejected report."""
    budgets = budgets or PipelineBudgets()
    asc = run_asc(a, budgets.solver)
    if isinstance(asc, DebugReport):
        return PipelineOutcome(False, report=asc)
    policy = asc
    plans: dict[str, Plan] = {}
    for index, inst in enumerate(insts, start=1):
        sigma = run_hlisc(a, policy, inst, budgets.step_bound, index)
        if isinstance(sigma, DebugReport):
            return PipelineOutcome(False, policy=policy, report=sigma)
        refined = build_refined_tree(
            a, inst, sigma, node_budget=budgets.tree_nodes, instance_index=index
        )
        if isinstance(refined, DebugReport):
            return PipelineOutcome(False, policy=policy, report=refined)
        if isinstance(refined, RefinedTree):
            diagnosis = run_llgrc(
                refined, inst, reach_states=budgets.reach_states, instance_index=index
            )
            if diagnosis is None:
                diagnosis = DebugReport(
                    Stage.HLPRC_NO_REFINEMENT,
                    "the refined tree reached full depth but no leaf satisfies "
                    "both the abstract and the ground goal",
                    {
                        "reason": "full-depth tree without success",
                        "depth": refined.depth,
                        "recorded_transitions": [],
                    },
                    index,
                    inst.name,
                )
            return PipelineOutcome(False, policy=policy, report=diagnosis)
        plans[inst.name] = refined
    return PipelineOutcome(True, policy=policy, plans=plans)


def execute_refined_policy(
    a: Abstraction,
    policy: Policy,
    inst: GpInstance,
    step_bound: int | None = None,
    node_budget: int = 10**6,
) -> Plan | RefinementFailure:
    """Refine the policy on an instance: abstract the current state, look up
    the policy, and take any direction-consistent ground refinement, depth
    first with backtracking, until the ground goal holds."""
    universe = inst.universe()
    actions = ground_actions(inst)
    v0 = abstract_state(a.mapping, inst.init, universe)
    bound = step_bound if step_bound is not None else default_step_bound(v0)
    spent = 0
    val_cache: dict[frozenset, AbstractValuation] = {inst.init.atoms: v0}

    def valuation_of(state: GroundState) -> AbstractValuation:
        if state.atoms not in val_cache:
            val_cache[state.atoms] = abstract_state(a.mapping, state, universe)
        return val_cache[state.atoms]

    class _Exhausted(Exception):
        pass

    def dfs(state: GroundState, val: AbstractValuation, path: set, depth: int):
        nonlocal spent
        if holds_goal(state, inst.goal):
            return []
        if depth >= bound:
            return None
        qstate = to_qstate(val)
        name = policy.get(qstate)
        if name is None:
            return None
        try:
            hl_action = a.qnp.action(name)
        except KeyError:
            return None
        for g in actions:
            if not applicable(state, g):
                continue
            try:
                if not is_refinement(g, name, a.mapping):
                    continue
            except UnknownHlAction:
                return None
            spent += 1
            if spent > node_budget:
                raise _Exhausted()
            nxt = apply_action(state, g)
            if nxt.atoms in path:
                continue
            nval = valuation_of(nxt)
            if not transition_consistent(hl_action, val, nval):
                continue
            path.add(nxt.atoms)
            rest = dfs(nxt, nval, path, depth + 1)
            path.discard(nxt.atoms)
            if rest is not None:
                return [g] + rest
        return None

    try:
        steps = dfs(inst.init, v0, {inst.init.atoms}, 0)
    except _Exhausted:
        return RefinementFailure("search budget exhausted")
    if steps is None:
        return RefinementFailure("no goal-reaching refinement within the step bound")
    return Plan(tuple(steps))


# ---------------------------------------------------------------------------
# prompt rendering


@dataclass(frozen=True)
class PromptContext:
    domain_text: str
    instance_texts: tuple[str, ...]
    abstraction_json: str


_CLOSING = "Fix the QNP abstraction and return the full corrected abstraction document as JSON."

_ASC_UNSOLVABLE_TEMPLATE = """\
Input: QNP abstraction
---
We used a QNP solver to solve the abstraction below, but no solution is returned.

<<qnp>>

<<closing>>"""

_ASC_TIMEOUT_TEMPLATE = """\
Input: QNP abstraction
---
We used a QNP solver to solve the abstraction below, but it ran into an \
unexpected dead-end leading to a timeout.

<<qnp>>

<<closing>>"""

_HLISC_BAD_INSTANCE_TEMPLATE = """\
Input: QNP abstraction, ground instance <<instance>>, refinement mapping
---
We computed the abstract instance of <<instance>> with the refinement mapping, \
but it is not an instance of the QNP abstraction: the abstracted <<side>> state \
violates the abstraction's <<side>> condition. The generated features are \
inappropriate.
Violated literals:
<<violations>>
<<warnings>>
<<closing>>"""

_HLISC_FAILED_TEMPLATE = """\
Input: QNP abstraction, ground instance <<instance>>, policy, refinement mapping
---
We computed the abstract instance of <<instance>> with the refinement mapping, \
and confirmed it is an instance of the QNP abstraction. The policy should solve \
it, but fails.
Exception:
<<exception>>
<<closing>>"""

_HLPRC_TEMPLATE = """\
Input: ground instance <<instance>>, abstract instance, abstract plan
---
The abstract plan should be refined as an action sequence in <<instance>>; when \
we tried to do this, the following exception raised:
- There is no refinement action in <<instance>> of the abstract action <<hl_action>> \
at abstract state <<qstate>>. Action <<hl_action>> should be an abstraction of one \
of actions in {<<candidates>>}.
<<recorded>>
<<closing>>"""

_LLGRC_TEMPLATE = """\
Input: ground instance <<instance>>, abstract instance, abstract plan, refined action sequence
---
The refined action sequence should reach the goal of <<instance>>; when we \
examined it, the following exception raised:
- The abstract action <<hl_action>> and state <<hl_state>>, corresponding to \
<<ll_action>> in the ground instance, are inappropriate: after <<ll_action>> the \
goal stops being reachable within the remaining <<remaining>> steps.
<<closing>>"""

_DOC_INVALID_TEMPLATE = """\
Input: abstraction document
---
The abstraction document you returned is invalid:
<<violations>>
<<closing>>"""


class UnknownStage(Exception):
    pass


def render_prompt(report: DebugReport, context: PromptContext) -> str:
    """Fill the stage's feedback template; every placeholder is replaced with
    serialized content and the abstraction document is appended for reference."""
    p = report.payload
    instance = report.instance or "the training instance"
    if report.stage is Stage.ASC_UNSOLVABLE:
        text = _fill(_ASC_UNSOLVABLE_TEMPLATE, qnp=p["qnp"])
    elif report.stage is Stage.ASC_TIMEOUT:
        text = _fill(_ASC_TIMEOUT_TEMPLATE, qnp=p["qnp"])
    elif report.stage is Stage.HLISC_BAD_INSTANCE:
        lines = "\n".join(
            f"- {v['literal']} (feature evaluates to {v['actual']})" for v in p["violated"]
        )
        warn = "\n".join(f"Note: {w}" for w in p.get("warnings", []))
        text = _fill(
            _HLISC_BAD_INSTANCE_TEMPLATE,
            instance=instance,
            side=p["side"],
            violations=lines,
            warnings=warn,
        )
    elif report.stage is Stage.HLISC_ABORTED:
        text = _fill(
            _HLISC_FAILED_TEMPLATE,
            instance=instance,
            exception=(
                "The execution of the policy aborted prematurely before reaching the "
                f"abstract goal, at unmapped abstract state {p['stuck_qstate']}."
            ),
        )
    elif report.stage is Stage.HLISC_TIMEOUT:
        text = _fill(
            _HLISC_FAILED_TEMPLATE,
            instance=instance,
            exception=(
                "The execution of the policy timed out due to getting stuck in an "
                f"unexpected dead-end (step bound {p['step_bound']}, last abstract "
                f"state {p['last_qstate']})."
            ),
        )
    elif report.stage is Stage.HLPRC_NO_REFINEMENT:
        recorded = p.get("recorded_transitions") or []
        rec_lines = "\n".join(
            f"- at {t['qstate']}, {t['ll_action']} abstracts to {t['child_qstate']}, "
            f"inconsistent with {t['hl_action']}"
            for t in recorded
        )
        if rec_lines:
            rec_lines = "Recorded inconsistent transitions:\n" + rec_lines
        text = _fill(
            _HLPRC_TEMPLATE,
            instance=instance,
            hl_action=p.get("hl_action", "at the blocked layer"),
            qstate=p.get("qstate", "the blocked abstract state"),
            candidates=", ".join(p.get("candidates", [])),
            recorded=rec_lines,
        )
    elif report.stage is Stage.LLGRC_BAD_TRANSITION:
        text = _fill(
            _LLGRC_TEMPLATE,
            instance=instance,
            hl_action=p["hl_action"],
            hl_state=p["hl_state"],
            ll_action=p["ll_action"],
            remaining=str(p["remaining_steps"]),
        )
    elif report.stage is Stage.DOC_INVALID:
        lines = "\n".join(f"- {v}" for v in p["violations"])
        text = _fill(_DOC_INVALID_TEMPLATE, violations=lines)
    else:
        raise UnknownStage(str(report.stage))
    return text + "\n\nCurrent abstraction document:\n" + context.abstraction_json


def _fill(template: str, **values: str) -> str:
    out = template.replace("<<closing>>", _CLOSING)
    for key, val in values.items():
        out = out.replace(f"<<{key}>>", val)
    if "<<" in out and ">>" in out:
        raise ValueError(f"unresolved placeholder in prompt: {out}")
    return out
