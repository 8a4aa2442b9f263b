"""QNP solving: exhaustive policy search over qualitative states with a
Sieve termination filter.

A policy solves a problem when, from every qstate consistent with the init
literals, each trajectory it induces reaches the goal. verify_policy checks
the three ingredients: closure (every reachable non-goal qstate is mapped to
an applicable action), goal reachability inside the policy graph, and Sieve
termination. solve() enumerates policy closures depth-first in a fixed
order, so identical inputs yield identical policies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

from .qnp import (
    QnpProblem,
    QState,
    applicable_q,
    initial_qstates,
    is_goal_q,
    successors_q,
)

Policy = dict[QState, str]


@dataclass(frozen=True)
class SolveBudget:
    max_nodes: int = 100_000
    max_seconds: float = 10.0


class SolveStatus(Enum):
    SOLVED = "solved"
    UNSOLVABLE = "unsolvable"
    RESOURCE_LIMIT = "resource-limit"


@dataclass
class SolveResult:
    status: SolveStatus
    policy: Policy | None = None
    nodes: int = 0


@dataclass(frozen=True)
class PolicyEdge:
    src: QState
    action: str
    dst: QState
    decs: frozenset[str]
    incs: frozenset[str]


@dataclass(frozen=True)
class PolicyGraph:
    nodes: frozenset[QState]
    edges: tuple[PolicyEdge, ...]


class PolicyExecStatus(Enum):
    GOAL = "goal"
    ABORTED = "aborted"
    STEP_LIMIT = "step-limit"


@dataclass
class PolicyExecution:
    status: PolicyExecStatus
    trace: list[tuple[QState, str]] = field(default_factory=list)
    final: QState | None = None


def build_policy_graph(policy: Policy, problem: QnpProblem) -> PolicyGraph:
    """Graph over the qstates reachable from the initial qstates under *policy*.

    Goal qstates are sinks; edges exist only for mapped non-goal qstates whose
    action is applicable (unmapped or inapplicable states simply stay edgeless,
    verify_policy reports them).
    """
    nodes: set[QState] = set()
    edges: list[PolicyEdge] = []
    frontier = list(initial_qstates(problem))
    while frontier:
        s = frontier.pop()
        if s in nodes:
            continue
        nodes.add(s)
        if is_goal_q(s, problem):
            continue
        name = policy.get(s)
        if name is None:
            continue
        action = problem.action(name)
        if not applicable_q(s, action):
            continue
        for dst in successors_q(s, action):
            edges.append(PolicyEdge(s, name, dst, action.decs(), action.incs()))
            if dst not in nodes:
                frontier.append(dst)
    return PolicyGraph(frozenset(nodes), tuple(edges))


def tarjan_sccs(nodes, successors) -> list[list]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index: dict = {}
    lowlink: dict = {}
    on_stack: set = set()
    stack: list = []
    sccs: list[list] = []
    counter = [0]

    for start in nodes:
        if start in index:
            continue
        work = [(start, iter(successors(start)))]
        index[start] = lowlink[start] = counter[0]
        counter[0] += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


def sieve_terminates(g: PolicyGraph) -> bool:
    """Termination check by edge deletion.

    Repeatedly pick a variable v and an SCC where some internal edge
    decrements v and no internal edge increments it; delete those dec edges.
    The graph terminates iff the residue ends up acyclic. The verdict is
    independent of deletion order.
    """
    edges = list(g.edges)
    while True:
        deleted = _sieve_pass(g.nodes, edges, rng=None)
        if not deleted:
            break
    return _acyclic(g.nodes, edges)


def _sieve_pass(nodes, edges: list[PolicyEdge], rng) -> bool:
    """Delete the dec edges of one qualifying (variable, SCC) pair; True if any."""
    adj: dict[QState, list[QState]] = {n: [] for n in nodes}
    for e in edges:
        adj[e.src].append(e.dst)
    comp_of: dict[QState, int] = {}
    for ci, comp in enumerate(tarjan_sccs(sorted(nodes, key=lambda q: q.values), lambda n: adj[n])):
        for n in comp:
            comp_of[n] = ci
    candidates: list[tuple[int, str]] = []
    internal: dict[int, list[PolicyEdge]] = {}
    for e in edges:
        if comp_of[e.src] == comp_of[e.dst]:
            internal.setdefault(comp_of[e.src], []).append(e)
    for ci, comp_edges in sorted(internal.items()):
        inced = set().union(*(e.incs for e in comp_edges))
        deced = set().union(*(e.decs for e in comp_edges))
        for v in sorted(deced - inced):
            candidates.append((ci, v))
    if not candidates:
        return False
    if rng is not None:
        ci, v = candidates[rng.randrange(len(candidates))]
        chosen = [(ci, v)]
    else:
        chosen = candidates
    removed = set()
    for ci, v in chosen:
        for e in internal.get(ci, ()):
            if v in e.decs:
                removed.add(id(e))
    edges[:] = [e for e in edges if id(e) not in removed]
    return True


def sieve_terminates_randomized(g: PolicyGraph, rng) -> bool:
    """Same verdict as sieve_terminates but deleting one qualifying pair at a
    time in random order; used to test order independence."""
    edges = list(g.edges)
    while _sieve_pass(g.nodes, edges, rng):
        pass
    return _acyclic(g.nodes, edges)


def _acyclic(nodes, edges: list[PolicyEdge]) -> bool:
    if any(e.src == e.dst for e in edges):
        return False
    adj: dict[QState, list[QState]] = {n: [] for n in nodes}
    for e in edges:
        adj[e.src].append(e.dst)
    for comp in tarjan_sccs(sorted(nodes, key=lambda q: q.values), lambda n: adj[n]):
        if len(comp) > 1:
            return False
    return True


def verify_policy(policy: Policy, problem: QnpProblem) -> bool:
    """True iff the policy is a solution: total on its reachable closure,
    goal-reaching from every reachable qstate, and Sieve-terminating."""
    graph = build_policy_graph(policy, problem)
    goal_nodes = set()
    for s in graph.nodes:
        if is_goal_q(s, problem):
            goal_nodes.add(s)
            continue
        name = policy.get(s)
        if name is None:
            return False
        action = problem.action(name)
        if not applicable_q(s, action):
            return False
    # goal reachable from every node, inside the policy graph
    rev: dict[QState, list[QState]] = {n: [] for n in graph.nodes}
    for e in graph.edges:
        rev[e.dst].append(e.src)
    seen = set(goal_nodes)
    stack = list(goal_nodes)
    while stack:
        n = stack.pop()
        for p in rev[n]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    if seen != set(graph.nodes):
        return False
    return sieve_terminates(graph)


class _Budget:
    def __init__(self, budget: SolveBudget):
        self.max_nodes = budget.max_nodes
        self.deadline = time.monotonic() + budget.max_seconds
        self.nodes = 0

    def tick(self) -> bool:
        self.nodes += 1
        return self.nodes <= self.max_nodes and time.monotonic() <= self.deadline


def solve(problem: QnpProblem, budget: SolveBudget | None = None) -> SolveResult:
    """Search for a solution policy.

    Depth-first over policy closures: repeatedly pick the first unassigned
    reachable non-goal qstate, try each applicable action, and extend the
    reachable set with the action's successors. Complete candidates are
    verified (goal reachability plus Sieve); failures are banned and the
    search resumes, so UNSOLVABLE means no closure policy works.
    """
    budget = budget or SolveBudget()
    tracker = _Budget(budget)
    inits = initial_qstates(problem)
    assignment: Policy = {}
    out_of_budget = False

    def reachable_unassigned() -> QState | None:
        seen: set[QState] = set()
        stack = sorted(inits, key=lambda q: q.values, reverse=True)
        pending: QState | None = None
        while stack:
            s = stack.pop()
            if s in seen:
                continue
            seen.add(s)
            if is_goal_q(s, problem):
                continue
            name = assignment.get(s)
            if name is None:
                if pending is None or s.values < pending.values:
                    pending = s
                continue
            for dst in successors_q(s, problem.action(name)):
                if dst not in seen:
                    stack.append(dst)
        return pending

    def search() -> Policy | None:
        nonlocal out_of_budget
        if out_of_budget:
            return None
        target = reachable_unassigned()
        if target is None:
            candidate = dict(assignment)
            if verify_policy(candidate, problem):
                return candidate
            return None
        for action in problem.actions:
            if not applicable_q(target, action):
                continue
            if not tracker.tick():
                out_of_budget = True
                return None
            assignment[target] = action.name
            found = search()
            if found is not None:
                return found
            del assignment[target]
            if out_of_budget:
                return None
        return None

    found = search()
    if found is not None:
        return SolveResult(SolveStatus.SOLVED, found, tracker.nodes)
    if out_of_budget:
        return SolveResult(SolveStatus.RESOURCE_LIMIT, None, tracker.nodes)
    return SolveResult(SolveStatus.UNSOLVABLE, None, tracker.nodes)


def execute_policy_q(
    policy: Policy,
    s0: QState,
    problem: QnpProblem,
    branch_oracle,
    step_bound: int,
) -> PolicyExecution:
    """Follow the policy from *s0*, resolving successors via *branch_oracle*.

    The oracle is consulted on every step and must return a member of
    successors_q(s, a); for deterministic steps that set is a singleton.
    Stops at a goal qstate, at an unmapped qstate (ABORTED), or after
    *step_bound* steps (STEP_LIMIT).
    """
    s = s0
    trace: list[tuple[QState, str]] = []
    for _ in range(step_bound):
        if is_goal_q(s, problem):
            return PolicyExecution(PolicyExecStatus.GOAL, trace, s)
        name = policy.get(s)
        if name is None:
            return PolicyExecution(PolicyExecStatus.ABORTED, trace, s)
        action = problem.action(name)
        if not applicable_q(s, action):
            return PolicyExecution(PolicyExecStatus.ABORTED, trace, s)
        nxt = branch_oracle(s, action)
        if nxt not in successors_q(s, action):
            raise ValueError(
                f"branch oracle returned a state outside successors_q for '{name}'"
            )
        trace.append((s, name))
        s = nxt
    if is_goal_q(s, problem):
        return PolicyExecution(PolicyExecStatus.GOAL, trace, s)
    return PolicyExecution(PolicyExecStatus.STEP_LIMIT, trace, s)


def format_policy(policy: Policy, problem: QnpProblem) -> str:
    from .qnp import format_qstate

    lines = []
    for s in sorted(policy, key=lambda q: q.values):
        lines.append(f"{format_qstate(s, problem)} => {policy[s]}")
    return "\n".join(lines)
