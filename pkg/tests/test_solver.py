from __future__ import annotations

import random

import pytest

from absforge.qnp import QState, QnpAction, QnpProblem, parse_qnp
from absforge.solver import (
    PolicyEdge,
    PolicyExecStatus,
    PolicyGraph,
    SolveBudget,
    SolveStatus,
    build_policy_graph,
    execute_policy_q,
    format_policy,
    sieve_terminates,
    sieve_terminates_randomized,
    solve,
    verify_policy,
)
from oracles import oracle_solvable, quantitative_model_check


def qs(**kwargs) -> QState:
    return QState.from_dict(kwargs)


def load(fixtures, name) -> QnpProblem:
    return parse_qnp((fixtures / "qnp" / name).read_text(), name)


def edge(src, action, dst, decs=(), incs=()):
    return PolicyEdge(src, action, dst, frozenset(decs), frozenset(incs))


# ---------------------------------------------------------------------------
# sieve


def test_sieve_accepts_pure_dec_self_loop():
    a = qs(x=True)
    g = PolicyGraph(frozenset({a}), (edge(a, "drain", a, decs=("x",)),))
    assert sieve_terminates(g)


def test_sieve_rejects_inc_dec_two_cycle():
    a, b = qs(x=True, p=False), qs(x=True, p=True)
    g = PolicyGraph(
        frozenset({a, b}),
        (edge(a, "down", b, decs=("x",)), edge(b, "up", a, incs=("x",))),
    )
    assert not sieve_terminates(g)


def test_sieve_accepts_acyclic():
    a, b, c = qs(k=True), qs(k=False), qs(k=True, p=True)
    g = PolicyGraph(frozenset({a, b, c}), (edge(a, "s", b), edge(b, "t", c)))
    assert sieve_terminates(g)


def test_sieve_handles_nested_deletion():
    # outer cycle decs y (never inced); once outer edges go, inner dec-x loop remains
    a, b = qs(x=True, y=True), qs(x=True, y=False)
    g = PolicyGraph(
        frozenset({a, b}),
        (
            edge(a, "outer", b, decs=("y",)),
            edge(b, "back", a, incs=("x",)),
            edge(a, "inner", a, decs=("x",)),
        ),
    )
    assert sieve_terminates(g)


def test_sieve_rejects_bool_only_cycle():
    a, b = qs(p=False), qs(p=True)
    g = PolicyGraph(frozenset({a, b}), (edge(a, "f", b), edge(b, "g", a)))
    assert not sieve_terminates(g)


def test_sieve_order_independent():
    rng = random.Random(42)
    a, b, c = qs(x=True, y=True, p=False), qs(x=True, y=True, p=True), qs(x=True, y=False, p=False)
    graphs = [
        PolicyGraph(
            frozenset({a, b, c}),
            (
                edge(a, "m", b, decs=("x",)),
                edge(b, "n", a, incs=("x",), decs=("y",)),
                edge(b, "o", c, decs=("x", "y")),
                edge(c, "p", a, incs=("y",)),
            ),
        ),
        PolicyGraph(
            frozenset({a, b}),
            (edge(a, "d", b, decs=("x",)), edge(b, "u", a, incs=("x",))),
        ),
        PolicyGraph(frozenset({a}), (edge(a, "l", a, decs=("x",)),)),
    ]
    for g in graphs:
        expected = sieve_terminates(g)
        for _ in range(25):
            assert sieve_terminates_randomized(g, rng) == expected


# ---------------------------------------------------------------------------
# verify_policy


def one_counter() -> QnpProblem:
    return QnpProblem(
        (),
        ("x",),
        (QnpAction("a", frozenset({"x>0"}), frozenset(), frozenset({"dec(x)"})),),
        frozenset({"x>0"}),
        frozenset({"x=0"}),
    )


def test_verify_one_counter_policy():
    p = one_counter()
    assert verify_policy({qs(x=True): "a"}, p)


def test_verify_rejects_inapplicable_mapping():
    p = QnpProblem(
        ("q",),
        ("x",),
        (
            QnpAction("a", frozenset({"x>0"}), frozenset(), frozenset({"dec(x)"})),
            QnpAction("b", frozenset({"q"}), frozenset({"!q"}), frozenset()),
        ),
        frozenset({"x>0", "!q"}),
        frozenset({"x=0"}),
    )
    assert not verify_policy({qs(x=True, q=False): "b"}, p)


def test_verify_rejects_unmapped_reachable_state():
    p = QnpProblem(
        ("q",),
        ("x",),
        (
            QnpAction("a", frozenset({"x>0"}), frozenset({"q"}), frozenset({"dec(x)"})),
            QnpAction("b", frozenset({"x>0", "q"}), frozenset(), frozenset({"dec(x)"})),
        ),
        frozenset({"x>0", "!q"}),
        frozenset({"x=0"}),
    )
    # a's x>0 branch lands in {x>0, q}, which the policy leaves unmapped
    assert not verify_policy({qs(x=True, q=False): "a"}, p)


def test_verify_rejects_sieve_cycle(fixtures):
    p = load(fixtures, "flip_cycle.qnp")
    policy = {qs(x=True, p=False): "flip1", qs(x=True, p=True): "flip2"}
    graph = build_policy_graph(policy, p)
    assert not sieve_terminates(graph)
    assert not verify_policy(policy, p)


# ---------------------------------------------------------------------------
# solve on the fixture corpus


SOLVABLE = ["one_dec.qnp", "gripper_loop.qnp", "choice.qnp", "partial_init.qnp", "inc_then_dec.qnp"]
UNSOLVABLE = ["no_dec.qnp", "two_counters.qnp", "flip_cycle.qnp"]


@pytest.mark.parametrize("name", SOLVABLE)
def test_solve_finds_verified_policy(fixtures, name):
    p = load(fixtures, name)
    result = solve(p)
    assert result.status is SolveStatus.SOLVED
    assert verify_policy(result.policy, p)


@pytest.mark.parametrize("name", UNSOLVABLE)
def test_solve_reports_unsolvable(fixtures, name):
    p = load(fixtures, name)
    assert solve(p).status is SolveStatus.UNSOLVABLE


def test_one_dec_policy_exact(fixtures):
    p = load(fixtures, "one_dec.qnp")
    result = solve(p)
    assert result.policy == {qs(x=True): "a"}


def test_zero_budget_hits_resource_limit(fixtures):
    p = load(fixtures, "gripper_loop.qnp")
    assert solve(p, SolveBudget(max_nodes=0)).status is SolveStatus.RESOURCE_LIMIT


def test_solve_deterministic(fixtures):
    p = load(fixtures, "gripper_loop.qnp")
    first = solve(p)
    second = solve(p)
    assert first.policy == second.policy


def test_choice_backs_out_of_trap(fixtures):
    p = load(fixtures, "choice.qnp")
    result = solve(p)
    assert result.policy[qs(x=True, p=False)] == "b-good"


# ---------------------------------------------------------------------------
# agreement with the independent oracles


@pytest.mark.parametrize("name", SOLVABLE)
def test_solved_policies_pass_quantitative_model_check(fixtures, name):
    p = load(fixtures, name)
    result = solve(p)
    assert quantitative_model_check(result.policy, p, cap=3)


@pytest.mark.parametrize("name", UNSOLVABLE)
def test_unsolvable_matches_policy_enumeration(fixtures, name):
    p = load(fixtures, name)
    assert not oracle_solvable(p, cap=3)


@pytest.mark.parametrize("name", SOLVABLE)
def test_solvable_matches_policy_enumeration(fixtures, name):
    p = load(fixtures, name)
    assert oracle_solvable(p, cap=3)


def test_model_check_rejects_broken_policy(fixtures):
    p = load(fixtures, "flip_cycle.qnp")
    policy = {qs(x=True, p=False): "flip1", qs(x=True, p=True): "flip2"}
    assert not quantitative_model_check(policy, p, cap=3)


# ---------------------------------------------------------------------------
# policy execution


def test_execute_reaches_goal_on_zero_branch():
    p = one_counter()
    policy = {qs(x=True): "a"}
    out = execute_policy_q(policy, qs(x=True), p, lambda s, a: qs(x=False), 100)
    assert out.status is PolicyExecStatus.GOAL
    assert out.trace == [(qs(x=True), "a")]


def test_execute_adversarial_branch_step_limit():
    p = one_counter()
    policy = {qs(x=True): "a"}
    out = execute_policy_q(policy, qs(x=True), p, lambda s, a: qs(x=True), 100)
    assert out.status is PolicyExecStatus.STEP_LIMIT
    assert len(out.trace) == 100


def test_execute_aborts_at_unmapped_state():
    p = QnpProblem(
        ("p",),
        ("x",),
        (QnpAction("a", frozenset({"x>0"}), frozenset({"p"}), frozenset({"dec(x)"})),),
        frozenset({"x>0", "!p"}),
        frozenset({"x=0", "!p"}),
    )
    policy = {qs(x=True, p=False): "a"}
    out = execute_policy_q(policy, qs(x=True, p=False), p, lambda s, a: qs(x=False, p=True), 50)
    assert out.status is PolicyExecStatus.ABORTED
    assert out.final == qs(x=False, p=True)


def test_execute_rejects_lying_oracle():
    p = one_counter()
    policy = {qs(x=True): "a"}
    with pytest.raises(ValueError):
        execute_policy_q(policy, qs(x=True), p, lambda s, a: qs(x=True, extra=True), 10)


def test_format_policy_lines(fixtures):
    p = load(fixtures, "one_dec.qnp")
    result = solve(p)
    assert format_policy(result.policy, p) == "x>0 => a"
