from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absforge.pddl import (
    ArityMismatch,
    GroundState,
    NegativeGoal,
    NotApplicable,
    PddlError,
    PddlSyntaxError,
    Plan,
    ResourceLimitError,
    UndeclaredObject,
    UndeclaredPredicate,
    UnsupportedRequirement,
    apply_action,
    applicable,
    bounded_goal_reachable,
    ground_actions,
    holds_goal,
    parse_domain,
    parse_instance,
    validate_plan,
)
from oracles import oracle_reachable

TINY_GRIPPER = """
(define (problem tiny)
  (:domain gripper)
  (:objects ra rb - room b1 - ball g1 g2 - gripper)
  (:init (at-robby ra) (free g1) (free g2) (at b1 ra) (goal-at b1 rb))
  (:goal (and (at b1 rb))))
"""


def find(actions, name):
    for a in actions:
        if a.name == name:
            return a
    raise AssertionError(f"no action {name}: {[a.name for a in actions]}")


# ---------------------------------------------------------------------------
# parsing


def test_parse_gripper_domain(gripper_domain):
    assert gripper_domain.name == "gripper"
    assert sorted(a.name for a in gripper_domain.actions) == ["drop", "move", "pick"]
    assert sorted(p.name for p in gripper_domain.predicates) == [
        "at",
        "at-robby",
        "carry",
        "free",
        "goal-at",
    ]


def test_parse_empty_action_domain():
    dom = parse_domain("(define (domain empty) (:requirements :strips) (:predicates (p)))")
    assert dom.actions == ()


def test_adl_requirement_rejected():
    with pytest.raises(UnsupportedRequirement):
        parse_domain("(define (domain bad) (:requirements :adl))")


def test_error_carries_position():
    with pytest.raises(UnsupportedRequirement) as err:
        parse_domain("(define (domain bad)\n  (:requirements :adl))", "bad.pddl")
    assert str(err.value).startswith("bad.pddl:2:")


def test_undeclared_predicate_in_action():
    with pytest.raises(UndeclaredPredicate):
        parse_domain(
            "(define (domain bad) (:predicates (p ?x - object))"
            " (:action a :parameters (?x - object) :precondition (and (q ?x)) :effect (and (p ?x))))"
        )


def test_parse_example1_instance(example1):
    atoms = {f"{p}({','.join(a)})" for p, a in example1.init.atoms}
    assert atoms == {
        "at(b1,r1)",
        "at(b2,r2)",
        "at(b4,r4)",
        "free(g1)",
        "free(g2)",
        "at-robby(r1)",
        "goal-at(b1,r3)",
        "goal-at(b2,r5)",
        "goal-at(b4,r1)",
    }
    assert example1.goal == frozenset(
        {("at", ("b1", "r3")), ("at", ("b2", "r5")), ("at", ("b4", "r1"))}
    )


def test_empty_goal_allowed(gripper_domain):
    inst = parse_instance(
        "(define (problem p) (:domain gripper)"
        " (:objects ra - room) (:init (at-robby ra)) (:goal (and)))",
        gripper_domain,
    )
    assert inst.goal == frozenset()


def test_undeclared_object_in_init(gripper_domain):
    with pytest.raises(UndeclaredObject):
        parse_instance(
            "(define (problem p) (:domain gripper)"
            " (:objects ra - room) (:init (at-robby ra) (at b9 ra)) (:goal (and)))",
            gripper_domain,
        )


def test_goal_with_unknown_predicate(gripper_domain):
    with pytest.raises(UndeclaredPredicate):
        parse_instance(
            "(define (problem p) (:domain gripper)"
            " (:objects ra - room) (:init) (:goal (and (shiny ra))))",
            gripper_domain,
        )


def test_arity_mismatch(gripper_domain):
    with pytest.raises(ArityMismatch):
        parse_instance(
            "(define (problem p) (:domain gripper)"
            " (:objects ra - room) (:init (at-robby ra ra)) (:goal (and)))",
            gripper_domain,
        )


def test_negative_goal_rejected(gripper_domain):
    with pytest.raises(NegativeGoal):
        parse_instance(
            "(define (problem p) (:domain gripper)"
            " (:objects ra - room) (:init) (:goal (and (not (at-robby ra)))))",
            gripper_domain,
        )


def test_wrong_domain_name_rejected(gripper_domain):
    with pytest.raises(PddlError):
        parse_instance(
            "(define (problem p) (:domain logistics) (:init) (:goal (and)))", gripper_domain
        )


def test_statics(gripper_domain):
    assert gripper_domain.static_predicates() == frozenset({"goal-at"})


# ---------------------------------------------------------------------------
# grounding


def test_ground_counts_two_rooms(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    actions = ground_actions(inst)
    by_schema = {}
    for a in actions:
        by_schema.setdefault(a.schema, []).append(a)
    assert len(by_schema["move"]) == 4  # includes self-loops
    assert len(by_schema["pick"]) == 4
    assert len(by_schema["drop"]) == 4


def test_ground_counts_three_rooms(gripper_domain):
    inst = parse_instance(
        "(define (problem p3) (:domain gripper)"
        " (:objects ra rb rc - room) (:init (at-robby ra)) (:goal (and)))",
        gripper_domain,
    )
    moves = [a for a in ground_actions(inst) if a.schema == "move"]
    assert len(moves) == 9


def test_ground_no_objects_of_type(gripper_domain):
    inst = parse_instance(
        "(define (problem p) (:domain gripper)"
        " (:objects ra - room) (:init (at-robby ra)) (:goal (and)))",
        gripper_domain,
    )
    schemas = {a.schema for a in ground_actions(inst)}
    assert schemas == {"move"}  # pick/drop need balls and grippers


def test_grounding_deterministic_order(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    names = [a.name for a in ground_actions(inst)]
    assert names == sorted(names)


# ---------------------------------------------------------------------------
# transition semantics


def test_applicable_example1(example1):
    actions = ground_actions(example1)
    assert applicable(example1.init, find(actions, "pick(b1,r1,g1)"))
    assert not applicable(example1.init, find(actions, "pick(b2,r2,g1)"))


def test_empty_pre_applicable():
    dom = parse_domain(
        "(define (domain d) (:predicates (p)) (:action a :parameters () :effect (and (p))))"
    )
    inst = parse_instance(
        "(define (problem q) (:domain d) (:init) (:goal (and)))", dom
    )
    (action,) = ground_actions(inst)
    assert applicable(GroundState(frozenset()), action)


def test_apply_pick(example1):
    actions = ground_actions(example1)
    after = apply_action(example1.init, find(actions, "pick(b1,r1,g1)"))
    assert ("carry", ("b1", "g1")) in after.atoms
    assert ("at", ("b1", "r1")) not in after.atoms
    assert ("free", ("g1",)) not in after.atoms
    assert ("free", ("g2",)) in after.atoms  # frame


def test_apply_not_applicable(example1):
    actions = ground_actions(example1)
    with pytest.raises(NotApplicable):
        apply_action(example1.init, find(actions, "pick(b2,r2,g1)"))


def test_move_roundtrip_restores(example1):
    actions = ground_actions(example1)
    there = apply_action(example1.init, find(actions, "move(r1,r2)"))
    back = apply_action(there, find(actions, "move(r2,r1)"))
    assert back == example1.init


def test_self_loop_move_is_identity(example1):
    actions = ground_actions(example1)
    assert apply_action(example1.init, find(actions, "move(r1,r1)")) == example1.init


def test_holds_goal(example1):
    assert holds_goal(example1.init, frozenset())
    assert holds_goal(GroundState(frozenset({("at", ("b1", "r3"))})), frozenset({("at", ("b1", "r3"))}))
    assert not holds_goal(example1.init, example1.goal)


# ---------------------------------------------------------------------------
# plan validation


def test_validate_empty_plan_on_satisfied_goal(delivered):
    assert validate_plan(delivered, Plan(())) == (True, None)


def test_validate_three_step_plan(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    actions = ground_actions(inst)
    plan = Plan(
        (
            find(actions, "pick(b1,ra,g1)"),
            find(actions, "move(ra,rb)"),
            find(actions, "drop(b1,rb,g1)"),
        )
    )
    assert validate_plan(inst, plan) == (True, None)


def test_validate_swapped_steps_fails_at_zero(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    actions = ground_actions(inst)
    plan = Plan(
        (
            find(actions, "move(ra,rb)"),
            find(actions, "pick(b1,ra,g1)"),
            find(actions, "drop(b1,rb,g1)"),
        )
    )
    ok, idx = validate_plan(inst, plan)
    assert not ok and idx == 1  # pick fails after moving away


def test_validate_reports_unreached_goal(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    ok, idx = validate_plan(inst, Plan(()))
    assert not ok and idx == 0


def test_validate_replay_consistency(gripper_domain):
    # replaying a valid plan step by step through apply/holds_goal agrees
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    actions = ground_actions(inst)
    plan = Plan(
        (
            find(actions, "pick(b1,ra,g2)"),
            find(actions, "move(ra,rb)"),
            find(actions, "drop(b1,rb,g2)"),
        )
    )
    assert validate_plan(inst, plan) == (True, None)
    s = inst.init
    for step in plan.steps:
        assert applicable(s, step)
        s = apply_action(s, step)
    assert holds_goal(s, inst.goal)


# ---------------------------------------------------------------------------
# bounded reachability


def test_reachable_k0_when_goal_holds(delivered):
    assert bounded_goal_reachable(delivered, delivered.init, 0)


def test_adjacent_needs_three_steps(gripper_domain, fixtures):
    text = (fixtures / "gripper" / "special" / "adjacent.pddl").read_text()
    inst = parse_instance(text, gripper_domain)
    assert not bounded_goal_reachable(inst, inst.init, 2)
    assert bounded_goal_reachable(inst, inst.init, 3)


def test_unreachable_goal_predicate(gripper_domain):
    inst = parse_instance(
        "(define (problem p) (:domain gripper)"
        " (:objects ra - room b1 - ball) (:init (at-robby ra))"
        " (:goal (and (goal-at b1 ra))))",  # goal-at is in no add list
        gripper_domain,
    )
    for k in range(5):
        assert not bounded_goal_reachable(inst, inst.init, k)


def test_reachability_monotone_in_k(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    flags = [bounded_goal_reachable(inst, inst.init, k) for k in range(6)]
    assert flags == sorted(flags)  # False* then True*
    assert flags[3] is True


def test_budget_exceeded_raises(gripper_domain, fixtures):
    text = (fixtures / "gripper" / "training" / "train2.pddl").read_text()
    inst = parse_instance(text, gripper_domain)
    with pytest.raises(ResourceLimitError):
        bounded_goal_reachable(inst, inst.init, 12, budget=5)


def test_reachability_matches_sequence_enumeration(gripper_domain):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    states = [inst.init]
    actions = ground_actions(inst)
    for a in actions[:6]:
        if applicable(states[-1], a):
            states.append(apply_action(states[-1], a))
    for s in states:
        for k in range(4):
            assert bounded_goal_reachable(inst, s, k) == oracle_reachable(inst, s, k)


# ---------------------------------------------------------------------------
# properties


@given(st.integers(min_value=0, max_value=11))
@settings(max_examples=12, deadline=None)
def test_apply_pure_and_frame(gripper_domain, idx):
    inst = parse_instance(TINY_GRIPPER, gripper_domain)
    actions = [a for a in ground_actions(inst) if applicable(inst.init, a)]
    a = actions[idx % len(actions)]
    once = apply_action(inst.init, a)
    twice = apply_action(inst.init, a)
    assert once == twice
    untouched = inst.init.atoms - a.add - a.delete
    for atom in untouched:
        assert atom in once.atoms
    for atom in once.atoms - a.add:
        assert atom in inst.init.atoms
