from __future__ import annotations

import itertools

import pytest

from absforge.features import parse_feature
from absforge.pddl import GroundState, ground_actions, parse_instance
from absforge.qnp import QnpAction, QState
from absforge.refinement import (
    Abstraction,
    AbstractValuation,
    HlInstance,
    HlMismatch,
    RefinementError,
    RefinementMapping,
    UnknownHlAction,
    abstract_goal,
    abstract_state,
    check_hl_instance,
    goal_feature_warnings,
    is_refinement,
    to_qstate,
    transition_consistent,
)


def qs(**kwargs) -> QState:
    return QState.from_dict(kwargs)


def val(bools: dict, nums: dict) -> AbstractValuation:
    return AbstractValuation.from_dicts(bools, nums)


def find(actions, name):
    for a in actions:
        if a.name == name:
            return a
    raise AssertionError(name)


# ---------------------------------------------------------------------------
# state abstraction


def test_abstract_example1(reference_abstraction, example1):
    v = abstract_state(reference_abstraction.mapping, example1.init, example1.universe())
    assert v.num_dict() == {"N": 3}
    assert v.bool_dict() == {"H": False, "A": False, "G": False}


def test_abstract_delivered_state(reference_abstraction, delivered):
    v = abstract_state(reference_abstraction.mapping, delivered.init, delivered.universe())
    assert v.num_dict() == {"N": 0}


def test_abstract_empty_state(reference_abstraction, example1):
    v = abstract_state(reference_abstraction.mapping, GroundState(frozenset()), example1.universe())
    assert v.num_dict() == {"N": 0}
    assert all(not b for b in v.bool_dict().values())


def test_feature_irrelevant_atoms_do_not_move_qstate(reference_abstraction, example1):
    # adding atoms outside every feature's satisfying pattern leaves the qstate alone
    m = reference_abstraction.mapping
    u = example1.universe()
    base = to_qstate(abstract_state(m, example1.init, u))
    grown = GroundState(example1.init.atoms | {("free", ("g2",)), ("at-robby", ("r1",))})
    assert to_qstate(abstract_state(m, grown, u)) == base


# ---------------------------------------------------------------------------
# sign abstraction


def test_to_qstate_signs():
    assert to_qstate(val({"H": False, "A": False, "G": False}, {"N": 3})) == qs(
        H=False, A=False, G=False, N=True
    )
    assert to_qstate(val({}, {"N": 0})) == qs(N=False)
    assert to_qstate(val({}, {"N": 1})) == to_qstate(val({}, {"N": 7}))


# ---------------------------------------------------------------------------
# goal abstraction


def test_abstract_goal_example1(reference_abstraction, example1):
    v = abstract_goal(reference_abstraction.mapping, example1)
    assert v.num_dict() == {"N": 0}
    assert v.bool_dict() == {"H": False, "A": False, "G": False}


def test_abstract_goal_empty(gripper_domain, reference_abstraction):
    inst = parse_instance(
        "(define (problem p) (:domain gripper)"
        " (:objects ra - room) (:init (at-robby ra)) (:goal (and)))",
        gripper_domain,
    )
    v = abstract_goal(reference_abstraction.mapping, inst)
    assert v.num_dict() == {"N": 0}


def test_abstract_goal_matches_terminal_state(reference_abstraction, oneball):
    # evaluating over goal plus statics equals abstracting a real delivered state
    m = reference_abstraction.mapping
    terminal = GroundState(
        frozenset(
            {
                ("at", ("b1", "t1")),
                ("goal-at", ("b1", "t1")),
                ("free", ("g1",)),
                ("free", ("g2",)),
                ("at-robby", ("t1",)),
            }
        )
    )
    goal_side = abstract_goal(m, oneball)
    state_side = abstract_state(m, terminal, oneball.universe())
    assert goal_side.num_dict() == state_side.num_dict()
    assert goal_side.bool_dict()["H"] == state_side.bool_dict()["H"]


def test_goal_feature_warnings(gripper_domain, reference_abstraction, oneball):
    # every reference feature mentions at/carry/at-robby, none of which appear
    # in a bare positional goal except at
    warnings = goal_feature_warnings(reference_abstraction.mapping, oneball)
    assert any("carry" in w for w in warnings)  # H and G mention carry


# ---------------------------------------------------------------------------
# abstract instance check


def test_check_example1_confirmed(reference_abstraction, example1):
    out = check_hl_instance(reference_abstraction, example1)
    assert isinstance(out, HlInstance)
    assert out.init_qstate == qs(N=True, H=False, A=False, G=False)
    assert out.goal_qstate == qs(N=False, H=False, A=False, G=False)


def test_check_delivered_start_mismatch(reference_abstraction, delivered):
    out = check_hl_instance(reference_abstraction, delivered)
    assert isinstance(out, HlMismatch)
    assert out.side == "init"
    assert ("N>0", "0") in out.violated


def test_check_empty_init_literals_always_confirmed(reference_abstraction, delivered):
    relaxed = Abstraction(
        reference_abstraction.qnp.__class__(
            reference_abstraction.qnp.bools,
            reference_abstraction.qnp.nums,
            reference_abstraction.qnp.actions,
            frozenset(),
            reference_abstraction.qnp.goal,
        ),
        reference_abstraction.mapping,
    )
    out = check_hl_instance(relaxed, delivered)
    assert isinstance(out, HlInstance)


# ---------------------------------------------------------------------------
# refinement relation


def test_is_refinement_pick(reference_abstraction, example1):
    actions = ground_actions(example1)
    m = reference_abstraction.mapping
    assert is_refinement(find(actions, "pick(b1,r1,g1)"), "Pick", m)
    assert not is_refinement(find(actions, "move(r1,r2)"), "Pick", m)
    for a in actions:
        if a.schema == "drop":
            assert is_refinement(a, "Drop", m)


def test_is_refinement_unknown_hl_action(reference_abstraction, example1):
    actions = ground_actions(example1)
    with pytest.raises(UnknownHlAction):
        is_refinement(actions[0], "Teleport", reference_abstraction.mapping)


def test_mapping_rejects_duplicate_hl_entries(reference_abstraction):
    m = reference_abstraction.mapping
    with pytest.raises(RefinementError):
        RefinementMapping(m.features, m.action_map + (("Pick", "move"),))


def test_abstraction_requires_feature_per_variable(reference_abstraction):
    with pytest.raises(RefinementError):
        Abstraction(reference_abstraction.qnp, RefinementMapping(
            reference_abstraction.mapping.features[:-1],
            reference_abstraction.mapping.action_map,
        ))


# ---------------------------------------------------------------------------
# transition consistency


DROP = QnpAction("Drop", frozenset({"N>0", "H", "G"}), frozenset({"!H", "!G"}), frozenset({"dec(N)"}))


def test_dec_requires_strict_decrease():
    before = val({"H": True, "A": False, "G": True}, {"N": 3})
    good = val({"H": False, "A": False, "G": False}, {"N": 2})
    stuck = val({"H": False, "A": False, "G": False}, {"N": 3})
    assert transition_consistent(DROP, before, good)
    assert not transition_consistent(DROP, before, stuck)


def test_untouched_counter_must_stay_fixed():
    noop = QnpAction("Wait", frozenset(), frozenset(), frozenset())
    before = val({}, {"N": 3})
    drift = val({}, {"N": 2})
    assert not transition_consistent(noop, before, drift)
    assert transition_consistent(noop, before, before)


def test_bool_overwrite_and_frame():
    flip = QnpAction("Flip", frozenset(), frozenset({"A"}), frozenset())
    before = val({"A": False, "H": False}, {})
    after = val({"A": True, "H": False}, {})
    broken_frame = val({"A": True, "H": True}, {})
    missed_overwrite = val({"A": False, "H": False}, {})
    assert transition_consistent(flip, before, after)
    assert not transition_consistent(flip, before, broken_frame)
    assert not transition_consistent(flip, before, missed_overwrite)


def test_inc_requires_strict_increase():
    pump = QnpAction("Pump", frozenset(), frozenset(), frozenset({"inc(N)"}))
    assert transition_consistent(pump, val({}, {"N": 0}), val({}, {"N": 2}))
    assert not transition_consistent(pump, val({}, {"N": 2}), val({}, {"N": 2}))


def test_consistency_implies_qualitative_successor():
    # exhaustively over small valuations: a consistent concrete step's sign
    # image is always among the qualitative successors
    from absforge.qnp import successors_q

    action = QnpAction(
        "Act", frozenset({"N>0"}), frozenset({"A", "!G"}), frozenset({"dec(N)", "inc(M)"})
    )
    for n0, m0, a0, g0 in itertools.product(range(3), range(3), [False, True], [False, True]):
        before = val({"A": a0, "G": g0}, {"N": n0, "M": m0})
        if not to_qstate(before).satisfies(action.pre):
            continue
        for n1, m1, a1, g1 in itertools.product(range(4), range(4), [False, True], [False, True]):
            after = val({"A": a1, "G": g1}, {"N": n1, "M": m1})
            if transition_consistent(action, before, after):
                assert to_qstate(after) in successors_q(to_qstate(before), action)


def test_abstract_state_pure(reference_abstraction, example1):
    u = example1.universe()
    first = abstract_state(reference_abstraction.mapping, example1.init, u)
    second = abstract_state(reference_abstraction.mapping, example1.init, u)
    assert first == second
