"""Refinement mappings between a QNP abstraction and a ground planning domain:
state abstraction, goal abstraction, and the per-transition consistency check
used when refining abstract actions into ground ones.

Numerical features are compared across a transition by direction only
(strict decrease for dec, strict increase for inc, equality otherwise),
since abstract effects change counters by arbitrary amounts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .features import Feature, eval_count, eval_formula, feature_predicates
from .pddl import GpInstance, GroundAction, GroundState, ObjectUniverse
from .qnp import QnpAction, QnpProblem, QState


class RefinementError(Exception):
    pass


class UnknownHlAction(RefinementError):
    """Abstract action has no entry in the action map."""


@dataclass(frozen=True)
class RefinementMapping:
    features: tuple[Feature, ...]
    action_map: tuple[tuple[str, str], ...]  # (abstract action, ground schema)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(names) != len(set(names)):
            raise RefinementError("duplicate feature name")
        hl_names = [hl for hl, _ in self.action_map]
        if len(hl_names) != len(set(hl_names)):
            raise RefinementError("abstract action mapped to multiple schemata")

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def schema_for(self, hl_action: str) -> str:
        for hl, ll in self.action_map:
            if hl == hl_action:
                return ll
        raise UnknownHlAction(hl_action)


@dataclass(frozen=True)
class AbstractValuation:
    bools: tuple[tuple[str, bool], ...]
    nums: tuple[tuple[str, int], ...]

    @staticmethod
    def from_dicts(bools: dict[str, bool], nums: dict[str, int]) -> "AbstractValuation":
        return AbstractValuation(tuple(sorted(bools.items())), tuple(sorted(nums.items())))

    def bool_dict(self) -> dict[str, bool]:
        return dict(self.bools)

    def num_dict(self) -> dict[str, int]:
        return dict(self.nums)


@dataclass(frozen=True)
class Abstraction:
    qnp: QnpProblem
    mapping: RefinementMapping

    def __post_init__(self):
        feat_bools = {f.name for f in self.mapping.features if f.kind == "boolean"}
        feat_nums = {f.name for f in self.mapping.features if f.kind == "numerical"}
        if feat_bools != set(self.qnp.bools) or feat_nums != set(self.qnp.nums):
            raise RefinementError(
                "feature names must coincide with the QNP variables "
                f"(features {sorted(feat_bools | feat_nums)}, "
                f"variables {sorted(set(self.qnp.bools) | set(self.qnp.nums))})"
            )


def abstract_state(m: RefinementMapping, s: GroundState, objs: ObjectUniverse) -> AbstractValuation:
    bools: dict[str, bool] = {}
    nums: dict[str, int] = {}
    for f in m.features:
        if f.kind == "boolean":
            bools[f.name] = eval_formula(f.boolean, s, objs)
        else:
            nums[f.name] = eval_count(f.counting, s, objs)
    return AbstractValuation.from_dicts(bools, nums)


def to_qstate(v: AbstractValuation) -> QState:
    d: dict[str, bool] = dict(v.bools)
    for n, c in v.nums:
        d[n] = c > 0
    return QState.from_dict(d)


def goal_state(inst: GpInstance) -> GroundState:
    """Goal atoms plus the static atoms of the initial state, closed world.

    Statics persist by definition, so dropping them would misread features
    that mention them (goal room markers and the like) as false.
    """
    statics = inst.domain.static_predicates()
    carried = {a for a in inst.init.atoms if a[0] in statics}
    return GroundState(frozenset(inst.goal | carried))


def abstract_goal(m: RefinementMapping, inst: GpInstance) -> AbstractValuation:
    return abstract_state(m, goal_state(inst), inst.universe())


def goal_feature_warnings(m: RefinementMapping, inst: GpInstance) -> list[str]:
    """Features whose goal-side value is a guess: they mention a non-static
    predicate that appears in no goal atom, so the closed-world evaluation
    over goal ∪ statics may not reflect any real final state."""
    statics = inst.domain.static_predicates()
    goal_preds = {p for p, _ in inst.goal}
    out = []
    for f in m.features:
        loose = {
            p
            for p in feature_predicates(f)
            if p not in statics and p not in goal_preds
        }
        if loose:
            out.append(
                f"feature '{f.name}' mentions non-static predicates absent from the goal: "
                + ", ".join(sorted(loose))
            )
    return out


@dataclass(frozen=True)
class HlInstance:
    init_qstate: QState
    goal_qstate: QState
    init_valuation: AbstractValuation
    goal_valuation: AbstractValuation
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class HlMismatch:
    side: str  # 'init' | 'goal'
    violated: tuple[tuple[str, str], ...]  # (literal, actual evaluation)
    warnings: tuple[str, ...] = ()


def check_hl_instance(a: Abstraction, inst: GpInstance) -> HlInstance | HlMismatch:
    """Abstract the instance and check it against the QNP's init and goal
    conditions; on failure, name each violated literal with the value the
    features actually took."""
    universe = inst.universe()
    v0 = abstract_state(a.mapping, inst.init, universe)
    vg = abstract_goal(a.mapping, inst)
    s0 = to_qstate(v0)
    sg = to_qstate(vg)
    warnings = tuple(goal_feature_warnings(a.mapping, inst))

    def violations(q: QState, val: AbstractValuation, lits) -> tuple[tuple[str, str], ...]:
        from .qnp import lit_var

        nums = val.num_dict()
        out = []
        for lit in sorted(lits):
            if not q.holds(lit):
                var = lit_var(lit)
                actual = str(nums[var]) if var in nums else str(q.get(var)).lower()
                out.append((lit, actual))
        return tuple(out)

    bad_init = violations(s0, v0, a.qnp.init)
    if bad_init:
        return HlMismatch("init", bad_init, warnings)
    bad_goal = violations(sg, vg, a.qnp.goal)
    if bad_goal:
        return HlMismatch("goal", bad_goal, warnings)
    return HlInstance(s0, sg, v0, vg, warnings)


def is_refinement(a_l: GroundAction, a_h: str, m: RefinementMapping) -> bool:
    """A ground action refines an abstract one iff its schema is the mapped one."""
    return a_l.schema == m.schema_for(a_h)


def transition_consistent(
    a_h: QnpAction, v: AbstractValuation, v2: AbstractValuation
) -> bool:
    """Direction-consistency of a concrete feature-valuation transition with an
    abstract action: booleans are overwritten by the effect literals and framed
    otherwise; each decremented counter strictly decreases, each incremented
    one strictly increases, untouched counters stay equal."""
    from .qnp import lit_value, lit_var

    before_b = v.bool_dict()
    after_b = v2.bool_dict()
    touched = {lit_var(l): lit_value(l) for l in a_h.bool_eff}
    for name, val in after_b.items():
        want = touched.get(name, before_b[name])
        if val != want:
            return False
    before_n = v.num_dict()
    after_n = v2.num_dict()
    decs = a_h.decs()
    incs = a_h.incs()
    for name, val in after_n.items():
        prev = before_n[name]
        if name in decs:
            if not val < prev:
                return False
        elif name in incs:
            if not val > prev:
                return False
        elif val != prev:
            return False
    return True
