"""Typed-STRIPS PDDL subset: parser, grounder, and state-transition semantics.

Supported requirements: :strips, :typing, :negative-preconditions, :equality.
Everything else is rejected up front. States are closed-world atom sets,
action application is (s \\ del) ∪ add, and goals are positive atom sets.
All iteration orders are lexicographic so downstream runs are reproducible.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .sexp import SexpError, SList, Sym, parse_sexp

SUPPORTED_REQUIREMENTS = frozenset(
    {":strips", ":typing", ":negative-preconditions", ":equality"}
)

ROOT_TYPE = "object"

# A ground atom is (predicate, (arg, ...)). The pseudo-predicate "=" is
# evaluated by identity, never stored in states.
Atom = tuple[str, tuple[str, ...]]


class PddlError(Exception):
    def __init__(self, message: str, filename: str = "<pddl>", line: int = 0, col: int = 0):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.message = message
        self.filename = filename
        self.line = line
        self.col = col


class PddlSyntaxError(PddlError):
    pass


class UnsupportedRequirement(PddlError):
    pass


class UndeclaredType(PddlError):
    pass


class UndeclaredPredicate(PddlError):
    pass


class UndeclaredObject(PddlError):
    pass


class ArityMismatch(PddlError):
    pass


class TypeMismatch(PddlError):
    pass


class NegativeGoal(PddlError):
    pass


class DomainMismatch(PddlError):
    pass


class NotApplicable(Exception):
    """Raised when an action is applied in a state that violates its precondition."""


class ResourceLimitError(Exception):
    """A search exceeded its visited-state budget."""


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    param_types: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.param_types)


@dataclass(frozen=True)
class SchemaLiteral:
    """Possibly negated atom over parameters and the '=' pseudo-predicate."""

    positive: bool
    pred: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (?var, type)
    pre: tuple[SchemaLiteral, ...]
    add: tuple[tuple[str, tuple[str, ...]], ...]
    delete: tuple[tuple[str, tuple[str, ...]], ...]


@dataclass(frozen=True)
class TypeHierarchy:
    parents: tuple[tuple[str, str], ...]  # (type, parent); roots point at "object"

    def parent_map(self) -> dict[str, str]:
        return dict(self.parents)

    def names(self) -> frozenset[str]:
        out = {ROOT_TYPE}
        for t, p in self.parents:
            out.add(t)
            out.add(p)
        return frozenset(out)

    def is_subtype(self, t: str, ancestor: str) -> bool:
        if ancestor == ROOT_TYPE:
            return True
        pm = self.parent_map()
        cur = t
        seen = set()
        while cur not in seen:
            if cur == ancestor:
                return True
            seen.add(cur)
            cur = pm.get(cur, ROOT_TYPE)
            if cur == ROOT_TYPE:
                return cur == ancestor
        return False


@dataclass(frozen=True)
class GpDomain:
    name: str
    requirements: tuple[str, ...]
    types: TypeHierarchy
    predicates: tuple[PredicateSchema, ...]
    actions: tuple[ActionSchema, ...]
    source_text: str = field(default="", compare=False, repr=False)

    def predicate(self, name: str) -> PredicateSchema | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def action(self, name: str) -> ActionSchema | None:
        for a in self.actions:
            if a.name == name:
                return a
        return None

    def static_predicates(self) -> frozenset[str]:
        """Predicates never occurring in any add or delete list."""
        touched: set[str] = set()
        for a in self.actions:
            touched.update(p for p, _ in a.add)
            touched.update(p for p, _ in a.delete)
        return frozenset(p.name for p in self.predicates if p.name not in touched)


@dataclass(frozen=True)
class GroundState:
    atoms: frozenset[Atom]

    def holds(self, atom: Atom) -> bool:
        return atom in self.atoms


@dataclass(frozen=True)
class ObjectUniverse:
    """Typed object set of an instance plus the domain's type hierarchy."""

    objects: tuple[tuple[str, str], ...]  # (name, type), sorted by name
    hierarchy: TypeHierarchy

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.objects)

    def of_type(self, type_name: str | None) -> tuple[str, ...]:
        if type_name is None:
            return self.names()
        return tuple(
            n for n, t in self.objects if self.hierarchy.is_subtype(t, type_name)
        )


@dataclass(frozen=True)
class GpInstance:
    name: str
    domain: GpDomain
    objects: tuple[tuple[str, str], ...]  # (name, type), sorted by name
    init: GroundState
    goal: frozenset[Atom]
    source_text: str = field(default="", compare=False, repr=False)

    def universe(self) -> ObjectUniverse:
        return ObjectUniverse(self.objects, self.domain.types)


@dataclass(frozen=True)
class GroundAction:
    schema: str
    args: tuple[str, ...]
    pre_pos: frozenset[Atom]
    pre_neg: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]

    @property
    def name(self) -> str:
        return f"{self.schema}({','.join(self.args)})"


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...]

    def action_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.steps)


# ---------------------------------------------------------------------------
# parsing


def _expect_list(node, what: str, filename: str) -> SList:
    if not isinstance(node, SList):
        raise PddlSyntaxError(f"expected {what}", filename, node.line, node.col)
    return node


def _sym_text(node, what: str, filename: str) -> str:
    if not isinstance(node, Sym):
        raise PddlSyntaxError(f"expected {what}", filename, node.line, node.col)
    return node.text


def _parse_typed_names(items: tuple, filename: str, variables: bool) -> list[tuple[str, str, int, int]]:
    """Parse ``a b - t c d`` groups; untyped names default to the root type.

    Returns (name, type, line, col) in source order.
    """
    out: list[tuple[str, str, int, int]] = []
    pending: list[Sym] = []
    i = 0
    while i < len(items):
        node = items[i]
        text = _sym_text(node, "name", filename)
        if text == "-":
            if i + 1 >= len(items):
                raise PddlSyntaxError("dangling '-' in typed list", filename, node.line, node.col)
            type_name = _sym_text(items[i + 1], "type name", filename)
            for s in pending:
                out.append((s.text, type_name, s.line, s.col))
            pending = []
            i += 2
            continue
        if variables and not text.startswith("?"):
            raise PddlSyntaxError(f"expected variable, got '{text}'", filename, node.line, node.col)
        if not variables and text.startswith("?"):
            raise PddlSyntaxError(f"unexpected variable '{text}'", filename, node.line, node.col)
        pending.append(node)
        i += 1
    for s in pending:
        out.append((s.text, ROOT_TYPE, s.line, s.col))
    return out


def _parse_atom_expr(node, filename: str) -> tuple[str, tuple[str, ...], int, int]:
    lst = _expect_list(node, "atom", filename)
    if not lst.items:
        raise PddlSyntaxError("empty atom", filename, lst.line, lst.col)
    pred = _sym_text(lst.items[0], "predicate name", filename)
    args = tuple(_sym_text(x, "term", filename) for x in lst.items[1:])
    return pred, args, lst.line, lst.col


def _flatten_literals(node, filename: str) -> list[tuple[bool, str, tuple[str, ...], int, int]]:
    """Flatten an (and ...) / (not atom) / atom formula into a literal list."""
    lst = _expect_list(node, "formula", filename)
    if not lst.items:
        return []
    head = lst.items[0]
    if isinstance(head, Sym) and head.text == "and":
        out = []
        for child in lst.items[1:]:
            out.extend(_flatten_literals(child, filename))
        return out
    if isinstance(head, Sym) and head.text == "not":
        if len(lst.items) != 2:
            raise PddlSyntaxError("'not' takes one atom", filename, lst.line, lst.col)
        pred, args, line, col = _parse_atom_expr(lst.items[1], filename)
        return [(False, pred, args, line, col)]
    pred, args, line, col = _parse_atom_expr(node, filename)
    return [(True, pred, args, line, col)]


def _check_literal(
    dom_predicates: dict[str, PredicateSchema],
    equality_allowed: bool,
    positive: bool,
    pred: str,
    args: tuple[str, ...],
    filename: str,
    line: int,
    col: int,
) -> None:
    if pred == "=":
        if not equality_allowed:
            raise UndeclaredPredicate(
                "'=' requires the :equality requirement", filename, line, col
            )
        if len(args) != 2:
            raise ArityMismatch("'=' takes two terms", filename, line, col)
        return
    schema = dom_predicates.get(pred)
    if schema is None:
        raise UndeclaredPredicate(f"unknown predicate '{pred}'", filename, line, col)
    if len(args) != schema.arity:
        raise ArityMismatch(
            f"predicate '{pred}' expects {schema.arity} arguments, got {len(args)}",
            filename,
            line,
            col,
        )


def parse_domain(text: str, filename: str = "<domain>") -> GpDomain:
    """Parse a PDDL domain in the supported subset."""
    try:
        top = parse_sexp(text, filename)
    except SexpError as e:
        raise PddlSyntaxError(e.message, filename, e.line, e.col) from None
    if len(top) != 1:
        raise PddlSyntaxError("expected a single (define ...) form", filename, 1, 1)
    root = _expect_list(top[0], "(define ...)", filename)
    if not root.items or _sym_text(root.items[0], "define", filename) != "define":
        raise PddlSyntaxError("expected (define ...)", filename, root.line, root.col)
    header = _expect_list(root.items[1], "(domain name)", filename)
    if len(header.items) != 2 or _sym_text(header.items[0], "domain", filename) != "domain":
        raise PddlSyntaxError("expected (domain <name>)", filename, header.line, header.col)
    name = _sym_text(header.items[1], "domain name", filename)

    requirements: list[str] = []
    type_parents: list[tuple[str, str]] = []
    predicates: dict[str, PredicateSchema] = {}
    actions: dict[str, ActionSchema] = {}
    negative_allowed = False
    equality_allowed = False

    sections = root.items[2:]
    for sec in sections:
        lst = _expect_list(sec, "domain section", filename)
        if not lst.items:
            raise PddlSyntaxError("empty section", filename, lst.line, lst.col)
        kw = _sym_text(lst.items[0], "section keyword", filename)
        if kw == ":requirements":
            for r in lst.items[1:]:
                req = _sym_text(r, "requirement", filename)
                if req not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedRequirement(
                        f"unsupported requirement '{req}'", filename, r.line, r.col
                    )
                requirements.append(req)
            negative_allowed = ":negative-preconditions" in requirements
            equality_allowed = ":equality" in requirements
        elif kw == ":types":
            for tname, parent, line, col in _parse_typed_names(lst.items[1:], filename, False):
                type_parents.append((tname, parent))
        elif kw == ":predicates":
            for p in lst.items[1:]:
                plist = _expect_list(p, "predicate declaration", filename)
                pname = _sym_text(plist.items[0], "predicate name", filename)
                if pname in predicates:
                    raise PddlSyntaxError(
                        f"duplicate predicate '{pname}'", filename, plist.line, plist.col
                    )
                params = _parse_typed_names(plist.items[1:], filename, True)
                predicates[pname] = PredicateSchema(pname, tuple(t for _, t, _, _ in params))
        elif kw == ":action":
            action = _parse_action(lst, predicates, negative_allowed, equality_allowed, filename)
            if action.name in actions:
                raise PddlSyntaxError(
                    f"duplicate action '{action.name}'", filename, lst.line, lst.col
                )
            actions[action.name] = action
        else:
            raise PddlSyntaxError(f"unsupported section '{kw}'", filename, lst.line, lst.col)

    hierarchy = TypeHierarchy(tuple(sorted(set(type_parents))))
    known_types = hierarchy.names()
    for p in predicates.values():
        for t in p.param_types:
            if t not in known_types:
                raise UndeclaredType(f"unknown type '{t}' in predicate '{p.name}'", filename)
    for a in actions.values():
        for _, t in a.params:
            if t not in known_types:
                raise UndeclaredType(f"unknown type '{t}' in action '{a.name}'", filename)

    return GpDomain(
        name=name,
        requirements=tuple(requirements),
        types=hierarchy,
        predicates=tuple(sorted(predicates.values(), key=lambda p: p.name)),
        actions=tuple(sorted(actions.values(), key=lambda a: a.name)),
        source_text=text,
    )


def _parse_action(
    lst: SList,
    predicates: dict[str, PredicateSchema],
    negative_allowed: bool,
    equality_allowed: bool,
    filename: str,
) -> ActionSchema:
    name = _sym_text(lst.items[1], "action name", filename)
    params: list[tuple[str, str]] = []
    pre: list[SchemaLiteral] = []
    add: list[tuple[str, tuple[str, ...]]] = []
    delete: list[tuple[str, tuple[str, ...]]] = []
    i = 2
    while i < len(lst.items):
        kw = _sym_text(lst.items[i], "action keyword", filename)
        if i + 1 >= len(lst.items):
            raise PddlSyntaxError(f"missing value after {kw}", filename, lst.line, lst.col)
        value = lst.items[i + 1]
        if kw == ":parameters":
            plist = _expect_list(value, "parameter list", filename)
            params = [(n, t) for n, t, _, _ in _parse_typed_names(plist.items, filename, True)]
        elif kw == ":precondition":
            for positive, pred, args, line, col in _flatten_literals(value, filename):
                _check_literal(predicates, equality_allowed, positive, pred, args, filename, line, col)
                if not positive and pred != "=" and not negative_allowed:
                    raise PddlSyntaxError(
                        "negative precondition requires :negative-preconditions",
                        filename,
                        line,
                        col,
                    )
                pre.append(SchemaLiteral(positive, pred, args))
        elif kw == ":effect":
            for positive, pred, args, line, col in _flatten_literals(value, filename):
                if pred == "=":
                    raise PddlSyntaxError("'=' cannot appear in effects", filename, line, col)
                _check_literal(predicates, False, positive, pred, args, filename, line, col)
                if positive:
                    add.append((pred, args))
                else:
                    delete.append((pred, args))
        else:
            raise PddlSyntaxError(f"unsupported action keyword '{kw}'", filename, lst.line, lst.col)
        i += 2

    param_names = {n for n, _ in params}
    for literal in pre:
        if literal.pred == "=":
            continue
        for a in literal.args:
            if a.startswith("?") and a not in param_names:
                raise PddlSyntaxError(
                    f"variable '{a}' in precondition of '{name}' is not a parameter", filename
                )
    for pred, args in add + delete:
        for a in args:
            if a.startswith("?") and a not in param_names:
                raise PddlSyntaxError(
                    f"variable '{a}' in effect of '{name}' is not a parameter", filename
                )
    overlap = set(add) & set(delete)
    if overlap:
        pred, args = sorted(overlap)[0]
        raise PddlSyntaxError(
            f"action '{name}' both adds and deletes ({pred} {' '.join(args)})", filename
        )
    return ActionSchema(name, tuple(params), tuple(pre), tuple(add), tuple(delete))


def parse_instance(text: str, dom: GpDomain, filename: str = "<problem>") -> GpInstance:
    """Parse a PDDL problem against an already-parsed domain."""
    try:
        top = parse_sexp(text, filename)
    except SexpError as e:
        raise PddlSyntaxError(e.message, filename, e.line, e.col) from None
    if len(top) != 1:
        raise PddlSyntaxError("expected a single (define ...) form", filename, 1, 1)
    root = _expect_list(top[0], "(define ...)", filename)
    if not root.items or _sym_text(root.items[0], "define", filename) != "define":
        raise PddlSyntaxError("expected (define ...)", filename, root.line, root.col)
    header = _expect_list(root.items[1], "(problem name)", filename)
    if len(header.items) != 2 or _sym_text(header.items[0], "problem", filename) != "problem":
        raise PddlSyntaxError("expected (problem <name>)", filename, header.line, header.col)
    name = _sym_text(header.items[1], "problem name", filename)

    objects: dict[str, str] = {}
    init_atoms: set[Atom] = set()
    goal_atoms: set[Atom] = set()
    domain_named = False
    dom_predicates = {p.name: p for p in dom.predicates}
    known_types = dom.types.names()

    def check_ground_atom(pred: str, args: tuple[str, ...], line: int, col: int, where: str) -> Atom:
        schema = dom_predicates.get(pred)
        if schema is None:
            raise UndeclaredPredicate(f"unknown predicate '{pred}' in {where}", filename, line, col)
        if len(args) != schema.arity:
            raise ArityMismatch(
                f"predicate '{pred}' expects {schema.arity} arguments, got {len(args)}",
                filename,
                line,
                col,
            )
        for a, want in zip(args, schema.param_types):
            if a not in objects:
                raise UndeclaredObject(f"undeclared object '{a}' in {where}", filename, line, col)
            if not dom.types.is_subtype(objects[a], want):
                raise TypeMismatch(
                    f"object '{a}' has type '{objects[a]}', expected '{want}'",
                    filename,
                    line,
                    col,
                )
        return (pred, args)

    for sec in root.items[2:]:
        lst = _expect_list(sec, "problem section", filename)
        if not lst.items:
            raise PddlSyntaxError("empty section", filename, lst.line, lst.col)
        kw = _sym_text(lst.items[0], "section keyword", filename)
        if kw == ":domain":
            ref = _sym_text(lst.items[1], "domain name", filename)
            if ref != dom.name:
                raise DomainMismatch(
                    f"problem references domain '{ref}', expected '{dom.name}'",
                    filename,
                    lst.line,
                    lst.col,
                )
            domain_named = True
        elif kw == ":objects":
            for oname, otype, line, col in _parse_typed_names(lst.items[1:], filename, False):
                if otype not in known_types:
                    raise UndeclaredType(f"unknown object type '{otype}'", filename, line, col)
                if oname in objects:
                    raise PddlSyntaxError(f"duplicate object '{oname}'", filename, line, col)
                objects[oname] = otype
        elif kw == ":init":
            for node in lst.items[1:]:
                pred, args, line, col = _parse_atom_expr(node, filename)
                if pred == "not":
                    raise PddlSyntaxError("negated init atoms are not supported", filename, line, col)
                init_atoms.add(check_ground_atom(pred, args, line, col, "init"))
        elif kw == ":goal":
            for positive, pred, args, line, col in _flatten_literals(lst.items[1], filename):
                if not positive:
                    raise NegativeGoal(
                        "goals are restricted to positive atoms", filename, line, col
                    )
                goal_atoms.add(check_ground_atom(pred, args, line, col, "goal"))
        else:
            raise PddlSyntaxError(f"unsupported section '{kw}'", filename, lst.line, lst.col)

    if not domain_named:
        raise DomainMismatch("problem does not name its domain", filename, root.line, root.col)

    return GpInstance(
        name=name,
        domain=dom,
        objects=tuple(sorted(objects.items())),
        init=GroundState(frozenset(init_atoms)),
        goal=frozenset(goal_atoms),
        source_text=text,
    )


# ---------------------------------------------------------------------------
# grounding and transition semantics


def _substitute(args: tuple[str, ...], binding: dict[str, str]) -> tuple[str, ...]:
    return tuple(binding.get(a, a) for a in args)


def ground_schema(schema: ActionSchema, args: tuple[str, ...]) -> GroundAction:
    binding = {v: o for (v, _), o in zip(schema.params, args)}
    pre_pos = frozenset(
        (l.pred, _substitute(l.args, binding)) for l in schema.pre if l.positive
    )
    pre_neg = frozenset(
        (l.pred, _substitute(l.args, binding)) for l in schema.pre if not l.positive
    )
    add = frozenset((p, _substitute(a, binding)) for p, a in schema.add)
    delete = frozenset((p, _substitute(a, binding)) for p, a in schema.delete)
    return GroundAction(schema.name, args, pre_pos, pre_neg, add, delete)


def ground_actions(inst: GpInstance) -> tuple[GroundAction, ...]:
    """All type-consistent groundings, ordered by (schema name, args)."""
    universe = inst.universe()
    out: list[GroundAction] = []
    for schema in inst.domain.actions:
        domains = [universe.of_type(t) for _, t in schema.params]
        for combo in itertools.product(*domains):
            out.append(ground_schema(schema, combo))
    out.sort(key=lambda a: (a.schema, a.args))
    return tuple(out)


def _literal_holds(s: GroundState, atom: Atom, positive: bool) -> bool:
    pred, args = atom
    if pred == "=":
        truth = args[0] == args[1]
    else:
        truth = atom in s.atoms
    return truth if positive else not truth


def applicable(s: GroundState, a: GroundAction) -> bool:
    return all(_literal_holds(s, atom, True) for atom in a.pre_pos) and all(
        _literal_holds(s, atom, False) for atom in a.pre_neg
    )


def apply_action(s: GroundState, a: GroundAction) -> GroundState:
    """Successor state (s \\ del) ∪ add; raises NotApplicable on bad preconditions."""
    if not applicable(s, a):
        raise NotApplicable(a.name)
    return GroundState(frozenset((s.atoms - a.delete) | a.add))


def holds_goal(s: GroundState, goal: frozenset[Atom]) -> bool:
    return goal <= s.atoms


def validate_plan(inst: GpInstance, plan: Plan) -> tuple[bool, int | None]:
    """Replay the plan from the initial state.

    Returns (True, None) when every step applies in sequence and the final
    state satisfies the goal, else (False, first failing step index); a
    satisfied-goal failure is reported at index len(steps).
    """
    s = inst.init
    for i, a in enumerate(plan.steps):
        if not applicable(s, a):
            return False, i
        s = apply_action(s, a)
    if not holds_goal(s, inst.goal):
        return False, len(plan.steps)
    return True, None


def bounded_goal_reachable(
    inst: GpInstance,
    s: GroundState,
    k: int,
    budget: int = 10**6,
    actions: tuple[GroundAction, ...] | None = None,
) -> bool:
    """Exact k-bounded goal reachability via breadth-first search.

    Complete within the bound; raises ResourceLimitError when more than
    *budget* states get visited. Pass pre-grounded *actions* to amortize
    grounding across repeated queries.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if holds_goal(s, inst.goal):
        return True
    if k == 0:
        return False
    if actions is None:
        actions = ground_actions(inst)
    visited: set[frozenset[Atom]] = {s.atoms}
    queue: deque[tuple[GroundState, int]] = deque([(s, 0)])
    while queue:
        state, depth = queue.popleft()
        if depth >= k:
            continue
        for a in actions:
            if not applicable(state, a):
                continue
            nxt = apply_action(state, a)
            if nxt.atoms in visited:
                continue
            if holds_goal(nxt, inst.goal):
                return True
            visited.add(nxt.atoms)
            if len(visited) > budget:
                raise ResourceLimitError(
                    f"bounded reachability exceeded {budget} visited states"
                )
            queue.append((nxt, depth + 1))
    return False


def format_atom(atom: Atom) -> str:
    pred, args = atom
    return f"{pred}({','.join(args)})" if args else pred


def format_state(s: GroundState) -> str:
    return "{" + ", ".join(sorted(format_atom(a) for a in s.atoms)) + "}"
