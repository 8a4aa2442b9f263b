"""First-order feature language over ground states: closed boolean formulas
and counting terms, with an s-expression concrete syntax.

Grammar (authoritative):

    f     := atom | (= term term) | (not f) | (and f*) | (or f*)
           | (exists (tvar+) f) | (forall (tvar+) f)
    count := (count (tvar+) f)
    tvar  := ?name | ?name - typename
    atom  := (pred term*)
    term  := ?name | objectname

Quantified variables range over the objects of their declared type; untyped
variables range over all objects. States are closed-world. Evaluation is
plain enumeration; instances stay small enough that nothing cleverer pays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .pddl import GpDomain, GroundState, ObjectUniverse
from .sexp import SexpError, SList, Sym, parse_sexp

FORMULA_GRAMMAR = """\
f     := atom | (= term term) | (not f) | (and f*) | (or f*)
       | (exists (tvar+) f) | (forall (tvar+) f)
count := (count (tvar+) f)
tvar  := ?name | ?name - typename
atom  := (pred term*)
term  := ?name | objectname"""


class FormulaError(Exception):
    def __init__(self, message: str, filename: str = "<formula>", line: int = 0, col: int = 0):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.message = message


class FormulaSyntaxError(FormulaError):
    pass


class UnknownPredicate(FormulaError):
    pass


class UnknownType(FormulaError):
    pass


class ArityMismatch(FormulaError):
    pass


class UnboundVariable(FormulaError):
    pass


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[str, ...]  # '?x' variables or object constants


@dataclass(frozen=True)
class Eq:
    left: str
    right: str


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class TypedVar:
    name: str
    type_name: str | None


@dataclass(frozen=True)
class Exists:
    vars: tuple[TypedVar, ...]
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    vars: tuple[TypedVar, ...]
    body: "Formula"


Formula = Atom | Eq | Not | And | Or | Exists | Forall


@dataclass(frozen=True)
class CountingTerm:
    vars: tuple[TypedVar, ...]
    body: Formula


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # 'boolean' | 'numerical'
    boolean: Formula | None = None
    counting: CountingTerm | None = None

    def __post_init__(self):
        if self.kind not in ("boolean", "numerical"):
            raise ValueError(f"bad feature kind '{self.kind}'")
        if (self.kind == "boolean") != (self.boolean is not None):
            raise ValueError("boolean feature needs a closed formula")
        if (self.kind == "numerical") != (self.counting is not None):
            raise ValueError("numerical feature needs a counting term")


# ---------------------------------------------------------------------------
# parsing


def _parse_tvars(node, filename: str, dom: GpDomain | None) -> tuple[TypedVar, ...]:
    if not isinstance(node, SList) or not node.items:
        raise FormulaSyntaxError("expected a nonempty variable list", filename, node.line, node.col)
    out: list[TypedVar] = []
    items = node.items
    i = 0
    pending: list[Sym] = []
    known_types = dom.types.names() if dom is not None else None

    def flush(type_name: str | None, line: int, col: int) -> None:
        if type_name is not None and known_types is not None and type_name not in known_types:
            raise UnknownType(f"unknown type '{type_name}'", filename, line, col)
        for s in pending:
            out.append(TypedVar(s.text, type_name))
        pending.clear()

    while i < len(items):
        it = items[i]
        if not isinstance(it, Sym):
            raise FormulaSyntaxError("expected variable", filename, it.line, it.col)
        if it.text == "-":
            if not pending or i + 1 >= len(items) or not isinstance(items[i + 1], Sym):
                raise FormulaSyntaxError("malformed typed variable", filename, it.line, it.col)
            flush(items[i + 1].text, items[i + 1].line, items[i + 1].col)
            i += 2
            continue
        if not it.text.startswith("?"):
            raise FormulaSyntaxError(f"expected variable, got '{it.text}'", filename, it.line, it.col)
        pending.append(it)
        i += 1
    flush(None, node.line, node.col)
    names = [v.name for v in out]
    if len(names) != len(set(names)):
        raise FormulaSyntaxError("duplicate variable in quantifier", filename, node.line, node.col)
    return tuple(out)


def _build(node, dom: GpDomain | None, bound: frozenset[str], filename: str) -> Formula:
    if isinstance(node, Sym):
        raise FormulaSyntaxError(f"bare symbol '{node.text}'", filename, node.line, node.col)
    if not node.items:
        raise FormulaSyntaxError("empty form", filename, node.line, node.col)
    head = node.items[0]
    if not isinstance(head, Sym):
        raise FormulaSyntaxError("expected operator or predicate", filename, node.line, node.col)
    op = head.text

    if op == "not":
        if len(node.items) != 2:
            raise FormulaSyntaxError("'not' takes one formula", filename, node.line, node.col)
        return Not(_build(node.items[1], dom, bound, filename))
    if op in ("and", "or"):
        parts = tuple(_build(x, dom, bound, filename) for x in node.items[1:])
        return And(parts) if op == "and" else Or(parts)
    if op in ("exists", "forall"):
        if len(node.items) != 3:
            raise FormulaSyntaxError(f"'{op}' takes a variable list and a body", filename, node.line, node.col)
        tvars = _parse_tvars(node.items[1], filename, dom)
        inner = bound | {v.name for v in tvars}
        body = _build(node.items[2], dom, inner, filename)
        return Exists(tvars, body) if op == "exists" else Forall(tvars, body)
    if op == "=":
        if len(node.items) != 3:
            raise FormulaSyntaxError("'=' takes two terms", filename, node.line, node.col)
        terms = []
        for t in node.items[1:]:
            if not isinstance(t, Sym):
                raise FormulaSyntaxError("expected term", filename, node.line, node.col)
            terms.append(t.text)
        for t in terms:
            if t.startswith("?") and t not in bound:
                raise UnboundVariable(f"unbound variable '{t}'", filename, node.line, node.col)
        return Eq(terms[0], terms[1])

    args = []
    for t in node.items[1:]:
        if not isinstance(t, Sym):
            raise FormulaSyntaxError("expected term", filename, node.line, node.col)
        if t.text.startswith("?") and t.text not in bound:
            raise UnboundVariable(f"unbound variable '{t.text}'", filename, t.line, t.col)
        args.append(t.text)
    if dom is not None:
        schema = dom.predicate(op)
        if schema is None:
            raise UnknownPredicate(f"unknown predicate '{op}'", filename, head.line, head.col)
        if schema.arity != len(args):
            raise ArityMismatch(
                f"predicate '{op}' expects {schema.arity} arguments, got {len(args)}",
                filename,
                head.line,
                head.col,
            )
    return Atom(op, tuple(args))


def _single_form(text: str, filename: str):
    try:
        top = parse_sexp(text, filename)
    except SexpError as e:
        raise FormulaSyntaxError(e.message, filename, e.line, e.col) from None
    if len(top) != 1:
        raise FormulaSyntaxError("expected exactly one form", filename, 1, 1)
    return top[0]


def parse_formula(
    text: str,
    dom: GpDomain | None,
    filename: str = "<formula>",
    free: tuple[str, ...] = (),
) -> Formula:
    """Parse a formula; variables outside *free* must be quantifier-bound."""
    return _build(_single_form(text, filename), dom, frozenset(free), filename)


def parse_count(text: str, dom: GpDomain | None, filename: str = "<count>") -> CountingTerm:
    node = _single_form(text, filename)
    if (
        not isinstance(node, SList)
        or not node.items
        or not isinstance(node.items[0], Sym)
        or node.items[0].text != "count"
        or len(node.items) != 3
    ):
        raise FormulaSyntaxError("expected (count (tvar+) f)", filename, getattr(node, "line", 1), getattr(node, "col", 1))
    tvars = _parse_tvars(node.items[1], filename, dom)
    body = _build(node.items[2], dom, frozenset(v.name for v in tvars), filename)
    return CountingTerm(tvars, body)


def parse_feature(name: str, kind: str, definition: str, dom: GpDomain | None) -> Feature:
    label = f"<feature {name}>"
    if kind == "boolean":
        return Feature(name, "boolean", boolean=parse_formula(definition, dom, label))
    if kind == "numerical":
        return Feature(name, "numerical", counting=parse_count(definition, dom, label))
    raise FormulaSyntaxError(f"bad feature kind '{kind}'", label)


# ---------------------------------------------------------------------------
# evaluation


def eval_formula(
    f: Formula,
    s: GroundState,
    objs: ObjectUniverse,
    env: dict[str, str] | None = None,
) -> bool:
    """Finite-model truth under closed world; *env* binds free variables."""
    env = env or {}
    if isinstance(f, Atom):
        args = tuple(env.get(a, a) if a.startswith("?") else a for a in f.args)
        return (f.pred, args) in s.atoms
    if isinstance(f, Eq):
        left = env.get(f.left, f.left) if f.left.startswith("?") else f.left
        right = env.get(f.right, f.right) if f.right.startswith("?") else f.right
        return left == right
    if isinstance(f, Not):
        return not eval_formula(f.body, s, objs, env)
    if isinstance(f, And):
        return all(eval_formula(p, s, objs, env) for p in f.parts)
    if isinstance(f, Or):
        return any(eval_formula(p, s, objs, env) for p in f.parts)
    if isinstance(f, (Exists, Forall)):
        domains = [objs.of_type(v.type_name) for v in f.vars]
        names = [v.name for v in f.vars]
        combos = itertools.product(*domains)
        if isinstance(f, Exists):
            return any(
                eval_formula(f.body, s, objs, {**env, **dict(zip(names, combo))})
                for combo in combos
            )
        return all(
            eval_formula(f.body, s, objs, {**env, **dict(zip(names, combo))})
            for combo in combos
        )
    raise TypeError(f"not a formula: {f!r}")


def eval_count(t: CountingTerm, s: GroundState, objs: ObjectUniverse) -> int:
    """Number of distinct type-consistent tuples satisfying the body."""
    domains = [objs.of_type(v.type_name) for v in t.vars]
    names = [v.name for v in t.vars]
    return sum(
        1
        for combo in itertools.product(*domains)
        if eval_formula(t.body, s, objs, dict(zip(names, combo)))
    )


def eval_feature(feat: Feature, s: GroundState, objs: ObjectUniverse) -> bool | int:
    if feat.kind == "boolean":
        return eval_formula(feat.boolean, s, objs)
    return eval_count(feat.counting, s, objs)


def mentioned_predicates(f: Formula | CountingTerm) -> frozenset[str]:
    """Predicate names appearing anywhere in the formula or counting body."""
    if isinstance(f, CountingTerm):
        return mentioned_predicates(f.body)
    if isinstance(f, Atom):
        return frozenset([f.pred])
    if isinstance(f, Eq):
        return frozenset()
    if isinstance(f, Not):
        return mentioned_predicates(f.body)
    if isinstance(f, (And, Or)):
        out: frozenset[str] = frozenset()
        for p in f.parts:
            out |= mentioned_predicates(p)
        return out
    if isinstance(f, (Exists, Forall)):
        return mentioned_predicates(f.body)
    raise TypeError(f"not a formula: {f!r}")


def feature_predicates(feat: Feature) -> frozenset[str]:
    if feat.kind == "boolean":
        return mentioned_predicates(feat.boolean)
    return mentioned_predicates(feat.counting)
