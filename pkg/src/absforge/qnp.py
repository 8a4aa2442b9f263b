"""Qualitative numerical planning problems: variables, qualitative states,
nondeterministic action semantics, and a plain-text problem format.

Literal syntax used throughout (text files, JSON documents, reports):
``p`` / ``!p`` for propositional variables, ``x>0`` / ``x=0`` for numerical
ones. Numerical effects are written ``inc(x)`` / ``dec(x)``.

The ``.qnp`` text format accepted by :func:`parse_qnp`:

    vars <name>:bool ... <name>:num ...
    init <literal> ...
    goal <literal> ...
    action <name>
      pre <literal> ...
      eff <bool literal | inc(x) | dec(x)> ...

Blank lines and ``;`` comments are ignored; ``pre``/``eff`` lines may be
omitted when empty. Init and goal may be partial literal sets.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass


class QnpError(Exception):
    pass


class QnpValidationError(QnpError):
    pass


class QnpParseError(QnpError):
    def __init__(self, message: str, filename: str = "<qnp>", line: int = 0):
        super().__init__(f"{filename}:{line}: {message}")
        self.message = message


class NotApplicableQ(QnpError):
    """Qualitative action taken in a state violating its precondition."""


_NUM_LIT = re.compile(r"^([A-Za-z_][\w-]*)(>0|=0)$")
_BOOL_LIT = re.compile(r"^(!?)([A-Za-z_][\w-]*)$")
_NUM_EFF = re.compile(r"^(inc|dec)\(([A-Za-z_][\w-]*)\)$")


def lit_var(lit: str) -> str:
    m = _NUM_LIT.match(lit)
    if m:
        return m.group(1)
    m = _BOOL_LIT.match(lit)
    if m:
        return m.group(2)
    raise QnpValidationError(f"malformed literal '{lit}'")


def lit_value(lit: str) -> bool:
    """Truth value the literal asserts: p / x>0 are True, !p / x=0 are False."""
    m = _NUM_LIT.match(lit)
    if m:
        return m.group(2) == ">0"
    m = _BOOL_LIT.match(lit)
    if m:
        return m.group(1) != "!"
    raise QnpValidationError(f"malformed literal '{lit}'")


def lit_is_numeric(lit: str) -> bool:
    return _NUM_LIT.match(lit) is not None


def make_literal(var: str, value: bool, numeric: bool) -> str:
    if numeric:
        return f"{var}>0" if value else f"{var}=0"
    return var if value else f"!{var}"


def eff_var(eff: str) -> str:
    m = _NUM_EFF.match(eff)
    if not m:
        raise QnpValidationError(f"malformed numerical effect '{eff}'")
    return m.group(2)


def eff_kind(eff: str) -> str:
    m = _NUM_EFF.match(eff)
    if not m:
        raise QnpValidationError(f"malformed numerical effect '{eff}'")
    return m.group(1)


@dataclass(frozen=True)
class QState:
    """Total assignment; numerical variables carry True for >0, False for =0."""

    values: tuple[tuple[str, bool], ...]

    @staticmethod
    def from_dict(d: dict[str, bool]) -> "QState":
        return QState(tuple(sorted(d.items())))

    def as_dict(self) -> dict[str, bool]:
        return dict(self.values)

    def get(self, var: str) -> bool:
        for v, b in self.values:
            if v == var:
                return b
        raise KeyError(var)

    def holds(self, lit: str) -> bool:
        return self.get(lit_var(lit)) == lit_value(lit)

    def satisfies(self, lits: frozenset[str] | set[str] | tuple[str, ...]) -> bool:
        return all(self.holds(l) for l in lits)


def format_qstate(s: QState, problem: "QnpProblem | None" = None) -> str:
    nums = set(problem.nums) if problem is not None else None
    parts = []
    for var, val in s.values:
        numeric = var in nums if nums is not None else False
        parts.append(make_literal(var, val, numeric))
    return " ".join(parts)


@dataclass(frozen=True)
class QnpAction:
    name: str
    pre: frozenset[str]
    bool_eff: frozenset[str]
    num_eff: frozenset[str]

    def __post_init__(self):
        for lit in self.pre | self.bool_eff:
            lit_var(lit)
        decs = set()
        incs = set()
        for e in self.num_eff:
            v = eff_var(e)
            (decs if eff_kind(e) == "dec" else incs).add(v)
        both = decs & incs
        if both:
            raise QnpValidationError(
                f"action '{self.name}' both increments and decrements {sorted(both)[0]}"
            )
        for v in decs:
            if f"{v}>0" not in self.pre:
                raise QnpValidationError(
                    f"action '{self.name}' decrements {v} without precondition {v}>0"
                )
        for var in {lit_var(l) for l in self.bool_eff}:
            if var in self.bool_eff and f"!{var}" in self.bool_eff:
                raise QnpValidationError(
                    f"action '{self.name}' asserts both {var} and !{var}"
                )

    def decs(self) -> frozenset[str]:
        return frozenset(eff_var(e) for e in self.num_eff if eff_kind(e) == "dec")

    def incs(self) -> frozenset[str]:
        return frozenset(eff_var(e) for e in self.num_eff if eff_kind(e) == "inc")


@dataclass(frozen=True)
class QnpProblem:
    bools: tuple[str, ...]
    nums: tuple[str, ...]
    actions: tuple[QnpAction, ...]
    init: frozenset[str]
    goal: frozenset[str]

    def __post_init__(self):
        declared = set(self.bools) | set(self.nums)
        if len(declared) != len(self.bools) + len(self.nums):
            raise QnpValidationError("duplicate variable declaration")
        names = [a.name for a in self.actions]
        if len(names) != len(set(names)):
            raise QnpValidationError("duplicate action name")
        for where, lits in (("init", self.init), ("goal", self.goal)):
            _check_literals(lits, self.bools, self.nums, where)
        for a in self.actions:
            _check_literals(a.pre, self.bools, self.nums, f"pre of '{a.name}'")
            for lit in a.bool_eff:
                if lit_is_numeric(lit) or lit_var(lit) not in self.bools:
                    raise QnpValidationError(
                        f"effect literal '{lit}' of '{a.name}' is not a declared boolean"
                    )
            for e in a.num_eff:
                if eff_var(e) not in self.nums:
                    raise QnpValidationError(
                        f"numerical effect '{e}' of '{a.name}' names an undeclared variable"
                    )

    def action(self, name: str) -> QnpAction:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def variables(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.bools) | set(self.nums)))


def _check_literals(lits, bools, nums, where: str) -> None:
    seen: dict[str, bool] = {}
    for lit in lits:
        var = lit_var(lit)
        numeric = lit_is_numeric(lit)
        if numeric and var not in nums:
            raise QnpValidationError(f"{where}: '{lit}' names an undeclared numerical variable")
        if not numeric and var not in bools:
            raise QnpValidationError(f"{where}: '{lit}' names an undeclared boolean variable")
        val = lit_value(lit)
        if var in seen and seen[var] != val:
            raise QnpValidationError(f"{where}: inconsistent literals on '{var}'")
        seen[var] = val


# ---------------------------------------------------------------------------
# semantics


def applicable_q(s: QState, a: QnpAction) -> bool:
    return s.satisfies(a.pre)


def successors_q(s: QState, a: QnpAction) -> tuple[QState, ...]:
    """All qualitative successors: bool effects overwrite, inc forces >0,
    each dec branches into {>0, =0}; exactly 2^(#dec) results."""
    if not applicable_q(s, a):
        raise NotApplicableQ(a.name)
    base = s.as_dict()
    for lit in a.bool_eff:
        base[lit_var(lit)] = lit_value(lit)
    for v in a.incs():
        base[v] = True
    decs = sorted(a.decs())
    out = []
    for branch in itertools.product([False, True], repeat=len(decs)):
        d = dict(base)
        for v, positive in zip(decs, branch):
            d[v] = positive
        out.append(QState.from_dict(d))
    return tuple(sorted(set(out), key=lambda q: q.values))


def initial_qstates(p: QnpProblem) -> tuple[QState, ...]:
    """Every total qstate consistent with the (possibly partial) init literals."""
    fixed: dict[str, bool] = {lit_var(l): lit_value(l) for l in p.init}
    free = [v for v in p.variables() if v not in fixed]
    out = []
    for combo in itertools.product([False, True], repeat=len(free)):
        d = dict(fixed)
        d.update(zip(free, combo))
        out.append(QState.from_dict(d))
    return tuple(sorted(out, key=lambda q: q.values))


def is_goal_q(s: QState, p: QnpProblem) -> bool:
    return s.satisfies(p.goal)


# ---------------------------------------------------------------------------
# text format


def parse_qnp(text: str, filename: str = "<qnp>") -> QnpProblem:
    bools: list[str] = []
    nums: list[str] = []
    init: list[str] = []
    goal: list[str] = []
    actions: list[QnpAction] = []
    current: dict | None = None
    saw_vars = False

    def finish() -> None:
        nonlocal current
        if current is not None:
            try:
                actions.append(
                    QnpAction(
                        current["name"],
                        frozenset(current["pre"]),
                        frozenset(current["bool_eff"]),
                        frozenset(current["num_eff"]),
                    )
                )
            except QnpValidationError as e:
                raise QnpParseError(str(e), filename, current["line"]) from None
            current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "vars":
            saw_vars = True
            for decl in parts[1:]:
                if ":" not in decl:
                    raise QnpParseError(f"malformed declaration '{decl}'", filename, lineno)
                name, kind = decl.rsplit(":", 1)
                if kind == "bool":
                    bools.append(name)
                elif kind == "num":
                    nums.append(name)
                else:
                    raise QnpParseError(f"unknown variable kind '{kind}'", filename, lineno)
        elif kw == "init":
            init.extend(parts[1:])
        elif kw == "goal":
            goal.extend(parts[1:])
        elif kw == "action":
            finish()
            if len(parts) != 2:
                raise QnpParseError("action line takes exactly one name", filename, lineno)
            current = {"name": parts[1], "pre": [], "bool_eff": [], "num_eff": [], "line": lineno}
        elif kw == "pre":
            if current is None:
                raise QnpParseError("'pre' outside an action block", filename, lineno)
            current["pre"].extend(parts[1:])
        elif kw == "eff":
            if current is None:
                raise QnpParseError("'eff' outside an action block", filename, lineno)
            for tok in parts[1:]:
                if _NUM_EFF.match(tok):
                    current["num_eff"].append(tok)
                else:
                    current["bool_eff"].append(tok)
        else:
            raise QnpParseError(f"unknown directive '{kw}'", filename, lineno)
    finish()
    if not saw_vars:
        raise QnpParseError("missing 'vars' line", filename, 0)
    try:
        return QnpProblem(
            tuple(bools), tuple(nums), tuple(actions), frozenset(init), frozenset(goal)
        )
    except QnpValidationError as e:
        raise QnpParseError(str(e), filename, 0) from None


def format_qnp(p: QnpProblem) -> str:
    lines = [
        "vars "
        + " ".join([f"{b}:bool" for b in p.bools] + [f"{n}:num" for n in p.nums]),
        "init " + " ".join(sorted(p.init)),
        "goal " + " ".join(sorted(p.goal)),
    ]
    for a in p.actions:
        lines.append(f"action {a.name}")
        if a.pre:
            lines.append("  pre " + " ".join(sorted(a.pre)))
        if a.bool_eff or a.num_eff:
            lines.append("  eff " + " ".join(sorted(a.bool_eff) + sorted(a.num_eff)))
    return "\n".join(lines) + "\n"
