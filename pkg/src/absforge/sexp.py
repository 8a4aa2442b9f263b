"""Position-tracking s-expression reader shared by the PDDL and formula parsers.

Symbols are lowercased (PDDL identifiers are case-insensitive); ``;`` starts a
comment that runs to end of line.
"""

from __future__ import annotations

from dataclasses import dataclass


class SexpError(Exception):
    """Lexical or structural error, rendered as ``file:line:col: message``."""

    def __init__(self, message: str, filename: str = "<input>", line: int = 0, col: int = 0):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.filename = filename
        self.line = line
        self.col = col
        self.message = message


@dataclass(frozen=True)
class Sym:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int


Node = Sym | SList

_DELIMS = "() \t\r\n;"


def parse_sexp(text: str, filename: str = "<input>") -> list[Node]:
    """Read all top-level s-expressions from *text*."""
    i = 0
    line = 1
    col = 1
    n = len(text)
    stack: list[tuple[list, int, int]] = []
    top: list[Node] = []

    def emit(node: Node) -> None:
        if stack:
            stack[-1][0].append(node)
        else:
            top.append(node)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
        elif ch in " \t\r":
            i += 1
            col += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch == "(":
            stack.append(([], line, col))
            i += 1
            col += 1
        elif ch == ")":
            if not stack:
                raise SexpError("unbalanced ')'", filename, line, col)
            items, l0, c0 = stack.pop()
            emit(SList(tuple(items), l0, c0))
            i += 1
            col += 1
        else:
            j = i
            while j < n and text[j] not in _DELIMS:
                j += 1
            emit(Sym(text[i:j].lower(), line, col))
            col += j - i
            i = j
    if stack:
        _, l0, c0 = stack[-1]
        raise SexpError("unclosed '('", filename, l0, c0)
    return top
