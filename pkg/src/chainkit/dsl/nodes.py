"""Syntax tree for chain-definition programs.

Every node records the ``(line, column)`` where it starts; positions are
excluded from equality so trees parsed from differently formatted sources
compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Union

Pos = tuple[int, int]


def _pos():
    return field(default=(0, 0), compare=False, repr=False, kw_only=True)


# -- expressions ---------------------------------------------------------------


@dataclass
class Num:
    value: int
    pos: Pos = _pos()


@dataclass
class Str:
    value: str
    pos: Pos = _pos()


@dataclass
class HexBytes:
    value: bytes
    pos: Pos = _pos()


@dataclass
class Name:
    id: str
    pos: Pos = _pos()


@dataclass
class Member:
    obj: "Expr"
    attr: str
    pos: Pos = _pos()


@dataclass
class KwArg:
    name: str
    value: "Expr"
    pos: Pos = _pos()


@dataclass
class Call:
    func: "Expr"
    args: list
    pos: Pos = _pos()


@dataclass
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass
class Unary:
    op: str
    operand: "Expr"
    pos: Pos = _pos()


Expr = Union[Num, Str, HexBytes, Name, Member, Call, Binary, Unary]


# -- statements ----------------------------------------------------------------


@dataclass
class Pass:
    """The ``...`` placeholder."""

    pos: Pos = _pos()


@dataclass
class VarDecl:
    type_name: str
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass
class Assign:
    target: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass
class ExprStmt:
    expr: Expr
    pos: Pos = _pos()


@dataclass
class Log:
    value: Expr
    pos: Pos = _pos()


@dataclass
class Return:
    value: Expr | None
    pos: Pos = _pos()


@dataclass
class If:
    cond: Expr
    body: list
    orelse: list
    pos: Pos = _pos()


@dataclass
class For:
    var: str
    start: int
    stop: int
    body: list
    pos: Pos = _pos()


# -- declarations ----------------------------------------------------------------


@dataclass
class Param:
    type_name: str | None
    name: str
    pos: Pos = _pos()


@dataclass
class FuncDecl:
    name: str
    params: list[Param]
    body: list
    pos: Pos = _pos()


@dataclass
class Import:
    name: str
    pos: Pos = _pos()


@dataclass
class ChainDecl:
    name: str
    capabilities: list[str]
    body: list
    pos: Pos = _pos()

    @property
    def functions(self) -> list[FuncDecl]:
        return [d for d in self.body if isinstance(d, FuncDecl)]


@dataclass
class RootDecl:
    name: str
    params: list[Param]
    body: list
    pos: Pos = _pos()


@dataclass
class AspectDecl:
    name: str
    body: list
    pos: Pos = _pos()


@dataclass
class MechanismDecl:
    name: str
    members: list
    pos: Pos = _pos()

    @property
    def hooks(self) -> list[FuncDecl]:
        return [m for m in self.members if isinstance(m, FuncDecl)]


@dataclass
class Program:
    imports: list[Import]
    declarations: list
    source_name: str = field(default="<source>", compare=False)

    def of_type(self, cls) -> list:
        return [d for d in self.declarations if isinstance(d, cls)]


def dump(node, indent: int = 0) -> str:
    """Stable indented rendering used for golden snapshots."""
    pad = "  " * indent
    if isinstance(node, list):
        if not node:
            return pad + "[]"
        return "\n".join(dump(n, indent) for n in node)
    if not hasattr(node, "__dataclass_fields__"):
        return pad + repr(node)
    simple = []
    nested = []
    for f in fields(node):
        if f.name in ("pos", "source_name"):
            continue
        v = getattr(node, f.name)
        if isinstance(v, list) and any(hasattr(x, "__dataclass_fields__") for x in v) or hasattr(v, "__dataclass_fields__"):
            nested.append((f.name, v))
        else:
            simple.append(f"{f.name}={v!r}")
    head = f"{pad}{type(node).__name__}({', '.join(simple)})"
    lines = [head]
    for name, v in nested:
        lines.append(f"{pad}  .{name}:")
        lines.append(dump(v, indent + 2))
    return "\n".join(lines)
