"""Static checks over a compilation set of parsed programs.

Violations block lowering; warnings are informational.  Nothing here raises:
a broken program yields a report listing what is wrong with it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import nodes as n

__all__ = [
    "NATIVE_HOOKS",
    "TYPE_NAMES",
    "Diagnostic",
    "ValidationReport",
    "validate_program",
    "calls_in",
    "chain_functions_of",
]

NATIVE_HOOKS = frozenset(
    {
        "OnCreate",
        "OnNewBlock",
        "OnNewPeer",
        "OnBlockReceived",
        "OnPeerMessage",
        "Create",
        "Execute",
        "SocialWelfare",
        "SocialChoice",
        "Valuation",
    }
)
TYPE_NAMES = frozenset({"Int", "Nonce", "Block", "Hash", "Config", "Status", "String"})


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    message: str
    source_name: str = "<source>"

    def __str__(self) -> str:
        return f"{self.source_name}:{self.line}:{self.column}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [d.message for d in self.violations]


def _as_set(programs) -> list[n.Program]:
    return [programs] if isinstance(programs, n.Program) else list(programs)


def _walk(node) -> Iterable:
    yield node
    if isinstance(node, list):
        for x in node:
            yield from _walk(x)
    elif hasattr(node, "__dataclass_fields__"):
        for name in node.__dataclass_fields__:
            if name != "pos":
                yield from _walk(getattr(node, name))


def calls_in(body) -> list[n.Call]:
    return [x for x in _walk(body) if isinstance(x, n.Call)]


def _callee(call: n.Call) -> str | None:
    return call.func.id if isinstance(call.func, n.Name) else None


def chain_functions_of(programs: Sequence[n.Program]) -> list[n.FuncDecl]:
    """Functions belonging to the (single) chain: its own plus top-level ones."""
    out = []
    for p in programs:
        for d in p.declarations:
            if isinstance(d, n.ChainDecl):
                out.extend(d.functions)
            elif isinstance(d, n.FuncDecl):
                out.append(d)
    return out


def _is_consensus_assign(stmt) -> bool:
    return (
        isinstance(stmt, n.Assign)
        and isinstance(stmt.target, n.Member)
        and isinstance(stmt.target.obj, n.Name)
        and stmt.target.obj.id == "this"
        and stmt.target.attr == "consensus"
    )


def _returns_value(f: n.FuncDecl) -> bool:
    return any(isinstance(x, n.Return) and x.value is not None for x in _walk(f.body))


def _find_cycle(graph: dict[str, set[str]]) -> list[str] | None:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(v: str) -> list[str] | None:
        state[v] = 1
        stack.append(v)
        for w in sorted(graph.get(v, ())):
            if state.get(w) == 1:
                return stack[stack.index(w) :] + [w]
            if w not in state:
                found = visit(w)
                if found:
                    return found
        stack.pop()
        state[v] = 2
        return None

    for v in sorted(graph):
        if v not in state:
            found = visit(v)
            if found:
                return found
    return None


def validate_program(programs) -> ValidationReport:
    """Check a program (or a list forming one compilation set)."""
    programs = _as_set(programs)
    report = ValidationReport()

    def bad(p: n.Program, node, message: str) -> None:
        report.violations.append(Diagnostic(*node.pos, message, p.source_name))

    def warn(p: n.Program, node, message: str) -> None:
        report.warnings.append(Diagnostic(*node.pos, message, p.source_name))

    importable = {}
    declared: dict[str, n.Program] = {}
    for p in programs:
        for d in p.declarations:
            if isinstance(d, (n.RootDecl, n.AspectDecl, n.MechanismDecl, n.ChainDecl)):
                if d.name in declared:
                    bad(p, d, f"duplicate declaration {d.name!r}")
                declared[d.name] = p
            if isinstance(d, (n.RootDecl, n.AspectDecl)):
                importable[d.name] = d

    for p in programs:
        for imp in p.imports:
            if imp.name not in importable:
                bad(p, imp, f"unresolved import {imp.name!r}")
        visible = {i.name for i in p.imports} | {d.name for d in p.of_type(n.AspectDecl)}
        for root in p.of_type(n.RootDecl):
            for call in calls_in(root.body):
                if _callee(call) != "AddAspect":
                    continue
                arg = call.args[0] if len(call.args) == 1 else None
                if not isinstance(arg, n.Name):
                    bad(p, call, "AddAspect takes one aspect name")
                elif arg.id in visible and arg.id not in importable:
                    continue  # already reported as an unresolved import
                elif arg.id not in visible or not isinstance(importable.get(arg.id), n.AspectDecl):
                    bad(p, arg, f"unresolved import {arg.id!r}")
        for aspect in p.of_type(n.AspectDecl):
            keys = [s.target.id for s in aspect.body if isinstance(s, n.Assign) and isinstance(s.target, n.Name)]
            if "default_value" not in keys:
                bad(p, aspect, f"aspect {aspect.name!r} has no default_value")
        for chain in p.of_type(n.ChainDecl):
            count = sum(1 for s in chain.body if _is_consensus_assign(s))
            if count != 1:
                bad(p, chain, f"chain {chain.name!r} needs exactly one consensus assignment, found {count}")
        for mech in p.of_type(n.MechanismDecl):
            if not mech.hooks:
                bad(p, mech, f"mechanism {mech.name!r} declares no hooks")
            for hook in mech.hooks:
                if hook.name not in NATIVE_HOOKS:
                    bad(p, hook, f"unknown hook {hook.name!r} in mechanism {mech.name!r}")
        for x in _walk(p.declarations):
            if isinstance(x, n.VarDecl) and x.type_name not in TYPE_NAMES:
                bad(p, x, f"unknown type {x.type_name!r}")
            if isinstance(x, n.Param) and x.type_name is not None and x.type_name not in TYPE_NAMES:
                bad(p, x, f"unknown type {x.type_name!r}")

    chains = [c for p in programs for c in p.of_type(n.ChainDecl)]
    funcs = chain_functions_of(programs)
    by_name: dict[str, n.FuncDecl] = {}
    owner = {id(f): p for p in programs for f in _walk(p.declarations) if isinstance(f, n.FuncDecl)}
    for f in funcs:
        hook = "OnCreate" if f.name == "Create" else f.name
        if hook in by_name:
            bad(owner[id(f)], f, f"duplicate function {f.name!r}")
        by_name[hook] = f
        by_name.setdefault(f.name, f)
    if len(chains) > 1:
        for c in chains[1:]:
            bad(declared[c.name], c, "compilation set declares more than one Blockchain")

    graph = {f.name: {_callee(c) for c in calls_in(f.body)} & {g.name for g in funcs} for f in funcs}
    for mech in (m for p in programs for m in p.of_type(n.MechanismDecl)):
        for hook in mech.hooks:
            graph[f"{mech.name}.{hook.name}"] = {_callee(c) for c in calls_in(hook.body)} & set(graph)
    cycle = _find_cycle(graph)
    if cycle:
        start = next((f for f in funcs if f.name == cycle[0]), None)
        where = start if start is not None else n.Pass()
        p = owner.get(id(start), programs[0]) if programs else n.Program([], [])
        bad(p, where, "recursion forbidden: " + " -> ".join(cycle))

    named = {f.name: f for f in funcs}
    for f in funcs:
        for x in _walk(f.body):
            if isinstance(x, (n.VarDecl, n.Assign)) and isinstance(x.value, n.Call):
                callee = named.get(_callee(x.value))
                if callee is not None and not _returns_value(callee):
                    warn(owner[id(f)], x, f"function {callee.name!r} returns no value; its result is 0")
    return report
