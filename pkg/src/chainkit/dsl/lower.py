"""Lowering of validated programs to a :class:`ChainConfig` and VM bytecode.

Hook functions compile to standalone programs.  Helper functions are
inlined at each call site (recursion is rejected earlier), ``for`` loops
with literal bounds are unrolled and ``if`` uses forward skips only, so every
emitted program runs in time linear in its length.

Hook parameters bind to the environment keys ``$0``, ``$1`` ...; member
access ``b.nonce`` on a parameter reads ``$0.nonce``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .. import vm
from ..core import validate_config
from ..hashing import HashAlg
from ..model import (
    CHAIN_HOOKS,
    Access,
    AspectDef,
    ChainConfig,
    ChainType,
    InstanceType,
    MechanismRef,
    RootDef,
)
from . import nodes as n
from .parser import parse_source
from .validate import chain_functions_of, validate_program

__all__ = ["LoweringError", "lower_to_config", "compile_function", "compile_sources", "EFFECTS"]

# calls that become side effects collected by the host (EMIT)
EFFECTS = frozenset({"Broadcast"})

_BINARY = {
    "+": [vm.Op.ADD],
    "-": [vm.Op.SUB],
    "*": [vm.Op.MUL],
    "/": [vm.Op.DIV],
    "%": [vm.Op.MOD],
    "==": [vm.Op.EQ],
    "!=": [vm.Op.EQ, vm.Op.NOT],
    "<": [vm.Op.LT],
    ">": [vm.Op.GT],
    "<=": [vm.Op.GT, vm.Op.NOT],
    ">=": [vm.Op.LT, vm.Op.NOT],
    "&&": [vm.Op.AND],
    "||": [vm.Op.OR],
}
_MAX_UNROLL = 4096


class LoweringError(ValueError):
    def __init__(self, message: str, node=None):
        self.pos = getattr(node, "pos", None)
        where = f"{self.pos[0]}:{self.pos[1]}: " if self.pos and self.pos != (0, 0) else ""
        super().__init__(where + message)


# -- label assembler -----------------------------------------------------------


class _Label:
    pass


class _Asm:
    def __init__(self):
        self.items: list = []

    def op(self, op: vm.Op, operand=None) -> None:
        self.items.append((op, operand))

    def skip(self, op: vm.Op, label: _Label) -> None:
        self.items.append((op, label))

    def place(self, label: _Label) -> None:
        self.items.append(label)

    def assemble(self) -> bytes:
        skip_size = len(vm.encode_instruction(vm.Op.SKIP, 0))
        where: dict[int, int] = {}
        pos = 0
        for item in self.items:
            if isinstance(item, _Label):
                where[id(item)] = pos
            elif isinstance(item[1], _Label):
                pos += skip_size
            else:
                pos += len(vm.encode_instruction(*item))
        out = bytearray()
        for item in self.items:
            if isinstance(item, _Label):
                continue
            op, operand = item
            if isinstance(operand, _Label):
                operand = where[id(operand)] - (len(out) + skip_size)
            out += vm.encode_instruction(op, operand)
        return bytes(out)


# -- function compiler -----------------------------------------------------------


@dataclass
class _Ctx:
    end: _Label
    ret_slot: str | None
    prefix: str


class _FunctionCompiler:
    def __init__(self, helpers: dict[str, n.FuncDecl]):
        self.helpers = helpers
        self.asm = _Asm()
        self.inline_count = 0
        self.active: list[str] = []

    def compile(self, func: n.FuncDecl) -> bytes:
        scope = {p.name: ("env", f"${i}") for i, p in enumerate(_real_params(func))}
        end = _Label()
        self.active.append(func.name)
        self.block(func.body, scope, _Ctx(end, None, ""))
        self.active.pop()
        self.asm.place(end)
        return self.asm.assemble()

    # statements

    def block(self, body: list, scope: dict, ctx: _Ctx) -> None:
        for stmt in body:
            self.statement(stmt, scope, ctx)

    def statement(self, s, scope: dict, ctx: _Ctx) -> None:
        a = self.asm
        if isinstance(s, n.Pass):
            return
        if isinstance(s, n.Log):
            self.expr(s.value, scope, ctx)
            a.op(vm.Op.LOG)
        elif isinstance(s, (n.VarDecl, n.Assign)):
            if isinstance(s, n.Assign) and not isinstance(s.target, n.Name):
                raise LoweringError("only local variables can be assigned inside functions", s)
            name = s.name if isinstance(s, n.VarDecl) else s.target.id
            self.expr(s.value, scope, ctx)
            key = ctx.prefix + name
            a.op(vm.Op.STORE, key)
            scope[name] = ("local", key)
        elif isinstance(s, n.ExprStmt):
            if isinstance(s.expr, n.Call) and _callee(s.expr) in EFFECTS:
                self.effect(s.expr, scope, ctx)
            else:
                self.expr(s.expr, scope, ctx)
                a.op(vm.Op.POP)
        elif isinstance(s, n.Return):
            if ctx.ret_slot is None:
                if s.value is not None:
                    self.expr(s.value, scope, ctx)
            else:
                if s.value is None:
                    a.op(vm.Op.PUSH, 0)
                else:
                    self.expr(s.value, scope, ctx)
                a.op(vm.Op.STORE, ctx.ret_slot)
            a.skip(vm.Op.SKIP, ctx.end)
        elif isinstance(s, n.If):
            self.expr(s.cond, scope, ctx)
            other, done = _Label(), _Label()
            a.skip(vm.Op.SKIPZ, other)
            self.block(s.body, scope, ctx)
            if s.orelse:
                a.skip(vm.Op.SKIP, done)
            a.place(other)
            self.block(s.orelse, scope, ctx)
            a.place(done)
        elif isinstance(s, n.For):
            if s.stop - s.start > _MAX_UNROLL:
                raise LoweringError(f"loop of {s.stop - s.start} iterations exceeds the unroll limit", s)
            key = ctx.prefix + s.var
            for v in range(s.start, s.stop):
                a.op(vm.Op.PUSH, v)
                a.op(vm.Op.STORE, key)
                scope[s.var] = ("local", key)
                self.block(s.body, scope, ctx)
        else:
            raise LoweringError(f"{type(s).__name__} has no VM encoding", s)

    def effect(self, call: n.Call, scope: dict, ctx: _Ctx) -> None:
        if len(call.args) != 1:
            raise LoweringError(f"{_callee(call)} takes exactly one argument", call)
        self.expr(call.args[0], scope, ctx)
        self.asm.op(vm.Op.EMIT, _callee(call))

    # expressions

    def expr(self, e, scope: dict, ctx: _Ctx) -> None:
        a = self.asm
        if isinstance(e, n.Num):
            a.op(vm.Op.PUSH, e.value)
        elif isinstance(e, n.Str):
            a.op(vm.Op.PUSHB, e.value.encode("utf-8"))
        elif isinstance(e, n.HexBytes):
            a.op(vm.Op.PUSHB, e.value)
        elif isinstance(e, n.Name):
            if e.id in ("True", "False") and e.id not in scope:
                a.op(vm.Op.PUSH, int(e.id == "True"))
            else:
                a.op(vm.Op.LOAD, self.resolve(e, scope))
        elif isinstance(e, n.Member):
            a.op(vm.Op.LOAD, self.resolve(e, scope))
        elif isinstance(e, n.Binary):
            self.expr(e.left, scope, ctx)
            self.expr(e.right, scope, ctx)
            for op in _BINARY[e.op]:
                a.op(op)
        elif isinstance(e, n.Unary):
            if e.op == "-":
                a.op(vm.Op.PUSH, 0)
                self.expr(e.operand, scope, ctx)
                a.op(vm.Op.SUB)
            else:
                self.expr(e.operand, scope, ctx)
                a.op(vm.Op.NOT)
        elif isinstance(e, n.Call):
            self.call(e, scope, ctx)
        else:
            raise LoweringError(f"{type(e).__name__} has no VM encoding", e)

    def resolve(self, e, scope: dict) -> str:
        """Environment or local key named by a variable or parameter path."""
        if isinstance(e, n.Name):
            if e.id not in scope:
                raise LoweringError(f"unbound name {e.id!r}", e)
            return scope[e.id][1]
        if isinstance(e, n.Member):
            base = e.obj
            path = [e.attr]
            while isinstance(base, n.Member):
                path.insert(0, base.attr)
                base = base.obj
            if not isinstance(base, n.Name) or base.id not in scope:
                raise LoweringError("member access needs a parameter on the left", e)
            kind, key = scope[base.id]
            if kind != "env":
                raise LoweringError(f"{base.id!r} is a computed value without members", e)
            return ".".join([key] + path)
        raise LoweringError("not a variable", e)

    def call(self, e: n.Call, scope: dict, ctx: _Ctx) -> None:
        name = _callee(e)
        a = self.asm
        if name == "hash" and len(e.args) == 1:
            self.expr(e.args[0], scope, ctx)
            a.op(vm.Op.HASH)
            return
        if name == "get_aspect" and len(e.args) == 1 and isinstance(e.args[0], n.Str):
            a.op(vm.Op.LOAD_ASPECT, e.args[0].value)
            return
        if name == "set_aspect" and len(e.args) == 2 and isinstance(e.args[0], n.Str):
            self.expr(e.args[1], scope, ctx)
            a.op(vm.Op.STORE_ASPECT, e.args[0].value)
            a.op(vm.Op.PUSH, 0)
            return
        if name in EFFECTS:
            raise LoweringError(f"{name} has no value; call it as a statement", e)
        callee = self.helpers.get(name)
        if callee is None:
            raise LoweringError(f"unknown function {name!r}", e)
        if name in self.active:
            raise LoweringError(f"recursion forbidden: {name}", e)
        params = _real_params(callee)
        if len(params) != len(e.args):
            raise LoweringError(f"{name} expects {len(params)} arguments, got {len(e.args)}", e)
        self.inline_count += 1
        prefix = f"{name}#{self.inline_count}."
        inner: dict = {}
        for p, arg in zip(params, e.args):
            if isinstance(arg, (n.Name, n.Member)) and _is_env_path(arg, scope):
                inner[p.name] = ("env", self.resolve(arg, scope))
            else:
                self.expr(arg, scope, ctx)
                a.op(vm.Op.STORE, prefix + p.name)
                inner[p.name] = ("local", prefix + p.name)
        ret = prefix + "$ret"
        end = _Label()
        a.op(vm.Op.PUSH, 0)
        a.op(vm.Op.STORE, ret)
        self.active.append(name)
        self.block(callee.body, inner, _Ctx(end, ret, prefix))
        self.active.pop()
        a.place(end)
        a.op(vm.Op.LOAD, ret)


def _is_env_path(e, scope: dict) -> bool:
    base = e
    while isinstance(base, n.Member):
        base = base.obj
    return isinstance(base, n.Name) and scope.get(base.id, ("", ""))[0] == "env"


def _callee(call: n.Call) -> str | None:
    return call.func.id if isinstance(call.func, n.Name) else None


def _real_params(f: n.FuncDecl) -> list[n.Param]:
    return [p for p in f.params if p.name != "..."]


def compile_function(func: n.FuncDecl, helpers: dict[str, n.FuncDecl] | None = None) -> bytes:
    return _FunctionCompiler(helpers or {}).compile(func)


# -- declarations --------------------------------------------------------------


def _literal(e, what: str):
    if isinstance(e, (n.Num, n.Str)):
        return e.value
    if isinstance(e, n.Unary) and e.op == "-" and isinstance(e.operand, n.Num):
        return -e.operand.value
    if isinstance(e, n.Name) and e.id in ("True", "False"):
        return e.id == "True"
    raise LoweringError(f"{what} must be a literal", e)


def _enum_value(e, enum_cls, what: str):
    name = e.attr if isinstance(e, n.Member) else getattr(e, "id", None)
    try:
        return enum_cls[name]
    except KeyError:
        raise LoweringError(f"unknown {what} {name!r}", e) from None


def _aspect_def(decl: n.AspectDecl) -> AspectDef:
    attrs = {"description": "", "default_value": 0, "constant": False}
    for s in decl.body:
        if isinstance(s, n.Pass):
            continue
        if not (isinstance(s, n.Assign) and isinstance(s.target, n.Name) and s.target.id in attrs):
            raise LoweringError(f"unsupported statement in aspect {decl.name!r}", s)
        attrs[s.target.id] = _literal(s.value, s.target.id)
    return AspectDef(decl.name, str(attrs["description"]), int(attrs["default_value"]), not attrs["constant"])


def _root_def(decl: n.RootDecl, aspects: dict[str, n.AspectDecl]) -> RootDef:
    fields = {}
    aspect_defs = []
    for s in decl.body:
        if isinstance(s, n.Pass):
            continue
        if isinstance(s, n.ExprStmt) and isinstance(s.expr, n.Call) and _callee(s.expr) == "AddAspect":
            aspect_defs.append(_aspect_def(aspects[s.expr.args[0].id]))
            continue
        if not (isinstance(s, n.Assign) and isinstance(s.target, n.Name)):
            raise LoweringError(f"unsupported statement in root {decl.name!r}", s)
        key = s.target.id
        if key == "instance_type":
            fields[key] = _enum_value(s.value, InstanceType, "instance type")
        elif key == "access":
            fields[key] = _enum_value(s.value, Access, "access mode")
        elif key == "template":
            fields["code_template"] = str(_literal(s.value, key))
        elif key == "controller":
            fields[key] = str(_literal(s.value, key))
        elif key == "multi_invoke":
            fields[key] = bool(_literal(s.value, key))
        else:
            raise LoweringError(f"unknown root attribute {key!r}", s)
    return RootDef(decl.name, aspects=tuple(aspect_defs), **fields)


def _this_attr(s) -> str | None:
    t = getattr(s, "target", None)
    if isinstance(s, n.Assign) and isinstance(t, n.Member) and isinstance(t.obj, n.Name) and t.obj.id == "this":
        return t.attr
    return None


def lower_to_config(programs) -> ChainConfig:
    """Lower a validated compilation set to a chain configuration."""
    programs = [programs] if isinstance(programs, n.Program) else list(programs)
    chains = [c for p in programs for c in p.of_type(n.ChainDecl)]
    if len(chains) != 1:
        raise LoweringError(f"a compilation set needs exactly one Blockchain declaration, found {len(chains)}")
    report = validate_program(programs)
    if not report.ok:
        raise LoweringError("program is invalid: " + "; ".join(str(d) for d in report.violations))
    chain = chains[0]
    roots_by_name = {d.name: d for p in programs for d in p.of_type(n.RootDecl)}
    aspects = {d.name: d for p in programs for d in p.of_type(n.AspectDecl)}

    settings: dict = {}
    consensus_kind = "POW"
    difficulty = 0
    root_names: list[str] = []
    opcodes: dict[str, tuple[str, ...]] = {}
    for s in chain.body:
        if isinstance(s, (n.FuncDecl, n.Pass)):
            continue
        attr = _this_attr(s)
        if attr == "consensus":
            v = s.value
            if not (isinstance(v, n.Member) and isinstance(v.obj, n.Name) and v.obj.id == "Consensus"):
                raise LoweringError("consensus must be Consensus.<KIND>", v)
            consensus_kind = v.attr
        elif attr == "type":
            settings["chain_type"] = _enum_value(s.value, ChainType, "chain type")
        elif attr == "hash":
            settings["hash_alg"] = _enum_value(s.value, HashAlg, "hash algorithm")
        elif attr in ("compute_budget", "block_reward"):
            settings[attr] = int(_literal(s.value, attr))
        elif attr == "difficulty":
            difficulty = int(_literal(s.value, attr))
        elif isinstance(s, n.ExprStmt) and isinstance(s.expr, n.Call) and isinstance(s.expr.func, n.Member):
            target, method = s.expr.func.obj, s.expr.func.attr
            args = s.expr.args
            if isinstance(target, n.Name) and target.id == "Roots" and method == "add":
                if len(args) != 1 or not isinstance(args[0], n.Name) or args[0].id not in roots_by_name:
                    raise LoweringError("Roots.add needs a declared root", s)
                root_names.append(args[0].id)
            elif isinstance(target, n.Name) and target.id == "this" and method == "opcode" and len(args) == 2:
                name = _literal(args[0], "opcode name")
                steps = tuple(x.strip() for x in str(_literal(args[1], "opcode expansion")).split(";") if x.strip())
                opcodes[str(name)] = steps
            else:
                raise LoweringError("unsupported chain statement", s)
        else:
            raise LoweringError("unsupported chain statement", s)

    funcs = chain_functions_of(programs)
    helpers = {f.name: f for f in funcs}
    chain_functions = {}
    for f in funcs:
        hook = "OnCreate" if f.name == "Create" else f.name
        if hook in CHAIN_HOOKS:
            chain_functions[hook] = compile_function(f, helpers)
    mechanisms = []
    for p in programs:
        for m in p.of_type(n.MechanismDecl):
            hooks = {h.name: compile_function(h, helpers) for h in m.hooks}
            mechanisms.append(MechanismRef(m.name, "USER", 0, hooks))

    config = ChainConfig(
        chain_name=chain.name,
        consensus=MechanismRef(consensus_kind, consensus_kind, difficulty),
        roots=tuple(_root_def(roots_by_name[r], aspects) for r in root_names),
        opcode_table=opcodes,
        chain_functions=chain_functions,
        mechanisms=tuple(mechanisms),
        **settings,
    )
    violations = validate_config(config)
    if violations:
        raise LoweringError("lowered configuration is invalid: " + "; ".join(map(str, violations)))
    return config


def compile_sources(sources: Sequence[tuple[str, str]]) -> ChainConfig:
    """Parse, validate and lower ``(name, text)`` sources as one compilation set."""
    return lower_to_config([parse_source(text, name) for name, text in sources])
