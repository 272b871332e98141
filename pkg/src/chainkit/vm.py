"""Bounded stack machine executing root-instance code and chain functions.

Programs are byte strings.  Every instruction costs one step; a program can
only skip *forward*, so execution terminates after at most ``len(code)``
instructions (plus custom-opcode expansion) regardless of the budget.

Stack values are 64-bit signed integers or byte strings.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Mapping, MutableMapping, Sequence, Union

from .encoding import INT_MAX, INT_MIN, encode_int
from .hashing import HashAlg, digest

Value = Union[int, bytes]

__all__ = [
    "Op",
    "BASE_OPS",
    "ExecutionError",
    "VMError",
    "BudgetExhausted",
    "VMResult",
    "assemble",
    "disassemble",
    "run",
    "static_check",
    "custom_opcode_bytes",
    "encode_log",
    "decode_log",
]


class Op(enum.IntEnum):
    PUSH = 0x01
    POP = 0x02
    DUP = 0x03
    ADD = 0x04
    SUB = 0x05
    MUL = 0x06
    DIV = 0x07
    MOD = 0x08
    EQ = 0x09
    LT = 0x0A
    GT = 0x0B
    AND = 0x0C
    OR = 0x0D
    NOT = 0x0E
    HASH = 0x0F
    LOG = 0x10
    STORE_ASPECT = 0x11
    LOAD_ASPECT = 0x12
    PUSHB = 0x13
    SKIPZ = 0x14
    SKIP = 0x15
    RET = 0x16
    LOAD = 0x17
    STORE = 0x18
    EMIT = 0x19


BASE_OPS = frozenset(op.name for op in Op)
_NAME_OPS = {Op.STORE_ASPECT, Op.LOAD_ASPECT, Op.LOAD, Op.STORE, Op.EMIT}
_SKIP_OPS = {Op.SKIPZ, Op.SKIP}
CUSTOM_BASE = 0x80

_U32 = struct.Struct(">I")


class ExecutionError(Exception):
    """Base class for failures that abort a VM run."""


class VMError(ExecutionError):
    pass


class BudgetExhausted(ExecutionError):
    pass


@dataclass
class VMResult:
    stack: list[Value]
    logs: list[Value] = field(default_factory=list)
    effects: list[tuple[str, Value]] = field(default_factory=list)
    body: bytes | None = None
    steps: int = 0

    @property
    def top(self) -> Value | None:
        return self.stack[-1] if self.stack else None


# -- assembly ---------------------------------------------------------------


def custom_opcode_bytes(opcode_table: Mapping[str, Sequence[str]]) -> dict[str, int]:
    """Byte assigned to each custom opcode: 0x80 + rank in sorted name order."""
    names = sorted(opcode_table)
    if len(names) > 0x7F:
        raise VMError("too many custom opcodes")
    return {name: CUSTOM_BASE + i for i, name in enumerate(names)}


def _name_bytes(name: str) -> bytes:
    raw = name.encode("utf-8")
    if not raw or len(raw) > 255:
        raise VMError(f"bad operand name {name!r}")
    return bytes([len(raw)]) + raw


def encode_instruction(op: Op, operand: object = None) -> bytes:
    if op == Op.PUSH:
        return bytes([op]) + encode_int(int(operand))
    if op == Op.PUSHB:
        data = operand.encode("utf-8") if isinstance(operand, str) else bytes(operand)
        return bytes([op]) + _U32.pack(len(data)) + data
    if op in _NAME_OPS:
        return bytes([op]) + _name_bytes(str(operand))
    if op in _SKIP_OPS:
        return bytes([op]) + _U32.pack(int(operand))
    return bytes([op])


def assemble(text: str, opcode_table: Mapping[str, Sequence[str]] | None = None) -> bytes:
    """Assemble whitespace separated mnemonics, e.g. ``"PUSH 1 ADD LOG"``.

    ``PUSHB`` takes a ``0x``-prefixed hex literal or a bare word.
    """
    custom = custom_opcode_bytes(opcode_table or {})
    words = text.split()
    out = bytearray()
    i = 0
    while i < len(words):
        w = words[i]
        if w in custom:
            out.append(custom[w])
            i += 1
            continue
        try:
            op = Op[w]
        except KeyError:
            raise VMError(f"unknown mnemonic {w!r}") from None
        if op == Op.PUSH or op in _NAME_OPS or op in _SKIP_OPS or op == Op.PUSHB:
            if i + 1 >= len(words):
                raise VMError(f"{w} needs an operand")
            arg: object = words[i + 1]
            if op in (Op.PUSH,) or op in _SKIP_OPS:
                arg = int(arg, 0)
            elif op == Op.PUSHB and arg.startswith("0x"):
                arg = bytes.fromhex(arg[2:])
            out += encode_instruction(op, arg)
            i += 2
        else:
            out += encode_instruction(op)
            i += 1
    return bytes(out)


@dataclass(frozen=True)
class Instruction:
    offset: int
    op: int
    operand: object
    size: int


def _decode_one(code: bytes, pc: int) -> Instruction:
    op = code[pc]
    if op >= CUSTOM_BASE:
        return Instruction(pc, op, None, 1)
    try:
        op = Op(op)
    except ValueError:
        raise VMError(f"invalid opcode 0x{op:02x} at {pc}") from None
    if op == Op.PUSH:
        if pc + 9 > len(code):
            raise VMError(f"truncated PUSH at {pc}")
        return Instruction(pc, op, struct.unpack(">q", code[pc + 1 : pc + 9])[0], 9)
    if op == Op.PUSHB or op in _SKIP_OPS:
        if pc + 5 > len(code):
            raise VMError(f"truncated {op.name} at {pc}")
        n = _U32.unpack(code[pc + 1 : pc + 5])[0]
        if op == Op.PUSHB:
            if pc + 5 + n > len(code):
                raise VMError(f"truncated PUSHB at {pc}")
            return Instruction(pc, op, bytes(code[pc + 5 : pc + 5 + n]), 5 + n)
        return Instruction(pc, op, n, 5)
    if op in _NAME_OPS:
        if pc + 2 > len(code):
            raise VMError(f"truncated {op.name} at {pc}")
        n = code[pc + 1]
        if pc + 2 + n > len(code):
            raise VMError(f"truncated {op.name} at {pc}")
        try:
            name = bytes(code[pc + 2 : pc + 2 + n]).decode("utf-8")
        except UnicodeDecodeError:
            raise VMError(f"bad operand name at {pc}") from None
        return Instruction(pc, op, name, 2 + n)
    return Instruction(pc, op, None, 1)


def disassemble(code: bytes) -> list[Instruction]:
    """Decode instructions up to the end of code or the first ``RET``."""
    out = []
    pc = 0
    while pc < len(code):
        ins = _decode_one(code, pc)
        out.append(ins)
        pc += ins.size
        if ins.op == Op.RET:
            break
    return out


def static_check(code: bytes, opcode_table: Mapping[str, Sequence[str]] | None = None) -> list[Instruction]:
    """Verify *code* decodes and every skip lands inside the program.

    The body returned by ``RET`` is checked as well.  Raises :class:`VMError`.
    """
    custom = set(custom_opcode_bytes(opcode_table or {}).values())
    instructions = disassemble(code)
    for ins in instructions:
        if ins.op >= CUSTOM_BASE and ins.op not in custom:
            raise VMError(f"unknown custom opcode 0x{ins.op:02x} at {ins.offset}")
        if ins.op in _SKIP_OPS and ins.offset + ins.size + ins.operand > len(code):
            raise VMError(f"skip at {ins.offset} leaves the program")
        if ins.op == Op.RET:
            static_check(code[ins.offset + 1 :], opcode_table)
    return instructions


# -- execution --------------------------------------------------------------


def _check_int(v: int) -> int:
    if not INT_MIN <= v <= INT_MAX:
        raise VMError("integer overflow")
    return v


def _as_bytes(v: Value) -> bytes:
    return str(v).encode() if isinstance(v, int) else v


def _need_int(*vals: Value) -> None:
    for v in vals:
        if not isinstance(v, int):
            raise VMError("integer operand expected")


class _Machine:
    def __init__(self, budget, hash_alg, env, aspects, aspect_scope, expansions):
        self.budget = budget
        self.hash_alg = hash_alg
        self.env = env
        self.locals: dict[str, Value] = {}
        self.aspects = aspects
        self.aspect_scope = aspect_scope
        self.expansions = expansions
        self.steps = 0

    def pop(self, stack: list[Value]) -> Value:
        if not stack:
            raise VMError("stack underflow")
        return stack.pop()

    def charge(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExhausted(f"compute budget of {self.budget} steps exhausted")

    def step(self, ins: Instruction, stack: list[Value], result: VMResult) -> int:
        """Execute one instruction; return the number of extra bytes to skip."""
        op = ins.op
        if op >= CUSTOM_BASE:
            expansion = self.expansions.get(op)
            if expansion is None:
                raise VMError(f"unknown custom opcode 0x{op:02x}")
            for sub in expansion:
                self.charge()
                self.step(sub, stack, result)
            return 0
        pop = self.pop
        if op == Op.PUSH or op == Op.PUSHB:
            stack.append(ins.operand)
        elif op == Op.POP:
            pop(stack)
        elif op == Op.DUP:
            v = pop(stack)
            stack += [v, v]
        elif op == Op.ADD:
            b, a = pop(stack), pop(stack)
            if isinstance(a, int) and isinstance(b, int):
                stack.append(_check_int(a + b))
            else:
                stack.append(_as_bytes(a) + _as_bytes(b))
        elif op in (Op.SUB, Op.MUL, Op.DIV, Op.MOD):
            b, a = pop(stack), pop(stack)
            _need_int(a, b)
            if op in (Op.DIV, Op.MOD) and b == 0:
                raise VMError("division by zero")
            r = {Op.SUB: lambda: a - b, Op.MUL: lambda: a * b, Op.DIV: lambda: a // b, Op.MOD: lambda: a % b}[op]()
            stack.append(_check_int(r))
        elif op == Op.EQ:
            b, a = pop(stack), pop(stack)
            stack.append(int(type(a) is type(b) and a == b))
        elif op in (Op.LT, Op.GT):
            b, a = pop(stack), pop(stack)
            _need_int(a, b)
            stack.append(int(a < b if op == Op.LT else a > b))
        elif op in (Op.AND, Op.OR):
            b, a = pop(stack), pop(stack)
            _need_int(a, b)
            stack.append(int((a != 0 and b != 0) if op == Op.AND else (a != 0 or b != 0)))
        elif op == Op.NOT:
            a = pop(stack)
            _need_int(a)
            stack.append(int(a == 0))
        elif op == Op.HASH:
            a = pop(stack)
            stack.append(digest(self.hash_alg, encode_int(a) if isinstance(a, int) else a))
        elif op == Op.LOG:
            result.logs.append(pop(stack))
        elif op == Op.EMIT:
            result.effects.append((ins.operand, pop(stack)))
        elif op == Op.LOAD:
            name = ins.operand
            if name in self.locals:
                stack.append(self.locals[name])
            elif name in self.env:
                stack.append(self.env[name])
            else:
                raise VMError(f"unbound name {name!r}")
        elif op == Op.STORE:
            self.locals[ins.operand] = pop(stack)
        elif op == Op.LOAD_ASPECT:
            key = self._aspect_key(ins.operand)
            if self.aspects is None or key not in self.aspects:
                raise VMError(f"unknown aspect {ins.operand!r}")
            stack.append(self.aspects[key])
        elif op == Op.STORE_ASPECT:
            v = pop(stack)
            _need_int(v)
            if self.aspect_scope is None:
                raise VMError("no aspect scope")
            aspect = self.aspect_scope.aspect(ins.operand)
            if aspect is None:
                raise VMError(f"unknown aspect {ins.operand!r}")
            if not aspect.mutable:
                raise VMError(f"aspect {ins.operand!r} is constant")
            self.aspects[(self.aspect_scope.name, ins.operand)] = v
        elif op == Op.SKIPZ:
            cond = pop(stack)
            if cond == 0 or cond == b"":
                return ins.operand
        elif op == Op.SKIP:
            return ins.operand
        else:
            raise VMError(f"opcode {op} not executable here")
        return 0

    def _aspect_key(self, name: str) -> tuple[str, str]:
        if "." in name:
            root, _, aspect = name.partition(".")
            return (root, aspect)
        if self.aspect_scope is None:
            raise VMError("no aspect scope")
        return (self.aspect_scope.name, name)


def run(
    code: bytes,
    *,
    budget: int,
    hash_alg: HashAlg = HashAlg.SHA256,
    opcode_table: Mapping[str, Sequence[str]] | None = None,
    stack: Sequence[Value] = (),
    env: Mapping[str, Value] | None = None,
    aspects: MutableMapping[tuple[str, str], int] | None = None,
    aspect_scope=None,
) -> VMResult:
    """Execute *code*.

    ``aspects`` is mutated in place by ``STORE_ASPECT``; callers pass a copy
    when they need rollback.  ``aspect_scope`` is the :class:`RootDef` whose
    aspects unqualified names refer to.
    """
    expansions = {}
    for name, byte in custom_opcode_bytes(opcode_table or {}).items():
        sub = assemble(" ".join(opcode_table[name]))
        expansions[byte] = disassemble(sub)
    machine = _Machine(budget, hash_alg, dict(env or {}), aspects, aspect_scope, expansions)
    result = VMResult(stack=list(stack))
    pc = 0
    while pc < len(code):
        ins = _decode_one(code, pc)
        if ins.op == Op.RET:
            machine.charge()
            result.body = bytes(code[pc + 1 :])
            break
        if ins.op < CUSTOM_BASE:
            machine.charge()
        skip = machine.step(ins, result.stack, result)
        pc += ins.size + skip
    result.steps = machine.steps
    return result


# -- logs --------------------------------------------------------------------


def encode_log(entries: Sequence[Value]) -> bytes:
    """Serialise logged values: tag ``i`` + int64 or ``b`` + u32 length + bytes."""
    out = bytearray()
    for v in entries:
        if isinstance(v, int):
            out += b"i" + encode_int(v)
        else:
            out += b"b" + _U32.pack(len(v)) + v
    return bytes(out)


def decode_log(data: bytes) -> list[Value]:
    out: list[Value] = []
    pc = 0
    while pc < len(data):
        tag = data[pc : pc + 1]
        if tag == b"i":
            out.append(struct.unpack(">q", data[pc + 1 : pc + 9])[0])
            pc += 9
        elif tag == b"b":
            n = _U32.unpack(data[pc + 1 : pc + 5])[0]
            out.append(bytes(data[pc + 5 : pc + 5 + n]))
            pc += 5 + n
        else:
            raise ValueError(f"bad log tag at {pc}")
    return out
