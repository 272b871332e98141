"""Expressions evaluated against a live chain.

Supported forms, where ``B1`` is the chain name::

    B1.send(Female(root="coin", sender="alice", value=10))
    B1.send(Male(root="coin", partner=0x..., outputs="bob:6,carol:4"))
    B1.RI.contains(0x...)
    B1.stats()
    B1.height()

``send`` queues the instance in the chain's pending pool and returns its
hash; everything else is read-only.
"""
from __future__ import annotations

from .. import vm
from ..analytics import chain_stats
from ..core import Chain, instance_hash
from ..encoding import canonical_encode
from ..ledger import SPEC_INTS, SPEC_OUTPUTS
from ..model import Access, Gender, RootInstance, UtxoOutput
from . import nodes as n
from .parser import parse_expression

__all__ = ["UnknownMethod", "MalformedInstanceLiteral", "eval_interaction", "instance_from_literal"]


class UnknownMethod(AttributeError):
    pass


class MalformedInstanceLiteral(ValueError):
    pass


_FIELDS = {"root", "sender", "originator", "value", "code", "partner", "params", "outputs", "args", "access", "signature", "return_spec", "aspects"}


def _const(e):
    if isinstance(e, (n.Num, n.Str, n.HexBytes)):
        return e.value
    if isinstance(e, n.Unary) and e.op == "-" and isinstance(e.operand, n.Num):
        return -e.operand.value
    if isinstance(e, n.Name):
        return e.id
    raise MalformedInstanceLiteral(f"field value {type(e).__name__} is not a literal")


def _outputs(text: str) -> bytes:
    outs = []
    for part in (p.strip() for p in text.split(",") if p.strip()):
        owner, sep, amount = part.rpartition(":")
        if not sep or not owner:
            raise MalformedInstanceLiteral(f"output {part!r} is not owner:amount")
        outs.append(UtxoOutput(owner, int(amount)))
    return canonical_encode(outs)


def instance_from_literal(chain: Chain, lit) -> RootInstance:
    """Build a :class:`RootInstance` from ``Female(...)`` / ``Male(...)``."""
    if not (isinstance(lit, n.Call) and isinstance(lit.func, n.Name) and lit.func.id in ("Female", "Male")):
        raise MalformedInstanceLiteral("expected Female(...) or Male(...)")
    if any(not isinstance(a, n.KwArg) for a in lit.args):
        raise MalformedInstanceLiteral("instance fields must be given as name=value")
    fields = {}
    for a in lit.args:
        if a.name not in _FIELDS:
            raise MalformedInstanceLiteral(f"unknown field {a.name!r}")
        fields[a.name] = _const(a.value)
    gender = Gender.FEMALE if lit.func.id == "Female" else Gender.MALE
    if "root" not in fields:
        raise MalformedInstanceLiteral("missing field 'root'")
    code = fields.get("code", b"")
    if isinstance(code, str):
        try:
            code = vm.assemble(code, chain.config.opcode_table)
        except (vm.VMError, ValueError) as exc:
            raise MalformedInstanceLiteral(f"code does not assemble: {exc}") from None
    partner = fields.get("partner")
    if gender == Gender.MALE and not isinstance(partner, bytes):
        raise MalformedInstanceLiteral("a Male needs partner=0x<hash>")
    if gender == Gender.FEMALE and partner is not None:
        raise MalformedInstanceLiteral("a Female cannot name a partner")
    params = fields.get("params", b"")
    return_spec = fields.get("return_spec", b"")
    if "outputs" in fields:
        params, return_spec = _outputs(str(fields["outputs"])), SPEC_OUTPUTS
    if "args" in fields:
        args = [int(x) for x in str(fields["args"]).split(",") if x.strip()]
        params, return_spec = canonical_encode(args), SPEC_INTS
    aspects = {}
    for item in (x for x in str(fields.get("aspects", "")).split(",") if x.strip()):
        k, _, v = item.partition("=")
        aspects[k.strip()] = int(v)
    try:
        return RootInstance(
            root_name=str(fields["root"]),
            gender=gender,
            access=Access[str(fields.get("access", "PUBLIC"))],
            code=bytes(code),
            return_spec=return_spec.encode() if isinstance(return_spec, str) else return_spec,
            aspect_writes=aspects,
            partner_hash=partner,
            sender=str(fields.get("sender", "")),
            originator=str(fields.get("originator", fields.get("sender", ""))),
            value=int(fields.get("value", 0)),
            params=params.encode() if isinstance(params, str) else params,
            signature=str(fields.get("signature", "sig")).encode(),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedInstanceLiteral(str(exc)) from None


def _path(e) -> list[str]:
    out = []
    while isinstance(e, n.Member):
        out.insert(0, e.attr)
        e = e.obj
    if not isinstance(e, n.Name):
        raise UnknownMethod("interaction must start with a chain name")
    return [e.id] + out


def eval_interaction(chain: Chain, expr: str):
    e = parse_expression(expr)
    if not isinstance(e, n.Call) or not isinstance(e.func, n.Member):
        raise UnknownMethod(f"{expr!r} is not a method call on a chain")
    path = _path(e.func)
    if path[0] != chain.config.chain_name:
        raise UnknownMethod(f"no chain named {path[0]!r} is loaded")
    method = ".".join(path[1:])
    if method == "send":
        if len(e.args) != 1:
            raise MalformedInstanceLiteral("send takes exactly one instance")
        g = instance_from_literal(chain, e.args[0])
        chain.pending.append(g)
        return instance_hash(chain.config, g)
    if method == "RI.contains":
        if len(e.args) != 1 or not isinstance(e.args[0], n.HexBytes):
            raise MalformedInstanceLiteral("RI.contains takes one 0x<hash> literal")
        return chain.graph.contains(e.args[0].value)
    if method == "stats" and not e.args:
        return chain_stats(chain)
    if method == "height" and not e.args:
        return chain.height
    raise UnknownMethod(f"chain has no method {method!r}")
