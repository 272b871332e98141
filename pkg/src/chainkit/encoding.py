"""Canonical byte encoding.

Every hash in the system is taken over the output of :func:`canonical_encode`,
so the encoding is fixed and platform independent:

* integers are 8-byte big-endian two's complement,
* ``bytes`` and ``str`` (UTF-8) are prefixed with an 8-byte length,
* lists and tuples are prefixed with an 8-byte element count,
* dicts are encoded as a count followed by ``(key, value)`` pairs sorted by
  the encoded key,
* enums encode as their integer value, booleans as the integers 0/1,
* optional values are a count of 0 or 1 followed by the value,
* dataclasses emit their fields in declaration order.

The encoding is not self-describing; :func:`decode` needs the target type.
"""
from __future__ import annotations

import collections.abc
import dataclasses
import enum
import functools
import struct
import types
import typing
from typing import Any, Union

__all__ = ["UnencodableType", "DecodeError", "canonical_encode", "decode", "encode_int"]

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

_I64 = struct.Struct(">q")
_U64 = struct.Struct(">Q")


class UnencodableType(TypeError):
    """Raised for values outside the closed set of encodable types."""


class DecodeError(ValueError):
    pass


def encode_int(value: int) -> bytes:
    if not INT_MIN <= value <= INT_MAX:
        raise UnencodableType(f"integer {value} does not fit in 64 bits")
    return _I64.pack(value)


def _length(n: int) -> bytes:
    return _U64.pack(n)


def _encode_into(obj: Any, out: list[bytes]) -> None:
    # bool before int, enum before int: both are int subclasses
    if isinstance(obj, bool):
        out.append(encode_int(int(obj)))
    elif isinstance(obj, enum.Enum):
        if not isinstance(obj.value, int):
            raise UnencodableType(f"enum {obj!r} has a non-integer value")
        out.append(encode_int(obj.value))
    elif isinstance(obj, int):
        out.append(encode_int(obj))
    elif isinstance(obj, (bytes, bytearray)):
        out.append(_length(len(obj)))
        out.append(bytes(obj))
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(_length(len(raw)))
        out.append(raw)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for name, optional in _field_plan(type(obj)):
            value = getattr(obj, name)
            if optional:
                if value is None:
                    out.append(_length(0))
                    continue
                out.append(_length(1))
            _encode_into(value, out)
    elif isinstance(obj, (list, tuple)):
        out.append(_length(len(obj)))
        for item in obj:
            _encode_into(item, out)
    elif isinstance(obj, collections.abc.Mapping):
        pairs = sorted((canonical_encode(k), canonical_encode(v)) for k, v in obj.items())
        out.append(_length(len(pairs)))
        for k, v in pairs:
            out.append(k)
            out.append(v)
    elif isinstance(obj, (set, frozenset)):
        items = sorted(canonical_encode(x) for x in obj)
        out.append(_length(len(items)))
        out.extend(items)
    else:
        raise UnencodableType(f"cannot encode value of type {type(obj).__name__}")


@functools.lru_cache(maxsize=None)
def _field_plan(cls: type) -> tuple[tuple[str, bool], ...]:
    hints = typing.get_type_hints(cls)
    return tuple(
        (f.name, _is_optional(hints[f.name])[0])
        for f in dataclasses.fields(cls)
        if not f.name.startswith("_")
    )


def canonical_encode(obj: Any) -> bytes:
    """Encode *obj* deterministically; see the module docstring for the rules."""
    out: list[bytes] = []
    _encode_into(obj, out)
    return b"".join(out)


def encode_optional(value: Any) -> bytes:
    return canonical_encode([] if value is None else [value])


# -- decoding -------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        chunk = bytes(self.data[self.pos:end])
        self.pos = end
        return chunk

    def int64(self) -> int:
        return _I64.unpack(self.take(8))[0]

    def length(self) -> int:
        n = _U64.unpack(self.take(8))[0]
        if n > len(self.data) - self.pos and n > 0:
            # every element needs at least one byte
            raise DecodeError(f"implausible length {n} at offset {self.pos - 8}")
        return n


def _is_optional(tp: Any) -> tuple[bool, Any]:
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1 and len(typing.get_args(tp)) == 2:
            return True, args[0]
    return False, None


def _decode_from(r: _Reader, tp: Any) -> Any:
    optional, inner = _is_optional(tp)
    if optional:
        n = r.length()
        if n == 0:
            return None
        if n != 1:
            raise DecodeError("optional count must be 0 or 1")
        return _decode_from(r, inner)
    if tp is bool:
        v = r.int64()
        if v not in (0, 1):
            raise DecodeError(f"invalid boolean {v}")
        return bool(v)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(r.int64())
    if tp is int:
        return r.int64()
    if tp is bytes:
        return r.take(r.length())
    if tp is str:
        try:
            return r.take(r.length()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(str(exc)) from None
    if dataclasses.is_dataclass(tp):
        hints = typing.get_type_hints(tp)
        kwargs = {}
        for f in dataclasses.fields(tp):
            if f.name.startswith("_"):
                continue
            kwargs[f.name] = _decode_from(r, hints[f.name])
        return tp(**kwargs)
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is list:
        return [_decode_from(r, args[0]) for _ in range(r.length())]
    if origin is tuple:
        n = r.length()
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode_from(r, args[0]) for _ in range(n))
        if n != len(args):
            raise DecodeError(f"tuple arity {n} != {len(args)}")
        return tuple(_decode_from(r, a) for a in args)
    if origin in (dict, collections.abc.Mapping):
        n = r.length()
        return {_decode_from(r, args[0]): _decode_from(r, args[1]) for _ in range(n)}
    if origin in (frozenset, set):
        n = r.length()
        return origin(_decode_from(r, args[0]) for _ in range(n))
    raise UnencodableType(f"cannot decode into {tp!r}")


def decode(data: bytes, tp: Any) -> Any:
    """Inverse of :func:`canonical_encode` for a value of type *tp*.

    Trailing bytes are an error.
    """
    r = _Reader(data)
    value = _decode_from(r, tp)
    if r.pos != len(r.data):
        raise DecodeError(f"{len(r.data) - r.pos} trailing bytes")
    return value
