"""Tokenizer for chain-definition sources.

Whitespace and comments are kept as leading trivia on the following token
(and as ``tail`` on the token list) so the original text can be rebuilt.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

__all__ = ["KEYWORDS", "TokenKind", "Token", "TokenList", "LexError", "tokenize", "untokenize"]

KEYWORDS = frozenset(
    {
        "Blockchain",
        "Root",
        "Aspect",
        "Mechanism",
        "Puzzle",
        "Consensus",
        "Roots",
        "func",
        "import",
        "return",
        "if",
        "else",
        "log",
        "this",
        "AddAspect",
    }
)


class TokenKind(enum.Enum):
    IDENT = "IDENT"
    KEYWORD = "KEYWORD"
    STRING = "STRING"
    INT = "INT"
    PUNCT = "PUNCT"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int
    trivia: str = ""

    @property
    def value(self):
        """Literal value: int for INT (hex literals give bytes), str for STRING."""
        if self.kind == TokenKind.INT:
            if self.text.startswith(("0x", "0X")):
                return bytes.fromhex(self.text[2:])
            return int(self.text)
        if self.kind == TokenKind.STRING:
            return _unquote(self.text)
        return self.text

    def __repr__(self) -> str:
        return f"{self.kind.value} {self.text!r}@{self.line}:{self.column}"


class TokenList(list):
    """Token list carrying the trailing trivia after the last token."""

    tail: str = ""


class LexError(ValueError):
    def __init__(self, line: int, column: int, fragment: str, message: str = "illegal character"):
        self.line = line
        self.column = column
        self.fragment = fragment
        super().__init__(f"{line}:{column}: {message} {fragment!r}")


_TRIVIA = re.compile(r"(?:\s+|//[^\n]*|/\*.*?\*/)*", re.S)
_PUNCT = ("...", "..", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", ",", ".", "=", "+", "-", "*", "/", "%", "<", ">", "!", ":")
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"0[xX][0-9a-fA-F]*|[0-9]+")
_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'", "0": "\0"}


def _unquote(text: str) -> str:
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            out.append(_ESCAPES[body[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tokenize(source: str) -> TokenList:
    tokens = TokenList()
    pos = 0
    line, col = 1, 1

    def advance(text: str) -> None:
        nonlocal line, col
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)

    while True:
        trivia = _TRIVIA.match(source, pos).group()
        if source.startswith("/*", pos + len(trivia)):
            advance(trivia)
            raise LexError(line, col, source[pos + len(trivia) : pos + len(trivia) + 10], "unterminated comment")
        advance(trivia)
        pos += len(trivia)
        if pos >= len(source):
            tokens.tail = trivia
            return tokens
        start_line, start_col = line, col
        ch = source[pos]
        m = _WORD.match(source, pos)
        if m:
            text = m.group()
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT
        elif ch.isdigit():
            text = _NUMBER.match(source, pos).group()
            kind = TokenKind.INT
            if text[:2].lower() == "0x" and (len(text) % 2 or len(text) == 2):
                raise LexError(line, col, text, "hex literal needs an even, non-zero number of digits")
        elif ch in "\"'":
            text = _scan_string(source, pos, line, col)
            kind = TokenKind.STRING
        else:
            text = next((p for p in _PUNCT if source.startswith(p, pos)), None)
            if text is None:
                raise LexError(line, col, ch)
            kind = TokenKind.PUNCT
        tokens.append(Token(kind, text, start_line, start_col, trivia))
        advance(text)
        pos += len(text)


def _scan_string(source: str, pos: int, line: int, col: int) -> str:
    quote = source[pos]
    i = pos + 1
    while i < len(source):
        c = source[i]
        if c == "\\":
            if i + 1 >= len(source) or source[i + 1] not in _ESCAPES:
                raise LexError(line, col, source[i : i + 2], "bad escape")
            i += 2
        elif c == quote:
            return source[pos : i + 1]
        elif c == "\n":
            break
        else:
            i += 1
    raise LexError(line, col, source[pos : pos + 10], "unterminated string")


def untokenize(tokens: TokenList) -> str:
    return "".join(t.trivia + t.text for t in tokens) + getattr(tokens, "tail", "")
