"""Recursive-descent parser producing :mod:`chainkit.dsl.nodes` trees.

Statements may end with ``;`` but need not; braces are mandatory.  ``...``
is accepted wherever a statement, mechanism member or parameter list may
appear and means "nothing here".
"""
from __future__ import annotations

from . import nodes as n
from .lexer import Token, TokenKind, tokenize

__all__ = ["ParseError", "parse", "parse_source", "parse_expression"]

_NAME_KEYWORDS = {"this", "Consensus", "Roots", "AddAspect", "Puzzle", "log"}
_COMPARE = ("==", "!=", "<=", ">=", "<", ">")


class ParseError(SyntaxError):
    def __init__(self, line: int, column: int, expected: str, found: str):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(f"{line}:{column}: expected {expected}, found {found}")


class _Parser:
    def __init__(self, tokens: list[Token], source_name: str):
        self.toks = tokens
        self.i = 0
        self.source_name = source_name

    # -- token helpers ----------------------------------------------------

    def peek(self, k: int = 0) -> Token | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.text == text and t.kind in (TokenKind.PUNCT, TokenKind.KEYWORD)

    def at_kind(self, kind: TokenKind, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.kind == kind

    def error(self, expected: str) -> ParseError:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else None
            line, col = (last.line, last.column + len(last.text)) if last else (1, 1)
            return ParseError(line, col, expected, "end of input")
        return ParseError(t.line, t.column, expected, repr(t.text))

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            raise self.error("more input")
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        return self.next()

    def ident(self, what: str = "identifier") -> Token:
        if not self.at_kind(TokenKind.IDENT):
            raise self.error(what)
        return self.next()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    @staticmethod
    def pos(t: Token) -> n.Pos:
        return (t.line, t.column)

    # -- program ------------------------------------------------------------

    def program(self) -> n.Program:
        imports, decls = [], []
        while self.peek() is not None:
            if self.accept(";"):
                continue
            t = self.peek()
            if self.at("import"):
                self.next()
                name = self.ident("module name")
                self.accept(";")
                imports.append(n.Import(name.text, pos=self.pos(t)))
            elif self.at("Blockchain"):
                decls.append(self.chain())
            elif self.at("Root"):
                decls.append(self.root())
            elif self.at("Aspect"):
                decls.append(self.aspect())
            elif self.at("Mechanism"):
                decls.append(self.mechanism())
            elif self.at("func"):
                decls.append(self.func())
            else:
                raise self.error("declaration")
        return n.Program(imports, decls, self.source_name)

    def chain(self) -> n.ChainDecl:
        t = self.expect("Blockchain")
        name = self.ident("chain name")
        caps = []
        if self.accept("("):
            while not self.at(")"):
                c = self.next()
                if c.kind not in (TokenKind.IDENT, TokenKind.KEYWORD):
                    raise ParseError(c.line, c.column, "capability name", repr(c.text))
                caps.append(c.text)
                if not self.accept(","):
                    break
            self.expect(")")
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("'}'")
            if self.accept(";"):
                continue
            body.append(self.func() if self.at("func") else self.statement())
        self.expect("}")
        self.accept(";")
        return n.ChainDecl(name.text, caps, body, pos=self.pos(t))

    def root(self) -> n.RootDecl:
        t = self.expect("Root")
        name = self.ident("root name")
        params = self.params() if self.at("(") else []
        return n.RootDecl(name.text, params, self.block(), pos=self.pos(t))

    def aspect(self) -> n.AspectDecl:
        t = self.expect("Aspect")
        name = self.ident("aspect name")
        return n.AspectDecl(name.text, self.block(), pos=self.pos(t))

    def mechanism(self) -> n.MechanismDecl:
        t = self.expect("Mechanism")
        name = self.ident("mechanism name")
        self.expect("{")
        members = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("'}'")
            if self.accept(";"):
                continue
            if self.at("..."):
                members.append(n.Pass(pos=self.pos(self.next())))
                continue
            members.append(self.func())
        self.expect("}")
        self.accept(";")
        return n.MechanismDecl(name.text, members, pos=self.pos(t))

    def func(self) -> n.FuncDecl:
        """``func Name(params) {..}``; the ``func`` keyword is optional in mechanisms."""
        start = self.peek()
        self.accept("func")
        name = self.ident("function name")
        params = self.params()
        body = self.block()
        return n.FuncDecl(name.text, params, body, pos=self.pos(start))

    def params(self) -> list[n.Param]:
        self.expect("(")
        out = []
        if self.at("..."):
            t = self.next()
            out.append(n.Param(None, "...", pos=self.pos(t)))
        else:
            while self.at_kind(TokenKind.IDENT):
                first = self.next()
                if self.at_kind(TokenKind.IDENT):
                    second = self.next()
                    out.append(n.Param(first.text, second.text, pos=self.pos(first)))
                else:
                    out.append(n.Param(None, first.text, pos=self.pos(first)))
                if not self.accept(","):
                    break
        self.expect(")")
        return out

    def block(self) -> list:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("'}'")
            if self.accept(";"):
                continue
            body.append(self.statement())
        self.expect("}")
        self.accept(";")
        return body

    # -- statements -----------------------------------------------------------

    def statement(self):
        t = self.peek()
        p = self.pos(t)
        if self.at("..."):
            self.next()
            stmt = n.Pass(pos=p)
        elif self.at("log") and self.at("(", 1):
            self.next()
            self.expect("(")
            value = self.expr()
            self.expect(")")
            stmt = n.Log(value, pos=p)
        elif self.at("return"):
            self.next()
            value = None if self.at(";") or self.at("}") else self.expr()
            stmt = n.Return(value, pos=p)
        elif self.at("if"):
            return self.if_stmt()
        elif t.kind == TokenKind.IDENT and t.text == "for" and self.at_kind(TokenKind.IDENT, 1):
            return self.for_stmt()
        elif self.at_kind(TokenKind.IDENT) and self.at_kind(TokenKind.IDENT, 1) and self.at("=", 2):
            type_name = self.next().text
            name = self.next().text
            self.expect("=")
            stmt = n.VarDecl(type_name, name, self.expr(), pos=p)
        else:
            e = self.expr()
            if self.accept("="):
                if not isinstance(e, (n.Name, n.Member)):
                    raise ParseError(p[0], p[1], "assignable target", type(e).__name__)
                stmt = n.Assign(e, self.expr(), pos=p)
            else:
                stmt = n.ExprStmt(e, pos=p)
        self.accept(";")
        return stmt

    def if_stmt(self) -> n.If:
        t = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        body = self.block()
        orelse = []
        if self.accept("else"):
            orelse = [self.if_stmt()] if self.at("if") else self.block()
        return n.If(cond, body, orelse, pos=self.pos(t))

    def for_stmt(self) -> n.For:
        t = self.next()  # 'for'
        var = self.ident("loop variable").text
        tok = self.peek()
        if tok is None or tok.text != "in":
            raise self.error("'in'")
        self.next()
        start = self.int_literal()
        self.expect("..")
        stop = self.int_literal()
        return n.For(var, start, stop, self.block(), pos=self.pos(t))

    def int_literal(self) -> int:
        if not self.at_kind(TokenKind.INT) or self.peek().text[:2].lower() == "0x":
            raise self.error("integer literal loop bound")
        return self.next().value

    # -- expressions ------------------------------------------------------------

    def expr(self):
        return self.binary(0)

    _LEVELS = (("||",), ("&&",), _COMPARE, ("+", "-"), ("*", "/", "%"))

    def binary(self, level: int):
        if level == len(self._LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while True:
            t = self.peek()
            if t is None or t.kind != TokenKind.PUNCT or t.text not in self._LEVELS[level]:
                return left
            self.next()
            right = self.binary(level + 1)
            left = n.Binary(t.text, left, right, pos=left.pos)

    def unary(self):
        if self.at("!") or self.at("-"):
            t = self.next()
            return n.Unary(t.text, self.unary(), pos=self.pos(t))
        return self.postfix()

    def postfix(self):
        e = self.primary()
        while True:
            if self.at("."):
                self.next()
                attr = self.next()
                if attr.kind not in (TokenKind.IDENT, TokenKind.KEYWORD):
                    raise ParseError(attr.line, attr.column, "member name", repr(attr.text))
                e = n.Member(e, attr.text, pos=e.pos)
            elif self.at("("):
                self.next()
                args = []
                while not self.at(")"):
                    args.append(self.argument())
                    if not self.accept(","):
                        break
                self.expect(")")
                e = n.Call(e, args, pos=e.pos)
            else:
                return e

    def argument(self):
        if self.at_kind(TokenKind.IDENT) and self.at("=", 1):
            t = self.next()
            self.next()
            return n.KwArg(t.text, self.expr(), pos=self.pos(t))
        return self.expr()

    def primary(self):
        t = self.peek()
        if t is None:
            raise self.error("expression")
        p = self.pos(t)
        if t.kind == TokenKind.INT:
            self.next()
            v = t.value
            return n.HexBytes(v, pos=p) if isinstance(v, bytes) else n.Num(v, pos=p)
        if t.kind == TokenKind.STRING:
            self.next()
            return n.Str(t.value, pos=p)
        if t.kind == TokenKind.IDENT or (t.kind == TokenKind.KEYWORD and t.text in _NAME_KEYWORDS):
            self.next()
            return n.Name(t.text, pos=p)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error("expression")


def parse(tokens: list[Token], source_name: str = "<source>") -> n.Program:
    return _Parser(list(tokens), source_name).program()


def parse_source(source: str, source_name: str = "<source>") -> n.Program:
    return parse(tokenize(source), source_name)


def parse_expression(source: str):
    """Parse a single expression (used by chain interactions)."""
    p = _Parser(list(tokenize(source)), "<expr>")
    e = p.expr()
    p.accept(";")
    if p.peek() is not None:
        raise p.error("end of expression")
    return e
