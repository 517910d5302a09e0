"""Recursive-descent parser for the expression grammar.

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)`` while ``2^-1`` is still accepted.  Implicit
multiplication is rejected.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable

from ..errors import ParseError, UnknownVariableError
from .expr import FUNCTIONS, Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Var, VarAlphabet

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<ident>[a-zA-Z][a-zA-Z0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, alphabet):
        self.text = text
        self.alphabet = alphabet
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.advance()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expr:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos, self.text)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Pow(base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos, self.text)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            if val in FUNCTIONS:
                raise ParseError(f"function {val!r} needs an argument", pos, self.text)
            if self.alphabet is not None and val not in self.alphabet:
                raise UnknownVariableError(val, pos, self.text)
            if self.peek()[0] in ("num", "ident"):
                raise ParseError("implicit multiplication is not allowed", self.peek()[2], self.text)
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of input", pos, self.text)
        raise ParseError(f"unexpected token {val!r}", pos, self.text)


def parse(text: str, alphabet: VarAlphabet | Iterable[str] | None) -> Expr:
    """Parse ``text`` into a raw (unsimplified) tree.

    Every identifier that is not a function name must belong to
    ``alphabet``; pass ``None`` only to skip the check deliberately.
    """
    if alphabet is not None and not isinstance(alphabet, VarAlphabet):
        alphabet = VarAlphabet(alphabet)
    return _Parser(text, alphabet).parse()
