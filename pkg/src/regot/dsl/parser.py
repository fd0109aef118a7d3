"""Parser for reward program text.

Grammar (EBNF)::

    program     = { declaration } ;
    declaration = "component" IDENT "weight" signed_num ":=" expr ;
    signed_num  = [ "-" | "+" ] NUMBER ;
    expr        = additive [ ( "<" | "<=" | ">" | ">=" ) additive ] ;
    additive    = term { ( "+" | "-" ) term } ;
    term        = unary { ( "*" | "/" ) unary } ;
    unary       = "-" unary | primary ;
    primary     = NUMBER | STRING | call | "(" expr ")" ;
    call        = IDENT "(" [ expr { "," expr } ] ")" ;

``#`` starts a comment that runs to the end of the line. A declaration's
expression may span several lines; it ends at the next ``component``
keyword or at end of input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ast import BinOp, Call, Compare, Component, Neg, Num, RewardProgram, Str

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|<=|>=|[<>+\-*/(),])
""", re.X)


@dataclass(frozen=True)
class ParseIssue:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line} column {self.col}: {self.message}"


class DSLParseError(ValueError):
    def __init__(self, errors: list[ParseIssue]):
        self.errors = list(errors)
        super().__init__("; ".join(map(str, self.errors)))


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DSLParseError([ParseIssue(line, pos - line_start + 1,
                                            f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Syntax(Exception):
    def __init__(self, tok: _Tok, message: str):
        self.issue = ParseIssue(tok.line, tok.col, message)


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_decl_start(self) -> bool:
        return self.tok.kind == "eof" or (self.tok.kind == "ident" and self.tok.text == "component")

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = repr(text) if text else kind
            got = repr(t.text) if t.text else "end of input"
            raise _Syntax(t, f"expected {want}, got {got}")
        return self.advance()

    def declaration(self) -> Component:
        kw = self.expect("ident", "component")
        name = self.expect("ident").text
        self.expect("ident", "weight")
        sign = 1.0
        if self.tok.kind == "op" and self.tok.text in ("+", "-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        wt = self.tok
        if wt.kind == "ident" and wt.text.lower() in ("inf", "infinity", "nan"):
            raise _Syntax(wt, f"weight of component {name!r} must be finite, got {wt.text}")
        weight = sign * float(self.expect("num").text)
        if not math.isfinite(weight):
            raise _Syntax(wt, f"weight of component {name!r} must be finite, got {wt.text}")
        self.expect("op", ":=")
        expr = self.expr()
        if not self.at_decl_start():
            raise _Syntax(self.tok, f"unexpected {self.tok.text!r} after expression")
        return Component(name, weight, expr, kw.line)

    def expr(self):
        left = self.additive()
        if self.tok.kind == "op" and self.tok.text in ("<", "<=", ">", ">="):
            op = self.advance()
            left = Compare(op.text, left, self.additive(), op.line, op.col)
            if self.tok.kind == "op" and self.tok.text in ("<", "<=", ">", ">="):
                raise _Syntax(self.tok, "comparisons cannot be chained; use parentheses")
        return left

    def additive(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance()
            left = BinOp(op.text, left, self.term(), op.line, op.col)
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance()
            left = BinOp(op.text, left, self.unary(), op.line, op.col)
        return left

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            op = self.advance()
            return Neg(self.unary(), op.line, op.col)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise _Syntax(t, f"numeric literal {t.text} is not finite")
            return Num(value, t.line, t.col)
        if t.kind == "str":
            self.advance()
            return Str(bytes(t.text[1:-1], "utf-8").decode("unicode_escape"), t.line, t.col)
        if t.kind == "ident":
            if t.text in ("component", "weight"):
                raise _Syntax(t, f"keyword {t.text!r} cannot start an expression")
            self.advance()
            self.expect("op", "(")
            args = []
            if not (self.tok.kind == "op" and self.tok.text == ")"):
                args.append(self.expr())
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                    args.append(self.expr())
            self.expect("op", ")")
            return Call(t.text, tuple(args), t.line, t.col)
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner = self.expr()
            self.expect("op", ")")
            return inner
        got = repr(t.text) if t.text else "end of input"
        raise _Syntax(t, f"expected an expression, got {got}")

    def skip_to_next_declaration(self):
        self.advance()
        while not self.at_decl_start():
            self.advance()


def parse_program(text: str) -> RewardProgram:
    """Parse program text; raises DSLParseError with every located problem."""
    p = _Parser(tokenize(text))
    comps: list[Component] = []
    issues: list[ParseIssue] = []
    seen: dict[str, int] = {}
    while p.tok.kind != "eof":
        start = p.tok
        try:
            c = p.declaration()
        except _Syntax as exc:
            issues.append(exc.issue)
            if p.tok is start and p.tok.kind != "eof":
                p.skip_to_next_declaration()
            else:
                while not p.at_decl_start():
                    p.advance()
            continue
        if c.name in seen:
            issues.append(ParseIssue(start.line, start.col,
                                     f"duplicate component name {c.name!r} "
                                     f"(first declared on line {seen[c.name]})"))
            continue
        seen[c.name] = start.line
        comps.append(c)
    if issues:
        raise DSLParseError(issues)
    return RewardProgram(tuple(comps), source_text=text)
