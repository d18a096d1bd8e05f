"""Recursive-descent parser for ``.dm`` device-model files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

from ..symexpr import WIDTHS
from .ast import (
    Assign, Binary, Cast, Const, DeviceModel, DmaRead, FieldDecl, Handler, If, Index,
    Intrinsic, Ite, Name, Param, Pos, Return, Unary, While,
)
from .errors import ParseError

KEYWORDS = {
    "model", "state", "reg", "handler", "if", "else", "while", "return",
    "zext", "trunc", "ite", "dma_read", "dma_write", "fire_interrupt", "send_output",
}
STMT_INTRINSICS = {"fire_interrupt": 1, "dma_write": 2, "send_output": 1, "dma_read": 1}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<int>0[xX][0-9a-fA-F_]+|[0-9][0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<|>>|==|!=|<=|>=|->|[{}()\[\];:,=<>+\-*&|^~@])
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str  # int | ident | op | eof
    text: str
    line: int
    col: int

    @property
    def pos(self) -> Pos:
        return Pos(self.line, self.col)

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


@dataclass(frozen=True)
class SourceUnit:
    path: str
    text: Union[str, bytes]

    def decoded(self) -> str:
        if isinstance(self.text, bytes):
            try:
                return self.text.decode("utf-8")
            except UnicodeDecodeError as exc:
                line = self.text[: exc.start].count(b"\n") + 1
                raise ParseError("source is not valid UTF-8", line, 1, path=self.path) from None
        return self.text

    @classmethod
    def from_file(cls, path) -> "SourceUnit":
        return cls(str(path), Path(path).read_bytes())


def tokenize(text: str, path: Optional[str] = None) -> List[Token]:
    tokens = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", line, i - line_start + 1, path=path)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, i - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = i + chunk.rindex("\n") + 1
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens


_COMPARE = {"==": "eq", "!=": "ne", "<": "ult", "<=": "ule", ">": "ugt", ">=": "uge"}
# lowest to highest; comparisons bind loosest (as in Python)
_LEVELS = [{"|": "or"}, {"^": "xor"}, {"&": "and"}, {"<<": "shl", ">>": "lshr"},
           {"+": "add", "-": "sub"}, {"*": "mul"}]


class Parser:
    def __init__(self, text: str, path: Optional[str] = None, allow_var_decls: bool = False):
        self.path = path
        self.toks = tokenize(text, path)
        self.i = 0
        self.allow_var_decls = allow_var_decls
        self.var_decls: dict = {}
        self._callsite = 0

    # -------------------------------------------------------------- token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message, tok=None, expected=()):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col, expected, path=self.path)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            tok = self.tok
            self.i += 1
            return tok
        return None

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"unexpected {self.tok.describe()}", expected=[repr(text)])
        tok = self.tok
        self.i += 1
        return tok

    def ident(self, what: str = "identifier") -> Token:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.error(f"unexpected {tok.describe()}", expected=[what])
        self.i += 1
        return tok

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "int":
            self.error(f"unexpected {tok.describe()}", expected=["integer"])
        self.i += 1
        return int(tok.text.replace("_", ""), 0)

    def width_type(self) -> int:
        tok = self.tok
        m = re.fullmatch(r"u(\d+)", tok.text) if tok.kind == "ident" else None
        if m is None:
            self.error(f"unexpected {tok.describe()}", expected=["u1", "u8", "u16", "u32", "u64"])
        width = int(m.group(1))
        if width not in WIDTHS:
            self.error(f"unsupported width u{width}")
        self.i += 1
        return width

    # -------------------------------------------------------------- declarations

    def model(self, version_tag: str = "") -> DeviceModel:
        start = self.tok
        self.expect("model")
        name = self.ident("model name").text
        self.expect("{")
        fields = self.state_block()
        handlers: List[Handler] = []
        seen = set()
        while True:
            if self.at("handler"):
                tok = self.tok
                h = self.handler()
                if h.name in seen:
                    self.error(f"duplicate handler {h.name}", tok)
                seen.add(h.name)
                handlers.append(h)
            elif handlers and self.at("}"):
                break
            else:
                self.error(f"unexpected {self.tok.describe()}",
                           expected=["'handler'", "'}'"] if handlers else ["'handler'"])
        self.expect("}")
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.describe()}", expected=["end of input"])
        return DeviceModel(name, tuple(fields), tuple(handlers), version_tag, start.pos)

    def state_block(self) -> List[FieldDecl]:
        self.expect("state")
        self.expect("{")
        fields: List[FieldDecl] = []
        seen = set()
        while True:
            tok = self.expect("reg")
            name_tok = self.ident("field name")
            if name_tok.text in seen:
                self.error(f"duplicate field {name_tok.text}", name_tok)
            seen.add(name_tok.text)
            length = None
            if self.accept("["):
                len_tok = self.tok
                length = self.integer()
                if length < 1:
                    self.error("array length must be at least 1", len_tok)
                self.expect("]")
            self.expect(":")
            width = self.width_type()
            self.expect(";")
            fields.append(FieldDecl(name_tok.text, width, length, tok.pos))
            if self.accept("}"):
                return fields
            if not self.at("reg"):
                self.error(f"unexpected {self.tok.describe()}", expected=["'reg'", "'}'"])

    def handler(self) -> Handler:
        start = self.expect("handler")
        name = self.ident("handler name").text
        self._callsite = 0
        self.expect("(")
        params: List[Param] = []
        if not self.at(")"):
            while True:
                ptok = self.ident("parameter name")
                if any(p.name == ptok.text for p in params):
                    self.error(f"duplicate parameter {ptok.text}", ptok)
                self.expect(":")
                width = self.width_type()
                length = None
                if self.accept("["):
                    length = self.integer()
                    if length < 1:
                        self.error("array length must be at least 1")
                    self.expect("]")
                params.append(Param(ptok.text, width, length, ptok.pos))
                if not self.accept(","):
                    break
        self.expect(")")
        ret = None
        if self.accept("->"):
            ret = self.width_type()
        body = self.block()
        if ret is not None:
            kind = "mmio_read"
        elif any(p.length is not None for p in params):
            kind = "env_input"
        else:
            kind = "mmio_write"
        return Handler(name, kind, tuple(params), ret, body, start.pos)

    # -------------------------------------------------------------- statements

    def block(self):
        if self.accept("{"):
            stmts = []
            while not self.accept("}"):
                if self.tok.kind == "eof":
                    self.error("unexpected end of input", expected=["'}'", "statement"])
                stmts.append(self.statement())
            return tuple(stmts)
        return (self.statement(),)

    def statement(self):
        tok = self.tok
        if tok.text == "@" and tok.kind == "op":
            self.i += 1
            attr_tok = self.ident("loop attribute")
            if attr_tok.text == "elide":
                attr, n = "elide", None
            elif attr_tok.text == "unroll":
                self.expect("(")
                n_tok = self.tok
                n = self.integer()
                if n < 1:
                    self.error("unroll bound must be at least 1", n_tok)
                self.expect(")")
                attr = "unroll"
            else:
                self.error(f"unknown loop attribute @{attr_tok.text}", attr_tok,
                           expected=["elide", "unroll"])
            if not self.at("while"):
                self.error(f"unexpected {self.tok.describe()}", expected=["'while'"])
            return self.while_stmt(attr, n, tok)
        if tok.kind == "ident":
            if tok.text == "if":
                self.i += 1
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                then = self.block()
                other = ()
                if self.accept("else"):
                    other = self.block()
                return If(cond, then, other, tok.pos)
            if tok.text == "while":
                return self.while_stmt("default", None, tok)
            if tok.text == "return":
                self.i += 1
                value = self.expr()
                self.expect(";")
                return Return(value, tok.pos)
            if tok.text in STMT_INTRINSICS:
                self.i += 1
                callsite = -1
                if tok.text == "dma_read":
                    callsite = self._callsite
                    self._callsite += 1
                self.expect("(")
                args = [self.expr()]
                for _ in range(STMT_INTRINSICS[tok.text] - 1):
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                self.expect(";")
                return Intrinsic(tok.text, tuple(args), callsite, tok.pos)
            if tok.text not in KEYWORDS:
                if self.peek().text == "(" and self.peek().kind == "op":
                    self.error(f"call to {tok.text} is not allowed; only platform intrinsics may be called")
                target = self.lvalue()
                self.expect("=")
                value = self.expr()
                self.expect(";")
                return Assign(target, value, tok.pos)
        self.error(f"unexpected {tok.describe()}", expected=["statement"])

    def while_stmt(self, attr, n, start):
        self.expect("while")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        body = self.block()
        return While(cond, body, attr, n, start.pos)

    def lvalue(self):
        tok = self.ident()
        if self.accept("["):
            idx = self.expr()
            self.expect("]")
            return Index(tok.text, idx, tok.pos)
        return Name(tok.text, tok.pos)

    # -------------------------------------------------------------- expressions

    def expr(self):
        lhs = self.binary(0)
        tok = self.tok
        if tok.kind == "op" and tok.text in _COMPARE:
            self.i += 1
            rhs = self.binary(0)
            op = _COMPARE[tok.text]
            # a > b is b < a; the AST only has unsigned less-than forms
            if op == "ugt":
                return Binary("ult", rhs, lhs, tok.pos)
            if op == "uge":
                return Binary("ule", rhs, lhs, tok.pos)
            return Binary(op, lhs, rhs, tok.pos)
        return lhs

    def binary(self, level: int):
        if level == len(_LEVELS):
            return self.unary()
        ops = _LEVELS[level]
        lhs = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in ops:
            tok = self.tok
            self.i += 1
            rhs = self.binary(level + 1)
            lhs = Binary(ops[tok.text], lhs, rhs, tok.pos)
        return lhs

    def unary(self):
        tok = self.tok
        if self.accept("~"):
            return Unary("not", self.unary(), tok.pos)
        if self.accept("-"):
            return Unary("neg", self.unary(), tok.pos)
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "int":
            return Const(self.integer(), tok.pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "ident":
            if tok.text in ("zext", "trunc"):
                self.i += 1
                self.expect("<")
                w_tok = self.tok
                width = self.integer()
                if width not in WIDTHS:
                    self.error(f"unsupported width {width}", w_tok)
                self.expect(">")
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Cast(tok.text, width, arg, tok.pos)
            if tok.text == "ite":
                self.i += 1
                self.expect("(")
                c = self.expr()
                self.expect(",")
                a = self.expr()
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return Ite(c, a, b, tok.pos)
            if tok.text == "dma_read":
                self.i += 1
                callsite = self._callsite
                self._callsite += 1
                self.expect("(")
                addr = self.expr()
                self.expect(")")
                return DmaRead(addr, callsite, tok.pos)
            if tok.text in KEYWORDS:
                self.error(f"{tok.text} cannot be used in an expression", expected=["expression"])
            self.i += 1
            if self.at("(") :
                self.error(f"call to {tok.text} is not allowed; only platform intrinsics may be called", tok)
            if self.accept("["):
                idx = self.expr()
                self.expect("]")
                return Index(tok.text, idx, tok.pos)
            if self.allow_var_decls and self.at(":"):
                self.i += 1
                width = self.width_type()
                prev = self.var_decls.setdefault(tok.text, width)
                if prev != width:
                    self.error(f"{tok.text} redeclared as u{width} (was u{prev})", tok)
            return Name(tok.text, tok.pos)
        self.error(f"unexpected {tok.describe()}", expected=["expression"])


def parse_model(src: SourceUnit) -> DeviceModel:
    """Parse one model file.  The version tag is the file's stem."""
    text = src.decoded()
    tag = Path(src.path).stem if src.path else ""
    return Parser(text, src.path).model(tag)


def parse_file(path) -> DeviceModel:
    return parse_model(SourceUnit.from_file(path))


def parse_expr(text: str, allow_var_decls: bool = True):
    """Parse a standalone expression; returns ``(expr, {var: width})``."""
    p = Parser(text, allow_var_decls=allow_var_decls)
    if p.tok.kind == "eof":
        p.error("empty expression", expected=["expression"])
    e = p.expr()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.describe()}", expected=["end of input"])
    return e, dict(p.var_decls)
