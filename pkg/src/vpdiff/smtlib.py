"""SMT-LIB v2 (QF_BV) export and a small reader for solver output."""

from __future__ import annotations

import re
from typing import Dict, List

from . import symexpr as sx
from .symexpr import PathCondition, Term

_SIMPLE_SYMBOL = re.compile(r"[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*\Z")
_BV_OPS = {"add": "bvadd", "sub": "bvsub", "mul": "bvmul", "and": "bvand", "or": "bvor",
           "xor": "bvxor", "shl": "bvshl", "lshr": "bvlshr"}


def symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name):
        return name
    return "|" + name.replace("|", "") + "|"


def bv_literal(value: int, width: int) -> str:
    if width % 4 == 0:
        return "#x" + format(value, f"0{width // 4}x")
    return "#b" + format(value, f"0{width}b")


class _Writer:
    """Translates terms, sharing repeated subterms through ``let``-free memoisation."""

    def __init__(self):
        self.bv_memo: Dict[Term, str] = {}
        self.bool_memo: Dict[Term, str] = {}

    def as_bool(self, t: Term) -> str:
        assert t.width == 1
        hit = self.bool_memo.get(t)
        if hit is not None:
            return hit
        op = t.op
        if op == "const":
            s = "true" if t.value else "false"
        elif op == "eq":
            s = f"(= {self.as_bv(t.args[0])} {self.as_bv(t.args[1])})"
        elif op == "ult":
            s = f"(bvult {self.as_bv(t.args[0])} {self.as_bv(t.args[1])})"
        elif op == "ule":
            s = f"(bvule {self.as_bv(t.args[0])} {self.as_bv(t.args[1])})"
        elif op == "not":
            s = f"(not {self.as_bool(t.args[0])})"
        elif op in ("and", "or", "xor"):
            s = f"({op} {self.as_bool(t.args[0])} {self.as_bool(t.args[1])})"
        elif op == "ite":
            c, a, b = t.args
            s = f"(ite {self.as_bool(c)} {self.as_bool(a)} {self.as_bool(b)})"
        else:
            s = f"(= {self.as_bv(t)} #b1)"
        self.bool_memo[t] = s
        return s

    def as_bv(self, t: Term) -> str:
        hit = self.bv_memo.get(t)
        if hit is not None:
            return hit
        op = t.op
        if op == "const":
            s = bv_literal(t.value, t.width)
        elif op == "var":
            s = symbol(t.name)
        elif op in _BV_OPS:
            s = f"({_BV_OPS[op]} {self.as_bv(t.args[0])} {self.as_bv(t.args[1])})"
        elif op == "not":
            s = f"(bvnot {self.as_bv(t.args[0])})"
        elif op == "neg":
            s = f"(bvneg {self.as_bv(t.args[0])})"
        elif op in ("eq", "ult", "ule"):
            s = f"(ite {self.as_bool(t)} #b1 #b0)"
        elif op == "zext":
            a = t.args[0]
            s = f"((_ zero_extend {t.width - a.width}) {self.as_bv(a)})"
        elif op == "trunc":
            s = f"((_ extract {t.width - 1} 0) {self.as_bv(t.args[0])})"
        elif op == "ite":
            c, a, b = t.args
            s = f"(ite {self.as_bool(c)} {self.as_bv(a)} {self.as_bv(b)})"
        else:
            raise sx.TermError(f"cannot export operator {op}")
        self.bv_memo[t] = s
        return s


def to_smtlib(pc: PathCondition, extra_vars=()) -> str:
    """Deterministic QF_BV script checking ``pc`` and asking for a model."""
    variables = {v.name: v for v in pc.free_vars()}
    for v in extra_vars:
        variables.setdefault(v.name, v)
    lines = ["(set-logic QF_BV)", "(set-option :produce-models true)"]
    for name in sorted(variables):
        lines.append(f"(declare-const {symbol(name)} (_ BitVec {variables[name].width}))")
    if pc.is_false:
        lines.append("(assert false)")
    w = _Writer()
    for c in pc.conjuncts:
        lines.append(f"(assert {w.as_bool(c)})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- reading

class SmtParseError(ValueError):
    pass


_SEXP_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|(\|[^|]*\|)|(\"(?:[^\"]|\"\")*\")|([^\s()|;\"]+))")


def parse_sexps(text: str) -> list:
    """Parse all s-expressions in ``text`` into nested Python lists of strings."""
    stack: List[list] = [[]]
    pos = 0
    while pos < len(text):
        m = _SEXP_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise SmtParseError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        pos = m.end()
        comment, lp, rp, quoted, string, atom = m.groups()
        if comment is not None:
            continue
        if lp:
            stack.append([])
        elif rp:
            if len(stack) == 1:
                raise SmtParseError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        elif quoted is not None:
            stack[-1].append(quoted[1:-1])
        elif string is not None:
            stack[-1].append(string)
        elif atom is not None:
            stack[-1].append(atom)
    if len(stack) != 1:
        raise SmtParseError("unbalanced '('")
    return stack[0]


def parse_bv_value(tok) -> int:
    if isinstance(tok, str):
        if tok.startswith("#x"):
            return int(tok[2:], 16)
        if tok.startswith("#b"):
            return int(tok[2:], 2)
        if tok in ("true", "false"):
            return int(tok == "true")
    if isinstance(tok, list) and len(tok) == 3 and tok[0] == "_" and tok[1].startswith("bv"):
        return int(tok[1][2:])
    raise SmtParseError(f"not a bitvector value: {tok!r}")


def parse_response(text: str):
    """Split solver output into ``(status, {name: value})``."""
    stripped = text.strip()
    items = parse_sexps(stripped)
    if not items or items[0] not in ("sat", "unsat", "unknown"):
        raise SmtParseError(f"unexpected solver output: {stripped[:80]!r}")
    status = items[0]
    values: Dict[str, int] = {}
    for item in items[1:]:
        if not isinstance(item, list):
            continue
        if item and item[0] == "error":
            if status != "sat":
                continue
            raise SmtParseError("solver error: " + " ".join(map(str, item[1:])))
        if item and item[0] == "model":
            item = item[1:]
        for entry in item:
            if isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], str):
                values[entry[0]] = parse_bv_value(entry[1])
            elif isinstance(entry, list) and entry and entry[0] == "define-fun":
                values[entry[1]] = parse_bv_value(entry[4])
    return status, values


_BV_TO_OP = {v: k for k, v in _BV_OPS.items()}
_BV_TO_OP.update({"bvnot": "not", "bvneg": "neg"})


class _Reader:
    """Builds terms from the subset of QF_BV that ``to_smtlib`` emits."""

    def __init__(self):
        self.decls: Dict[str, int] = {}

    def term(self, s) -> Term:
        if isinstance(s, str):
            if s.startswith("#x"):
                return sx.mk_const(4 * (len(s) - 2), int(s[2:], 16))
            if s.startswith("#b"):
                return sx.mk_const(len(s) - 2, int(s[2:], 2))
            if s in ("true", "false"):
                return sx.mk_const(1, int(s == "true"))
            if s in self.decls:
                return sx.mk_var(s, self.decls[s])
            raise SmtParseError(f"undeclared symbol {s}")
        head = s[0]
        if isinstance(head, list):
            if head[:2] == ["_", "zero_extend"]:
                a = self.term(s[1])
                return sx.mk_zext(a, a.width + int(head[2]))
            if head[:2] == ["_", "extract"] and head[3] == "0":
                return sx.mk_trunc(self.term(s[1]), int(head[2]) + 1)
            raise SmtParseError(f"unsupported indexed operator {head}")
        if head == "_" and s[1].startswith("bv"):
            return sx.mk_const(int(s[2]), int(s[1][2:]))
        args = [self.term(a) for a in s[1:]]
        if head in _BV_TO_OP:
            op = _BV_TO_OP[head]
            return sx.mk_unary(op, args[0]) if op in ("not", "neg") else sx.mk_binary(op, *args)
        if head == "=":
            return sx.mk_eq(*args)
        if head == "distinct":
            return sx.mk_ne(*args)
        if head == "bvult":
            return sx.mk_ult(*args)
        if head == "bvule":
            return sx.mk_ule(*args)
        if head == "bvugt":
            return sx.mk_ult(args[1], args[0])
        if head == "bvuge":
            return sx.mk_ule(args[1], args[0])
        if head == "not":
            return sx.mk_not(args[0])
        if head in ("and", "or", "xor"):
            acc = args[0]
            for a in args[1:]:
                acc = sx.mk_binary(head, acc, a)
            return acc
        if head == "ite":
            return sx.mk_ite(*args)
        raise SmtParseError(f"unsupported operator {head}")


def read_script(text: str) -> PathCondition:
    """Read ``declare-const``/``assert`` commands back into a PathCondition."""
    r = _Reader()
    pc = sx.TRUE
    for cmd in parse_sexps(text):
        if not isinstance(cmd, list) or not cmd:
            raise SmtParseError(f"unexpected top-level item {cmd!r}")
        if cmd[0] == "declare-const":
            sort = cmd[2]
            if not (isinstance(sort, list) and sort[:2] == ["_", "BitVec"]):
                raise SmtParseError(f"unsupported sort {sort}")
            r.decls[cmd[1]] = int(sort[2])
            sx.mk_var(cmd[1], int(sort[2]))
        elif cmd[0] == "declare-fun" and cmd[2] == []:
            sort = cmd[3]
            r.decls[cmd[1]] = int(sort[2])
        elif cmd[0] == "assert":
            pc = sx.pc_and(pc, r.term(cmd[1]))
        elif cmd[0] in ("set-logic", "set-option", "check-sat", "get-model", "get-value", "exit",
                        "set-info"):
            continue
        else:
            raise SmtParseError(f"unsupported command {cmd[0]}")
    return pc
