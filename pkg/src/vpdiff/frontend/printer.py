"""Source pretty-printer.  Output reparses to a structurally equal AST."""

from __future__ import annotations

from .ast import (
    Assign, Binary, BoundMarker, Cast, Const, DeviceModel, DmaRead, If, Index, Intrinsic,
    Ite, Name, Return, Unary, While,
)

_SYM = {"add": "+", "sub": "-", "mul": "*", "and": "&", "or": "|", "xor": "^",
        "shl": "<<", "lshr": ">>", "eq": "==", "ne": "!=", "ult": "<", "ule": "<="}


def format_expr(e) -> str:
    if isinstance(e, Const):
        return str(e.value) if e.value < 16 else hex(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Index):
        return f"{e.ident}[{format_expr(e.index)}]"
    if isinstance(e, Unary):
        return ("~" if e.op == "not" else "-") + _atom(e.arg)
    if isinstance(e, Binary):
        return f"({format_expr(e.lhs)} {_SYM[e.op]} {format_expr(e.rhs)})"
    if isinstance(e, Cast):
        return f"{e.op}<{e.width}>({format_expr(e.arg)})"
    if isinstance(e, Ite):
        return f"ite({format_expr(e.cond)}, {format_expr(e.then)}, {format_expr(e.other)})"
    if isinstance(e, DmaRead):
        return f"dma_read({format_expr(e.addr)})"
    raise TypeError(f"not an expression: {e!r}")


def _atom(e) -> str:
    text = format_expr(e)
    if isinstance(e, (Unary,)):
        return f"({text})"
    return text


def _block(stmts, depth: int, out: list) -> None:
    for s in stmts:
        _stmt(s, depth, out)


def _stmt(s, depth: int, out: list) -> None:
    pad = "  " * depth
    if isinstance(s, Assign):
        out.append(f"{pad}{format_expr(s.target)} = {format_expr(s.value)};")
    elif isinstance(s, If):
        out.append(f"{pad}if ({format_expr(s.cond)}) {{")
        _block(s.then, depth + 1, out)
        if s.other:
            out.append(f"{pad}}} else {{")
            _block(s.other, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, While):
        attr = ""
        if s.attr == "elide":
            attr = "@elide "
        elif s.attr == "unroll":
            attr = f"@unroll({s.unroll}) "
        out.append(f"{pad}{attr}while ({format_expr(s.cond)}) {{")
        _block(s.body, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, Intrinsic):
        args = ", ".join(format_expr(a) for a in s.args)
        out.append(f"{pad}{s.name}({args});")
    elif isinstance(s, Return):
        out.append(f"{pad}return {format_expr(s.value)};")
    elif isinstance(s, BoundMarker):
        out.append(f"{pad}// loop {s.loop_id} bound {s.bound} reached while {format_expr(s.cond)}")
    else:
        raise TypeError(f"not a statement: {s!r}")


def format_model(m: DeviceModel) -> str:
    out = [f"model {m.name} {{", "  state {"]
    for f in m.state_fields:
        arr = f"[{f.length}]" if f.length is not None else ""
        out.append(f"    reg {f.name}{arr} : u{f.width};")
    out.append("  }")
    for h in m.handlers:
        params = ", ".join(
            f"{p.name}: u{p.width}" + (f"[{p.length}]" if p.length is not None else "")
            for p in h.params
        )
        ret = f" -> u{h.return_width}" if h.return_width is not None else ""
        out.append(f"  handler {h.name}({params}){ret} {{")
        _block(h.body, 2, out)
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"
