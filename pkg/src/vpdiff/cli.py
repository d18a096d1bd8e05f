"""Command-line front end.

Exit codes:
  0  no differences
  1  confirmed (or structural) differences
  2  only possible differences, the solver could not decide some queries
  3  usage, input or configuration error
  4  internal error
  5  exploration budget exhausted before every path was compared
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from typing import List, Optional

from . import symexpr as sx
from .diffcheck import format_report, run_pipeline
from .frontend import (
    FrontendError, ParseError, ValidationError, elide_loops, format_model, parse_expr,
    parse_model, validate_model,
)
from .frontend.ast import Binary, Cast, Const, Ite, Name, Unary
from .frontend.parser import SourceUnit
from .harness import ConfigError, IncompatibleModels, build_harness, load_config
from .interpreter import ExploreBudget, init_env, request_args, run_handler
from .oracle import compare_with_report, oracle_check
from .smtlib import SmtParseError, read_script
from .solver import Sat, SolverConfig, Unsat, solve

EXIT_OK, EXIT_DIFF, EXIT_POSSIBLE, EXIT_USAGE, EXIT_INTERNAL, EXIT_TRUNCATED = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _read_model(path: str, loop_bound: Optional[int] = None):
    try:
        src = SourceUnit.from_file(path)
    except OSError:
        raise UsageError(f"cannot read {path}") from None
    vm = validate_model(parse_model(src))
    return vm if loop_bound is None else elide_loops(vm, loop_bound)


# ---------------------------------------------------------------- check


def _effective_config(args) -> dict:
    cfg = copy.deepcopy(load_config(args.config)) if args.config else {}
    if args.solver:
        cfg.setdefault("solver", {})["backend"] = args.solver
    if args.max_paths is not None:
        cfg.setdefault("budget", {})["max_paths"] = args.max_paths
    if args.loop_bound is not None:
        cfg.setdefault("budget", {})["loop_bound"] = args.loop_bound
    return load_config(cfg)


def cmd_check(args) -> int:
    cfg = _effective_config(args)
    bound = cfg.get("budget", {}).get("loop_bound", ExploreBudget().default_loop_bound)
    old = _read_model(args.old, bound)
    new = _read_model(args.new, bound)
    plan = build_harness(old, new, cfg)
    report = run_pipeline(plan)
    if args.seed_report:
        report.oracle = compare_with_report(oracle_check(plan), report)
    doc = report.to_json(timing=args.timing)
    text = json.dumps(doc, indent=2) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
    else:
        if args.json:
            try:
                with open(args.json, "w", encoding="utf-8") as fh:
                    fh.write(text)
            except OSError:
                raise UsageError(f"cannot write {args.json}") from None
        sys.stdout.write(format_report(report))
        if report.oracle is not None:
            sys.stdout.write(_format_oracle(report.oracle))
    return report.exit_code()


def _format_oracle(entries) -> str:
    lines = ["", "exhaustive concrete cross-check:"]
    for e in entries:
        if not e["enumerated"]:
            lines.append(f"  {e['scenario']}: skipped ({e['reason']})")
            continue
        verdict = "agrees" if e["agrees"] else "DISAGREES"
        lines.append(f"  {e['scenario']}: {verdict} over {e['inputs']} inputs "
                     f"({e['input_bits']:g} bits), {len(e['keys'])} keys")
        for k in e["missed_by_pipeline"]:
            lines.append(f"    missed by pipeline: {k}")
        for k in e["not_found_by_oracle"]:
            lines.append(f"    not found by oracle: {k}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- explore


def cmd_explore(args) -> int:
    m = _read_model(args.model)
    names = [h.name for h in m.handlers] if args.handler is None else [args.handler]
    if args.handler is not None and m.handler(args.handler) is None:
        raise UsageError(f"model {m.name} has no handler {args.handler}")
    budget = ExploreBudget(
        max_paths=args.max_paths or ExploreBudget().max_paths,
        default_loop_bound=args.loop_bound or ExploreBudget().default_loop_bound,
    )
    solver = SolverConfig(backend=args.solver or "builtin")
    truncated = False
    env = init_env(m)
    for name in names:
        h = m.handler(name)
        result = run_handler(m, name, env, request_args(h), budget, solver)
        print(f"handler {name} ({h.kind}): {len(result)} path(s)")
        for p in result:
            print(f"  path {p.path_id} [{p.status}{', unknown' if p.unknown else ''}]")
            print(f"    pc: {p.pc}")
            for (f, i), t in p.final_state.items():
                if t is not env.state[(f, i)]:
                    fd = m.field(f)
                    loc = f if fd.length is None else f"{f}[{i}]"
                    print(f"    {loc} := {sx.to_str(t)}")
            if p.return_term is not None:
                print(f"    return {sx.to_str(p.return_term)}")
            for ev in p.effects:
                print(f"    effect {ev.sequence_index}: {ev}")
            if p.detail:
                print(f"    note: {p.detail}")
        if result.truncated:
            truncated = True
            print(f"  truncated: {result.reason}")
    return EXIT_TRUNCATED if truncated else EXIT_OK


# ---------------------------------------------------------------- parse


def cmd_parse(args) -> int:
    m = _read_model(args.model)
    sys.stdout.write(format_model(m.model))
    return EXIT_OK


# ---------------------------------------------------------------- solve-debug


def _natural(e, decls) -> Optional[int]:
    if isinstance(e, Const):
        return None
    if isinstance(e, Name):
        if e.ident not in decls:
            raise UsageError(f"variable {e.ident} needs a width, e.g. {e.ident}:u8")
        return decls[e.ident]
    if isinstance(e, Unary):
        return _natural(e.arg, decls)
    if isinstance(e, Binary):
        if e.op in ("eq", "ne", "ult", "ule"):
            return 1
        w = _natural(e.lhs, decls)
        return w if w is not None else _natural(e.rhs, decls)
    if isinstance(e, Cast):
        return e.width
    if isinstance(e, Ite):
        w = _natural(e.then, decls)
        return w if w is not None else _natural(e.other, decls)
    raise UsageError("only pure bitvector expressions can be solved")


def expr_to_term(e, decls, expected: Optional[int] = None) -> sx.Term:
    """Build a Term from a parsed DSL expression over declared variables."""
    w = _natural(e, decls)
    w = expected if w is None else w
    if w is None:
        raise UsageError("cannot infer the width of a literal-only expression")
    if expected is not None and w != expected:
        raise UsageError(f"width mismatch: u{w} where u{expected} is needed")
    if isinstance(e, Const):
        if e.value >> w:
            raise UsageError(f"literal {e.value} does not fit in u{w}")
        return sx.mk_const(w, e.value)
    if isinstance(e, Name):
        return sx.mk_var(e.ident, w)
    if isinstance(e, Unary):
        return sx.mk_unary(e.op, expr_to_term(e.arg, decls, w))
    if isinstance(e, Binary):
        if e.op in ("eq", "ne", "ult", "ule"):
            ow = _natural(e.lhs, decls) or _natural(e.rhs, decls)
            if ow is None:
                raise UsageError("cannot infer the width of a literal-only comparison")
            a, b = expr_to_term(e.lhs, decls, ow), expr_to_term(e.rhs, decls, ow)
            return sx.mk_ne(a, b) if e.op == "ne" else sx.mk_binary(e.op, a, b)
        return sx.mk_binary(e.op, expr_to_term(e.lhs, decls, w), expr_to_term(e.rhs, decls, w))
    if isinstance(e, Cast):
        inner = _natural(e.arg, decls) or e.width
        a = expr_to_term(e.arg, decls, inner)
        try:
            return sx.mk_zext(a, e.width) if e.op == "zext" else sx.mk_trunc(a, e.width)
        except sx.TermError as exc:
            raise UsageError(f"width mismatch: {exc}") from None
    if isinstance(e, Ite):
        return sx.mk_ite(expr_to_term(e.cond, decls, 1), expr_to_term(e.then, decls, w),
                         expr_to_term(e.other, decls, w))
    raise UsageError("only pure bitvector expressions can be solved")


def cmd_solve_debug(args) -> int:
    text = " ".join(args.expr)
    if text.lstrip().startswith("("):
        try:
            pc = read_script(text)
        except SmtParseError as exc:
            raise UsageError(f"malformed SMT-LIB input: {exc}") from None
        variables = pc.free_vars()
    else:
        expr, decls = parse_expr(text)
        t = expr_to_term(expr, decls)
        if t.width != 1:
            raise UsageError(f"expression has width {t.width}; solve-debug needs a condition")
        pc = sx.pc_and(sx.TRUE, t)
        variables = [sx.mk_var(n, w) for n, w in decls.items()]
    solver = SolverConfig(backend=args.solver or "builtin")
    result = solve(pc, solver, variables)
    if isinstance(result, Sat):
        shown = " ".join(f"{k}={v}" for k, v in sorted(result.assignment.items()))
        print(f"sat {shown}".rstrip())
    elif isinstance(result, Unsat):
        print("unsat")
    else:
        print(f"unknown ({result.reason})")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vpdiff", description="Differential symbolic regression testing of device models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="compare two versions of a model")
    c.add_argument("old")
    c.add_argument("new")
    c.add_argument("--config", help="JSON configuration document")
    c.add_argument("--json", metavar="OUT", help="write the JSON report to OUT ('-' for stdout)")
    c.add_argument("--solver", choices=("builtin", "external"))
    c.add_argument("--max-paths", type=int)
    c.add_argument("--loop-bound", type=int)
    c.add_argument("--seed-report", action="store_true",
                   help="cross-check every small scenario against exhaustive concrete runs")
    c.add_argument("--timing", action="store_true",
                   help="include wall time and memory in the JSON report (makes it run-dependent)")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("explore", help="list the symbolic paths of one model")
    e.add_argument("model")
    e.add_argument("--handler")
    e.add_argument("--solver", choices=("builtin", "external"))
    e.add_argument("--max-paths", type=int)
    e.add_argument("--loop-bound", type=int)
    e.set_defaults(func=cmd_explore)

    r = sub.add_parser("parse", help="validate a model and print it back")
    r.add_argument("model")
    r.set_defaults(func=cmd_parse)

    s = sub.add_parser("solve-debug", help="decide a condition (DSL expression or SMT-LIB script)")
    s.add_argument("expr", nargs="+")
    s.add_argument("--solver", choices=("builtin", "external"))
    s.set_defaults(func=cmd_solve_debug)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        for opt in ("max_paths", "loop_bound"):
            v = getattr(args, opt, None)
            if v is not None and v < 1:
                raise UsageError(f"--{opt.replace('_', '-')} must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"vpdiff: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, FrontendError, ConfigError, IncompatibleModels) as exc:
        print(f"vpdiff: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # last resort: one line, distinct exit code
        print(f"vpdiff: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
