import copy
import pickle
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpdiff import symexpr as sx
from vpdiff.symexpr import FALSE, TRUE, mk_const, mk_var, pc_and

WIDTHS = (1, 8, 16, 32, 64)


def x8():
    return mk_var("x8", 8)


# ------------------------------------------------------------ constructor examples


def test_constant_addition_wraps():
    assert mk_const(8, 200) is not None
    assert sx.mk_add(mk_const(8, 200), mk_const(8, 100)) is mk_const(8, 44)


def test_eq_of_identical_operands_is_true():
    assert sx.mk_eq(x8(), x8()) is mk_const(1, 1)


def test_and_with_zero_annihilates():
    assert sx.mk_and(x8(), mk_const(8, 0)) is mk_const(8, 0)


@pytest.mark.parametrize("build, expected", [
    (lambda x: sx.mk_xor(x, x), lambda x: mk_const(8, 0)),
    (lambda x: sx.mk_and(x, x), lambda x: x),
    (lambda x: sx.mk_or(x, mk_const(8, 0)), lambda x: x),
    (lambda x: sx.mk_add(x, mk_const(8, 0)), lambda x: x),
    (lambda x: sx.mk_mul(x, mk_const(8, 1)), lambda x: x),
    (lambda x: sx.mk_mul(x, mk_const(8, 0)), lambda x: mk_const(8, 0)),
    (lambda x: sx.mk_not(sx.mk_not(x)), lambda x: x),
    (lambda x: sx.mk_ite(mk_const(1, 1), x, mk_const(8, 3)), lambda x: x),
    (lambda x: sx.mk_ite(mk_const(1, 0), mk_const(8, 3), x), lambda x: x),
    (lambda x: sx.mk_ite(mk_var("c", 1), x, x), lambda x: x),
    (lambda x: sx.mk_zext(sx.mk_zext(x, 16), 32), lambda x: sx.mk_zext(x, 32)),
])
def test_listed_simplifications(build, expected):
    x = x8()
    assert build(x) is expected(x)


def test_constants_are_reduced_modulo_width():
    assert mk_const(8, 256 + 7).value == 7
    assert mk_const(1, 3).value == 1


def test_comparisons_have_width_one():
    y = mk_var("y8", 8)
    for t in (sx.mk_eq(x8(), y), sx.mk_ult(x8(), y), sx.mk_ule(x8(), y)):
        assert t.width == 1


def test_width_mismatch_is_a_contract_violation():
    with pytest.raises(sx.TermError):
        sx.mk_add(x8(), mk_var("y16", 16))
    with pytest.raises(sx.TermError):
        sx.mk_ite(x8(), x8(), x8())


def test_variable_identity_includes_width():
    assert mk_var("v", 8) is mk_var("v", 8)
    assert mk_var("v", 8) is not mk_var("v", 16)


def test_hash_consing_returns_identical_nodes():
    y = mk_var("y8", 8)
    a = sx.mk_add(x8(), sx.mk_mul(y, mk_const(8, 3)))
    b = sx.mk_add(x8(), sx.mk_mul(y, mk_const(8, 3)))
    assert a is b
    assert copy.deepcopy(a) is a


def test_terms_refuse_pickling():
    with pytest.raises(TypeError):
        pickle.dumps(x8())


# ------------------------------------------------------------ evaluation


def test_eval_overshift_is_zero():
    assert sx.eval_term(sx.mk_lshr(mk_const(8, 1), mk_const(8, 9)), {}) == 0


def test_eval_wraparound():
    assert sx.eval_term(sx.mk_add(x8(), mk_const(8, 1)), {"x8": 255}) == 0


def test_eval_ite():
    t = sx.mk_ite(sx.mk_eq(x8(), mk_const(8, 3)), mk_const(8, 10), mk_const(8, 20))
    assert sx.eval_term(t, {"x8": 3}) == 10
    assert sx.eval_term(t, {"x8": 4}) == 20


def test_eval_requires_total_assignment():
    with pytest.raises(sx.MissingAssignment):
        sx.eval_term(sx.mk_add(x8(), mk_var("y8", 8)), {"x8": 1})


# ------------------------------------------------------------ path conditions


def test_pc_and_true_constant_is_identity():
    assert pc_and(TRUE, mk_const(1, 1)) is TRUE


def test_pc_and_false_constant_absorbs():
    p = pc_and(TRUE, mk_var("a", 1))
    assert pc_and(p, mk_const(1, 0)) == FALSE
    assert pc_and(FALSE, mk_var("a", 1)) == FALSE


def test_pc_and_dedups():
    a = mk_var("a", 1)
    p = pc_and(TRUE, a)
    assert pc_and(p, a) == p
    assert len(pc_and(p, a)) == 1


def test_pc_and_detects_complement():
    a = sx.mk_eq(x8(), mk_const(8, 3))
    assert pc_and(pc_and(TRUE, a), sx.mk_not(a)) == FALSE


def test_pc_never_stores_true():
    p = pc_and(pc_and(TRUE, mk_var("a", 1)), mk_const(1, 1))
    assert all(not c.is_const for c in p.conjuncts)


# ------------------------------------------------------------ simplifier soundness
# Reference semantics written out independently of the library.


def _ref(op, width, vals):
    m = (1 << width) - 1
    a = vals[0]
    b = vals[1] if len(vals) > 1 else None
    return {
        "add": lambda: (a + b) % (m + 1),
        "sub": lambda: (a - b) % (m + 1),
        "mul": lambda: (a * b) % (m + 1),
        "and": lambda: a & b,
        "or": lambda: a | b,
        "xor": lambda: a ^ b,
        "shl": lambda: (a << b) % (m + 1) if b < width else 0,
        "lshr": lambda: a >> b if b < width else 0,
        "not": lambda: m - a,
        "neg": lambda: (m + 1 - a) % (m + 1),
        "eq": lambda: 1 if a == b else 0,
        "ult": lambda: 1 if a < b else 0,
        "ule": lambda: 1 if a <= b else 0,
    }[op]()


BINARY = ["add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "eq", "ult", "ule"]
UNARY = ["not", "neg"]


def _random_operand(rng, width, names):
    """Small random term; biased towards constants and repeats to trigger rewrites."""
    roll = rng.random()
    if roll < 0.3:
        special = [0, 1, (1 << width) - 1, width, rng.getrandbits(width)]
        return mk_const(width, rng.choice(special))
    if roll < 0.7:
        return mk_var(rng.choice(names) + f"_{width}", width)
    op = rng.choice(BINARY[:8] + UNARY)
    if op in UNARY:
        return sx.mk_unary(op, _random_operand(rng, width, names))
    return sx.mk_binary(op, _random_operand(rng, width, names), _random_operand(rng, width, names))


def _assignment(rng, terms):
    vs = set()
    for t in terms:
        vs |= t.free_vars()
    out = {}
    for v in vs:
        out[v.name] = rng.choice([0, 1, (1 << v.width) - 1, rng.getrandbits(v.width)])
    return out


CASES_PER_OPERATOR = 10_000


OPERATORS = BINARY + UNARY + ["zext", "trunc", "ite"]


def soundness_mismatches(op, cases=CASES_PER_OPERATOR):
    """Random (term, assignment) cases for ``op`` where the built term disagrees with the reference."""
    rng = random.Random(f"soundness-{op}")
    names = ["a", "b"]
    mismatches = 0
    for _ in range(cases):
        width = rng.choice(WIDTHS)
        if op in BINARY:
            a, b = _random_operand(rng, width, names), _random_operand(rng, width, names)
            if rng.random() < 0.2:
                b = a
            t = sx.mk_binary(op, a, b)
            env = _assignment(rng, [a, b])
            expect = _ref(op, width, (sx.eval_term(a, env), sx.eval_term(b, env)))
        elif op in UNARY:
            a = _random_operand(rng, width, names)
            t = sx.mk_unary(op, a)
            env = _assignment(rng, [a])
            expect = _ref(op, width, (sx.eval_term(a, env),))
        elif op == "zext":
            src = rng.choice(WIDTHS)
            dst = rng.choice([w for w in WIDTHS if w >= src])
            a = _random_operand(rng, src, names)
            if rng.random() < 0.3 and src < 64:
                a = sx.mk_zext(a, rng.choice([w for w in WIDTHS if w >= src]))
                dst = rng.choice([w for w in WIDTHS if w >= a.width])
            t = sx.mk_zext(a, dst)
            env = _assignment(rng, [a])
            expect = sx.eval_term(a, env)
        elif op == "trunc":
            src = rng.choice(WIDTHS)
            dst = rng.choice([w for w in WIDTHS if w <= src])
            a = _random_operand(rng, src, names)
            if rng.random() < 0.3:
                inner = _random_operand(rng, rng.choice([w for w in WIDTHS if w <= src]), names)
                a = sx.mk_zext(inner, src)
            t = sx.mk_trunc(a, dst)
            env = _assignment(rng, [a])
            expect = sx.eval_term(a, env) & ((1 << dst) - 1)
        else:
            c = _random_operand(rng, 1, names)
            a, b = _random_operand(rng, width, names), _random_operand(rng, width, names)
            if rng.random() < 0.2:
                b = a
            t = sx.mk_ite(c, a, b)
            env = _assignment(rng, [c, a, b])
            expect = sx.eval_term(a, env) if sx.eval_term(c, env) else sx.eval_term(b, env)
        got = sx.eval_term(t, env)
        mismatches += got != expect
    return mismatches


@pytest.mark.parametrize("op", OPERATORS)
def test_simplifier_soundness_per_operator(op):
    assert soundness_mismatches(op) == 0


# ------------------------------------------------------------ properties


@st.composite
def terms(draw, width=8, depth=3):
    if depth == 0 or draw(st.booleans()):
        if draw(st.booleans()):
            return mk_const(width, draw(st.integers(0, (1 << width) - 1)))
        return mk_var(draw(st.sampled_from(["p", "q", "r"])) + f"_{width}", width)
    op = draw(st.sampled_from(BINARY[:8] + UNARY + ["ite"]))
    if op in UNARY:
        return sx.mk_unary(op, draw(terms(width, depth - 1)))
    if op == "ite":
        c = sx.mk_eq(draw(terms(width, depth - 1)), draw(terms(width, depth - 1)))
        return sx.mk_ite(c, draw(terms(width, depth - 1)), draw(terms(width, depth - 1)))
    return sx.mk_binary(op, draw(terms(width, depth - 1)), draw(terms(width, depth - 1)))


@settings(max_examples=300, deadline=None)
@given(terms(), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_eval_is_deterministic_and_in_range(t, p, q, r):
    env = {"p_8": p, "q_8": q, "r_8": r}
    v = sx.eval_term(t, env)
    assert 0 <= v < 256
    assert sx.eval_term(t, env) == v


@settings(max_examples=300, deadline=None)
@given(terms(), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_substitution_agrees_with_evaluation(t, p, q, r):
    env = {"p_8": p, "q_8": q, "r_8": r}
    binding = {mk_var(k, 8): mk_const(8, v) for k, v in env.items()}
    folded = sx.substitute(t, binding)
    assert folded.is_const
    assert folded.value == sx.eval_term(t, env)


@settings(max_examples=200, deadline=None)
@given(terms())
def test_rebuilding_a_term_yields_the_same_node(t):
    assert sx.substitute(t, {}) is t


def test_masked_index_is_always_in_range():
    x = x8()
    assert sx.mk_ult(sx.mk_and(x, mk_const(8, 3)), mk_const(8, 4)) is mk_const(1, 1)
    assert sx.mk_ule(sx.mk_lshr(x, mk_const(8, 4)), mk_const(8, 15)) is mk_const(1, 1)
    assert not sx.mk_ult(sx.mk_and(x, mk_const(8, 7)), mk_const(8, 4)).is_const


@settings(max_examples=400, deadline=None)
@given(terms(), st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_upper_bound_is_sound(t, p, q, r):
    assert sx.eval_term(t, {"p_8": p, "q_8": q, "r_8": r}) <= sx.upper_bound(t)
