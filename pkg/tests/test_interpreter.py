import pytest
from helpers import (
    bundled_models, concrete_call, covering, domain, load, relevant_vars, symbolic_outcome,
)

from vpdiff import symexpr as sx
from vpdiff.frontend import SourceUnit, elide_loops, parse_model, validate_model
from vpdiff.interpreter import (
    BOUND_EXHAUSTED, COMPLETE, ERROR, ExploreBudget, init_env, request_args, run_concrete,
    run_guided, run_handler,
)
from vpdiff.symexpr import MissingAssignment


def build(state, handler, body):
    src = f"model T {{ state {{ {state} }} {handler} {{ {body} }} }}"
    return validate_model(parse_model(SourceUnit("t.dm", src)))


WRITE = "handler mmio_write(offset: u8, value: u8)"


def explore(m, name="mmio_write", **kw):
    h = m.handler(name)
    return run_handler(m, name, init_env(m), request_args(h), **kw)


# ------------------------------------------------------------ symbolic examples


def test_offset_test_forks_two_paths():
    m = build("reg r : u8;", WRITE, "if (offset == 0) { r = value; } else { r = 0; }")
    paths = explore(m)
    assert len(paths) == 2
    offset = sx.mk_var("req.mmio_write.offset", 8)
    value = sx.mk_var("req.mmio_write.value", 8)
    first, second = paths
    assert first.pc.conjuncts == (sx.mk_eq(offset, sx.mk_const(8, 0)),)
    assert first.final_state[("r", 0)] is value
    assert second.final_state[("r", 0)] is sx.mk_const(8, 0)
    assert [p.path_id for p in paths] == [0, 1]


def test_straight_line_handler_has_one_path():
    m = build("reg r : u8;", WRITE, "r = r + 1;")
    (p,) = explore(m)
    assert p.pc.is_true
    assert p.status == COMPLETE
    assert p.final_state[("r", 0)] is sx.mk_add(sx.mk_var("state.r.0", 8), sx.mk_const(8, 1))


def test_chained_tests_partition_the_offsets():
    m = build("reg a : u8; reg b : u8; reg c : u8;", WRITE,
              "if (offset == 0) { a = value; } else { if (offset == 4) { b = value; } "
              "else { if (offset == 8) { c = value; } } }")
    paths = explore(m)
    assert len(paths) == 4
    for off in range(256):
        env = {"req.mmio_write.offset": off, "req.mmio_write.value": 0}
        assert len(covering(paths, env)) == 1


def test_infeasible_branch_is_pruned():
    m = build("reg r : u8;", WRITE, "if (offset == 0) { if (offset == 1) { r = 1; } } r = 2;")
    assert len(explore(m)) == 2


def test_effects_are_recorded_in_order():
    m = build("reg r : u8;", WRITE, "fire_interrupt(1); send_output(value); dma_write(zext<64>(offset), zext<64>(value));")
    (p,) = explore(m)
    assert [e.kind for e in p.effects] == ["interrupt", "output", "dma_write"]
    assert [e.sequence_index for e in p.effects] == [0, 1, 2]


def test_dma_reads_become_named_fresh_values():
    m = build("reg r : u64;", WRITE, "r = dma_read(zext<64>(offset)) + dma_read(8);")
    (p,) = explore(m)
    assert p.final_state[("r", 0)].free_vars() == {
        sx.mk_var("dma.mmio_write.0.0", 64), sx.mk_var("dma.mmio_write.1.0", 64)}
    assert [e.kind for e in p.effects] == ["dma_read", "dma_read"]


def test_out_of_range_index_forks_an_error_path_first():
    m = build("reg arr[4] : u8;", WRITE, "arr[value] = 1;")
    paths = explore(m)
    assert [p.status for p in paths] == [ERROR, COMPLETE]
    err, ok = paths
    value = {"req.mmio_write.value": 0}
    assert ok.pc.holds(value) and not err.pc.holds(value)
    assert err.pc.holds({"req.mmio_write.value": 4})
    assert "arr" in err.detail


def test_loop_bound_exhaustion_is_reported():
    m = build("reg r : u8;", WRITE, "i = zext<8>(0); while (i < value) { i = i + 1; } r = i;")
    paths = explore(m, budget=ExploreBudget(default_loop_bound=2))
    statuses = [p.status for p in paths]
    assert statuses.count(BOUND_EXHAUSTED) == 1
    assert statuses.count(COMPLETE) == 3
    exhausted = next(p for p in paths if p.status == BOUND_EXHAUSTED)
    assert exhausted.pc.holds({"req.mmio_write.value": 3})
    assert "bound 2" in exhausted.detail


def test_max_paths_truncates():
    m = build("reg a : u8;", WRITE,
              "if (offset == 0) { a = 1; } if (offset == 1) { a = 2; } if (offset == 2) { a = 3; }")
    full = explore(m)
    cut = explore(m, budget=ExploreBudget(max_paths=2))
    assert len(full) == 4 and not full.truncated
    assert len(cut) == 2 and cut.truncated
    assert "max_paths" in cut.reason
    assert [p.pc for p in cut] == [p.pc for p in full][:2]


def test_max_steps_truncates():
    m = build("reg a : u8;", WRITE, "a = 1; a = 2; a = 3; a = 4;")
    r = explore(m, budget=ExploreBudget(max_steps_per_path=2))
    assert r.truncated and len(r) == 0


def test_assumption_restricts_exploration():
    m = build("reg r : u8;", WRITE, "if (offset == 0) { r = 1; } else { r = 2; }")
    offset = sx.mk_var("req.mmio_write.offset", 8)
    assume = sx.pc_and(sx.TRUE, sx.mk_ult(sx.mk_const(8, 3), offset))
    paths = explore(m, assume=assume)
    assert len(paths) == 1 and paths[0].final_state[("r", 0)].value == 2


def test_arguments_are_checked():
    m = build("reg r : u8;", WRITE, "r = value;")
    with pytest.raises(ValueError):
        run_handler(m, "mmio_write", init_env(m), [sx.mk_var("x", 8)])
    with pytest.raises(KeyError):
        run_handler(m, "nope", init_env(m), [])


def test_exploration_is_deterministic():
    m = load("e1000_v2")
    for h in m.handlers:
        a = explore(m, h.name)
        b = explore(m, h.name)
        assert [(p.path_id, p.pc, p.status, tuple(p.final_state.items())) for p in a] == \
               [(p.path_id, p.pc, p.status, tuple(p.final_state.items())) for p in b]


# ------------------------------------------------------------ shared naming


def test_versions_share_state_and_request_vars():
    old, new = load("minidev_v1"), load("minidev_v2")
    assert init_env(old).state == init_env(new).state
    assert init_env(old).state[("enable", 0)] is sx.mk_var("state.enable.0", 1)
    assert request_args(old.handler("mmio_write")) == request_args(new.handler("mmio_write"))


def test_array_elements_get_one_var_each():
    env = init_env(load("gpio_v1"))
    assert [env.state[("pin", i)].name for i in range(4)] == [f"state.pin.{i}" for i in range(4)]


# ------------------------------------------------------------ guided exploration


def test_guided_run_keeps_only_compatible_paths():
    new = build("reg r : u8;", WRITE, "if (offset == 0) { r = 1; } else { r = 2; }")
    old = build("reg r : u8;", WRITE, "if (offset < 4) { r = 1; } else { r = 3; }")
    args = request_args(new.handler("mmio_write"))
    guide = explore(new)[0].pc  # offset == 0
    guided = run_guided(old, "mmio_write", init_env(old), args, guide)
    assert len(guided) == 1
    offset = sx.mk_var("req.mmio_write.offset", 8)
    assert guided[0].pc.conjuncts == (sx.mk_ult(offset, sx.mk_const(8, 4)),)


def test_guided_run_with_false_guide_is_empty():
    m = build("reg r : u8;", WRITE, "r = value;")
    assert len(run_guided(m, "mmio_write", init_env(m), request_args(m.handler("mmio_write")),
                          sx.FALSE)) == 0


def test_guided_run_still_forks_on_unconstrained_branches():
    new = build("reg r : u8;", WRITE, "if (offset == 0) { r = 1; }")
    old = build("reg r : u8;", WRITE, "if (value == 0) { r = 1; }")
    guide = explore(new)[0].pc
    guided = run_guided(old, "mmio_write", init_env(old), request_args(old.handler("mmio_write")),
                        guide)
    assert len(guided) == 2


@pytest.mark.parametrize("pair", [("minidev_v1", "minidev_v2"), ("gpio_v1", "gpio_v2")])
def test_guided_paths_cover_each_new_path_exactly(pair):
    old, new = load(pair[0]), load(pair[1])
    for h in new.handlers:
        args = request_args(h)
        new_paths = run_handler(new, h.name, init_env(new), args)
        for p in new_paths:
            guided = run_guided(old, h.name, init_env(old), args, p.pc)
            env = init_env(old)
            variables = relevant_vars(list(new_paths) + list(guided), env)
            inputs, _ = domain(variables)
            for a in inputs:
                if p.pc.holds(a):
                    assert len(covering(guided, a)) == 1


# ------------------------------------------------------------ concrete execution


def test_concrete_run_example():
    m = build("reg r : u8; reg arr[2] : u8;", WRITE,
              "if (offset == 0) { r = value; fire_interrupt(2); } else { arr[value] = 7; }")
    out = run_concrete(m, "mmio_write", {"state.r.0": 1, "state.arr.0": 0, "state.arr.1": 0}, [0, 9])
    assert out.state[("r", 0)] == 9 and out.effects == (("interrupt", 2),)
    assert out.status == COMPLETE
    bad = run_concrete(m, "mmio_write", {"state.r.0": 1, "state.arr.0": 0, "state.arr.1": 0}, [1, 5])
    assert bad.status == ERROR and "arr[5]" in bad.detail
    assert bad.state[("arr", 0)] == 0


def test_concrete_run_needs_a_total_state():
    m = build("reg r : u8; reg s : u8;", WRITE, "r = value;")
    with pytest.raises(MissingAssignment):
        run_concrete(m, "mmio_write", {"state.r.0": 0}, [0, 0])


def test_concrete_dma_oracle_and_return():
    m = build("reg r : u64;", "handler mmio_read(offset: u8) -> u64",
              "return dma_read(zext<64>(offset)) + dma_read(zext<64>(offset));")
    out = run_concrete(m, "mmio_read", {"state.r.0": 0}, [3], {(0, 0): 10, (1, 0): 5})
    assert out.return_value == 15
    assert out.effects == (("dma_read", 3, 10), ("dma_read", 3, 5))


def test_concrete_loop_exhaustion():
    m = build("reg r : u8;", WRITE, "i = zext<8>(0); while (i < value) { i = i + 1; } r = i;")
    assert run_concrete(m, "mmio_write", {"state.r.0": 0}, [0, 2], loop_bound=2).state[("r", 0)] == 2
    assert run_concrete(m, "mmio_write", {"state.r.0": 0}, [0, 3], loop_bound=2).status == BOUND_EXHAUSTED


# ------------------------------------------------------------ symbolic vs concrete


def _agreement(m, name):
    h = m.handler(name)
    env = init_env(m)
    paths = run_handler(m, name, env, request_args(h))
    assert not paths.truncated
    inputs, exhaustive = domain(relevant_vars(paths, env), samples=1500, seed=hash(name) & 0xffff)
    for a in inputs:
        hits = covering(paths, a)
        assert len(hits) == 1, f"{len(hits)} paths cover {a}"
        state, args, dma = concrete_call(m, h, a)
        full = dict(a)
        full.update({k: v for k, v in state.items()})
        out = run_concrete(m, name, state, args, dma)
        got_state, got_ret, got_effects, got_status = symbolic_outcome(hits[0], full)
        assert got_status == out.status
        assert got_state == dict(out.state)
        assert got_ret == out.return_value
        assert got_effects == out.effects
    return exhaustive


@pytest.mark.parametrize("name", bundled_models())
def test_symbolic_paths_agree_with_concrete_runs(name):
    m = load(name)
    for h in m.handlers:
        _agreement(m, h.name)


def test_agreement_with_loops_and_errors():
    m = elide_loops(build("reg arr[3] : u8; reg n : u8;", WRITE,
                          "i = zext<8>(0); while (i < offset) { arr[i] = value; i = i + 1; } n = i;"), 4)
    assert _agreement(m, "mmio_write")
