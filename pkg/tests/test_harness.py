import json

import pytest
from helpers import PAIRS, load

from vpdiff import symexpr as sx
from vpdiff.frontend import SourceUnit, parse_model, validate_model
from vpdiff.harness import (
    BOTH, NEW_ONLY, OLD_ONLY, ConfigError, IncompatibleModels, build_harness, load_config,
)
from vpdiff.interpreter import init_env

RW = ("handler mmio_write(offset: u8, value: u8) { ctrl = value; } "
      "handler mmio_read(offset: u8) -> u8 { return ctrl; }")


def model(fields="reg ctrl : u8; reg status : u8;", handlers=RW):
    return validate_model(parse_model(SourceUnit("t.dm", f"model T {{ state {{ {fields} }} {handlers} }}")))


def test_same_handlers_give_one_scenario_each():
    plan = build_harness(model(), model())
    assert [s.handler_name for s in plan.scenarios] == ["mmio_write", "mmio_read"]
    assert all(s.present_in == BOTH and s.executable for s in plan.scenarios)
    assert plan.structural == ()


def test_handler_added_in_new_is_reported_and_skipped():
    extra = RW + " handler receive(data: u8[2], len: u8) { status = data[0]; }"
    plan = build_harness(model(), model(handlers=extra))
    assert len(plan.scenarios) == 3
    rx = plan.scenario("receive")
    assert rx.present_in == NEW_ONLY and not rx.executable
    assert [(n.kind, n.subject) for n in plan.structural] == [("handler-only-in-new", "receive")]


def test_handler_removed_in_new_is_reported():
    only_write = "handler mmio_write(offset: u8, value: u8) { ctrl = value; }"
    plan = build_harness(model(), model(handlers=only_write))
    assert plan.scenario("mmio_read").present_in == OLD_ONLY
    assert plan.structural[0].kind == "handler-only-in-old"


def test_excluded_field_is_not_compared():
    plan = build_harness(model(), model(), {"compare": {"exclude": ["status"]}})
    assert plan.compare.state_fields == ("ctrl",)


def test_field_selection_and_switches():
    plan = build_harness(model(), model(), {"compare": {"fields": ["status"], "return": False,
                                                        "effects": False}})
    assert plan.compare.state_fields == ("status",)
    assert not plan.compare.compare_return and not plan.compare.compare_effects


def test_handler_include_and_exclude():
    plan = build_harness(model(), model(), {"handlers": {"include": ["mmio_read"]}})
    assert [s.handler_name for s in plan.scenarios] == ["mmio_read"]
    plan = build_harness(model(), model(), {"handlers": {"exclude": ["mmio_read"]}})
    assert [s.handler_name for s in plan.scenarios] == ["mmio_write"]


@pytest.mark.parametrize("cfg, message", [
    ({"handlers": {"include": ["nosuch"]}}, "unknown handler"),
    ({"compare": {"exclude": ["nosuch"]}}, "unknown field"),
    ({"compare": {"fields": ["nosuch"]}}, "unknown field"),
    ({"handlers": {"exclude": ["mmio_read", "mmio_write"]}}, "no handler left"),
    ({"bogus": {}}, "unknown config section"),
    ({"budget": {"max_paths": 0}}, "positive integer"),
    ({"budget": {"depth": 3}}, "unknown key"),
    ({"solver": {"backend": "magic"}}, "builtin or external"),
    ({"compare": {"return": "yes"}}, "true or false"),
])
def test_config_errors(cfg, message):
    with pytest.raises(ConfigError, match=message):
        build_harness(model(), model(), cfg)


def test_config_from_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"budget": {"max_paths": 7, "loop_bound": 2},
                                "solver": {"budget_bits": 20}}))
    plan = build_harness(model(), model(), load_config(str(path)))
    assert plan.budget.max_paths == 7 and plan.budget.default_loop_bound == 2
    assert plan.solver.builtin_budget_bits == 20
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(path))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))


def test_no_shared_field_is_incompatible():
    with pytest.raises(IncompatibleModels):
        build_harness(model("reg a : u8;", "handler mmio_write(offset: u8, value: u8) { a = value; }"),
                      model("reg b : u8;", "handler mmio_write(offset: u8, value: u8) { b = value; }"))


def test_shape_changes_are_structural():
    plan = build_harness(model("reg ctrl : u8; reg status : u8; reg gone : u8;"),
                         model("reg ctrl : u8; reg status : u16; reg fresh : u8;"))
    kinds = {(n.kind, n.subject) for n in plan.structural}
    assert kinds == {("field-shape-mismatch", "status"), ("field-only-in-new", "fresh"),
                     ("field-only-in-old", "gone")}
    assert plan.compare.state_fields == ("ctrl",)
    assert plan.private_fields == {"status"}
    assert plan.state_var_name("old", "status", 0) != plan.state_var_name("new", "status", 0)
    assert plan.state_var_name("old", "ctrl", 0) == plan.state_var_name("new", "ctrl", 0)


def test_signature_change_makes_scenario_incompatible():
    other = RW.replace("mmio_write(offset: u8, value: u8) { ctrl = value; }",
                       "mmio_write(offset: u8, value: u16) { ctrl = trunc<8>(value); }")
    plan = build_harness(model(), model(handlers=other))
    s = plan.scenario("mmio_write")
    assert s.present_in == BOTH and not s.compatible and not s.executable
    assert plan.structural[0].kind == "handler-signature-mismatch"


def test_env_input_length_is_bounded_by_the_buffer():
    plan = build_harness(load("uart_v1"), load("uart_v2"))
    rx = plan.scenario("receive")
    (data, length) = rx.args
    assert len(data) == 1
    assert rx.assume.conjuncts == (sx.mk_ule(length, sx.mk_const(8, 1)),)
    assert rx.request_vars == (("req.receive.data.0", 8), ("req.receive.len", 8))


@pytest.mark.parametrize("old_name, new_name", PAIRS)
def test_variable_sharing_contract(old_name, new_name):
    plan = build_harness(load(old_name), load(new_name))
    env_new, env_old = init_env(plan.new), init_env(plan.old)
    for f in plan.compare.state_fields:
        fd = plan.new.field(f)
        for i in range(fd.count):
            assert env_new.state[(f, i)] is env_old.state[(f, i)]
    again = build_harness(load(old_name), load(new_name))
    for a, b in zip(plan.scenarios, again.scenarios):
        assert a.args == b.args
        for x, y in zip(a.args, b.args):
            assert (x is y) or all(p is q for p, q in zip(x, y))


@pytest.mark.parametrize("old_name, new_name", PAIRS)
def test_build_is_deterministic(old_name, new_name):
    a = build_harness(load(old_name), load(new_name))
    b = build_harness(load(old_name), load(new_name))
    assert a == b
