import pytest
from helpers import plan_for

from vpdiff.diffcheck import run_pipeline
from vpdiff.frontend import SourceUnit, parse_model, validate_model
from vpdiff.harness import build_harness
from vpdiff.oracle import compare_with_report, domain_bits, exhaustive_keys, input_domain, oracle_check

SMALL_PAIRS = [("minidev_v1", "minidev_v2"), ("uart_v1", "uart_v2"), ("gpio_v1", "gpio_v2")]


def model(body, state="reg ctrl : u8; reg spare : u8; reg log : u8;"):
    src = (f"model T {{ state {{ {state} }} handler mmio_write(offset: u1, value: u8) {{ {body} }} }}")
    return validate_model(parse_model(SourceUnit("t.dm", src)))


def test_domain_trims_unmentioned_and_write_only_fields():
    plan = build_harness(model("ctrl = value; log = 1;"), model("ctrl = value | 1; log = 1;"))
    dom = dict(input_domain(plan, plan.scenario("mmio_write")))
    assert "state.spare.0" not in dom
    assert list(dom["state.log.0"]) == [0, 1]
    assert list(dom["state.ctrl.0"]) == [0, 1]
    assert len(dom["req.mmio_write.value"]) == 256
    assert domain_bits(input_domain(plan, plan.scenario("mmio_write"))) == pytest.approx(11.0)


def test_read_fields_range_over_every_value():
    plan = build_harness(model("ctrl = ctrl + value;"), model("ctrl = ctrl ^ value;"))
    dom = dict(input_domain(plan, plan.scenario("mmio_write")))
    assert len(dom["state.ctrl.0"]) == 256


def test_oracle_finds_the_or_one_difference():
    plan = build_harness(model("ctrl = value;"), model("ctrl = value | 1;"))
    result = exhaustive_keys(plan, plan.scenario("mmio_write"))
    # ctrl is write-only {0,1}, offset u1, value u8
    assert result.enumerated and result.inputs == 2 * 2 * 256
    assert result.keys == {"mmio_write:STATE:ctrl"}


def test_oracle_skips_large_and_dma_scenarios():
    plan = plan_for("e1000_v1", "e1000_v2")
    results = {r.scenario: r for r in oracle_check(plan)}
    assert not results["mmio_write"].enumerated and "exceed" in results["mmio_write"].reason
    assert not results["receive"].enumerated and "DMA" in results["receive"].reason


def test_env_input_length_stays_within_the_buffer():
    plan = plan_for("uart_v1", "uart_v2")
    dom = dict(input_domain(plan, plan.scenario("receive")))
    assert list(dom["req.receive.len"]) == [0, 1]


@pytest.mark.parametrize("old_name, new_name", SMALL_PAIRS)
def test_pipeline_matches_oracle(old_name, new_name):
    plan = plan_for(old_name, new_name)
    report = run_pipeline(plan)
    entries = compare_with_report(oracle_check(plan), report)
    assert entries and all(e["enumerated"] for e in entries)
    for e in entries:
        assert e["agrees"], e
        assert e["input_bits"] <= 16


def test_disagreement_is_reported():
    plan = build_harness(model("ctrl = value;"), model("ctrl = value | 1;"))
    report = run_pipeline(plan)
    report.unique_diffs = []
    (entry,) = compare_with_report(oracle_check(plan), report)
    assert not entry["agrees"]
    assert entry["missed_by_pipeline"] == ["mmio_write:STATE:ctrl"]
