"""Verification IR parsing, serialization, and validation tests.

Grammar errors raise; semantic problems come back as findings so a caller
can report all of them at once. Mutation tests below each flip exactly one
fact in the known-good fixture and expect exactly one finding.
"""

import json

import pytest

from conftest import FIXTURES, load_design
from vclose.errors import DuplicateSection, FieldError, MissingSection
from vclose.ir import (
    InterfaceRole,
    error_findings,
    load_ir,
    parse_ir,
    serialize_ir,
    validate_ir,
)

IR_PATH = FIXTURES / "ir" / "pwrctrl.ir"
GOLDEN = FIXTURES / "golden" / "pwrctrl_ir.json"


@pytest.fixture(scope="module")
def ir_text():
    return IR_PATH.read_text()


@pytest.fixture(scope="module")
def doc(ir_text):
    return parse_ir(ir_text)


@pytest.fixture(scope="module")
def pwr_model():
    return load_design("pwrctrl_lite")


def test_fixture_matches_golden_json(doc):
    assert doc.to_json_dict() == json.loads(GOLDEN.read_text())


def test_serialize_parse_round_trip(doc):
    assert parse_ir(serialize_ir(doc)) == doc


def test_fixture_contents(doc):
    assert doc.module_name == "pwrctrl_lite"
    assert [i.name for i in doc.interfaces] == ["apb_s"]
    iface = doc.interface("apb_s")
    assert [s.name for s in iface.signals] == [
        "psel", "penable", "pwrite", "paddr",
        "pwdata", "prdata", "pready", "pslverr",
    ]
    assert iface.address_ranges == ((0x00, 0x18),)
    assert [r.name for r in doc.registers] == [
        "ctrl", "status", "irqen", "irqstat", "clkdiv", "wake",
    ]
    assert [c.name for c in doc.timing.clocks] == ["pclk", "refclk"]
    assert doc.timing.clocks[0].period_hint == "10ns"
    assert doc.timing.clocks[1].period_hint is None
    assert [p.id for p in doc.functional_points] == [
        f"FP{n}" for n in range(1, 9)
    ]
    assert doc.functional_points[4].tags == ("irq", "w1c")


def test_role_defaults_to_subordinate(doc):
    assert doc.interface("apb_s").role is InterfaceRole.SUBORDINATE


def test_unknown_keys_become_annotations(ir_text):
    mutated = ir_text.replace(
        "  protocol: APB", "  protocol: APB\n  vendor-note: retained"
    )
    parsed = parse_ir(mutated)
    assert ("vendor-note", "retained") in parsed.interface("apb_s").annotations
    assert parse_ir(serialize_ir(parsed)) == parsed
    # section-level unknown keys attach to the document
    assert ("MODULE", "description", "minimal power controller register block") in parsed.annotations


# -- grammar errors --------------------------------------------------------------


def test_missing_section_rejected(ir_text):
    head, _, _ = ir_text.partition("[TIMING]")
    with pytest.raises(MissingSection):
        parse_ir(head)


def test_duplicate_section_rejected(ir_text):
    with pytest.raises(DuplicateSection):
        parse_ir(ir_text + "\n[TIMING]\nclock xclk\n")


def test_unknown_section_rejected(ir_text):
    with pytest.raises(FieldError):
        parse_ir(ir_text + "\n[EXTRAS]\n")


def test_content_before_first_section_rejected():
    with pytest.raises(FieldError):
        parse_ir("stray line\n[MODULE]\nname: m\n")


@pytest.mark.parametrize(
    "needle,replacement",
    [
        ("  protocol: APB\n", ""),  # interface without protocol
        ("protocol: APB", "protocol: AXI9"),  # unknown protocol
        ("role: subordinate", "role: bystander"),  # unknown role
        ("signal psel in 1 select", "signal psel sideways 1 select"),
        ("signal psel in 1 select", "signal psel in eight select"),
        ("signal psel in 1 select", "signal psel in 1"),  # missing role tag
        ("range 0x00 0x18", "range 0x00"),  # short range
        (
            "register ctrl offset 0x00 width 32 reset 0x0 access RW",
            "register ctrl offset 0x00 width 32 reset 0x0 mode RW",
        ),
        (
            "register ctrl offset 0x00 width 32 reset 0x0 access RW",
            "register ctrl offset 0x00 width 32 reset 0x0 access RWX",
        ),
        ("clock pclk period 10ns", "clock pclk frequency 10ns"),
        ("reset presetn active_low", "reset presetn low"),
        (
            "point FP1 tags(reset) all registers return to reset values "
            "after a presetn pulse",
            "point",
        ),
    ],
)
def test_grammar_violations_raise(ir_text, needle, replacement):
    mutated = ir_text.replace(needle, replacement)
    assert mutated != ir_text
    with pytest.raises(FieldError):
        parse_ir(mutated)


# -- validation ------------------------------------------------------------------


def test_fixture_validates_clean(doc, pwr_model):
    assert validate_ir(doc) == []
    assert validate_ir(doc, pwr_model) == []


def expect_one(ir_text, needle, replacement, severity, section):
    mutated = ir_text.replace(needle, replacement)
    assert mutated != ir_text
    findings = validate_ir(parse_ir(mutated))
    assert len(findings) == 1, findings
    assert findings[0].severity == severity
    assert findings[0].section == section
    return findings[0]


def test_zero_width_signal_flagged(ir_text):
    f = expect_one(
        ir_text,
        "signal psel in 1 select",
        "signal psel in 0 select",
        "error",
        "INTERFACES",
    )
    assert "width" in f.message


def test_duplicate_signal_flagged(ir_text):
    expect_one(
        ir_text,
        "signal penable in 1 enable",
        "signal psel in 1 enable",
        "error",
        "INTERFACES",
    )


def test_overlapping_ranges_flagged(ir_text):
    expect_one(
        ir_text,
        "range 0x00 0x18",
        "range 0x00 0x18\n  range 0x10 0x8",
        "error",
        "INTERFACES",
    )


def test_shared_register_offset_flagged(ir_text):
    f = expect_one(
        ir_text,
        "register status offset 0x04",
        "register status offset 0x00",
        "error",
        "REGISTERS",
    )
    assert "ctrl" in f.message and "status" in f.message


def test_oversized_reset_value_flagged(ir_text):
    expect_one(
        ir_text,
        "register clkdiv offset 0x10 width 32 reset 0x1 access RW",
        "register clkdiv offset 0x10 width 4 reset 0x100 access RW",
        "error",
        "REGISTERS",
    )


def test_register_outside_ranges_warns(ir_text):
    f = expect_one(
        ir_text,
        "register wake offset 0x14",
        "register wake offset 0x40",
        "warning",
        "REGISTERS",
    )
    assert "outside" in f.message


def test_missing_clock_with_bus_interface_flagged(ir_text):
    mutated = ir_text.replace("clock pclk period 10ns\n", "").replace(
        "clock refclk\n", ""
    )
    findings = validate_ir(parse_ir(mutated))
    assert [ (f.severity, f.section) for f in findings ] == [("error", "TIMING")]


def test_duplicate_point_id_flagged(ir_text):
    expect_one(ir_text, "point FP8", "point FP1", "error", "FUNCTIONAL")


def test_empty_point_description_warns(ir_text):
    f = expect_one(
        ir_text,
        "point FP8 tags(read) reads of unmapped offsets return the poison pattern",
        "point FP8 tags(read)",
        "warning",
        "FUNCTIONAL",
    )
    assert "FP8" in f.message


# -- cross-checks against a parsed design ------------------------------------------


def cross_findings(ir_text, needle, replacement, model):
    mutated = ir_text.replace(needle, replacement)
    assert mutated != ir_text
    return validate_ir(parse_ir(mutated), model)


def test_unknown_port_flagged(ir_text, pwr_model):
    findings = cross_findings(
        ir_text, "signal psel in 1 select", "signal qsel in 1 select", pwr_model
    )
    assert [f.severity for f in findings] == ["error"]
    assert "qsel" in findings[0].message


def test_direction_mismatch_flagged(ir_text, pwr_model):
    findings = cross_findings(
        ir_text, "signal pready out 1 ready", "signal pready in 1 ready", pwr_model
    )
    assert [f.severity for f in findings] == ["error"]
    assert "pready" in findings[0].message


def test_width_mismatch_flagged(ir_text, pwr_model):
    findings = cross_findings(
        ir_text, "signal paddr in 8 address", "signal paddr in 16 address", pwr_model
    )
    assert [f.severity for f in findings] == ["error"]
    assert "paddr" in findings[0].message


def test_module_name_mismatch_warns(ir_text, pwr_model):
    findings = cross_findings(
        ir_text, "name: pwrctrl_lite", "name: pwrctrl_full", pwr_model
    )
    assert [f.severity for f in findings] == ["warning"]


def test_error_findings_filter(ir_text, pwr_model):
    mutated = ir_text.replace("name: pwrctrl_lite", "name: pwrctrl_full").replace(
        "signal paddr in 8 address", "signal paddr in 16 address"
    )
    findings = validate_ir(parse_ir(mutated), pwr_model)
    assert len(findings) == 2
    errors = error_findings(findings)
    assert len(errors) == 1
    assert errors[0].severity == "error"
