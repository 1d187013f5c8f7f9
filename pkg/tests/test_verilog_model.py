import json
from pathlib import Path

import pytest

from vclose.errors import TopModuleNotFound, VerilogSyntaxError
from vclose.tracer import ref_from_str
from vclose.verilog.model import SignalRef, StatementKind
from vclose.verilog.parser import parse_design

from conftest import FIXTURES, design_files, load_design

GOLDEN = json.loads((FIXTURES / "golden" / "toy_sub_model.json").read_text())


def _row(mod_file: str, stmt, by_id) -> dict:
    parent = None
    if stmt.parent_id is not None:
        p = by_id[stmt.parent_id]
        parent = f"{p.kind.value}@{p.span.line_start}"
    return {
        "file": Path(mod_file).name,
        "kind": stmt.kind.value,
        "line_start": stmt.span.line_start,
        "line_end": stmt.span.line_end,
        "parent": parent,
        "reads": sorted(str(r) for r in stmt.reads),
        "writes": sorted(str(w) for w in stmt.writes),
    }


def _key(row: dict) -> tuple:
    return (
        row["file"],
        row["line_start"],
        row["line_end"],
        row["kind"],
        row["parent"],
        tuple(sorted(row["reads"])),
        tuple(sorted(row["writes"])),
    )


def test_toy_sub_statement_table_matches_golden(toy_model):
    got = []
    for mod in toy_model.iter_modules():
        by_id = {s.id: s for s in mod.statements}
        got.extend(_row(mod.file, s, by_id) for s in mod.statements)
    want = GOLDEN["statements"]
    assert len(got) == GOLDEN["statement_count"] == len(want)
    got_keys = sorted(_key(r) for r in got)
    want_keys = sorted(
        _key({**r, "reads": sorted(r["reads"]), "writes": sorted(r["writes"])})
        for r in want
    )
    assert got_keys == want_keys


def test_statement_ids_unique_and_complete(toy_model):
    ids = [s.id for _, s in toy_model.all_statements()]
    assert len(ids) == len(set(ids)) == toy_model.statement_count()


def test_container_reads_are_header_signals_only(toy_model):
    fsm = toy_model.module("fsm")
    always = [
        s for s in fsm.statements
        if s.kind is StatementKind.ALWAYS_BLOCK and s.span.line_start == 19
    ]
    assert len(always) == 1
    assert {r.name for r in always[0].reads} == {"clk", "rst_n"}
    assert not always[0].writes


def test_statements_at_orders_outermost_first(toy_model):
    fsm_file = toy_model.module("fsm").file
    stack = toy_model.statements_at(fsm_file, 40)
    kinds = [s.kind for s in stack]
    assert kinds[0] is StatementKind.ALWAYS_BLOCK
    assert kinds[-1] is StatementKind.PROCEDURAL_ASSIGN
    spans = [(s.span.line_start, s.span.line_end) for s in stack]
    for outer, inner in zip(spans, spans[1:]):
        assert outer[0] <= inner[0] and inner[1] <= outer[1]


def test_port_widths_and_directions():
    model = load_design("pwrctrl_lite")
    ports = {p.name: p for p in model.module("pwrctrl_lite").ports}
    assert ports["paddr"].direction == "input"
    assert ports["paddr"].width == 8
    assert ports["pwdata"].width == 32
    assert ports["prdata"].direction == "output"
    assert ports["pready"].width == 1


def test_instances_and_bindings(toy_model):
    top = toy_model.module("toy_top")
    insts = {i.name: i for i in top.instances}
    assert set(insts) == {"u_hs", "u_fsm"}
    assert insts["u_hs"].module == "handshake"
    formals = {b.formal for b in insts["u_fsm"].bindings}
    assert formals == {"clk", "rst_n", "kick", "ack_in", "busy", "done"}
    (ack_b,) = insts["u_fsm"].bindings_for("ack_in")
    assert "ack_net" in ack_b.actual_names


def test_binding_statements_bridge_scopes(toy_model):
    # The connection rows carry both parent and child scoped names.
    top = toy_model.module("toy_top")
    conn = [
        s for s in top.statements
        if s.kind is StatementKind.INSTANCE_CONNECTION and s.span.line_start == 40
    ]
    assert len(conn) == 1
    assert SignalRef("handshake", "ack") in conn[0].reads
    assert SignalRef("toy_top", "ack_net") in conn[0].writes


def test_sources_kept_verbatim(toy_model):
    for path, text in toy_model.sources.items():
        assert text == Path(path).read_text()


def test_syntax_error_reports_location(tmp_path):
    bad = tmp_path / "bad.v"
    bad.write_text("module m(input a;\nendmodule\n")
    with pytest.raises(VerilogSyntaxError):
        parse_design([str(bad)], top="m")


def test_missing_top_module_rejected():
    with pytest.raises(TopModuleNotFound):
        parse_design(design_files("toy_sub"), top="nope")


def test_undefined_instance_becomes_black_box(tmp_path):
    src = tmp_path / "holey.v"
    src.write_text(
        "module holey(input clk, output z);\n"
        "  wire t;\n"
        "  mystery u0 (.c(clk), .q(t));\n"
        "  assign z = t;\n"
        "endmodule\n"
    )
    model = parse_design([str(src)], top="holey")
    assert "mystery" in model.black_boxes


def test_signal_ref_string_round_trip():
    for ref in [
        SignalRef("m", "sig"),
        SignalRef("top", "bus", (7, 0)),
        SignalRef("a", "x", (0, 0)),
    ]:
        assert ref_from_str(str(ref)) == ref
