"""Command-line interface tests.

Every subcommand is exercised end to end through main(); machine-readable
outputs are checked against the JSON schemas shipped with the package.
Domain failures exit 1 with a one-line JSON envelope as the last stderr
line; usage failures exit 2 via argparse.
"""

import contextlib
import io
import json
from pathlib import Path

import jsonschema
import pytest

from conftest import (
    FIXTURES,
    build_scripted_scenario,
    design_files,
    five_item_report,
    write_scenario_files,
)
from vclose.config import PipelineConfig
from vclose.coverage import serialize_report
from vclose.cli import build_parser, main
from vclose.ir import Protocol, load_ir
from vclose.llm import prompt_key
from vclose.skeletons import SkeletonLibrary, build_specialization_prompt
from vclose.verilog.parser import parse_design

SCHEMAS = Path(__file__).resolve().parent.parent / "src" / "vclose" / "schemas"

TOY = design_files("toy_sub")
COV = str(FIXTURES / "coverage" / "toy_sub_cov.txt")
IR = str(FIXTURES / "ir" / "pwrctrl.ir")


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


def check_schema(payload, name):
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    jsonschema.validate(payload, schema)


def last_error(err_text):
    # warning log lines may precede the envelope; it is always last
    envelope = json.loads(err_text.strip().splitlines()[-1])
    check_schema(envelope, "error")
    return envelope["error"]


# -- parser surface --------------------------------------------------------------


def test_help_lists_every_subcommand():
    text = build_parser().format_help()
    for name in (
        "dump-model",
        "trace",
        "patch",
        "analyze",
        "ir",
        "specialize",
        "refine",
        "report",
    ):
        assert name in text


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        run_cli(["--version"])
    assert exc.value.code == 0


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        run_cli(["frobnicate"])
    assert exc.value.code == 2


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        run_cli(["refine", "--design", *TOY, "--report", COV, "--llm", "mock:x"])
    assert exc.value.code == 2  # --sim is required


# -- dump-model --------------------------------------------------------------------


def test_dump_model_json_schema():
    code, out, _ = run_cli(["dump-model", "--design", *TOY, "--top", "toy_top", "--json"])
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "model")
    assert payload["top"] == "toy_top"
    assert payload["statement_count"] == 63


def test_dump_model_text_summary():
    code, out, _ = run_cli(["dump-model", "--design", *TOY, "--top", "toy_top"])
    assert code == 0
    assert "top: toy_top  total statements: 63" in out


def test_dump_model_missing_file_envelope():
    code, out, err = run_cli(["dump-model", "--design", "/nope/missing.v"])
    assert code == 1
    assert out == ""
    assert last_error(err)["type"] in ("file-not-found", "file-not-readable")


# -- trace -------------------------------------------------------------------------


def test_trace_json_schema(tmp_path):
    out_file = tmp_path / "slice.json"
    code, out, _ = run_cli(
        [
            "trace",
            "--design",
            *TOY,
            "--top",
            "toy_top",
            "--seed",
            "ack",
            "--json",
            "-o",
            str(out_file),
        ]
    )
    assert code == 0
    payload = json.loads(out_file.read_text())
    check_schema(payload, "slice")
    assert sorted(payload["entry_ports"]) == ["clk", "req_in", "rst_n"]


def test_trace_seeds_split_on_commas():
    code, out, _ = run_cli(
        ["trace", "--design", *TOY, "--top", "toy_top", "--seed", "done, ack", "--json"]
    )
    assert code == 0
    seeds = json.loads(out)["seeds"]
    names = {s.rsplit(".", 1)[-1] for s in seeds}
    assert names == {"done", "ack"}


def test_trace_text_excerpts():
    code, out, _ = run_cli(
        ["trace", "--design", *TOY, "--top", "toy_top", "--seed", "done"]
    )
    assert code == 0
    assert "== " in out and "entry ports:" in out
    assert "assign done" in out  # source text excerpted verbatim


def test_trace_unknown_seed_envelope():
    code, _, err = run_cli(
        ["trace", "--design", *TOY, "--top", "toy_top", "--seed", "zzz_missing"]
    )
    assert code == 1
    assert last_error(err)["type"] == "unknown-signal"


# -- patch -------------------------------------------------------------------------


@pytest.fixture()
def ack_slice_file(tmp_path):
    out_file = tmp_path / "slice.json"
    code, _, _ = run_cli(
        [
            "trace",
            "--design",
            *TOY,
            "--top",
            "toy_top",
            "--seed",
            "ack",
            "--json",
            "-o",
            str(out_file),
        ]
    )
    assert code == 0
    return out_file


def test_patch_writes_files_and_provenance(tmp_path, ack_slice_file):
    outdir = tmp_path / "filtered"
    code, out, _ = run_cli(
        [
            "patch",
            "--design",
            *TOY,
            "--top",
            "toy_top",
            "--slice",
            str(ack_slice_file),
            "-o",
            str(outdir),
            "--json",
        ]
    )
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "patch")
    assert payload["dropped"] == []
    written = sorted(p.name for p in outdir.glob("*.v"))
    assert written == sorted(payload["files"])
    prov = json.loads((outdir / "provenance.json").read_text())
    check_schema(prov, "provenance")
    # the reconstruction parses on its own
    model = parse_design([str(outdir / n) for n in written], top="toy_top")
    assert model.top == "toy_top"


def test_patch_text_summary(tmp_path, ack_slice_file):
    outdir = tmp_path / "filtered"
    code, out, _ = run_cli(
        [
            "patch",
            "--design",
            *TOY,
            "--top",
            "toy_top",
            "--slice",
            str(ack_slice_file),
            "-o",
            str(outdir),
        ]
    )
    assert code == 0
    assert "provenance.json" in out
    assert "entry ports: clk, req_in, rst_n" in out


def test_patch_rejects_malformed_slice(tmp_path):
    bad = tmp_path / "slice.json"
    bad.write_text("{oops")
    code, _, err = run_cli(
        ["patch", "--design", *TOY, "--slice", str(bad), "-o", str(tmp_path / "x")]
    )
    assert code == 1
    assert last_error(err)["type"] == "bad-json"


# -- analyze -----------------------------------------------------------------------


def test_analyze_json_schema():
    code, out, _ = run_cli(["analyze", "--report", COV, "--json"])
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "analysis")
    assert payload["score"] == 72.5
    assert payload["uncovered"]["context_budget"] == 10
    assert "seeds" not in payload


def test_analyze_with_design_adds_seed_hints():
    code, out, _ = run_cli(
        ["analyze", "--report", COV, "--design", *TOY, "--top", "toy_top", "--json"]
    )
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "analysis")
    assert payload["seeds"]["4"] == ["fsm.S_DONE", "fsm.next_state"]


def test_analyze_text_mode():
    code, out, _ = run_cli(["analyze", "--report", COV, "--budget", "1"])
    assert code == 0
    assert "score: 72.50" in out
    assert "+1 more" in out


# -- ir validate -------------------------------------------------------------------


def test_ir_validate_clean_pair():
    pwr = design_files("pwrctrl_lite")
    code, out, _ = run_cli(
        ["ir", "validate", IR, "--design", *pwr, "--top", "pwrctrl_lite"]
    )
    assert code == 0
    assert out.endswith("OK\n")


def test_ir_validate_errors_exit_1(tmp_path):
    broken = tmp_path / "broken.ir"
    broken.write_text(
        Path(IR).read_text().replace(
            "register status offset 0x04", "register status offset 0x00"
        )
    )
    code, out, _ = run_cli(["ir", "validate", str(broken), "--json"])
    assert code == 1
    payload = json.loads(out)
    check_schema(payload, "findings")
    assert payload["errors"] == 1
    assert payload["findings"][0]["section"] == "REGISTERS"


# -- specialize --------------------------------------------------------------------


def echo_transcript():
    doc = load_ir(IR)
    library = SkeletonLibrary.load()
    transcript = {}
    for sk in library.for_protocol(Protocol.APB):
        iface = next(i for i in doc.interfaces if i.protocol is sk.protocol)
        prompt = build_specialization_prompt(sk, doc, iface)
        transcript[prompt_key(prompt)] = "```systemverilog\n" + sk.body + "```"
    return transcript


def test_specialize_writes_components(tmp_path):
    llm_file = tmp_path / "echo.json"
    llm_file.write_text(json.dumps(echo_transcript()))
    outdir = tmp_path / "out"
    code, out, _ = run_cli(
        [
            "specialize",
            "--ir",
            IR,
            "--llm",
            f"mock:{llm_file}",
            "-o",
            str(outdir),
            "--json",
        ]
    )
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "specialize")
    assert [r["status"] for r in payload["results"]] == ["ok"] * 4
    names = sorted(p.name for p in outdir.glob("*.sv"))
    assert names == [
        "apb_agent.sv",
        "apb_driver.sv",
        "apb_interface.sv",
        "apb_monitor.sv",
    ]


def test_specialize_frozen_violations_exit_1(tmp_path):
    llm_file = tmp_path / "vandal.json"
    llm_file.write_text(json.dumps({"*": "```systemverilog\n// nothing left\n```"}))
    outdir = tmp_path / "out"
    code, out, _ = run_cli(
        [
            "specialize",
            "--ir",
            IR,
            "--llm",
            f"mock:{llm_file}",
            "--attempts",
            "2",
            "-o",
            str(outdir),
            "--json",
        ]
    )
    assert code == 1
    payload = json.loads(out)
    assert all(r["status"] == "failed" for r in payload["results"])
    assert list(outdir.glob("*.sv")) == []


# -- refine ------------------------------------------------------------------------


@pytest.fixture()
def scenario_files(tmp_path, toy_model, toy_report):
    config = PipelineConfig(target_score=100.0)
    report = five_item_report(toy_report)
    transcripts, script = build_scripted_scenario(toy_model, report, config)
    llm_paths, sim_path = write_scenario_files(tmp_path, transcripts, script)
    report_path = tmp_path / "baseline.txt"
    report_path.write_text(serialize_report(report))
    return llm_paths, sim_path, report_path


def refine_argv(scenario_files, extra=()):
    llm_paths, sim_path, report_path = scenario_files
    argv = ["refine", "--design", *TOY, "--top", "toy_top", "--report", str(report_path)]
    for label, path in zip("abc", llm_paths):
        argv += ["--llm", f"{label}=mock:{path}"]
    argv += ["--sim", f"mock:{sim_path}", "--target", "100"]
    argv += list(extra)
    return argv


def test_refine_end_to_end(tmp_path, scenario_files, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out_file = tmp_path / "verification.json"
    code, out, _ = run_cli(
        refine_argv(scenario_files, ["--json", "-o", str(out_file)])
    )
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "verification-report")
    assert out == out_file.read_text()
    assert payload["final_score"] == 100.0
    assert [w["target_item"] for w in payload["waivers"]] == [13, 14]
    assert [r["label"] for r in payload["runs"]] == ["baseline", "iter1", "iter2"]


def test_refine_text_summary(tmp_path, scenario_files, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = run_cli(refine_argv(scenario_files))
    assert code == 0
    assert "final score: 100.00" in out
    assert "waived: 2" in out


def test_refine_flag_overrides_iteration_cap(tmp_path, scenario_files, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = run_cli(
        refine_argv(scenario_files, ["--max-iters", "1", "--json"])
    )
    assert code == 0
    payload = json.loads(out)
    assert [r["label"] for r in payload["runs"]] == ["baseline", "iter1"]
    # item 13 never came up, so only 14 is waived and the score reflects it
    assert [w["target_item"] for w in payload["waivers"]] == [14]
    assert payload["final_score"] == 95.0


def test_refine_config_file_supplies_defaults(tmp_path, scenario_files, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "vclose.toml").write_text(
        "[pipeline]\ntarget_score = 100.0\nmax_iters = 1\n"
    )
    llm_paths, sim_path, report_path = scenario_files
    argv = ["refine", "--design", *TOY, "--top", "toy_top", "--report", str(report_path)]
    for label, path in zip("abc", llm_paths):
        argv += ["--llm", f"{label}=mock:{path}"]
    argv += ["--sim", f"mock:{sim_path}", "--json"]
    code, out, _ = run_cli(argv)
    assert code == 0
    assert [r["label"] for r in json.loads(out)["runs"]] == ["baseline", "iter1"]
    # an explicit flag still wins over the file
    code, out, _ = run_cli(argv + ["--max-iters", "3"])
    assert code == 0
    assert [r["label"] for r in json.loads(out)["runs"]] == [
        "baseline",
        "iter1",
        "iter2",
    ]


def test_refine_missing_config_file_envelope(tmp_path, scenario_files):
    code, _, err = run_cli(
        ["--config", str(tmp_path / "absent.toml"), *refine_argv(scenario_files)]
    )
    assert code == 1
    assert last_error(err)["type"] == "file-not-found"


# -- report ------------------------------------------------------------------------


@pytest.fixture()
def saved_report(tmp_path, scenario_files, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out_file = tmp_path / "verification.json"
    code, _, _ = run_cli(refine_argv(scenario_files, ["-o", str(out_file)]))
    assert code == 0
    return out_file


def test_report_summary(saved_report):
    code, out, _ = run_cli(["report", str(saved_report)])
    assert code == 0
    assert "final score: 100.00" in out
    assert "waived item 13 (by a, b)" in out
    assert "baseline: 76.67" in out


def test_report_folds_in_srg(tmp_path, saved_report):
    results = [[f"g{i}", True, True, i != 14] for i in range(15)]
    srg_file = tmp_path / "results.json"
    srg_file.write_text(json.dumps(results))
    code, out, _ = run_cli(
        ["report", str(saved_report), "--srg", str(srg_file), "--json"]
    )
    assert code == 0
    payload = json.loads(out)
    check_schema(payload, "verification-report")
    assert payload["srg"] == 93.33
    code, out, _ = run_cli(["report", str(saved_report), "--srg", str(srg_file)])
    assert "srg: 93.33" in out


def test_report_rejects_foreign_json(tmp_path):
    other = tmp_path / "other.json"
    other.write_text('{"hello": 1}')
    code, _, err = run_cli(["report", str(other)])
    assert code == 1
    assert last_error(err)["type"] == "error"
