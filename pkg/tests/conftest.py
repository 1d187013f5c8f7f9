import glob
import json
from dataclasses import replace
from pathlib import Path

import pytest

from vclose.coverage import Status, load_report, make_report, seed_signals
from vclose.llm import prompt_key
from vclose.loop import assemble_prompt, parse_reply, render_prompt, repair_prompt
from vclose.patcher import load_templates, patch
from vclose.tracer import trace_cross_file
from vclose.verilog.parser import parse_design

FIXTURES = Path(__file__).parent / "fixtures"
DESIGNS = FIXTURES / "designs"

CORPUS_TOPS = {
    "toy_sub": "toy_top",
    "arbiter_pair": "arb_top",
    "loopy": "loopy_top",
    "pipeline4": "pipe_top",
    "renamer": "rn_top",
    "pwrctrl_lite": "pwrctrl_lite",
}


def design_files(name: str) -> list[str]:
    return sorted(glob.glob(str(DESIGNS / name / "*.v")))


def load_design(name: str):
    return parse_design(design_files(name), top=CORPUS_TOPS[name])


@pytest.fixture(scope="session")
def toy_model():
    return load_design("toy_sub")


@pytest.fixture(scope="session")
def corpus_models():
    return {name: load_design(name) for name in CORPUS_TOPS}


@pytest.fixture(scope="session")
def toy_report():
    return load_report(FIXTURES / "coverage" / "toy_sub_cov.txt")


@pytest.fixture(scope="session")
def templates():
    return load_templates()


# ---------------------------------------------------------------------------
# Scripted refinement scenario: five uncovered items on the toy design,
# three coverable through the mock simulator and two argued unreachable
# by two of the three mock models. Shared by the loop, CLI, and
# acceptance tests.

COVERABLE_IDS = [4, 8, 9]
WAIVED_IDS = [13, 14]

DELTA_ROWS = {
    4: "Line\tCovered\ttoy_top.u_fsm\tfsm.v:40\t",
    8: "Branch\tCovered\ttoy_top.u_fsm\tfsm.v:31\tkick",
    9: "Branch\tCovered\ttoy_top.u_fsm\tfsm.v:39\tack_in",
}


def sequence_reply(body: str) -> str:
    return "SEQUENCE\n```\n" + body + "\n```\n"


def waiver_reply(text: str) -> str:
    return "WAIVER\n```\n" + text + "\n```\n"


def five_item_report(full_report):
    """Fixture report reduced to exactly five uncovered items."""
    items = [
        it if it.id not in (15, 20) else replace(it, status=Status.COVERED)
        for it in full_report.items
    ]
    return make_report(items, run_label=full_report.run_label)


def scenario_prompts(design, report, config):
    """Per-item prompts exactly as the loop will issue them."""
    tmpl = load_templates()
    prompts = {}
    for item in report.uncovered_items():
        seeds = seed_signals(item, design)
        slc = trace_cross_file(seeds, design)
        fdut = patch(slc, design, tmpl)
        bundle = assemble_prompt(item, slc, fdut, config.context_budget, model=design)
        prompts[item.id] = render_prompt(bundle)
    return prompts


def build_scripted_scenario(design, report, config):
    """Transcripts for three models plus a simulator script.

    Model a's first shot at item 4 is scripted to fail compilation so the
    repair path runs; its corrected sequence then covers the item.
    """
    prompts = scenario_prompts(design, report, config)
    ta, tb, tc = {}, {}, {}
    for iid in COVERABLE_IDS:
        p = prompts[iid]
        if iid == 4:
            first = sequence_reply("bad_seq_4")
            ta[prompt_key(p)] = first
            body = parse_reply(first)[1]
            fixed = repair_prompt(p, body, "syntax error near bad")
            ta[prompt_key(fixed)] = sequence_reply("fix_seq_4")
        else:
            ta[prompt_key(p)] = sequence_reply(f"cover_{iid}_a")
        tb[prompt_key(p)] = sequence_reply(f"cover_{iid}_b")
        tc[prompt_key(p)] = sequence_reply(f"cover_{iid}_c")
    for iid in WAIVED_IDS:
        p = prompts[iid]
        ta[prompt_key(p)] = waiver_reply(f"point {iid} unreachable: input tied off")
        tb[prompt_key(p)] = waiver_reply(f"agree, point {iid} is dead logic")
        tc[prompt_key(p)] = sequence_reply(f"noop_{iid}")

    rules = [
        {
            "match": "bad_seq_4",
            "compile_ok": False,
            "sim_ok": False,
            "error": "syntax error near bad",
        },
        {
            "match": "fix_seq_4",
            "compile_ok": True,
            "sim_ok": True,
            "delta_text": "# run: delta\n" + DELTA_ROWS[4] + "\n",
        },
    ]
    for iid in (8, 9):
        rules.append(
            {
                "match": f"cover_{iid}",
                "compile_ok": True,
                "sim_ok": True,
                "delta_text": "# run: delta\n" + DELTA_ROWS[iid] + "\n",
            }
        )
    rules.append({"match": "noop_", "compile_ok": True, "sim_ok": True})
    script = {"rules": rules, "default": {"compile_ok": True, "sim_ok": True}}
    return (ta, tb, tc), script


def write_scenario_files(tmp_path, transcripts, script):
    paths = []
    for label, transcript in zip("abc", transcripts):
        p = tmp_path / f"llm_{label}.json"
        p.write_text(json.dumps(transcript))
        paths.append(p)
    sim = tmp_path / "sim.json"
    sim.write_text(json.dumps(script))
    return paths, sim
