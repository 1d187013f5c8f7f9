"""Command-line front end for every pipeline stage.

Exit codes: 0 success, 1 domain error (a JSON error envelope goes to
stderr), 2 usage error. Every subcommand takes --json; the default
output is human-oriented text.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import apply_overrides, load_config
from .coverage import (
    extract_uncovered,
    load_report,
    render_uncovered,
    seed_signals,
)
from .errors import NoSeedsFound, UnknownSignal, VCloseError
from .ir import load_ir, validate_ir
from .llm import make_llm_client
from .loop import compute_srg, refine, serialize_verification_report
from .patcher import load_templates, patch
from .simulator import make_simulator
from .skeletons import SkeletonLibrary, select_skeletons, specialize
from .tracer import SeedSet, slice_from_json_dict, trace_cross_file
from .verilog.parser import parse_design

log = logging.getLogger(__name__)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except VCloseError as exc:
        _emit_error(exc.to_dict())
        return 1
    except FileNotFoundError as exc:
        _emit_error({"type": "file-not-found", "message": str(exc)})
        return 1
    except json.JSONDecodeError as exc:
        _emit_error({"type": "bad-json", "message": str(exc)})
        return 1
    except OSError as exc:
        _emit_error({"type": "io-error", "message": str(exc)})
        return 1


def _emit_error(payload: dict) -> None:
    print(json.dumps({"error": payload}, sort_keys=True), file=sys.stderr)


def _emit(args, payload: dict, text: str) -> None:
    out = json.dumps(payload, indent=2) + "\n" if args.as_json else text
    if getattr(args, "output", None):
        Path(args.output).write_text(out)
    else:
        sys.stdout.write(out)


# ---------------------------------------------------------------------------
# Parser construction


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vclose",
        description="Slice, patch, analyze, and refine RTL verification runs.",
    )
    parser.add_argument("--version", action="version", version=f"vclose {__version__}")
    parser.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity (default: warning)",
    )
    parser.add_argument(
        "--config",
        metavar="FILE",
        help="TOML config file (default: ./vclose.toml when present)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("dump-model", help="parse a design and dump its statement model")
    _add_design(p)
    _add_json(p)
    _add_output(p)
    p.set_defaults(func=cmd_dump_model)

    p = sub.add_parser("trace", help="slice the design along signal dependencies")
    _add_design(p)
    p.add_argument(
        "--seed",
        action="append",
        required=True,
        metavar="SIG[,SIG...]",
        help="seed signal names (repeatable, comma-separated)",
    )
    _add_json_text(p)
    _add_output(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("patch", help="reconstruct a slice into compilable source")
    _add_design(p)
    p.add_argument("--slice", required=True, metavar="FILE", help="trace --json output")
    p.add_argument("--templates", metavar="DIR", help="extra patch template directory")
    p.add_argument(
        "-o", "--output", required=True, metavar="DIR", help="output directory"
    )
    _add_json(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("analyze", help="score a coverage report and list gaps")
    p.add_argument("--report", required=True, metavar="FILE")
    p.add_argument(
        "--design", nargs="+", metavar="FILE", help="design files for seed hints"
    )
    p.add_argument("--top", metavar="MOD", help="top module name")
    p.add_argument(
        "--budget", type=int, default=10, metavar="N",
        help="max uncovered items listed per group (default: 10)",
    )
    _add_json_text(p)
    _add_output(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ir", help="verification IR utilities")
    ir_sub = p.add_subparsers(dest="ir_command", required=True, metavar="ACTION")
    v = ir_sub.add_parser("validate", help="check an IR file, optionally against RTL")
    v.add_argument("file", metavar="IR_FILE")
    v.add_argument(
        "--design", nargs="+", metavar="FILE", help="design files to cross-check"
    )
    v.add_argument("--top", metavar="MOD", help="top module name")
    _add_json(v)
    _add_output(v)
    v.set_defaults(func=cmd_ir_validate)

    p = sub.add_parser("specialize", help="fill protocol skeletons from an IR file")
    p.add_argument("--ir", required=True, metavar="FILE")
    p.add_argument(
        "--protocol-lib", metavar="DIR", help="skeleton library root (default: bundled)"
    )
    p.add_argument(
        "--llm", required=True, metavar="SPEC",
        help="LLM client spec (mock:transcript.json or an http(s) endpoint)",
    )
    p.add_argument(
        "--attempts", type=int, default=3, metavar="N",
        help="frozen-region retry cap per skeleton (default: 3)",
    )
    p.add_argument(
        "-o", "--output", required=True, metavar="DIR", help="output directory"
    )
    _add_json(p)
    p.set_defaults(func=cmd_specialize)

    p = sub.add_parser("refine", help="run the coverage-closure loop")
    _add_design(p)
    p.add_argument("--report", required=True, metavar="FILE", help="baseline coverage")
    p.add_argument(
        "--llm", action="append", required=True, metavar="[LABEL=]SPEC",
        help="LLM client spec, repeat per model",
    )
    p.add_argument(
        "--sim", required=True, metavar="SPEC",
        help="simulator spec (mock:script.json or exec:command)",
    )
    p.add_argument("--target", type=float, metavar="PCT", help="target score")
    p.add_argument("--max-iters", type=int, metavar="N")
    p.add_argument("--points-per-iter", type=int, metavar="N")
    p.add_argument("--repair-attempts", type=int, metavar="N")
    p.add_argument("--waiver-quorum", type=int, metavar="N")
    p.add_argument("--context-budget", type=int, metavar="TOKENS")
    _add_json(p)
    _add_output(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("report", help="summarize a saved verification report")
    p.add_argument("file", metavar="REPORT_JSON")
    p.add_argument(
        "--srg", metavar="RESULTS_JSON",
        help="generation results to fold in as a success-rate percentage",
    )
    _add_json(p)
    _add_output(p)
    p.set_defaults(func=cmd_report)

    return parser


def _add_design(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", nargs="+", required=True, metavar="FILE")
    p.add_argument("--top", metavar="MOD", help="top module name")


def _add_json(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", dest="as_json", action="store_true", help="emit JSON")


def _add_json_text(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", dest="as_json", action="store_true", help="emit JSON")
    g.add_argument(
        "--text", dest="as_json", action="store_false", help="emit text (default)"
    )
    p.set_defaults(as_json=False)


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", metavar="FILE", help="write here, not stdout")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_dump_model(args) -> int:
    model = parse_design(args.design, top=args.top)
    payload = model.to_json_dict()
    lines = []
    for mod in model.iter_modules():
        lines.append(
            f"{mod.name}  {mod.file}:{mod.span.line_start}-{mod.span.line_end}"
            f"  ports={len(mod.ports)} statements={len(mod.statements)}"
            f" instances={len(mod.instances)}"
        )
    lines.append(f"top: {model.top}  total statements: {model.statement_count()}")
    _emit(args, payload, "\n".join(lines) + "\n")
    return 0


def cmd_trace(args) -> int:
    model = parse_design(args.design, top=args.top)
    names = [n.strip() for chunk in args.seed for n in chunk.split(",") if n.strip()]
    seeds = SeedSet.from_names(model, names)
    if not seeds.signals:
        raise UnknownSignal(f"no seed signal found in the design: {', '.join(names)}")
    slice_ = trace_cross_file(seeds, model)
    _emit(args, slice_.to_json_dict(), _slice_text(slice_, model))
    return 0


def _slice_text(slice_, model) -> str:
    out = []
    for path in sorted(slice_.statements_by_file):
        spans = []
        for sid in sorted(slice_.statements_by_file[path]):
            _, stmt = model.statement(sid)
            spans.append((stmt.span.line_start, stmt.span.line_end))
        src = model.sources[path].split("\n")
        out.append(f"== {path}")
        for start, end in _merge_ranges(spans):
            out.append(f"-- {path}:{start}-{end}")
            for ln in range(start, min(end, len(src)) + 1):
                out.append(f"{ln:5d}  {src[ln - 1]}")
    ports = ", ".join(sorted(slice_.entry_ports)) or "(none)"
    out.append(f"entry ports: {ports}")
    if slice_.partial:
        out.append("partial slice; unresolved: " + ", ".join(slice_.unresolved))
    return "\n".join(out) + "\n"


def _merge_ranges(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def cmd_patch(args) -> int:
    model = parse_design(args.design, top=args.top)
    slice_ = slice_from_json_dict(json.loads(Path(args.slice).read_text()))
    templates = load_templates(args.templates)
    fdut = patch(slice_, model, templates)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for path, text in fdut.files:
        target = outdir / Path(path).name
        target.write_text(text)
        written.append(target.name)
    (outdir / "provenance.json").write_text(
        json.dumps(fdut.to_json_dict(), indent=2) + "\n"
    )
    payload = {
        "output_dir": str(outdir),
        "files": written,
        "modules": list(fdut.module_order),
        "dropped": sorted(fdut.dropped_statements),
        "entry_ports": sorted(fdut.entry_ports),
    }
    text = (
        f"wrote {len(written)} file(s) + provenance.json to {outdir}\n"
        f"modules: {', '.join(fdut.module_order)}\n"
        f"entry ports: {', '.join(sorted(fdut.entry_ports)) or '(none)'}\n"
    )
    args.output = None  # summary goes to stdout; -o named the directory
    _emit(args, payload, text)
    return 0


def cmd_analyze(args) -> int:
    report = load_report(args.report)
    summary = extract_uncovered(report, args.budget)
    seeds: dict[str, list[str]] = {}
    if args.design:
        model = parse_design(args.design, top=args.top)
        for item_id in sorted(summary.all_ids()):
            try:
                seed = seed_signals(report.item(item_id), model)
            except NoSeedsFound:
                seeds[str(item_id)] = []
                continue
            seeds[str(item_id)] = sorted(str(r) for r in seed.signals)
    payload = {
        "run_label": report.run_label,
        "score": report.score,
        "per_category_scores": {
            cat.value: pct for cat, pct in report.per_category_scores.items()
        },
        "items": len(report.items),
        "malformed_lines": report.malformed_lines,
        "uncovered": summary.to_json_dict(),
    }
    if seeds:
        payload["seeds"] = seeds
    lines = [f"run: {report.run_label or '(unlabeled)'}", f"score: {report.score:.2f}"]
    for cat, pct in report.per_category_scores.items():
        lines.append(f"  {cat.value}: {pct:.2f}")
    text = "\n".join(lines) + "\n\n" + render_uncovered(summary, report)
    if seeds:
        text += "\nseed hints:\n" + "".join(
            f"  item {iid}: {', '.join(names) or '(none)'}\n"
            for iid, names in seeds.items()
        )
    _emit(args, payload, text)
    return 0


def cmd_ir_validate(args) -> int:
    doc = load_ir(args.file)
    model = parse_design(args.design, top=args.top) if args.design else None
    findings = validate_ir(doc, model)
    payload = {
        "file": args.file,
        "module": doc.module_name,
        "findings": [
            {"severity": f.severity, "section": f.section, "message": f.message}
            for f in findings
        ],
        "errors": sum(1 for f in findings if f.severity == "error"),
    }
    if findings:
        text = "".join(
            f"{f.severity}: [{f.section}] {f.message}\n" for f in findings
        )
    else:
        text = f"{args.file}: OK\n"
    _emit(args, payload, text)
    return 1 if payload["errors"] else 0


def cmd_specialize(args) -> int:
    doc = load_ir(args.ir)
    library = SkeletonLibrary.load(args.protocol_lib)
    skeletons, findings = select_skeletons(doc, library)
    client = make_llm_client(args.llm, label="specializer")
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    results = []
    failed = 0
    for skeleton in skeletons:
        name = skeleton.name.replace("/", "_") + ".sv"
        try:
            component = specialize(skeleton, doc, client, attempt_cap=args.attempts)
        except VCloseError as exc:
            failed += 1
            results.append(
                {"skeleton": skeleton.name, "status": "failed", "error": str(exc)}
            )
            continue
        (outdir / name).write_text(component.output_text)
        results.append(
            {
                "skeleton": skeleton.name,
                "status": "ok",
                "file": name,
                "attempts": component.attempts,
            }
        )
    payload = {
        "ir": args.ir,
        "output_dir": str(outdir),
        "results": results,
        "findings": [
            {"severity": f.severity, "section": f.section, "message": f.message}
            for f in findings
        ],
    }
    lines = [
        f"{r['skeleton']}: {r['status']}"
        + (f" -> {r['file']} ({r['attempts']} attempt(s))" if "file" in r else f" ({r['error']})")
        for r in results
    ]
    for f in findings:
        lines.append(f"{f.severity}: [{f.section}] {f.message}")
    args.output = None
    _emit(args, payload, "\n".join(lines) + "\n" if lines else "nothing to do\n")
    return 1 if failed else 0


def cmd_refine(args) -> int:
    config = load_config(args.config)
    config = apply_overrides(
        config,
        target_score=args.target,
        max_iters=args.max_iters,
        points_per_iter=args.points_per_iter,
        repair_attempts=args.repair_attempts,
        waiver_quorum=args.waiver_quorum,
        context_budget=args.context_budget,
    )
    model = parse_design(args.design, top=args.top)
    report = load_report(args.report)
    llms = []
    for idx, spec in enumerate(args.llm, start=1):
        label, _, rest = spec.partition("=")
        if rest and not label.startswith(("mock:", "http:", "https:")):
            llms.append(make_llm_client(rest, label=label))
        else:
            llms.append(make_llm_client(spec, label=f"m{idx}"))
    sim = make_simulator(args.sim)
    result = refine(model, report, llms, sim, config)
    serialized = serialize_verification_report(result)
    if args.output:
        Path(args.output).write_text(serialized)
    summary = (
        f"final score: {result.final_score:.2f}\n"
        f"runs: {len(result.runs)}  waived: {len(result.waivers)}"
        f"  errors logged: {len(result.error_logs)}\n"
    )
    if args.as_json:
        sys.stdout.write(serialized)
    else:
        sys.stdout.write(summary)
    return 0


def cmd_report(args) -> int:
    data = json.loads(Path(args.file).read_text())
    if not isinstance(data, dict) or "final_score" not in data:
        raise VCloseError(f"'{args.file}' is not a verification report")
    if args.srg:
        results = json.loads(Path(args.srg).read_text())
        data["srg"] = compute_srg([tuple(row) for row in results])
    lines = [f"final score: {data['final_score']:.2f}"]
    if data.get("srg") is not None:
        lines.append(f"srg: {data['srg']:.2f}")
    for w in data.get("waivers", []):
        models = ", ".join(w.get("proposing_models", []))
        lines.append(f"waived item {w.get('target_item')} (by {models})")
    for run in data.get("runs", []):
        lines.append(f"  {run.get('label')}: {run.get('score'):.2f}")
    _emit(args, data, "\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
