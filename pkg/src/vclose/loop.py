"""Coverage-closure refinement loop.

Each iteration picks a batch of uncovered items, slices and patches the
design around each one, prompts every LLM client for either a stimulus
sequence or a waiver argument, runs sequence candidates through the
simulator with one round of error feedback, merges the coverage the
successful runs produced, and awards waivers by quorum. The loop stops
at the target score, on a fruitless iteration, or at the iteration cap.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass

from .config import PipelineConfig
from .coverage import (
    CoverageItem,
    CoverageReport,
    Status,
    compute_score,
    extract_uncovered,
    load_report,
    make_report,
    merge_reports,
    seed_signals,
)
from .errors import (
    BudgetTooSmall,
    EmptyResults,
    NoItems,
    NoSeedsFound,
    SimulatorUnavailable,
    UnparseableResult,
    VCloseError,
)
from .patcher import FilteredDUT, load_templates, patch
from .tracer import DependencySlice, trace_cross_file
from .verilog.model import DesignModel

log = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def estimate_tokens(text: str) -> int:
    # Rough chars/4 heuristic; only relative sizes matter for packing.
    return len(text) // 4 + 1


class CandidateStatus(enum.Enum):
    PROPOSED = "Proposed"
    COMPILE_FAILED = "CompileFailed"
    SIM_FAILED = "SimFailed"
    RAN = "Ran"


_FINAL_STATUSES = (
    CandidateStatus.COMPILE_FAILED,
    CandidateStatus.SIM_FAILED,
    CandidateStatus.RAN,
)


@dataclass(frozen=True)
class PromptBundle:
    uncovered_item: CoverageItem
    filtered_dut_text: str
    entry_ports: tuple[str, ...]
    task_directive: str
    token_estimate: int


@dataclass
class SequenceCandidate:
    id: str
    source_model: str
    target_items: tuple[int, ...]
    body: str
    status: CandidateStatus = CandidateStatus.PROPOSED
    error_log: str = ""

    def resolve(self, status: CandidateStatus, error_log: str = "") -> None:
        if self.status is not CandidateStatus.PROPOSED or status not in _FINAL_STATUSES:
            raise ValueError(
                f"illegal candidate transition {self.status.value} -> {status.value}"
            )
        self.status = status
        self.error_log = error_log


@dataclass(frozen=True)
class WaiverCandidate:
    target_item: int
    justification: str
    proposing_models: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "target_item": self.target_item,
            "justification": self.justification,
            "proposing_models": list(self.proposing_models),
        }


@dataclass
class VerificationReport:
    runs: list[tuple[str, CoverageReport]]
    error_logs: list[str]
    waivers: list[WaiverCandidate]
    final_score: float
    srg: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "final_score": self.final_score,
            "srg": self.srg,
            "waivers": [w.to_dict() for w in self.waivers],
            "runs": [
                {
                    "label": label,
                    "score": report.score,
                    "per_category_scores": {
                        cat.value: pct
                        for cat, pct in report.per_category_scores.items()
                    },
                    "uncovered_ids": [it.id for it in report.uncovered_items()],
                }
                for label, report in self.runs
            ],
            "error_logs": list(self.error_logs),
        }


def serialize_verification_report(report: VerificationReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Prompt assembly


_REPLY_FORMAT = (
    "Reply format: first line exactly SEQUENCE or WAIVER, followed by one "
    "fenced code block holding the sequence body or the unreachability "
    "argument."
)


def _item_text(item: CoverageItem) -> str:
    lines = [
        "Uncovered coverage point:",
        f"  category: {item.category.value}",
        f"  status: {item.status.value}",
        f"  hierarchy: {item.hierarchical_name}",
        f"  location: {item.source[0]}:{item.source[1]}",
    ]
    if item.expression:
        lines.append(f"  expression: {item.expression}")
    if item.detail:
        lines.append(f"  detail: {item.detail}")
    return "\n".join(lines)


def _ports_text(entry_ports) -> str:
    if not entry_ports:
        return "Reachable entry ports: (none found)"
    return "Reachable entry ports: " + ", ".join(entry_ports)


def _render_text(fixed: str, dut_text: str) -> str:
    item_part, ports_part, directive = fixed.split("\n\n", 2)
    return (
        f"{item_part}\n\n{ports_part}\n\n"
        f"Filtered design:\n```verilog\n{dut_text}\n```\n\n{directive}\n"
    )


def _module_of_item(item: CoverageItem, model: DesignModel) -> str | None:
    from .coverage import _resolve_source_file

    path = _resolve_source_file(model, item.source[0])
    if path is None:
        return None
    for mod in model.modules_in_file(path):
        if mod.span.line_start <= item.source[1] <= mod.span.line_end:
            return mod.name
    return None


def _truncate_at_statement(text: str, limit_tokens: int) -> str:
    """Largest line-prefix within budget, cut back to a construct end."""
    lines = text.split("\n")
    kept: list[str] = []
    used = 0
    for line in lines:
        cost = estimate_tokens(line + "\n")
        if used + cost > limit_tokens:
            break
        kept.append(line)
        used += cost
    while kept and not kept[-1].rstrip().endswith(
        (";", "end", "endcase", "endmodule")
    ):
        kept.pop()
    return "\n".join(kept)


def assemble_prompt(
    item: CoverageItem,
    slice_: DependencySlice,
    fdut: FilteredDUT,
    budget: int,
    model: DesignModel | None = None,
) -> PromptBundle:
    """Pack the filtered design around the item within the token budget.

    The whole filtered design is included when it fits; otherwise the
    item's own module comes first and neighbours follow in dependency
    order, the last one truncated at a statement boundary.
    """
    entry_ports = tuple(sorted(fdut.entry_ports))
    directive = (
        "Task: produce stimuli that reach the point above, or argue that "
        "it is unreachable. " + _REPLY_FORMAT
    )
    fixed = "\n\n".join([_item_text(item), _ports_text(entry_ports), directive])
    # +4 absorbs the per-piece rounding of the chars/4 estimate, keeping
    # the assembled bundle provably at or under budget.
    overhead = estimate_tokens(_render_text(fixed, "")) + 4
    module_budget = budget - overhead

    order = list(fdut.module_order)
    full_text = "\n".join(fdut.module_texts[name] for name in order)
    if estimate_tokens(full_text) <= module_budget:
        dut_text = full_text
    else:
        own = _module_of_item(item, model) if model is not None else None
        if own in order:
            order.remove(own)
            order.insert(0, own)
        parts: list[str] = []
        used = 0
        if order:
            first = fdut.module_texts[order[0]]
            used = estimate_tokens(first)
            if used > module_budget:
                raise BudgetTooSmall(
                    f"context budget {budget} cannot fit module '{order[0]}'"
                )
            parts.append(first)
            for name in order[1:]:
                text = fdut.module_texts[name]
                cost = estimate_tokens(text)
                if used + cost <= module_budget:
                    parts.append(text)
                    used += cost
                else:
                    truncated = _truncate_at_statement(text, module_budget - used)
                    if truncated:
                        parts.append(truncated)
                    break
        dut_text = "\n".join(parts)
        while estimate_tokens(_render_text(fixed, dut_text)) > budget:
            if "\n" not in dut_text:
                raise BudgetTooSmall(f"context budget {budget} too small")
            dut_text = dut_text.rsplit("\n", 1)[0]
    return PromptBundle(
        uncovered_item=item,
        filtered_dut_text=dut_text,
        entry_ports=entry_ports,
        task_directive=directive,
        token_estimate=estimate_tokens(_render_text(fixed, dut_text)),
    )


def render_prompt(bundle: PromptBundle) -> str:
    fixed = "\n\n".join(
        [
            _item_text(bundle.uncovered_item),
            _ports_text(bundle.entry_ports),
            bundle.task_directive,
        ]
    )
    return _render_text(fixed, bundle.filtered_dut_text)


def repair_prompt(base_prompt: str, body: str, error_text: str) -> str:
    return (
        base_prompt
        + "\nYour previous sequence:\n```\n"
        + body
        + "\n```\nfailed with:\n"
        + error_text
        + "\nProvide a corrected reply in the same format.\n"
    )


def parse_feedback_prompt(base_prompt: str, reply: str) -> str:
    return (
        base_prompt
        + "\nYour previous reply could not be parsed:\n```\n"
        + reply.strip()
        + "\n```\n"
        + _REPLY_FORMAT
        + "\n"
    )


# ---------------------------------------------------------------------------
# Reply parsing


def parse_reply(text: str):
    """Parse an LLM reply into ("sequence"|"waiver", payload) or None."""
    lines = text.strip().splitlines()
    if not lines:
        return None
    kind = lines[0].strip().upper()
    if kind not in ("SEQUENCE", "WAIVER"):
        return None
    m = _FENCE_RE.search(text)
    if not m:
        return None
    return ("sequence" if kind == "SEQUENCE" else "waiver", m.group(1))


# ---------------------------------------------------------------------------
# The loop


def refine(
    design: DesignModel,
    report: CoverageReport,
    llms,
    sim,
    config: PipelineConfig | None = None,
) -> VerificationReport:
    """Drive coverage toward the target score. See module docstring.

    llms is a list of LLM clients (three in the intended deployment);
    sim is a runner with run(sequence_body, run_label) -> SimOutcome.
    """
    config = config or PipelineConfig()
    config.check()
    if sim is None:
        raise SimulatorUnavailable("no simulator runner supplied")
    if not llms:
        raise VCloseError("refine needs at least one LLM client")
    templates = load_templates()

    current = report
    runs: list[tuple[str, CoverageReport]] = [("baseline", current)]
    error_logs: list[str] = []
    waivers: dict[int, WaiverCandidate] = {}
    deferred: set[int] = set()
    candidate_seq = 0

    for iteration in range(1, config.max_iters + 1):
        if _score_excluding(current, waivers) >= config.target_score:
            break
        batch = _schedule_items(current, waivers, deferred, config.points_per_iter)
        if not batch:
            break
        improved = False
        for item in batch:
            prompt = _prepare_prompt(item, design, templates, config, error_logs)
            if prompt is None:
                deferred.add(item.id)
                continue
            waiver_models: list[tuple[str, str]] = []
            ran_deltas: list[str] = []
            any_reply = False
            for client in llms:
                candidate_seq += 1
                outcome = _drive_model(
                    client,
                    prompt,
                    item,
                    f"i{iteration}.{item.id}.{client.label}",
                    f"c{candidate_seq}",
                    sim,
                    config,
                    error_logs,
                )
                if outcome is None:
                    continue
                any_reply = True
                kind, payload = outcome
                if kind == "waiver":
                    waiver_models.append((client.label, payload))
                elif kind == "ran":
                    ran_deltas.append(payload)
            if not any_reply:
                deferred.add(item.id)
                error_logs.append(
                    f"item {item.id}: no usable reply from any model; deferred"
                )
                continue
            for delta_path in ran_deltas:
                delta = load_report(delta_path)
                merged = merge_reports(current, delta, run_label=current.run_label)
                if merged.items != current.items:
                    improved = True
                current = merged
            item_now = _status_of(current, item.id)
            if (
                len(waiver_models) >= config.waiver_quorum
                and item_now is not Status.COVERED
            ):
                waivers[item.id] = WaiverCandidate(
                    target_item=item.id,
                    justification=waiver_models[0][1].strip(),
                    proposing_models=tuple(sorted(m for m, _ in waiver_models)),
                )
                improved = True
        current = make_report(current.items, run_label=f"iter{iteration}")
        runs.append((f"iter{iteration}", current))
        if not improved:
            break

    # A delta raised for one item may have covered a waived one; waivers
    # never stand for items the final run covers.
    final_waivers = sorted(
        (
            w
            for w in waivers.values()
            if _status_of(current, w.target_item) is not Status.COVERED
        ),
        key=lambda w: w.target_item,
    )
    return VerificationReport(
        runs=runs,
        error_logs=error_logs,
        waivers=final_waivers,
        final_score=_score_excluding(
            current, {w.target_item: w for w in final_waivers}
        ),
        srg=None,
    )


def _prepare_prompt(item, design, templates, config, error_logs) -> str | None:
    try:
        seeds = seed_signals(item, design)
        slice_ = trace_cross_file(seeds, design)
        fdut = patch(slice_, design, templates)
        bundle = assemble_prompt(
            item, slice_, fdut, config.context_budget, model=design
        )
    except (NoSeedsFound, UnparseableResult, BudgetTooSmall) as exc:
        log.warning("item %d skipped: %s", item.id, exc)
        error_logs.append(f"item {item.id}: {exc}")
        return None
    return render_prompt(bundle)


def _drive_model(
    client, prompt, item, run_label, candidate_id, sim, config, error_logs
):
    """One model's shot at one item.

    Returns ("waiver", justification), ("ran", delta_path), ("noop", "")
    for a run that produced no delta, or None when the model contributed
    nothing usable. At most 1 + repair_attempts completions are issued.
    """
    repairs_left = config.repair_attempts
    try:
        reply = client.complete(prompt, {})
    except VCloseError as exc:
        error_logs.append(f"item {item.id} model {client.label}: {exc}")
        return None
    parsed = parse_reply(reply)
    if parsed is None and repairs_left > 0:
        repairs_left -= 1
        try:
            reply = client.complete(parse_feedback_prompt(prompt, reply), {})
        except VCloseError as exc:
            error_logs.append(f"item {item.id} model {client.label}: {exc}")
            return None
        parsed = parse_reply(reply)
    if parsed is None:
        error_logs.append(
            f"item {item.id} model {client.label}: unparseable reply"
        )
        return None
    kind, payload = parsed
    if kind == "waiver":
        return ("waiver", payload)

    candidate = SequenceCandidate(
        id=candidate_id,
        source_model=client.label,
        target_items=(item.id,),
        body=payload,
    )
    outcome = sim.run(candidate.body, run_label)
    candidate.resolve(*_to_status(outcome))
    if candidate.status is CandidateStatus.RAN:
        if outcome.coverage_delta_path:
            return ("ran", outcome.coverage_delta_path)
        return ("noop", "")
    error_logs.append(
        f"item {item.id} model {client.label}: {candidate.status.value}: "
        f"{candidate.error_log}"
    )
    if repairs_left <= 0:
        return None
    try:
        reply = client.complete(
            repair_prompt(prompt, candidate.body, candidate.error_log), {}
        )
    except VCloseError as exc:
        error_logs.append(f"item {item.id} model {client.label}: {exc}")
        return None
    parsed = parse_reply(reply)
    if parsed is None:
        error_logs.append(
            f"item {item.id} model {client.label}: unparseable repair reply"
        )
        return None
    kind, payload = parsed
    if kind == "waiver":
        return ("waiver", payload)
    repaired = SequenceCandidate(
        id=candidate_id + "r",
        source_model=client.label,
        target_items=(item.id,),
        body=payload,
    )
    outcome = sim.run(repaired.body, run_label + "r")
    repaired.resolve(*_to_status(outcome))
    if repaired.status is CandidateStatus.RAN:
        if outcome.coverage_delta_path:
            return ("ran", outcome.coverage_delta_path)
        return ("noop", "")
    error_logs.append(
        f"item {item.id} model {client.label}: repair "
        f"{repaired.status.value}: {repaired.error_log}"
    )
    return None


def _to_status(outcome) -> tuple[CandidateStatus, str]:
    if not outcome.compile_ok:
        return CandidateStatus.COMPILE_FAILED, outcome.error_text
    if not outcome.sim_ok:
        return CandidateStatus.SIM_FAILED, outcome.error_text
    return CandidateStatus.RAN, ""


def _schedule_items(report, waivers, deferred, limit) -> list[CoverageItem]:
    """Uncovered items, biggest module cluster first, capped at limit."""
    summary = extract_uncovered(report, budget=max(1, len(report.items)))
    clusters: dict[str, list[int]] = {}
    for (_cat, module), ids in summary.groups.items():
        for item_id in ids:
            if item_id in waivers or item_id in deferred:
                continue
            clusters.setdefault(module, []).append(item_id)
    ordered: list[int] = []
    for module in sorted(clusters, key=lambda m: (-len(clusters[m]), m)):
        ordered.extend(clusters[module])
    return [report.item(i) for i in ordered[:limit]]


def _status_of(report: CoverageReport, item_id: int) -> Status | None:
    try:
        return report.item(item_id).status
    except KeyError:
        return None


def _score_excluding(report: CoverageReport, waivers: dict) -> float:
    items = [it for it in report.items if it.id not in waivers]
    try:
        score, _ = compute_score(make_report(items, run_label=report.run_label))
    except NoItems:
        return 100.0
    return score


# ---------------------------------------------------------------------------
# Success-rate metric


def compute_srg(results) -> float:
    """Share of generations that compiled, simulated, and passed checks."""
    results = list(results)
    if not results:
        raise EmptyResults("no generation results to score")
    good = sum(
        1
        for _, compiled, simulated, checked in results
        if compiled and simulated and checked
    )
    return round(100.0 * good / len(results), 2)
