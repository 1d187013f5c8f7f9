"""Coverage report ingestion, scoring, and seed derivation.

Two input formats are accepted: the toolkit's own line-oriented text
format (the canonical interchange, documented in the README) and a small
HTML table dialect that stands in for tool-generated report pages. Both
normalize into the same immutable CoverageReport value.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from pathlib import Path

from .errors import NoItems, NoSeedsFound, UnrecognizedFormat
from .tracer import SeedSet
from .verilog.model import DesignModel, SignalRef
from .verilog.parser import scan_signal_names

log = logging.getLogger(__name__)


class Category(enum.Enum):
    LINE = "Line"
    BRANCH = "Branch"
    CONDITION = "Condition"
    TOGGLE = "Toggle"
    # Parsed and reported, but never scored.
    FUNCTIONAL_GROUP = "FunctionalGroup"


SCORED_CATEGORIES: tuple[Category, ...] = (
    Category.LINE,
    Category.BRANCH,
    Category.CONDITION,
    Category.TOGGLE,
)

_CATEGORY_ORDER = {cat: i for i, cat in enumerate(Category)}


class Status(enum.Enum):
    COVERED = "Covered"
    UNCOVERED = "Uncovered"
    PARTIAL = "Partial"


# Merge rank: a rerun can only improve an item's standing.
_STATUS_RANK = {Status.UNCOVERED: 0, Status.PARTIAL: 1, Status.COVERED: 2}

# Partial makes no sense for plain line hits or functional points.
_PARTIAL_OK = {Category.BRANCH, Category.CONDITION, Category.TOGGLE}


@dataclass(frozen=True)
class CoverageItem:
    """One scoreable fact from a coverage run."""

    id: int
    category: Category
    hierarchical_name: str
    source: tuple[str, int]
    status: Status
    expression: str = ""
    detail: str = ""

    def __post_init__(self):
        if self.status is Status.PARTIAL and self.category not in _PARTIAL_OK:
            raise ValueError(
                f"Partial status not legal for {self.category.value} items"
            )
        if not self.hierarchical_name:
            raise ValueError("hierarchical_name must be non-empty")

    @property
    def module(self) -> str:
        """Innermost component of the hierarchical path."""
        return self.hierarchical_name.rsplit(".", 1)[-1]

    @property
    def uncovered(self) -> bool:
        return self.status is not Status.COVERED

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "hierarchical_name": self.hierarchical_name,
            "file": self.source[0],
            "line": self.source[1],
            "status": self.status.value,
            "expression": self.expression,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageItem":
        return cls(
            id=int(d["id"]),
            category=Category(d["category"]),
            hierarchical_name=d["hierarchical_name"],
            source=(d["file"], int(d["line"])),
            status=Status(d["status"]),
            expression=d.get("expression", ""),
            detail=d.get("detail", ""),
        )


@dataclass(frozen=True)
class CoverageReport:
    items: tuple[CoverageItem, ...]
    score: float
    per_category_scores: dict[Category, float]
    run_label: str = ""
    malformed_lines: int = field(default=0, compare=False)

    def item(self, item_id: int) -> CoverageItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def uncovered_items(self) -> list[CoverageItem]:
        return [it for it in self.items if it.uncovered]

    def to_json_dict(self) -> dict:
        return {
            "run_label": self.run_label,
            "score": self.score,
            "per_category_scores": {
                cat.value: pct for cat, pct in self.per_category_scores.items()
            },
            "items": [it.to_dict() for it in self.items],
        }


@dataclass(frozen=True)
class UncoveredSummary:
    """Uncovered/Partial items bucketed by (category, module).

    groups holds at most context_budget ids per bucket, ordered by source
    position; overflow records how many more each truncated bucket had.
    """

    groups: dict[tuple[Category, str], tuple[int, ...]]
    context_budget: int
    overflow: dict[tuple[Category, str], int]

    @property
    def empty(self) -> bool:
        return not self.groups

    def all_ids(self) -> frozenset[int]:
        out: set[int] = set()
        for ids in self.groups.values():
            out.update(ids)
        return frozenset(out)

    def to_json_dict(self) -> dict:
        return {
            "context_budget": self.context_budget,
            "groups": [
                {
                    "category": cat.value,
                    "module": module,
                    "item_ids": list(ids),
                    "omitted": self.overflow.get((cat, module), 0),
                }
                for (cat, module), ids in self.groups.items()
            ],
        }


def make_report(
    items, run_label: str = "", malformed_lines: int = 0
) -> CoverageReport:
    """Assemble a report, computing scores when any scored item exists."""
    items = tuple(items)
    if any(it.category in SCORED_CATEGORIES for it in items):
        score, per_cat = _score_items(items)
    else:
        score, per_cat = 0.0, {}
    return CoverageReport(
        items=items,
        score=score,
        per_category_scores=per_cat,
        run_label=run_label,
        malformed_lines=malformed_lines,
    )


# ---------------------------------------------------------------------------
# Parsing


_RUN_HEADER_RE = re.compile(r"#\s*run:\s*(.*\S)")
_LOCATION_RE = re.compile(r"^(.*):(\d+)$")


def parse_report(text: str) -> CoverageReport:
    """Parse either supported format, auto-detected.

    Malformed rows are skipped with a warning and counted on the report;
    an input that matches neither format raises UnrecognizedFormat.
    """
    stripped = text.lstrip()
    if stripped.startswith("<") or "<table" in text.lower():
        rows, label = _read_html(text)
    else:
        rows, label = _read_normalized(text)
    items: list[CoverageItem] = []
    malformed = 0
    for where, fields in rows:
        item = _item_from_fields(len(items), fields, where)
        if item is None:
            malformed += 1
        else:
            items.append(item)
    return make_report(items, run_label=label, malformed_lines=malformed)


def load_report(path) -> CoverageReport:
    return parse_report(Path(path).read_text())


def serialize_report(report: CoverageReport) -> str:
    """Render a report in the normalized text format (parse round-trips)."""
    out = []
    if report.run_label:
        out.append(f"# run: {report.run_label}")
    for it in report.items:
        cols = [
            it.category.value,
            it.status.value,
            it.hierarchical_name,
            f"{it.source[0]}:{it.source[1]}",
            it.expression,
        ]
        if it.detail:
            cols.append(it.detail)
        out.append("\t".join(cols))
    return "\n".join(out) + "\n"


def _read_normalized(text: str) -> tuple[list[tuple[str, list[str]]], str]:
    rows: list[tuple[str, list[str]]] = []
    label = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _RUN_HEADER_RE.match(line)
            if m:
                label = m.group(1)
            continue
        rows.append((f"line {lineno}", raw.split("\t")))
    if rows and all(len(fields) < 2 for _, fields in rows):
        raise UnrecognizedFormat(
            "input is neither the normalized report format nor a coverage table"
        )
    return rows, label


class _CovTableReader(HTMLParser):
    """Pull cell text out of the first <table class="covtable">."""

    def __init__(self):
        super().__init__()
        self.rows: list[list[str]] = []
        self.caption = ""
        self.found_table = False
        self._in_table = False
        self._in_caption = False
        self._row: list[str] | None = None
        self._cell: list[str] | None = None
        self._header_row = False

    def handle_starttag(self, tag, attrs):
        if tag == "table":
            classes = dict(attrs).get("class", "")
            if "covtable" in classes.split():
                self._in_table = True
                self.found_table = True
        elif self._in_table and tag == "caption":
            self._in_caption = True
        elif self._in_table and tag == "tr":
            self._row = []
            self._header_row = False
        elif self._in_table and tag in ("td", "th"):
            self._cell = []
            if tag == "th":
                self._header_row = True

    def handle_endtag(self, tag):
        if tag == "table" and self._in_table:
            self._in_table = False
        elif tag == "caption":
            self._in_caption = False
        elif tag in ("td", "th") and self._cell is not None:
            if self._row is not None:
                self._row.append("".join(self._cell).strip())
            self._cell = None
        elif tag == "tr" and self._row is not None:
            if self._row and not self._header_row:
                self.rows.append(self._row)
            self._row = None

    def handle_data(self, data):
        if self._cell is not None:
            self._cell.append(data)
        elif self._in_caption:
            self.caption += data


def _read_html(text: str) -> tuple[list[tuple[str, list[str]]], str]:
    reader = _CovTableReader()
    reader.feed(text)
    reader.close()
    if not reader.found_table:
        raise UnrecognizedFormat('no <table class="covtable"> in HTML input')
    rows = [(f"row {i}", cells) for i, cells in enumerate(reader.rows, start=1)]
    return rows, reader.caption.strip()


def _item_from_fields(item_id, fields, where) -> CoverageItem | None:
    if len(fields) not in (5, 6):
        log.warning("malformed coverage item at %s: expected 5 columns", where)
        return None
    cat_text, status_text, hier, location, expression = (f.strip() for f in fields[:5])
    detail = fields[5].strip() if len(fields) == 6 else ""
    m = _LOCATION_RE.match(location)
    try:
        category = Category(cat_text)
        status = Status(status_text)
        if m is None:
            raise ValueError(f"bad location '{location}'")
        return CoverageItem(
            id=item_id,
            category=category,
            hierarchical_name=hier,
            source=(m.group(1), int(m.group(2))),
            status=status,
            expression=expression,
            detail=detail,
        )
    except ValueError as exc:
        log.warning("malformed coverage item at %s: %s", where, exc)
        return None


# ---------------------------------------------------------------------------
# Scoring


def compute_score(report: CoverageReport) -> tuple[float, dict[Category, float]]:
    """Per-category hit percentages and their unweighted mean.

    Partial counts as uncovered; FunctionalGroup items are excluded.
    """
    return _score_items(report.items)


def _score_items(items) -> tuple[float, dict[Category, float]]:
    covered: dict[Category, int] = {}
    total: dict[Category, int] = {}
    for it in items:
        if it.category not in SCORED_CATEGORIES:
            continue
        total[it.category] = total.get(it.category, 0) + 1
        if it.status is Status.COVERED:
            covered[it.category] = covered.get(it.category, 0) + 1
    if not total:
        raise NoItems("report has no scoreable coverage items")
    per_cat = {
        cat: round(100.0 * covered.get(cat, 0) / total[cat], 2)
        for cat in SCORED_CATEGORIES
        if cat in total
    }
    score = round(sum(per_cat.values()) / len(per_cat), 2)
    return score, per_cat


# ---------------------------------------------------------------------------
# Uncovered extraction


def extract_uncovered(report: CoverageReport, budget: int) -> UncoveredSummary:
    """Bucket Uncovered/Partial items by (category, module), budgeted."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    buckets: dict[tuple[Category, str], list[CoverageItem]] = {}
    for it in report.items:
        if not it.uncovered:
            continue
        buckets.setdefault((it.category, it.module), []).append(it)
    groups: dict[tuple[Category, str], tuple[int, ...]] = {}
    overflow: dict[tuple[Category, str], int] = {}
    for key in sorted(buckets, key=lambda k: (_CATEGORY_ORDER[k[0]], k[1])):
        members = sorted(buckets[key], key=lambda it: (it.source, it.id))
        groups[key] = tuple(it.id for it in members[:budget])
        if len(members) > budget:
            overflow[key] = len(members) - budget
    return UncoveredSummary(groups=groups, context_budget=budget, overflow=overflow)


def render_uncovered(summary: UncoveredSummary, report: CoverageReport) -> str:
    """Plain-text rendering of a summary, one indented line per item."""
    if summary.empty:
        return "all items covered\n"
    out = []
    for (cat, module), ids in summary.groups.items():
        out.append(f"{cat.value} :: {module}")
        for item_id in ids:
            it = report.item(item_id)
            line = f"  {it.source[0]}:{it.source[1]} {it.status.value}"
            if it.expression:
                line += f" ({it.expression})"
            if it.detail:
                line += f" -- {it.detail}"
            out.append(line)
        omitted = summary.overflow.get((cat, module), 0)
        if omitted:
            out.append(f"  +{omitted} more")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Seed derivation


def seed_signals(item: CoverageItem, model: DesignModel | None = None) -> SeedSet:
    """Derive trace seeds from one uncovered item.

    Toggle items name the signal directly; Branch/Condition items are
    scanned for identifiers; Line items use the statement at the item's
    source location when a model is available, falling back to a scan of
    the detail text.
    """
    if item.category in (Category.BRANCH, Category.CONDITION, Category.TOGGLE):
        names = scan_signal_names(item.expression)
    else:
        names = set()
        if model is not None:
            names = _statement_names(item, model)
        if not names:
            names = scan_signal_names(item.detail) | scan_signal_names(
                item.expression
            )
    if not names:
        raise NoSeedsFound(item.id, "no identifiers in item text")
    if model is None:
        refs = frozenset(SignalRef("", name) for name in sorted(names))
        return SeedSet(signals=refs, origin=item.id)
    seeds = SeedSet.from_names(model, sorted(names), origin=item.id)
    if not seeds.signals:
        raise NoSeedsFound(item.id, "no identifier matched a design signal")
    return seeds


def _statement_names(item: CoverageItem, model: DesignModel) -> set[str]:
    path = _resolve_source_file(model, item.source[0])
    if path is None:
        return set()
    stmts = model.statements_at(path, item.source[1])
    if not stmts:
        return set()
    leaves = [s for s in stmts if not s.is_container()] or stmts
    names: set[str] = set()
    for stmt in leaves:
        names |= stmt.signal_names()
    return names


def _resolve_source_file(model: DesignModel, file_name: str) -> str | None:
    if file_name in model.sources:
        return file_name
    base = Path(file_name).name
    hits = [p for p in model.file_order if Path(p).name == base]
    return hits[0] if hits else None


# ---------------------------------------------------------------------------
# Merging run deltas


def merge_reports(
    base: CoverageReport, delta: CoverageReport, run_label: str | None = None
) -> CoverageReport:
    """Fold a rerun's results into a baseline.

    Items are matched on (category, hierarchy, source, expression); a
    matched item keeps the better of the two statuses. Items only present
    in the delta are appended with fresh ids.
    """
    def key(it: CoverageItem):
        return (it.category, it.hierarchical_name, it.source, it.expression)

    delta_by_key = {key(it): it for it in delta.items}
    merged: list[CoverageItem] = []
    for it in base.items:
        new = delta_by_key.pop(key(it), None)
        if new is not None and _STATUS_RANK[new.status] > _STATUS_RANK[it.status]:
            it = replace(it, status=new.status, detail=new.detail)
        merged.append(it)
    next_id = max((it.id for it in merged), default=-1) + 1
    for it in delta_by_key.values():
        merged.append(replace(it, id=next_id))
        next_id += 1
    label = run_label if run_label is not None else (delta.run_label or base.run_label)
    return make_report(merged, run_label=label)


def report_to_json(report: CoverageReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"
