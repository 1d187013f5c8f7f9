"""Bus-protocol skeleton library and frozen-region enforcement.

Skeleton files are SystemVerilog text with editable spans delimited by
marker comment lines:

    //<<EDIT region-id hint text>>
    ...default content the LLM may replace...
    //<<END region-id>>

The marker lines themselves are frozen, as is everything outside a
marker pair. Specialization sends the skeleton to an LLM client and
accepts the reply only if every frozen byte survives verbatim and in
order.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (
    FrozenRegionViolation,
    ProtocolUnsupported,
    SkeletonFormatError,
)
from .ir import Finding, IRDocument, InterfaceDesc, Protocol

_EDIT_RE = re.compile(r"^\s*//<<EDIT\s+([A-Za-z_][\w-]*)(?:\s+(.*?))?>>\s*$")
_END_RE = re.compile(r"^\s*//<<END\s+([A-Za-z_][\w-]*)>>\s*$")
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


class ComponentKind(enum.Enum):
    INTERFACE = "Interface"
    DRIVER = "Driver"
    MONITOR = "Monitor"
    AGENT = "Agent"


COMPONENT_ORDER = (
    ComponentKind.INTERFACE,
    ComponentKind.DRIVER,
    ComponentKind.MONITOR,
    ComponentKind.AGENT,
)


class RegionKind(enum.Enum):
    FROZEN = "Frozen"
    EDITABLE = "Editable"


@dataclass(frozen=True)
class Region:
    id: str
    kind: RegionKind
    text: str
    hint: str = ""


@dataclass(frozen=True)
class Skeleton:
    protocol: Protocol
    component_kind: ComponentKind
    body: str
    regions: tuple[Region, ...]

    @property
    def name(self) -> str:
        return f"{self.protocol.value.lower()}/{self.component_kind.value.lower()}"

    def frozen_regions(self) -> list[Region]:
        return [r for r in self.regions if r.kind is RegionKind.FROZEN]

    def editable_regions(self) -> list[Region]:
        return [r for r in self.regions if r.kind is RegionKind.EDITABLE]


@dataclass(frozen=True)
class SpecializedComponent:
    skeleton_id: str
    output_text: str
    region_fills: dict[str, str]
    attempts: int

    def to_dict(self) -> dict:
        return {
            "skeleton_id": self.skeleton_id,
            "attempts": self.attempts,
            "region_fills": dict(self.region_fills),
            "output_text": self.output_text,
        }


# ---------------------------------------------------------------------------
# Parsing and tiling


def parse_regions(body: str) -> tuple[Region, ...]:
    """Partition a skeleton body into alternating frozen/editable regions.

    Marker lines stay inside the surrounding frozen text, so the regions
    tile the body exactly: concatenating their texts reproduces it.
    """
    regions: list[Region] = []
    frozen_buf: list[str] = []
    editable: tuple[str, str] | None = None  # (id, hint)
    editable_buf: list[str] = []
    seen_ids: set[str] = set()
    frozen_count = 0

    def flush_frozen():
        nonlocal frozen_count
        if frozen_buf:
            regions.append(
                Region(f"f{frozen_count}", RegionKind.FROZEN, "".join(frozen_buf))
            )
            frozen_count += 1
            frozen_buf.clear()

    for line in body.splitlines(keepends=True):
        start = _EDIT_RE.match(line)
        stop = _END_RE.match(line)
        if start:
            if editable is not None:
                raise SkeletonFormatError(
                    f"editable region '{start.group(1)}' opened inside "
                    f"'{editable[0]}'"
                )
            region_id, hint = start.group(1), start.group(2) or ""
            if region_id in seen_ids:
                raise SkeletonFormatError(f"duplicate region id '{region_id}'")
            seen_ids.add(region_id)
            frozen_buf.append(line)
            flush_frozen()
            editable = (region_id, hint)
        elif stop:
            if editable is None or stop.group(1) != editable[0]:
                raise SkeletonFormatError(
                    f"unmatched end marker for region '{stop.group(1)}'"
                )
            regions.append(
                Region(editable[0], RegionKind.EDITABLE, "".join(editable_buf), editable[1])
            )
            editable = None
            editable_buf.clear()
            frozen_buf.append(line)
        elif editable is not None:
            editable_buf.append(line)
        else:
            frozen_buf.append(line)
    if editable is not None:
        raise SkeletonFormatError(f"editable region '{editable[0]}' never closed")
    flush_frozen()
    return tuple(regions)


def validate_tiling(skeleton: Skeleton) -> None:
    joined = "".join(r.text for r in skeleton.regions)
    if joined != skeleton.body:
        raise SkeletonFormatError(
            f"regions of '{skeleton.name}' do not tile its body"
        )
    ids = [r.id for r in skeleton.regions]
    if len(ids) != len(set(ids)):
        raise SkeletonFormatError(f"region ids of '{skeleton.name}' not unique")


# ---------------------------------------------------------------------------
# Library


class SkeletonLibrary:
    """Immutable set of skeletons loaded from a protocols directory."""

    def __init__(self, skeletons: dict[tuple[Protocol, ComponentKind], Skeleton]):
        self._skeletons = dict(skeletons)

    @classmethod
    def load(cls, root: str | Path | None = None) -> "SkeletonLibrary":
        """Load `<root>/<protocol>/{interface,driver,monitor,agent}.svt`.

        Every protocol directory must contain exactly the four component
        files and each file must partition cleanly into regions.
        """
        if root is None:
            base = resources.files("vclose") / "protocols"
        else:
            base = Path(root)
        if not base.is_dir():
            raise ProtocolUnsupported(f"protocol library directory '{base}' not found")
        by_name = {p.value.lower(): p for p in Protocol if p is not Protocol.CUSTOM}
        skeletons: dict[tuple[Protocol, ComponentKind], Skeleton] = {}
        for entry in sorted(base.iterdir(), key=lambda e: e.name):
            if not entry.is_dir() or entry.name not in by_name:
                continue
            protocol = by_name[entry.name]
            files = sorted(f.name for f in entry.iterdir() if f.name.endswith(".svt"))
            expected = sorted(k.value.lower() + ".svt" for k in ComponentKind)
            if files != expected:
                raise SkeletonFormatError(
                    f"protocol '{entry.name}' must contain exactly "
                    f"{', '.join(expected)}; found {', '.join(files) or 'nothing'}"
                )
            for kind in ComponentKind:
                body = (entry / (kind.value.lower() + ".svt")).read_text()
                skeleton = Skeleton(protocol, kind, body, parse_regions(body))
                validate_tiling(skeleton)
                skeletons[(protocol, kind)] = skeleton
        return cls(skeletons)

    def protocols(self) -> list[Protocol]:
        return sorted({p for p, _ in self._skeletons}, key=lambda p: p.value)

    def get(self, protocol: Protocol, kind: ComponentKind) -> Skeleton:
        try:
            return self._skeletons[(protocol, kind)]
        except KeyError:
            raise ProtocolUnsupported(
                f"library has no {kind.value} skeleton for protocol "
                f"'{protocol.value}'"
            ) from None

    def for_protocol(self, protocol: Protocol) -> list[Skeleton]:
        return [self.get(protocol, kind) for kind in COMPONENT_ORDER]

    def __len__(self) -> int:
        return len(self._skeletons)


def select_skeletons(
    ir: IRDocument, library: SkeletonLibrary
) -> tuple[list[Skeleton], list[Finding]]:
    """Pick the four component skeletons for every standard-bus interface."""
    selected: list[Skeleton] = []
    findings: list[Finding] = []
    for iface in ir.interfaces:
        if iface.protocol is Protocol.CUSTOM:
            findings.append(
                Finding(
                    "warning",
                    "INTERFACES",
                    f"interface '{iface.name}' uses a custom protocol; "
                    "no skeletons available",
                )
            )
            continue
        selected.extend(library.for_protocol(iface.protocol))
    return selected, findings


# ---------------------------------------------------------------------------
# Frozen-region enforcement


def verify_frozen_regions(skeleton: Skeleton, output: str) -> list[str]:
    """Return ids of frozen regions the output does not preserve.

    Frozen texts are anchored in order; a region is violated if its text
    is missing (deleted or mutated), out of order relative to a
    neighbour, overlapping one, or if stray text precedes the first /
    follows the last frozen region where the skeleton allows none.
    """
    frozen = skeleton.frozen_regions()
    if not frozen:
        return []
    placements: list[tuple[Region, int]] = []
    cursor = 0
    for reg in frozen:
        idx = output.find(reg.text, cursor)
        if idx >= 0:
            cursor = idx + len(reg.text)
        else:
            idx = output.find(reg.text)
        placements.append((reg, idx))

    violated: dict[str, None] = {}
    for reg, idx in placements:
        if idx < 0:
            violated[reg.id] = None
    present = [(reg, idx) for reg, idx in placements if idx >= 0]
    for (reg_a, idx_a), (reg_b, idx_b) in zip(present, present[1:]):
        if idx_b < idx_a + len(reg_a.text):
            violated[reg_a.id] = None
            violated[reg_b.id] = None
    if skeleton.regions[0].kind is RegionKind.FROZEN:
        first_reg, first_idx = placements[0]
        if first_idx > 0:
            violated[first_reg.id] = None
    if skeleton.regions[-1].kind is RegionKind.FROZEN:
        last_reg, last_idx = placements[-1]
        if last_idx >= 0 and last_idx + len(last_reg.text) != len(output):
            violated[last_reg.id] = None
    order = {reg.id: i for i, reg in enumerate(frozen)}
    return sorted(violated, key=order.__getitem__)


def extract_fills(skeleton: Skeleton, output: str) -> dict[str, str]:
    """Recover editable-region fills from an accepted output."""
    fills: dict[str, str] = {}
    cursor = 0
    pending: str | None = None
    for reg in skeleton.regions:
        if reg.kind is RegionKind.FROZEN:
            idx = output.index(reg.text, cursor)
            if pending is not None:
                fills[pending] = output[cursor:idx]
                pending = None
            cursor = idx + len(reg.text)
        else:
            pending = reg.id
    if pending is not None:
        fills[pending] = output[cursor:]
    return fills


def reassemble(skeleton: Skeleton, fills: dict[str, str]) -> str:
    """Frozen texts plus fills, in region order; missing fills keep defaults."""
    parts = []
    for reg in skeleton.regions:
        if reg.kind is RegionKind.FROZEN:
            parts.append(reg.text)
        else:
            parts.append(fills.get(reg.id, reg.text))
    return "".join(parts)


# ---------------------------------------------------------------------------
# Specialization


def build_specialization_prompt(
    skeleton: Skeleton, ir: IRDocument, iface: InterfaceDesc | None
) -> str:
    out = [
        f"Specialize this {skeleton.protocol.value} {skeleton.component_kind.value} "
        f"skeleton for the module '{ir.module_name}'.",
        "Rewrite only the spans between //<<EDIT ...>> and //<<END ...>> marker",
        "lines, keep the marker lines, and reproduce every other line exactly.",
        "Reply with the complete file in a single fenced code block.",
        "",
    ]
    if iface is not None:
        out.append(f"Interface '{iface.name}' ({iface.role.value}):")
        for s in iface.signals:
            out.append(f"  signal {s.name} {s.direction} {s.width} {s.role_tag}")
        for base, size in iface.address_ranges:
            out.append(f"  address range 0x{base:02X} size 0x{size:02X}")
        out.append("")
    if ir.registers:
        out.append("Registers:")
        for r in ir.registers:
            out.append(
                f"  {r.name} offset 0x{r.offset:02X} width {r.width} "
                f"reset 0x{r.reset_value:X} access {r.access.value}"
            )
        out.append("")
    editable = skeleton.editable_regions()
    if editable:
        out.append("Editable regions:")
        for reg in editable:
            out.append(f"  {reg.id}: {reg.hint}" if reg.hint else f"  {reg.id}")
        out.append("")
    out.append("Skeleton:")
    out.append("```systemverilog")
    out.append(skeleton.body.rstrip("\n"))
    out.append("```")
    return "\n".join(out) + "\n"


def extract_reply_text(reply: str) -> str:
    """Take the first fenced code block, or the raw reply if none."""
    m = _FENCE_RE.search(reply)
    return m.group(1) if m else reply


def specialize(
    skeleton: Skeleton,
    ir: IRDocument,
    llm,
    attempt_cap: int = 3,
    params: dict | None = None,
) -> SpecializedComponent:
    """Ask the LLM to fill editable regions, enforcing frozen text.

    On a frozen-region violation, the prompt is retried with the
    violation appended, up to attempt_cap attempts.
    """
    iface = next(
        (i for i in ir.interfaces if i.protocol is skeleton.protocol), None
    )
    prompt = build_specialization_prompt(skeleton, ir, iface)
    violated: list[str] = []
    for attempt in range(1, attempt_cap + 1):
        reply = llm.complete(prompt, params or {})
        output = extract_reply_text(reply)
        violated = verify_frozen_regions(skeleton, output)
        if not violated:
            return SpecializedComponent(
                skeleton_id=skeleton.name,
                output_text=output,
                region_fills=extract_fills(skeleton, output),
                attempts=attempt,
            )
        prompt += (
            "\nYour previous reply altered frozen regions: "
            + ", ".join(violated)
            + ". Change only the marked editable spans and reproduce every "
            "other byte exactly.\n"
        )
    raise FrozenRegionViolation(violated, attempts=attempt_cap)
