"""Verification intermediate representation: parse, serialize, validate.

The IR is a sectioned plain-text file with five fixed sections. It names
the unit under verification, describes its bus interfaces and register
map, records timing assumptions, and lists the functional points the
stimuli should eventually reach. Documents are immutable values; all
semantic checking lives in validate_ir so a parsed document can hold
inconsistent data and still be inspected.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateSection, FieldError, MissingSection
from .verilog.model import DesignModel

SECTION_NAMES = ("MODULE", "INTERFACES", "REGISTERS", "TIMING", "FUNCTIONAL")

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_SECTION_RE = re.compile(r"^\[([A-Za-z_]+)\]$")
_KEYVAL_RE = re.compile(r"^([\w-]+):\s*(.*)$")
_TAGS_RE = re.compile(r"^tags\(([^()]*)\)$")


class Protocol(enum.Enum):
    APB = "APB"
    AHB = "AHB"
    AXI = "AXI"
    P_CHANNEL = "PChannel"
    Q_CHANNEL = "QChannel"
    CUSTOM = "Custom"


class InterfaceRole(enum.Enum):
    MANAGER = "manager"
    SUBORDINATE = "subordinate"


class Access(enum.Enum):
    RW = "RW"
    RO = "RO"
    WO = "WO"
    W1C = "W1C"
    LOCKED = "LOCKED"


DIRECTIONS = ("in", "out", "inout")

# IR direction -> Verilog port direction
_PORT_DIRECTION = {"in": "input", "out": "output", "inout": "inout"}


@dataclass(frozen=True)
class IRSignal:
    name: str
    direction: str
    width: int
    role_tag: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "direction": self.direction,
            "width": self.width,
            "role_tag": self.role_tag,
        }


@dataclass(frozen=True)
class InterfaceDesc:
    name: str
    protocol: Protocol
    role: InterfaceRole
    signals: tuple[IRSignal, ...] = ()
    address_ranges: tuple[tuple[int, int], ...] = ()
    annotations: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "protocol": self.protocol.value,
            "role": self.role.value,
            "signals": [s.to_dict() for s in self.signals],
            "address_ranges": [list(r) for r in self.address_ranges],
            "annotations": [list(a) for a in self.annotations],
        }


@dataclass(frozen=True)
class RegisterDesc:
    name: str
    offset: int
    width: int
    reset_value: int
    access: Access

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "offset": self.offset,
            "width": self.width,
            "reset_value": self.reset_value,
            "access": self.access.value,
        }


@dataclass(frozen=True)
class ClockSpec:
    name: str
    period_hint: str | None = None


@dataclass(frozen=True)
class ResetSpec:
    name: str
    active_level: str  # active_high | active_low


@dataclass(frozen=True)
class TimingDesc:
    clocks: tuple[ClockSpec, ...] = ()
    resets: tuple[ResetSpec, ...] = ()
    constraints: tuple[str, ...] = ()
    annotations: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "clocks": [
                {"name": c.name, "period_hint": c.period_hint} for c in self.clocks
            ],
            "resets": [
                {"name": r.name, "active_level": r.active_level} for r in self.resets
            ],
            "constraints": list(self.constraints),
            "annotations": [list(a) for a in self.annotations],
        }


@dataclass(frozen=True)
class FunctionalPoint:
    id: str
    description: str
    tags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "description": self.description, "tags": list(self.tags)}


@dataclass(frozen=True)
class IRDocument:
    module_name: str
    interfaces: tuple[InterfaceDesc, ...] = ()
    registers: tuple[RegisterDesc, ...] = ()
    timing: TimingDesc = TimingDesc()
    functional_points: tuple[FunctionalPoint, ...] = ()
    # Unknown key/value lines, kept as (section, key, value).
    annotations: tuple[tuple[str, str, str], ...] = ()

    def interface(self, name: str) -> InterfaceDesc:
        for iface in self.interfaces:
            if iface.name == name:
                return iface
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "module_name": self.module_name,
            "interfaces": [i.to_dict() for i in self.interfaces],
            "registers": [r.to_dict() for r in self.registers],
            "timing": self.timing.to_dict(),
            "functional_points": [p.to_dict() for p in self.functional_points],
            "annotations": [list(a) for a in self.annotations],
        }


@dataclass(frozen=True)
class Finding:
    severity: str  # error | warning
    section: str
    message: str

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "section": self.section,
            "message": self.message,
        }


def error_findings(findings) -> list[Finding]:
    return [f for f in findings if f.severity == "error"]


# ---------------------------------------------------------------------------
# Parsing


def parse_ir(text: str) -> IRDocument:
    """Parse the sectioned IR text format.

    All five sections must be present exactly once; unknown section
    headers are rejected, unknown `key: value` lines inside known
    sections are preserved as opaque annotations.
    """
    sections = _split_sections(text)
    for name in SECTION_NAMES:
        if name not in sections:
            raise MissingSection(f"required section [{name}] not found")

    doc_annotations: list[tuple[str, str, str]] = []

    module_name = _parse_module(sections["MODULE"], doc_annotations)
    interfaces = _parse_interfaces(sections["INTERFACES"], doc_annotations)
    registers = _parse_registers(sections["REGISTERS"], doc_annotations)
    timing = _parse_timing(sections["TIMING"])
    points = _parse_functional(sections["FUNCTIONAL"], doc_annotations)

    return IRDocument(
        module_name=module_name,
        interfaces=tuple(interfaces),
        registers=tuple(registers),
        timing=timing,
        functional_points=tuple(points),
        annotations=tuple(doc_annotations),
    )


def load_ir(path) -> IRDocument:
    return parse_ir(Path(path).read_text())


def _split_sections(text: str) -> dict[str, list[tuple[int, str]]]:
    """Split into {section: [(lineno, stripped line), ...]}."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            name = m.group(1)
            if name not in SECTION_NAMES:
                raise FieldError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise DuplicateSection(f"section [{name}] appears twice")
            sections[name] = []
            current = name
            continue
        if current is None:
            raise FieldError(f"content before any section header: '{line}'", lineno)
        sections[current].append((lineno, line))
    return sections


def _parse_module(lines, doc_annotations) -> str:
    name = None
    for lineno, line in lines:
        m = _KEYVAL_RE.match(line)
        if not m:
            raise FieldError(f"[MODULE] unrecognized line '{line}'", lineno)
        key, value = m.group(1), m.group(2)
        if key == "name":
            if name is not None:
                raise FieldError("[MODULE] duplicate 'name' field", lineno)
            if not value:
                raise FieldError("[MODULE] empty 'name' field", lineno)
            name = value
        else:
            doc_annotations.append(("MODULE", key, value))
    if name is None:
        raise FieldError("[MODULE] missing required field 'name'")
    return name


def _parse_interfaces(lines, doc_annotations) -> list[InterfaceDesc]:
    interfaces: list[InterfaceDesc] = []
    pending: dict | None = None

    def flush():
        if pending is None:
            return
        if pending["protocol"] is None:
            raise FieldError(
                f"[INTERFACES] interface '{pending['name']}' has no protocol field"
            )
        interfaces.append(
            InterfaceDesc(
                name=pending["name"],
                protocol=pending["protocol"],
                role=pending["role"] or InterfaceRole.SUBORDINATE,
                signals=tuple(pending["signals"]),
                address_ranges=tuple(pending["ranges"]),
                annotations=tuple(pending["annotations"]),
            )
        )

    for lineno, line in lines:
        tokens = line.split()
        if tokens[0] == "interface":
            if len(tokens) != 2:
                raise FieldError("[INTERFACES] expected 'interface <name>'", lineno)
            flush()
            pending = {
                "name": tokens[1],
                "protocol": None,
                "role": None,
                "signals": [],
                "ranges": [],
                "annotations": [],
            }
            continue
        if pending is None:
            m = _KEYVAL_RE.match(line)
            if m:
                doc_annotations.append(("INTERFACES", m.group(1), m.group(2)))
                continue
            raise FieldError(
                f"[INTERFACES] line outside any interface block: '{line}'", lineno
            )
        if tokens[0] == "signal":
            if len(tokens) != 5:
                raise FieldError(
                    "[INTERFACES] expected 'signal <name> <in|out|inout> "
                    "<width> <role-tag>'",
                    lineno,
                )
            _, name, direction, width_text, role_tag = tokens
            if direction not in DIRECTIONS:
                raise FieldError(
                    f"[INTERFACES] bad direction '{direction}' for signal '{name}'",
                    lineno,
                )
            width = _parse_uint(width_text, lineno, "signal width")
            pending["signals"].append(IRSignal(name, direction, width, role_tag))
        elif tokens[0] == "range":
            if len(tokens) != 3:
                raise FieldError("[INTERFACES] expected 'range <base> <size>'", lineno)
            base = _parse_uint(tokens[1], lineno, "range base")
            size = _parse_uint(tokens[2], lineno, "range size")
            pending["ranges"].append((base, size))
        elif tokens[0] == "protocol:":
            value = line.split(":", 1)[1].strip()
            try:
                pending["protocol"] = Protocol(value)
            except ValueError:
                raise FieldError(
                    f"[INTERFACES] unknown protocol '{value}' "
                    f"(expected one of {', '.join(p.value for p in Protocol)})",
                    lineno,
                ) from None
        elif tokens[0] == "role:":
            value = line.split(":", 1)[1].strip()
            try:
                pending["role"] = InterfaceRole(value)
            except ValueError:
                raise FieldError(
                    f"[INTERFACES] unknown role '{value}'", lineno
                ) from None
        else:
            m = _KEYVAL_RE.match(line)
            if m:
                pending["annotations"].append((m.group(1), m.group(2)))
            else:
                raise FieldError(f"[INTERFACES] unrecognized line '{line}'", lineno)
    flush()
    return interfaces


def _parse_registers(lines, doc_annotations) -> list[RegisterDesc]:
    registers: list[RegisterDesc] = []
    for lineno, line in lines:
        tokens = line.split()
        if tokens[0] != "register":
            m = _KEYVAL_RE.match(line)
            if m:
                doc_annotations.append(("REGISTERS", m.group(1), m.group(2)))
                continue
            raise FieldError(f"[REGISTERS] unrecognized line '{line}'", lineno)
        if len(tokens) != 10 or tokens[2::2] != ["offset", "width", "reset", "access"]:
            raise FieldError(
                "[REGISTERS] expected 'register <name> offset <n> width <n> "
                "reset <n> access <mode>'",
                lineno,
            )
        name = tokens[1]
        offset = _parse_uint(tokens[3], lineno, "offset")
        width = _parse_uint(tokens[5], lineno, "width")
        reset_value = _parse_uint(tokens[7], lineno, "reset value")
        try:
            access = Access(tokens[9])
        except ValueError:
            raise FieldError(
                f"[REGISTERS] unknown access mode '{tokens[9]}' "
                f"(expected one of {', '.join(a.value for a in Access)})",
                lineno,
            ) from None
        registers.append(RegisterDesc(name, offset, width, reset_value, access))
    return registers


def _parse_timing(lines) -> TimingDesc:
    clocks: list[ClockSpec] = []
    resets: list[ResetSpec] = []
    constraints: list[str] = []
    annotations: list[tuple[str, str]] = []
    for lineno, line in lines:
        tokens = line.split()
        if tokens[0] == "clock":
            if len(tokens) < 2:
                raise FieldError("[TIMING] expected 'clock <name> [period <hint>]'", lineno)
            hint = None
            if len(tokens) > 2:
                if tokens[2] != "period" or len(tokens) < 4:
                    raise FieldError(
                        "[TIMING] expected 'clock <name> period <hint>'", lineno
                    )
                hint = " ".join(tokens[3:])
            clocks.append(ClockSpec(tokens[1], hint))
        elif tokens[0] == "reset":
            if len(tokens) != 3 or tokens[2] not in ("active_high", "active_low"):
                raise FieldError(
                    "[TIMING] expected 'reset <name> <active_high|active_low>'", lineno
                )
            resets.append(ResetSpec(tokens[1], tokens[2]))
        elif tokens[0] == "constraint":
            constraints.append(line.split(None, 1)[1] if len(tokens) > 1 else "")
        else:
            m = _KEYVAL_RE.match(line)
            if m:
                annotations.append((m.group(1), m.group(2)))
            else:
                raise FieldError(f"[TIMING] unrecognized line '{line}'", lineno)
    return TimingDesc(
        clocks=tuple(clocks),
        resets=tuple(resets),
        constraints=tuple(constraints),
        annotations=tuple(annotations),
    )


def _parse_functional(lines, doc_annotations) -> list[FunctionalPoint]:
    points: list[FunctionalPoint] = []
    for lineno, line in lines:
        tokens = line.split()
        if tokens[0] != "point":
            m = _KEYVAL_RE.match(line)
            if m:
                doc_annotations.append(("FUNCTIONAL", m.group(1), m.group(2)))
                continue
            raise FieldError(f"[FUNCTIONAL] unrecognized line '{line}'", lineno)
        if len(tokens) < 2:
            raise FieldError("[FUNCTIONAL] expected 'point <id> [tags(..)] <text>'", lineno)
        point_id = tokens[1]
        rest = tokens[2:]
        tags: tuple[str, ...] = ()
        if rest and _TAGS_RE.match(rest[0]):
            raw = _TAGS_RE.match(rest[0]).group(1)
            tags = tuple(t.strip() for t in raw.split(",") if t.strip())
            rest = rest[1:]
        points.append(FunctionalPoint(point_id, " ".join(rest), tags))
    return points


def _parse_uint(text: str, lineno: int, what: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise FieldError(f"bad {what} '{text}'", lineno) from None
    if value < 0:
        raise FieldError(f"{what} must be non-negative, got '{text}'", lineno)
    return value


# ---------------------------------------------------------------------------
# Serialization


def serialize_ir(doc: IRDocument) -> str:
    """Canonical text form; parse(serialize(doc)) is structurally equal."""
    out: list[str] = []
    annots = {}
    for section, key, value in doc.annotations:
        annots.setdefault(section, []).append((key, value))

    def emit_annots(section):
        for key, value in annots.get(section, []):
            out.append(f"{key}: {value}")

    out.append("[MODULE]")
    out.append(f"name: {doc.module_name}")
    emit_annots("MODULE")
    out.append("")

    out.append("[INTERFACES]")
    emit_annots("INTERFACES")
    for iface in doc.interfaces:
        out.append(f"interface {iface.name}")
        out.append(f"  protocol: {iface.protocol.value}")
        out.append(f"  role: {iface.role.value}")
        for s in iface.signals:
            out.append(f"  signal {s.name} {s.direction} {s.width} {s.role_tag}")
        for base, size in iface.address_ranges:
            out.append(f"  range 0x{base:02X} 0x{size:02X}")
        for key, value in iface.annotations:
            out.append(f"  {key}: {value}")
    out.append("")

    out.append("[REGISTERS]")
    emit_annots("REGISTERS")
    for r in doc.registers:
        out.append(
            f"register {r.name} offset 0x{r.offset:02X} width {r.width} "
            f"reset 0x{r.reset_value:X} access {r.access.value}"
        )
    out.append("")

    out.append("[TIMING]")
    emit_annots("TIMING")
    for c in doc.timing.clocks:
        out.append(f"clock {c.name}" + (f" period {c.period_hint}" if c.period_hint else ""))
    for r in doc.timing.resets:
        out.append(f"reset {r.name} {r.active_level}")
    for text in doc.timing.constraints:
        out.append(f"constraint {text}")
    for key, value in doc.timing.annotations:
        out.append(f"{key}: {value}")
    out.append("")

    out.append("[FUNCTIONAL]")
    emit_annots("FUNCTIONAL")
    for p in doc.functional_points:
        tag_text = f" tags({','.join(p.tags)})" if p.tags else ""
        out.append(f"point {p.id}{tag_text} {p.description}".rstrip())
    return "\n".join(out) + "\n"


def ir_to_json(doc: IRDocument) -> str:
    return json.dumps(doc.to_json_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation


def validate_ir(doc: IRDocument, model: DesignModel | None = None) -> list[Finding]:
    """Check document invariants; cross-check ports when a model is given.

    Returns findings rather than raising: a document with zero
    error-severity findings satisfies every type invariant.
    """
    findings: list[Finding] = []

    def err(section, message):
        findings.append(Finding("error", section, message))

    def warn(section, message):
        findings.append(Finding("warning", section, message))

    if not _IDENT_RE.match(doc.module_name):
        err("MODULE", f"module name '{doc.module_name}' is not an identifier")

    for iface in doc.interfaces:
        seen_signals: set[str] = set()
        for s in iface.signals:
            if s.width < 1:
                err(
                    "INTERFACES",
                    f"interface '{iface.name}' signal '{s.name}' width "
                    f"{s.width} must be >= 1",
                )
            if s.name in seen_signals:
                err(
                    "INTERFACES",
                    f"interface '{iface.name}' declares signal '{s.name}' twice",
                )
            seen_signals.add(s.name)
        spans = sorted(iface.address_ranges)
        for (base_a, size_a), (base_b, _) in zip(spans, spans[1:]):
            if base_a + size_a > base_b:
                err(
                    "INTERFACES",
                    f"interface '{iface.name}' address ranges overlap at 0x{base_b:X}",
                )

    offsets: dict[int, list[str]] = {}
    for r in doc.registers:
        if r.width < 1:
            err("REGISTERS", f"register '{r.name}' width {r.width} must be >= 1")
        elif r.reset_value >= (1 << r.width):
            err(
                "REGISTERS",
                f"register '{r.name}' reset value 0x{r.reset_value:X} does not "
                f"fit in {r.width} bits",
            )
        offsets.setdefault(r.offset, []).append(r.name)
    for offset, names in sorted(offsets.items()):
        if len(names) > 1:
            err(
                "REGISTERS",
                f"registers {', '.join(names)} share offset 0x{offset:02X}",
            )
    all_ranges = [rng for iface in doc.interfaces for rng in iface.address_ranges]
    if all_ranges:
        for r in doc.registers:
            if not any(base <= r.offset < base + size for base, size in all_ranges):
                warn(
                    "REGISTERS",
                    f"register '{r.name}' offset 0x{r.offset:02X} falls outside "
                    "every interface address range",
                )

    if not doc.timing.clocks and any(
        iface.protocol is not Protocol.CUSTOM for iface in doc.interfaces
    ):
        err("TIMING", "no clock declared but a standard bus interface is present")

    seen_points: set[str] = set()
    for p in doc.functional_points:
        if p.id in seen_points:
            err("FUNCTIONAL", f"functional point id '{p.id}' is not unique")
        seen_points.add(p.id)
        if not p.description:
            warn("FUNCTIONAL", f"functional point '{p.id}' has no description")

    if model is not None:
        findings.extend(_cross_check(doc, model))
    return findings


def _cross_check(doc: IRDocument, model: DesignModel) -> list[Finding]:
    findings: list[Finding] = []
    top = model.modules.get(model.top)
    if top is None:
        return [Finding("error", "MODULE", f"design has no module '{model.top}'")]
    if doc.module_name != top.name:
        findings.append(
            Finding(
                "warning",
                "MODULE",
                f"IR module name '{doc.module_name}' differs from design top "
                f"'{top.name}'",
            )
        )
    for iface in doc.interfaces:
        for s in iface.signals:
            port = top.port(s.name)
            if port is None:
                findings.append(
                    Finding(
                        "error",
                        "INTERFACES",
                        f"interface signal '{s.name}' is not a port of '{top.name}'",
                    )
                )
                continue
            want_dir = _PORT_DIRECTION[s.direction]
            if port.direction != want_dir:
                findings.append(
                    Finding(
                        "error",
                        "INTERFACES",
                        f"signal '{s.name}' declared '{s.direction}' but design "
                        f"port is '{port.direction}'",
                    )
                )
            elif port.width != s.width:
                findings.append(
                    Finding(
                        "error",
                        "INTERFACES",
                        f"signal '{s.name}' declared width {s.width} but design "
                        f"port width is {port.width}",
                    )
                )
    port_names = set(top.port_names())
    for c in doc.timing.clocks:
        if c.name not in port_names:
            findings.append(
                Finding(
                    "warning",
                    "TIMING",
                    f"clock '{c.name}' is not a port of '{top.name}'",
                )
            )
    for r in doc.timing.resets:
        if r.name not in port_names:
            findings.append(
                Finding(
                    "warning",
                    "TIMING",
                    f"reset '{r.name}' is not a port of '{top.name}'",
                )
            )
    return findings
