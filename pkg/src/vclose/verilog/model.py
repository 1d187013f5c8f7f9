"""Statement-level design model for a parsed Verilog subsystem.

The model deliberately stops short of elaboration: statements carry the
signal names they read and write, byte-exact source spans, and parent
links, which is all the slicing and patching layers need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator


class StatementKind(Enum):
    CONTINUOUS_ASSIGN = "ContinuousAssign"
    PROCEDURAL_ASSIGN = "ProceduralAssign"
    ALWAYS_BLOCK = "AlwaysBlock"
    IF_BLOCK = "IfBlock"
    CASE_BLOCK = "CaseBlock"
    CASE_BRANCH = "CaseBranch"
    INSTANCE_CONNECTION = "InstanceConnection"
    DECLARATION = "Declaration"


@dataclass(frozen=True)
class SignalRef:
    """A signal name scoped to the module where it occurs.

    bit_range is (msb, lsb) when the reference names an explicit constant
    slice; plain name references leave it None.
    """

    module: str
    name: str
    bit_range: tuple[int, int] | None = None

    def __str__(self) -> str:
        rng = f"[{self.bit_range[0]}:{self.bit_range[1]}]" if self.bit_range else ""
        return f"{self.module}.{self.name}{rng}"


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line_start: int
    line_end: int
    char_start: int
    char_end: int

    def covers_line(self, line: int) -> bool:
        return self.line_start <= line <= self.line_end


@dataclass
class Statement:
    id: int
    kind: StatementKind
    span: SourceSpan
    reads: frozenset[SignalRef]
    writes: frozenset[SignalRef]
    raw_text: str
    parent_id: int | None = None
    # Construct header text: sensitivity list for always blocks, condition
    # for if blocks, selector for case blocks, label list for case branches.
    header: str | None = None
    # "then" / "else" for direct children of an IfBlock.
    arm: str | None = None
    # "=" or "<=" for assignment statements.
    assign_op: str | None = None

    @property
    def signals(self) -> frozenset[SignalRef]:
        return self.reads | self.writes

    def signal_names(self) -> frozenset[str]:
        return frozenset(r.name for r in self.signals)

    def is_container(self) -> bool:
        return self.kind in (
            StatementKind.ALWAYS_BLOCK,
            StatementKind.IF_BLOCK,
            StatementKind.CASE_BLOCK,
            StatementKind.CASE_BRANCH,
        )


@dataclass
class Port:
    name: str
    direction: str  # input | output | inout
    width: int  # resolved bit width; 0 when not statically known
    range_text: str = ""  # original "[msb:lsb]" text, empty for scalars
    net_type: str = "wire"


@dataclass
class NetDecl:
    """Module-scope net/variable declaration info (for shell synthesis)."""

    name: str
    net_type: str
    range_text: str
    statement_id: int


@dataclass
class PortBinding:
    formal: str | None  # None when positional and the child is a black box
    actual_text: str
    actual_names: frozenset[str]
    statement_id: int  # the per-binding InstanceConnection statement


@dataclass
class Instance:
    name: str
    module: str  # instantiated module name
    statement_id: int  # the container InstanceConnection statement
    bindings: list[PortBinding] = field(default_factory=list)

    def bindings_for(self, formal: str) -> list[PortBinding]:
        return [b for b in self.bindings if b.formal == formal]


@dataclass
class ModuleDef:
    name: str
    file: str
    span: SourceSpan
    ports: list[Port] = field(default_factory=list)
    statements: list[Statement] = field(default_factory=list)
    instances: list[Instance] = field(default_factory=list)
    nets: dict[str, NetDecl] = field(default_factory=dict)
    params: dict[str, str] = field(default_factory=dict)  # name -> value text

    def port(self, name: str) -> Port | None:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def port_names(self) -> frozenset[str]:
        return frozenset(p.name for p in self.ports)

    def input_names(self) -> frozenset[str]:
        return frozenset(p.name for p in self.ports if p.direction in ("input", "inout"))

    def statement(self, stmt_id: int) -> Statement:
        for s in self.statements:
            if s.id == stmt_id:
                return s
        raise KeyError(stmt_id)

    def children_of(self, stmt_id: int | None) -> list[Statement]:
        return [s for s in self.statements if s.parent_id == stmt_id]

    def signal_index(self) -> dict[str, list[Statement]]:
        """Map signal name -> statements referencing it (reads or writes)."""
        index: dict[str, list[Statement]] = {}
        for s in self.statements:
            for name in s.signal_names():
                index.setdefault(name, []).append(s)
        return index


@dataclass
class DesignModel:
    top: str
    modules: dict[str, ModuleDef]
    sources: dict[str, str]  # file path -> original text
    file_order: list[str]
    black_boxes: frozenset[str] = frozenset()

    def module(self, name: str) -> ModuleDef:
        return self.modules[name]

    def iter_modules(self) -> Iterator[ModuleDef]:
        # Deterministic order: file order, then position within the file.
        for path in self.file_order:
            mods = [m for m in self.modules.values() if m.file == path]
            mods.sort(key=lambda m: m.span.char_start)
            yield from mods

    def modules_in_file(self, path: str) -> list[ModuleDef]:
        return [m for m in self.iter_modules() if m.file == path]

    def statement(self, stmt_id: int) -> tuple[ModuleDef, Statement]:
        for mod in self.modules.values():
            for s in mod.statements:
                if s.id == stmt_id:
                    return mod, s
        raise KeyError(stmt_id)

    def all_statements(self) -> Iterator[tuple[ModuleDef, Statement]]:
        for mod in self.iter_modules():
            for s in mod.statements:
                yield mod, s

    def statement_count(self) -> int:
        return sum(len(m.statements) for m in self.modules.values())

    def all_signal_names(self) -> frozenset[str]:
        names: set[str] = set()
        for mod in self.modules.values():
            names.update(mod.port_names())
            for s in mod.statements:
                names.update(s.signal_names())
        return frozenset(names)

    def instances_of(self, module_name: str) -> list[tuple[ModuleDef, Instance]]:
        """All (parent module, instance) pairs instantiating module_name."""
        found = []
        for mod in self.iter_modules():
            for inst in mod.instances:
                if inst.module == module_name:
                    found.append((mod, inst))
        return found

    def statements_at(self, path: str, line: int) -> list[Statement]:
        """Statements whose span covers (path, line), outermost first."""
        hits = []
        for mod in self.modules_in_file(path):
            for s in mod.statements:
                if s.span.covers_line(line):
                    hits.append(s)
        hits.sort(key=lambda s: (s.span.char_end - s.span.char_start), reverse=True)
        return hits

    def to_json_dict(self) -> dict:
        def ref(r: SignalRef) -> dict:
            d = {"module": r.module, "name": r.name}
            if r.bit_range:
                d["bit_range"] = list(r.bit_range)
            return d

        modules = []
        for mod in self.iter_modules():
            modules.append(
                {
                    "name": mod.name,
                    "file": mod.file,
                    "ports": [
                        {
                            "name": p.name,
                            "direction": p.direction,
                            "width": p.width,
                            "range": p.range_text,
                        }
                        for p in mod.ports
                    ],
                    "statements": [
                        {
                            "id": s.id,
                            "kind": s.kind.value,
                            "file": s.span.file,
                            "line_start": s.span.line_start,
                            "line_end": s.span.line_end,
                            "parent_id": s.parent_id,
                            "reads": sorted(str(r) for r in s.reads),
                            "writes": sorted(str(w) for w in s.writes),
                        }
                        for s in mod.statements
                    ],
                    "instances": [
                        {
                            "name": i.name,
                            "module": i.module,
                            "bindings": [
                                {"formal": b.formal, "actual": b.actual_text}
                                for b in i.bindings
                            ],
                        }
                        for i in mod.instances
                    ],
                }
            )
        return {
            "top": self.top,
            "files": list(self.file_order),
            "black_boxes": sorted(self.black_boxes),
            "statement_count": self.statement_count(),
            "modules": modules,
        }
