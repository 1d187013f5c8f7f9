"""Rebuild scattered slice statements into compilable Verilog files.

A dependency slice is a bag of statement ids; printed naively it loses the
module shells, always/case structure, and declarations those statements
rely on. This module regrows exactly that scaffolding from a small library
of construct templates, records per-line provenance back to the original
sources, and re-parses its own output before returning it.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import (
    MixedContext,
    NoTopModule,
    TemplateFormatError,
    TemplateMissing,
    UnparseableResult,
    VerilogSyntaxError,
)
from .tracer import DependencySlice
from .verilog.model import (
    DesignModel,
    Instance,
    ModuleDef,
    PortBinding,
    Statement,
    StatementKind,
)
from .verilog.parser import mask_comments, parse_sources, scan_signal_names

log = logging.getLogger(__name__)

INDENT = "  "


class ConstructKind(Enum):
    MODULE_SHELL = "ModuleShell"
    ALWAYS_BLOCK = "AlwaysBlock"
    CASE_BLOCK = "CaseBlock"
    CONTINUOUS_ASSIGN = "ContinuousAssign"
    INSTANCE_CONNECTION = "InstanceConnection"


_TEMPLATE_FILES = {
    ConstructKind.MODULE_SHELL: "module_shell.tmpl",
    ConstructKind.ALWAYS_BLOCK: "always_block.tmpl",
    ConstructKind.CASE_BLOCK: "case_block.tmpl",
    ConstructKind.CONTINUOUS_ASSIGN: "continuous_assign.tmpl",
    ConstructKind.INSTANCE_CONNECTION: "instance_connection.tmpl",
}

_HOLE_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class PatchTemplate:
    """One construct template: header/footer text around a {{body}} hole."""

    construct_kind: ConstructKind
    header_pattern: str
    footer_pattern: str
    required_context: tuple[str, ...]

    @classmethod
    def from_text(cls, kind: ConstructKind, text: str) -> "PatchTemplate":
        parts = text.split("{{body}}")
        if len(parts) != 2:
            raise TemplateFormatError(
                f"template for {kind.value} must contain exactly one "
                "{{body}} hole"
            )
        header, footer = parts
        holes = {m.group(1) for m in _HOLE_RE.finditer(header + footer)}
        return cls(kind, header, footer, tuple(sorted(holes)))

    def _fill(self, pattern: str, context: dict[str, str]) -> str:
        def sub(m: re.Match) -> str:
            name = m.group(1)
            if name not in context:
                raise TemplateFormatError(
                    f"template for {self.construct_kind.value} needs a value "
                    f"for hole '{name}'"
                )
            return context[name]

        return _HOLE_RE.sub(sub, pattern)

    def header_lines(self, **context: str) -> list[str]:
        return _trim_block(self._fill(self.header_pattern, context))

    def footer_lines(self, **context: str) -> list[str]:
        return _trim_block(self._fill(self.footer_pattern, context))

    def instantiate(self, body: str, **context: str) -> str:
        return self._fill(self.header_pattern, context) + body + self._fill(
            self.footer_pattern, context
        )


def _trim_block(text: str) -> list[str]:
    lines = text.split("\n")
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


class TemplateLibrary:
    """The five construct templates, bundled or overridden from a directory."""

    def __init__(self, templates: dict[ConstructKind, PatchTemplate]):
        self._templates = templates

    def get(self, kind: ConstructKind) -> PatchTemplate:
        tmpl = self._templates.get(kind)
        if tmpl is None:
            raise TemplateMissing(kind.value)
        return tmpl

    def kinds(self) -> list[ConstructKind]:
        return [k for k in ConstructKind if k in self._templates]

    @classmethod
    def load(cls, user_dir: str | Path | None = None) -> "TemplateLibrary":
        templates: dict[ConstructKind, PatchTemplate] = {}
        bundled = resources.files("vclose") / "templates"
        for kind, fname in _TEMPLATE_FILES.items():
            text = None
            if user_dir is not None:
                candidate = Path(user_dir) / fname
                if candidate.is_file():
                    text = candidate.read_text()
            if text is None:
                ref = bundled / fname
                if ref.is_file():
                    text = ref.read_text()
            if text is None:
                continue
            templates[kind] = PatchTemplate.from_text(kind, text)
        return cls(templates)


def load_templates(user_dir: str | Path | None = None) -> TemplateLibrary:
    return TemplateLibrary.load(user_dir)


@dataclass
class FilteredDUT:
    """Reconstructed slice-only source files plus provenance records.

    provenance maps (output path, output line) to the (file, line) of the
    original source the line derives from; statement_lines locates every
    housed slice statement in the output.
    """

    files: list[tuple[str, str]]
    provenance: dict[tuple[str, int], tuple[str, int]]
    statement_lines: dict[int, tuple[str, int]]
    dropped_statements: frozenset[int]
    module_order: list[str] = field(default_factory=list)
    module_texts: dict[str, str] = field(default_factory=dict)
    entry_ports: frozenset[str] = frozenset()

    def text_of(self, path: str) -> str:
        for p, text in self.files:
            if p == path:
                return text
        raise KeyError(path)

    def total_line_count(self) -> int:
        return sum(len(text.split("\n")) for _, text in self.files)

    def to_json_dict(self) -> dict:
        return {
            "files": [p for p, _ in self.files],
            "provenance": {
                f"{p}:{ln}": [of, ol]
                for (p, ln), (of, ol) in sorted(self.provenance.items())
            },
            "statements": {
                str(sid): [p, ln]
                for sid, (p, ln) in sorted(self.statement_lines.items())
            },
            "dropped": sorted(self.dropped_statements),
            "modules": list(self.module_order),
            "entry_ports": sorted(self.entry_ports),
        }


# -- fragment classification --------------------------------------------------

_CONTAINER_CONSTRUCTS = {
    StatementKind.ALWAYS_BLOCK: ConstructKind.ALWAYS_BLOCK,
    StatementKind.CASE_BLOCK: ConstructKind.CASE_BLOCK,
    StatementKind.CASE_BRANCH: ConstructKind.CASE_BLOCK,
    StatementKind.INSTANCE_CONNECTION: ConstructKind.INSTANCE_CONNECTION,
}

_TOP_LEVEL_CONSTRUCTS = {
    StatementKind.CONTINUOUS_ASSIGN: ConstructKind.CONTINUOUS_ASSIGN,
    StatementKind.INSTANCE_CONNECTION: ConstructKind.INSTANCE_CONNECTION,
    StatementKind.ALWAYS_BLOCK: ConstructKind.ALWAYS_BLOCK,
    StatementKind.DECLARATION: ConstructKind.MODULE_SHELL,
}


def classify_fragment(group, model: DesignModel) -> ConstructKind:
    """Construct kind of the nearest enclosing structure shared by a group.

    Unsliced if blocks are transparent here: an assignment inside an if
    inside an always classifies as AlwaysBlock. Groups spanning unrelated
    enclosing blocks (or several modules) raise MixedContext so the caller
    can split them.
    """
    ids = sorted(group)
    if not ids:
        raise MixedContext("cannot classify an empty statement group")
    located = [model.statement(sid) for sid in ids]
    files = {mod.file for mod, _ in located}
    if len(files) > 1:
        raise MixedContext(f"statements span files {sorted(files)}")
    mod_names = {mod.name for mod, _ in located}
    if len(mod_names) > 1:
        raise MixedContext(f"statements span modules {sorted(mod_names)}")
    mod = located[0][0]
    by_id = {s.id: s for s in mod.statements}

    def chain(s: Statement) -> list[Statement]:
        out = [s]
        while out[-1].parent_id is not None:
            out.append(by_id[out[-1].parent_id])
        return out

    chains = [chain(s) for _, s in located]
    if len(chains) == 1:
        own = chains[0][0]
        found = _enclosing_construct(chains[0][1:])
        if found is not None:
            return found
        kind = _TOP_LEVEL_CONSTRUCTS.get(own.kind)
        return kind if kind is not None else ConstructKind.MODULE_SHELL

    rooted = [list(reversed(c)) for c in chains]
    common: Statement | None = None
    for level in zip(*rooted):
        if len({s.id for s in level}) == 1:
            common = level[0]
        else:
            break
    if common is None:
        if all(len(c) == 1 for c in chains):
            return ConstructKind.MODULE_SHELL
        raise MixedContext("statements do not share an enclosing construct")
    found = _enclosing_construct(chain(common))
    if found is not None:
        return found
    kind = _TOP_LEVEL_CONSTRUCTS.get(common.kind)
    return kind if kind is not None else ConstructKind.MODULE_SHELL


def _enclosing_construct(ancestors) -> ConstructKind | None:
    for a in ancestors:
        kind = _CONTAINER_CONSTRUCTS.get(a.kind)
        if kind is not None:
            return kind
    return None


# -- sensitivity recovery ------------------------------------------------------

_CLOCKISH = re.compile(r"(clk|clock|ck)", re.IGNORECASE)
_RESETISH = re.compile(r"(rst|reset)", re.IGNORECASE)


def reconstruct_sensitivity(fragment, model: DesignModel) -> str:
    """Sensitivity list for a procedural fragment pulled out of context.

    The enclosing always block's own list is reused verbatim whenever the
    model still has it; otherwise a combinational fragment gets @(*) and a
    fragment with non-blocking assigns gets an edge list inferred from the
    module's clock/reset naming.
    """
    located = [model.statement(sid) for sid in sorted(fragment)]
    mod = located[0][0] if located else None
    nonblocking = False
    for m, s in located:
        by_id = {st.id: st for st in m.statements}
        cursor: Statement | None = s
        while cursor is not None:
            if cursor.kind is StatementKind.ALWAYS_BLOCK:
                if cursor.header:
                    return cursor.header
                break
            cursor = (
                by_id.get(cursor.parent_id)
                if cursor.parent_id is not None
                else None
            )
        if s.assign_op == "<=":
            nonblocking = True
    if not nonblocking:
        return "@(*)"
    # Orphaned non-blocking fragment: borrow an edge list from the module,
    # falling back to name-based clock/reset inference.
    if mod is not None:
        for s in mod.statements:
            if (
                s.kind is StatementKind.ALWAYS_BLOCK
                and s.header
                and "posedge" in s.header
            ):
                return s.header
        names = sorted(
            mod.port_names() | set(mod.nets) | {r.name for st in mod.statements
                                                for r in st.signals}
        )
        clk = next((n for n in names if _CLOCKISH.search(n)), "clk")
        rst = next((n for n in names if _RESETISH.search(n)), None)
        if rst:
            return f"@(posedge {clk} or negedge {rst})"
        return f"@(posedge {clk})"
    return "@(*)"


# -- reconstruction ------------------------------------------------------------


@dataclass
class _Node:
    stmt: Statement
    sliced: bool
    arm: str | None = None
    children: list["_Node"] = field(default_factory=list)


@dataclass
class _OutLine:
    text: str
    prov: tuple[str, int] | None = None
    stmt_id: int | None = None


_CONTEXT_KINDS = (
    StatementKind.ALWAYS_BLOCK,
    StatementKind.CASE_BLOCK,
    StatementKind.CASE_BRANCH,
    StatementKind.INSTANCE_CONNECTION,
)


def _build_tree(mod: ModuleDef, sliced_ids: set[int]) -> list[_Node]:
    """Emission tree for one module: sliced statements plus the container
    context they need, with unsliced if blocks floated out of the chain."""
    by_id = {s.id: s for s in mod.statements}
    nodes: dict[int, _Node] = {}
    roots: list[_Node] = []

    def ensure(stmt: Statement) -> _Node:
        if stmt.id in nodes:
            return nodes[stmt.id]
        node = _Node(stmt, stmt.id in sliced_ids)
        nodes[stmt.id] = node
        arm = stmt.arm
        pid = stmt.parent_id
        while pid is not None:
            parent = by_id[pid]
            keep = parent.id in sliced_ids or parent.kind in _CONTEXT_KINDS
            if keep:
                pnode = ensure(parent)
                node.arm = arm if parent.kind is StatementKind.IF_BLOCK else None
                pnode.children.append(node)
                return node
            # unsliced if block: float this subtree up one level
            arm = parent.arm
            pid = parent.parent_id
        roots.append(node)
        return node

    for stmt in mod.statements:
        if stmt.id in sliced_ids:
            ensure(stmt)

    def sort(node_list: list[_Node]) -> None:
        node_list.sort(key=lambda n: n.stmt.span.char_start)
        for n in node_list:
            sort(n.children)

    sort(roots)
    return roots


def _iter_nodes(roots: list[_Node]):
    stack = list(roots)
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children)


def _first_line_col(source: str, stmt: Statement) -> int:
    line_start = source.rfind("\n", 0, stmt.span.char_start) + 1
    return stmt.span.char_start - line_start


def _reflow(raw: str, first_col: int) -> list[str]:
    """Shift a statement's follow-on lines left by its original column."""
    lines = raw.split("\n")
    out = [lines[0].rstrip()]
    for ln in lines[1:]:
        stripped = ln[:first_col]
        if stripped.strip():
            out.append(ln.rstrip())
        else:
            out.append(ln[first_col:].rstrip())
    return out


def _instance_param_text(container_raw: str) -> str:
    masked = mask_comments(container_raw)
    m = re.search(r"#\s*\(", masked)
    if not m:
        return ""
    depth = 0
    for i in range(m.end() - 1, len(masked)):
        if masked[i] == "(":
            depth += 1
        elif masked[i] == ")":
            depth -= 1
            if depth == 0:
                return re.sub(r"\s+", " ", masked[m.start() : i + 1]).strip()
    return ""


_PARAM_FORMAL_RE = re.compile(r"\.\s*([A-Za-z_][A-Za-z0-9_$]*)\s*\(")


class _ModuleRenderer:
    def __init__(
        self,
        model: DesignModel,
        mod: ModuleDef,
        sliced_ids: set[int],
        templates: TemplateLibrary,
        extra_ports: set[str],
    ):
        self.model = model
        self.mod = mod
        self.sliced_ids = sliced_ids
        self.templates = templates
        self.extra_ports = extra_ports
        self.source = model.sources[mod.file]
        self.binding_of: dict[int, tuple[Instance, PortBinding]] = {}
        self.instance_of: dict[int, Instance] = {}
        for inst in mod.instances:
            self.instance_of[inst.statement_id] = inst
            for b in inst.bindings:
                self.binding_of[b.statement_id] = (inst, b)
        self.roots = _build_tree(mod, sliced_ids)

    # Signal names the emitted text will mention, per module scope.
    def referenced_names(self) -> set[str]:
        names: set[str] = set()
        for node in _iter_nodes(self.roots):
            s = node.stmt
            if s.id in self.binding_of:
                _, b = self.binding_of[s.id]
                names |= set(b.actual_names)
            elif s.id in self.instance_of:
                param = _instance_param_text(s.raw_text)
                if param:
                    formals = set(_PARAM_FORMAL_RE.findall(param))
                    names |= scan_signal_names(param) - formals
            else:
                names |= {r.name for r in s.signals if r.module == self.mod.name}
        return names

    def port_subset(self) -> list:
        referenced = self.referenced_names() | self.extra_ports
        return [p for p in self.mod.ports if p.name in referenced]

    def declared_by_slice(self) -> set[str]:
        out: set[str] = set()
        for node in _iter_nodes(self.roots):
            s = node.stmt
            if node.sliced and s.kind is StatementKind.DECLARATION:
                out |= {w.name for w in s.writes if w.module == self.mod.name}
        return out

    def synth_decls(self, port_names: set[str]) -> list[tuple[int, str, tuple]]:
        """(anchor char, decl text, provenance) for signals the emitted text
        references but neither the port list nor a sliced declaration covers."""
        have = port_names | self.declared_by_slice()
        needed: list[str] = []
        seen = set(have)
        queue = sorted(self.referenced_names() - have)
        while queue:
            name = queue.pop(0)
            if name in seen:
                continue
            seen.add(name)
            needed.append(name)
            decl = self.mod.nets.get(name)
            if decl is not None:
                more = scan_signal_names(decl.range_text)
                if decl.net_type in ("parameter", "localparam"):
                    more |= scan_signal_names(self.mod.params.get(name, ""))
                queue.extend(sorted(more - seen))
        out = []
        for name in needed:
            decl = self.mod.nets.get(name)
            if decl is None:
                log.warning(
                    "%s: no declaration found for '%s'; defaulting to 1-bit wire",
                    self.mod.name,
                    name,
                )
                out.append((-1, f"wire {name};", None))
                continue
            rng = f" {decl.range_text}" if decl.range_text else ""
            if decl.net_type in ("parameter", "localparam"):
                value = self.mod.params.get(name) or "0"
                text = f"localparam{rng} {name} = {value};"
            elif decl.net_type in ("integer", "real", "time", "genvar", "event"):
                text = f"{decl.net_type} {name};"
            else:
                text = f"{decl.net_type}{rng} {name};"
            anchor_stmt = self.mod.statement(decl.statement_id)
            out.append(
                (
                    anchor_stmt.span.char_start,
                    text,
                    (self.mod.file, anchor_stmt.span.line_start),
                )
            )
        out.sort(key=lambda t: (t[0], t[1]))
        return out

    def render(self) -> list[_OutLine]:
        ports = self.port_subset()
        port_names = {p.name for p in ports}
        decls = self.synth_decls(port_names)

        shell = self.templates.get(ConstructKind.MODULE_SHELL)
        port_list = ",\n".join(INDENT + _port_decl(p) for p in ports)
        lines: list[_OutLine] = []
        header = shell.header_lines(module_name=self.mod.name, port_list=port_list)
        for i, text in enumerate(header):
            prov = (self.mod.file, self.mod.span.line_start) if i == 0 else None
            lines.append(_OutLine(text, prov))

        items: list[tuple[int, int, object]] = []
        for anchor, text, prov in decls:
            items.append((anchor, 0, (text, prov)))
        for node in self.roots:
            items.append((node.stmt.span.char_start, 1, node))
        items.sort(key=lambda t: (t[0], t[1]))

        body: list[_OutLine] = []
        prev_decl = True
        for _, tag, payload in items:
            is_decl = tag == 0 or payload.stmt.kind is StatementKind.DECLARATION
            if body and not (prev_decl and is_decl):
                body.append(_OutLine(""))
            if tag == 0:
                text, prov = payload
                body.append(_OutLine(INDENT + text, prov))
            else:
                body.extend(self.render_node(payload, 1))
            prev_decl = is_decl
        lines.extend(body)

        footer = shell.footer_lines(module_name=self.mod.name, port_list=port_list)
        for i, text in enumerate(footer):
            prov = (
                (self.mod.file, self.mod.span.line_end)
                if i == len(footer) - 1
                else None
            )
            lines.append(_OutLine(text, prov))
        return lines

    # -- per-construct rendering ------------------------------------------

    def render_node(self, node: _Node, depth: int) -> list[_OutLine]:
        kind = node.stmt.kind
        if kind is StatementKind.ALWAYS_BLOCK:
            return self._render_always(node, depth)
        if kind is StatementKind.CASE_BLOCK:
            return self._render_case(node, depth)
        if kind is StatementKind.CASE_BRANCH:
            return self._render_branch(node, depth)
        if kind is StatementKind.IF_BLOCK:
            return self._render_if(node, depth)
        if kind is StatementKind.INSTANCE_CONNECTION and node.stmt.id in self.instance_of:
            return self._render_instance(node, depth)
        return self._render_leaf(node, depth)

    def _render_leaf(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        raw_lines = _reflow(s.raw_text, _first_line_col(self.source, s))
        out: list[_OutLine] = []
        if s.kind is StatementKind.CONTINUOUS_ASSIGN:
            tmpl = self.templates.get(ConstructKind.CONTINUOUS_ASSIGN)
            for text in tmpl.header_lines():
                out.append(_OutLine(pad + text))
        for i, text in enumerate(raw_lines):
            out.append(
                _OutLine(
                    pad + text if text.strip() else text,
                    (s.span.file, s.span.line_start + i),
                    s.id if i == 0 else None,
                )
            )
        if s.kind is StatementKind.CONTINUOUS_ASSIGN:
            tmpl = self.templates.get(ConstructKind.CONTINUOUS_ASSIGN)
            for text in tmpl.footer_lines():
                out.append(_OutLine(pad + text))
        return out

    def _render_children(self, node: _Node, depth: int) -> list[_OutLine]:
        out: list[_OutLine] = []
        for child in node.children:
            out.extend(self.render_node(child, depth))
        return out

    def _render_always(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        sens = s.header
        if not sens:
            fragment = [n.stmt.id for n in _iter_nodes([node]) if n.sliced]
            sens = reconstruct_sensitivity(fragment or [s.id], self.model)
        tmpl = self.templates.get(ConstructKind.ALWAYS_BLOCK)
        out: list[_OutLine] = []
        header = tmpl.header_lines(sensitivity_list=sens)
        for i, text in enumerate(header):
            out.append(
                _OutLine(
                    pad + text,
                    (s.span.file, s.span.line_start) if i == 0 else None,
                    s.id if (i == 0 and node.sliced) else None,
                )
            )
        out.extend(self._render_children(node, depth + 1))
        footer = tmpl.footer_lines(sensitivity_list=sens)
        for i, text in enumerate(footer):
            prov = (s.span.file, s.span.line_end) if i == len(footer) - 1 else None
            out.append(_OutLine(pad + text, prov))
        return out

    def _render_case(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        keyword = s.raw_text.split(None, 1)[0]
        if keyword not in ("case", "casez", "casex"):
            keyword = "case"
        has_default = any(
            c.stmt.kind is StatementKind.CASE_BRANCH and c.stmt.header == "default"
            for c in node.children
        )
        default_arm = "" if has_default else INDENT + "default: ;\n"
        tmpl = self.templates.get(ConstructKind.CASE_BLOCK)
        ctx = {
            "case_keyword": keyword,
            "case_selector": s.header or "",
            "default_arm": default_arm,
        }
        out: list[_OutLine] = []
        header = tmpl.header_lines(**ctx)
        for i, text in enumerate(header):
            out.append(
                _OutLine(
                    pad + text,
                    (s.span.file, s.span.line_start) if i == 0 else None,
                    s.id if (i == 0 and node.sliced) else None,
                )
            )
        out.extend(self._render_children(node, depth + 1))
        footer = tmpl.footer_lines(**ctx)
        for i, text in enumerate(footer):
            prov = (s.span.file, s.span.line_end) if i == len(footer) - 1 else None
            out.append(_OutLine(pad + text, prov))
        return out

    def _render_branch(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        label = s.header or "default"
        sid = s.id if node.sliced else None
        if not node.children:
            return [_OutLine(f"{pad}{label}: ;", (s.span.file, s.span.line_start), sid)]
        out = [
            _OutLine(f"{pad}{label}: begin", (s.span.file, s.span.line_start), sid)
        ]
        out.extend(self._render_children(node, depth + 1))
        out.append(_OutLine(pad + "end", (s.span.file, s.span.line_end)))
        return out

    def _render_if(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        cond = s.header or ""
        sid = s.id if node.sliced else None
        then_kids = [c for c in node.children if c.arm != "else"]
        else_kids = [c for c in node.children if c.arm == "else"]
        if not then_kids and not else_kids:
            return [
                _OutLine(f"{pad}if ({cond}) ;", (s.span.file, s.span.line_start), sid)
            ]
        out = [
            _OutLine(f"{pad}if ({cond}) begin", (s.span.file, s.span.line_start), sid)
        ]
        for child in then_kids:
            out.extend(self.render_node(child, depth + 1))
        if else_kids:
            out.append(_OutLine(pad + "end else begin"))
            for child in else_kids:
                out.extend(self.render_node(child, depth + 1))
        out.append(_OutLine(pad + "end", (s.span.file, s.span.line_end)))
        return out

    def _render_instance(self, node: _Node, depth: int) -> list[_OutLine]:
        s = node.stmt
        pad = INDENT * depth
        inst = self.instance_of[s.id]
        param = _instance_param_text(s.raw_text)
        tmpl = self.templates.get(ConstructKind.INSTANCE_CONNECTION)
        ctx = {
            "module_type": inst.module,
            "param_list": param + " " if param else "",
            "instance_name": inst.name,
        }
        out: list[_OutLine] = []
        header = tmpl.header_lines(**ctx)
        for i, text in enumerate(header):
            out.append(
                _OutLine(
                    pad + text,
                    (s.span.file, s.span.line_start) if i == 0 else None,
                    s.id if (i == 0 and node.sliced) else None,
                )
            )
        kids = node.children
        for i, child in enumerate(kids):
            b_stmt = child.stmt
            _, binding = self.binding_of[b_stmt.id]
            raw = b_stmt.raw_text.strip()
            if raw.startswith(".") and binding.formal:
                text = f".{binding.formal}({binding.actual_text})"
            else:
                text = re.sub(r"\s+", " ", raw)
            comma = "," if i < len(kids) - 1 else ""
            out.append(
                _OutLine(
                    pad + INDENT + text + comma,
                    (b_stmt.span.file, b_stmt.span.line_start),
                    b_stmt.id if child.sliced else None,
                )
            )
        footer = tmpl.footer_lines(**ctx)
        for i, text in enumerate(footer):
            prov = (s.span.file, s.span.line_end) if i == len(footer) - 1 else None
            out.append(_OutLine(pad + text, prov))
        return out


def _port_decl(p) -> str:
    parts = [p.direction or "input", p.net_type or "wire"]
    if p.range_text:
        parts.append(p.range_text)
    parts.append(p.name)
    return " ".join(parts)


def patch(
    slice_: DependencySlice,
    model: DesignModel,
    templates: TemplateLibrary | None = None,
) -> FilteredDUT:
    """Reconstruct a slice into files that parse on their own.

    Every touched module gets a shell with its slice-referenced ports (plus
    the slice's entry ports on the top module), declarations for every
    signal the emitted text mentions, and its sliced statements regrown
    inside whatever always/case/instance context they need.
    """
    if templates is None:
        templates = TemplateLibrary.load()
    slice_ids = set(slice_.all_statement_ids())

    sliced_by_module: dict[str, set[int]] = {}
    for mod in model.iter_modules():
        mine = {s.id for s in mod.statements} & slice_ids
        if mine:
            sliced_by_module[mod.name] = mine

    # Child modules named by sliced bindings must exist in the output so the
    # instances re-resolve; collect the formal ports those bindings target.
    formal_ports: dict[str, set[str]] = {}
    for mod in model.iter_modules():
        for inst in mod.instances:
            if inst.module not in model.modules:
                continue
            for b in inst.bindings:
                if b.statement_id in slice_ids and b.formal:
                    formal_ports.setdefault(inst.module, set()).add(b.formal)

    touched = set(sliced_by_module) | set(formal_ports)
    if not touched:
        raise UnparseableResult("slice holds no statements to reconstruct")

    entry = set(slice_.entry_ports)
    renderers: dict[str, _ModuleRenderer] = {}
    for mod in model.iter_modules():
        if mod.name not in touched:
            continue
        extra = set(formal_ports.get(mod.name, ()))
        if mod.name == model.top:
            extra |= entry
        renderers[mod.name] = _ModuleRenderer(
            model, mod, sliced_by_module.get(mod.name, set()), templates, extra
        )

    files: list[tuple[str, str]] = []
    provenance: dict[tuple[str, int], tuple[str, int]] = {}
    statement_lines: dict[int, tuple[str, int]] = {}
    dropped: set[int] = set()
    module_order: list[str] = []
    module_texts: dict[str, str] = {}

    for path in model.file_order:
        mods = [m for m in model.modules_in_file(path) if m.name in renderers]
        if not mods:
            continue
        file_lines: list[_OutLine] = []
        for mod in mods:
            if file_lines:
                file_lines.append(_OutLine(""))
            start = len(file_lines)
            file_lines.extend(renderers[mod.name].render())
            module_order.append(mod.name)
            module_texts[mod.name] = "\n".join(
                l.text for l in file_lines[start:]
            )
        text = "\n".join(l.text for l in file_lines) + "\n"
        for idx, line in enumerate(file_lines, start=1):
            if line.prov is not None:
                provenance[(path, idx)] = line.prov
            if line.stmt_id is not None:
                statement_lines[line.stmt_id] = (path, idx)
        files.append((path, text))

    for sid in slice_ids:
        if sid not in statement_lines:
            dropped.add(sid)
            log.warning("statement %d could not be housed in the output", sid)

    fdut = FilteredDUT(
        files=files,
        provenance=provenance,
        statement_lines=statement_lines,
        dropped_statements=frozenset(dropped),
        module_order=module_order,
        module_texts=module_texts,
        entry_ports=frozenset(entry),
    )
    _validate(fdut, model, set(renderers))
    return fdut


def _validate(fdut: FilteredDUT, model: DesignModel, touched: set[str]) -> None:
    emitted_children = {
        inst.module
        for name in touched
        for inst in model.module(name).instances
        if inst.module in touched
    }
    roots = sorted(touched - emitted_children)
    if model.top in touched:
        top = model.top
    elif roots:
        top = roots[0]
    else:
        top = sorted(touched)[0]
    try:
        parse_sources(list(fdut.files), top=top)
    except (VerilogSyntaxError, NoTopModule) as exc:
        raise UnparseableResult(
            f"patched output failed to re-parse: {exc}"
        ) from exc
