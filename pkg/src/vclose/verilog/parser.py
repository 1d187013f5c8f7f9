"""Regex/cursor based Verilog-2001 subset parser.

Produces the statement-level DesignModel: no expression trees, no
elaboration. Constructs outside the supported subset (generate blocks,
functions, tasks, initial blocks, loops) are kept as opaque Declaration
statements whose reads are a conservative identifier scan, so slices can
still reference them without the parser understanding their internals.
"""

from __future__ import annotations

import bisect
import itertools
import logging
import re
from pathlib import Path

from ..errors import (
    FileNotReadable,
    NoTopModule,
    TopModuleNotFound,
    UnknownFile,
    VerilogSyntaxError,
)
from .model import (
    DesignModel,
    Instance,
    ModuleDef,
    NetDecl,
    Port,
    PortBinding,
    SignalRef,
    SourceSpan,
    Statement,
    StatementKind,
)

log = logging.getLogger(__name__)

KEYWORDS = frozenset(
    """
    always and assign automatic begin buf bufif0 bufif1 case casex casez cell cmos
    config deassign default defparam design disable edge else end endcase endconfig
    endfunction endgenerate endmodule endprimitive endspecify endtable endtask event
    for force forever fork function generate genvar highz0 highz1 if ifnone incdir
    include initial inout input instance integer join large liblist library localparam
    macromodule medium module nand negedge nmos nor noshowcancelled not notif0 notif1
    or output parameter pmos posedge primitive pull0 pull1 pulldown pullup rcmos real
    realtime reg release repeat rnmos rpmos rtran rtranif0 rtranif1 scalared
    showcancelled signed small specify specparam strong0 strong1 supply0 supply1 table
    task time tran tranif0 tranif1 tri tri0 tri1 triand trior trireg unsigned use
    vectored wait wand weak0 weak1 while wire wor xnor xor
    """.split()
)

DECL_KEYWORDS = frozenset(
    """
    wire reg integer real time realtime event genvar parameter localparam specparam
    supply0 supply1 tri tri0 tri1 triand trior trireg wand wor
    """.split()
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_BASED_LITERAL_RE = re.compile(r"\d*\s*'\s*[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ_?]+")
_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*|.", re.DOTALL)


def mask_comments(text: str) -> str:
    """Replace comment and string-literal interiors with spaces.

    Offsets and newlines are preserved so spans computed on the masked
    text index directly into the original.
    """
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            if j < 0:
                j = n
            else:
                j += 2
            for k in range(i, j):
                if out[k] != "\n":
                    out[k] = " "
            i = j
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            for k in range(i + 1, j - 1):
                if out[k] != "\n":
                    out[k] = " "
            i = j
        else:
            i += 1
    return "".join(out)


def scan_signal_names(text: str) -> set[str]:
    """Identifier names referenced in an expression-like chunk of text.

    Keywords, based literals, system identifiers and compiler directives
    are excluded.
    """
    cleaned = _BASED_LITERAL_RE.sub(" ", text)
    names: set[str] = set()
    for m in _IDENT_RE.finditer(cleaned):
        start = m.start()
        if start > 0 and cleaned[start - 1] in "$`":
            continue
        word = m.group(0)
        if word in KEYWORDS or word.startswith("$"):
            continue
        names.add(word)
    return names


def _split_top_level(text: str, sep: str = ",") -> list[tuple[int, str]]:
    """Split on separators at zero ()/[]/{} depth; yields (offset, chunk)."""
    parts: list[tuple[int, str]] = []
    depth = 0
    start = 0
    for i, c in enumerate(text):
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif c == sep and depth == 0:
            parts.append((start, text[start:i]))
            start = i + 1
    parts.append((start, text[start:]))
    return parts


def _find_assign_op(text: str) -> tuple[int, str] | None:
    """Locate the assignment operator in a statement body.

    The first depth-0 '=' or '<=' scanning left to right is the operator:
    an lvalue cannot contain comparisons.
    """
    depth = 0
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif depth == 0:
            if c == "<" and i + 1 < n and text[i + 1] == "=" and (i + 2 >= n or text[i + 2] != "="):
                return i, "<="
            if c == "=":
                prev = text[i - 1] if i else ""
                nxt = text[i + 1] if i + 1 < n else ""
                if nxt == "=":
                    i += 2
                    continue
                if prev in "<>!=":
                    i += 1
                    continue
                return i, "="
        i += 1
    return None


def _analyze_lvalue(text: str, module: str) -> tuple[set[SignalRef], set[SignalRef]]:
    """Split an lvalue into written base names and read index expressions."""
    writes: set[SignalRef] = set()
    reads: set[SignalRef] = set()
    cleaned = _BASED_LITERAL_RE.sub(" ", text)
    depth = 0
    i = 0
    n = len(cleaned)
    while i < n:
        c = cleaned[i]
        if c == "[":
            depth += 1
            i += 1
        elif c == "]":
            depth -= 1
            i += 1
        elif c.isalpha() or c == "_":
            m = _IDENT_RE.match(cleaned, i)
            word = m.group(0)
            if word not in KEYWORDS and not word.startswith("$"):
                ref = SignalRef(module, word)
                (reads if depth > 0 else writes).add(ref)
            i = m.end()
        else:
            i += 1
    return writes, reads


def _parse_int(text: str) -> int | None:
    text = text.strip()
    if re.fullmatch(r"\d+", text):
        return int(text)
    m = re.fullmatch(r"\d*\s*'\s*[sS]?([bBoOdDhH])\s*([0-9a-fA-F_]+)", text)
    if m:
        base = {"b": 2, "o": 8, "d": 10, "h": 16}[m.group(1).lower()]
        try:
            return int(m.group(2).replace("_", ""), base)
        except ValueError:
            return None
    return None


def _range_width(range_text: str) -> int:
    """Bit width of a '[msb:lsb]' range; 0 when not statically known."""
    m = re.fullmatch(r"\s*\[([^:\]]+):([^\]]+)\]\s*", range_text)
    if not m:
        return 1 if not range_text.strip() else 0
    msb, lsb = _parse_int(m.group(1)), _parse_int(m.group(2))
    if msb is None or lsb is None:
        return 0
    return abs(msb - lsb) + 1


class _ModuleParser:
    """Parses a single module body out of pre-masked source text."""

    def __init__(
        self,
        text: str,
        masked: str,
        path: str,
        line_starts: list[int],
        ids: itertools.count,
    ):
        self.text = text
        self.masked = masked
        self.path = path
        self.line_starts = line_starts
        self.ids = ids
        self.pos = 0
        self.end = len(text)
        self.mod: ModuleDef | None = None

    # -- cursor helpers ----------------------------------------------------

    def _line_of(self, pos: int) -> int:
        # line_starts holds newline offsets; a char belongs to line
        # (number of newlines strictly before it) + 1
        return bisect.bisect_left(self.line_starts, pos) + 1

    def _error(self, message: str, pos: int | None = None) -> VerilogSyntaxError:
        where = self.pos if pos is None else pos
        return VerilogSyntaxError(self.path, self._line_of(where), message)

    def _skip_ws(self) -> None:
        while self.pos < self.end and self.masked[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.masked[self.pos] if self.pos < self.end else ""

    def _peek_word(self) -> str:
        self._skip_ws()
        m = _IDENT_RE.match(self.masked, self.pos)
        return m.group(0) if m and m.start() == self.pos else ""

    def _read_word(self) -> str:
        w = self._peek_word()
        if not w:
            raise self._error("expected identifier")
        self.pos += len(w)
        return w

    def _expect(self, ch: str) -> int:
        if self._peek() != ch:
            raise self._error(f"expected '{ch}'")
        at = self.pos
        self.pos += 1
        return at

    def _read_balanced(self) -> tuple[int, int]:
        """Consume a parenthesized group; returns inner (start, end)."""
        open_at = self._expect("(")
        depth = 1
        i = self.pos
        while i < self.end:
            c = self.masked[i]
            if c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return open_at + 1, i
            i += 1
        raise self._error("unbalanced parentheses", open_at)

    def _find_semicolon(self) -> int:
        depth = 0
        i = self.pos
        while i < self.end:
            c = self.masked[i]
            if c in "([{":
                depth += 1
            elif c in ")]}":
                depth -= 1
            elif c == ";" and depth == 0:
                return i
            i += 1
        raise self._error("missing ';'")

    def _maybe_range(self) -> str:
        if self._peek() != "[":
            return ""
        start = self.pos
        depth = 0
        i = self.pos
        while i < self.end:
            c = self.masked[i]
            if c == "[":
                depth += 1
            elif c == "]":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return self.masked[start : i + 1]
            i += 1
        raise self._error("unbalanced brackets", start)

    # -- statement factory ---------------------------------------------------

    def _make(
        self,
        kind: StatementKind,
        start: int,
        end: int,
        reads: set[SignalRef],
        writes: set[SignalRef],
        parent_id: int | None,
        header: str | None = None,
        arm: str | None = None,
        assign_op: str | None = None,
    ) -> Statement:
        span = SourceSpan(
            file=self.path,
            line_start=self._line_of(start),
            line_end=self._line_of(max(start, end - 1)),
            char_start=start,
            char_end=end,
        )
        stmt = Statement(
            id=next(self.ids),
            kind=kind,
            span=span,
            reads=frozenset(reads),
            writes=frozenset(writes),
            raw_text=self.text[start:end],
            parent_id=parent_id,
            header=header,
            arm=arm,
            assign_op=assign_op,
        )
        self.mod.statements.append(stmt)
        return stmt

    def _reseat(self, stmt: Statement, start: int, end: int) -> None:
        stmt.span = SourceSpan(
            file=self.path,
            line_start=self._line_of(start),
            line_end=self._line_of(max(start, end - 1)),
            char_start=start,
            char_end=end,
        )
        stmt.raw_text = self.text[start:end]

    def _refs(self, names: set[str]) -> set[SignalRef]:
        return {SignalRef(self.mod.name, n) for n in names}

    # -- module parsing ------------------------------------------------------

    def parse_module(self, start: int, end: int) -> ModuleDef:
        self.pos = start
        self.end = end
        if self._read_word() != "module":
            raise self._error("expected 'module'")
        name = self._read_word()
        self.mod = ModuleDef(
            name=name,
            file=self.path,
            span=SourceSpan(
                self.path, self._line_of(start), self._line_of(end - 1), start, end
            ),
        )
        if self._peek() == "#":
            self.pos += 1
            p0, p1 = self._read_balanced()
            self._parse_header_params(self.masked[p0:p1])
        if self._peek() == "(":
            p0, p1 = self._read_balanced()
            self._parse_port_list(self.masked[p0:p1])
        self._expect(";")
        self._parse_body()
        return self.mod

    def _parse_header_params(self, text: str) -> None:
        for _, chunk in _split_top_level(text):
            m = re.search(r"([A-Za-z_][A-Za-z0-9_$]*)\s*=\s*(.+)", chunk, re.DOTALL)
            if m:
                self.mod.params[m.group(1)] = m.group(2).strip()

    def _parse_port_list(self, text: str) -> None:
        direction = ""
        net_type = "wire"
        range_text = ""
        for _, chunk in _split_top_level(text):
            chunk = chunk.strip()
            if not chunk:
                continue
            dm = re.match(r"(input|output|inout)\b", chunk)
            if dm:
                direction = dm.group(1)
                rest = chunk[dm.end() :].strip()
                net_type = "wire"
                range_text = ""
                tm = re.match(r"(wire|reg|logic)\b", rest)
                if tm:
                    net_type = tm.group(1)
                    rest = rest[tm.end() :].strip()
                rest = re.sub(r"^signed\b", "", rest).strip()
                rm = re.match(r"(\[[^\]]+\])", rest)
                if rm:
                    range_text = rm.group(1)
                    rest = rest[rm.end() :].strip()
                port_name = rest.split("=")[0].strip()
            else:
                # Continuation of the previous direction, or a non-ANSI
                # name-only port list.
                port_name = chunk.split("=")[0].strip()
            if not _IDENT_RE.fullmatch(port_name):
                raise self._error(f"bad port declaration '{chunk}'")
            self.mod.ports.append(
                Port(
                    name=port_name,
                    direction=direction,
                    width=_range_width(range_text),
                    range_text=range_text,
                    net_type=net_type,
                )
            )

    def _parse_body(self) -> None:
        while True:
            self._skip_ws()
            if self.pos >= self.end:
                return
            c = self.masked[self.pos]
            if c == ";":
                self.pos += 1
                continue
            if c == "`":
                eol = self.masked.find("\n", self.pos)
                self.pos = self.end if eol < 0 else eol + 1
                continue
            word = self._peek_word()
            if not word:
                raise self._error(f"unexpected character '{c}' in module body")
            if word in ("input", "output", "inout"):
                self._parse_decl(port_direction=word)
            elif word in DECL_KEYWORDS:
                self._parse_decl()
            elif word == "defparam":
                self._parse_opaque_to_semicolon()
            elif word == "assign":
                self._parse_continuous_assign()
            elif word == "always":
                self._parse_always()
            elif word == "initial":
                start = self.pos
                self._read_word()
                self._skip_proc_unit()
                self._make_opaque(start, self.pos, None)
            elif word in ("function", "task"):
                self._parse_opaque_to_keyword(f"end{word}")
            elif word == "generate":
                self._parse_opaque_to_keyword("endgenerate")
            elif word == "specify":
                self._parse_opaque_to_keyword("endspecify")
            else:
                self._parse_instantiation()

    def _make_opaque(self, start: int, end: int, parent_id: int | None,
                     arm: str | None = None) -> Statement:
        names = scan_signal_names(self.masked[start:end])
        return self._make(
            StatementKind.DECLARATION, start, end, self._refs(names), set(),
            parent_id, arm=arm,
        )

    def _parse_opaque_to_semicolon(self) -> None:
        start = self.pos
        semi = self._find_semicolon()
        self.pos = semi + 1
        self._make_opaque(start, self.pos, None)

    def _parse_opaque_to_keyword(self, terminator: str) -> None:
        start = self.pos
        m = re.compile(rf"\b{terminator}\b").search(self.masked, self.pos, self.end)
        if not m:
            raise self._error(f"missing '{terminator}'", start)
        self.pos = m.end()
        self._make_opaque(start, self.pos, None)

    # -- declarations ----------------------------------------------------------

    def _parse_decl(self, port_direction: str | None = None) -> None:
        start = self.pos
        kw = self._read_word()
        net_type = kw
        if port_direction:
            nxt = self._peek_word()
            if nxt in ("wire", "reg", "logic"):
                net_type = self._read_word()
            else:
                net_type = "wire"
        else:
            nxt = self._peek_word()
            if kw in ("parameter", "localparam") and nxt in ("integer", "real"):
                self._read_word()
        if self._peek_word() == "signed":
            self._read_word()
        range_text = self._maybe_range()
        semi = self._find_semicolon()
        body = self.masked[self.pos : semi]
        self.pos = semi + 1

        writes: set[SignalRef] = set()
        reads = self._refs(scan_signal_names(range_text))
        declared: list[str] = []
        for _, chunk in _split_top_level(body):
            chunk = chunk.strip()
            if not chunk:
                continue
            m = _IDENT_RE.match(chunk)
            if not m:
                raise self._error(f"bad declarator '{chunk}'", start)
            name = m.group(0)
            declared.append(name)
            writes.add(SignalRef(self.mod.name, name))
            tail = chunk[m.end() :]
            reads |= self._refs(scan_signal_names(tail))
        stmt = self._make(
            StatementKind.DECLARATION, start, self.pos, reads, writes, None,
            header=kw,
        )
        for name in declared:
            if port_direction:
                existing = self.mod.port(name)
                if existing:
                    existing.direction = port_direction
                    existing.range_text = existing.range_text or range_text
                    existing.width = _range_width(existing.range_text)
                    if net_type != "wire":
                        existing.net_type = net_type
                else:
                    self.mod.ports.append(
                        Port(name, port_direction, _range_width(range_text),
                             range_text, net_type)
                    )
            elif kw in ("parameter", "localparam"):
                m = re.search(
                    rf"\b{re.escape(name)}\b\s*=\s*([^,;]+)", body, re.DOTALL
                )
                self.mod.params[name] = m.group(1).strip() if m else ""
            if name in self.mod.nets:
                # reg redeclaration of a non-ANSI output port keeps the reg type
                if kw == "reg":
                    self.mod.nets[name].net_type = "reg"
            else:
                self.mod.nets[name] = NetDecl(name, net_type, range_text, stmt.id)

    # -- continuous assigns ------------------------------------------------------

    def _parse_continuous_assign(self) -> None:
        start = self.pos
        self._read_word()
        semi = self._find_semicolon()
        body = self.masked[self.pos : semi]
        self.pos = semi + 1
        reads: set[SignalRef] = set()
        writes: set[SignalRef] = set()
        for _, chunk in _split_top_level(body):
            op = _find_assign_op(chunk)
            if not op:
                raise self._error("continuous assign without '='", start)
            at, _ = op
            w, r = _analyze_lvalue(chunk[:at], self.mod.name)
            writes |= w
            reads |= r
            reads |= self._refs(scan_signal_names(chunk[at + 1 :]))
        self._make(
            StatementKind.CONTINUOUS_ASSIGN, start, self.pos, reads, writes,
            None, assign_op="=",
        )

    # -- procedural code ---------------------------------------------------------

    def _parse_always(self) -> None:
        start = self.pos
        self._read_word()
        header = None
        reads: set[SignalRef] = set()
        if self._peek() == "@":
            at = self.pos
            self.pos += 1
            if self._peek() == "*":
                self.pos += 1
            else:
                self._read_balanced()
            header = re.sub(r"\s+", " ", self.masked[at : self.pos]).strip()
            reads = self._refs(scan_signal_names(header))
        stmt = self._make(
            StatementKind.ALWAYS_BLOCK, start, self.pos, reads, set(), None,
            header=header,
        )
        self._parse_proc_statement(stmt.id, None)
        self._reseat(stmt, start, self.pos)

    def _parse_proc_statement(self, parent_id: int | None, arm: str | None) -> None:
        """Parse one procedural statement, attaching children to parent_id."""
        self._skip_ws()
        start = self.pos
        if self._peek() == ";":
            self.pos += 1
            return
        if self._peek() == "#":
            self.pos += 1
            if self._peek() == "(":
                self._read_balanced()
            else:
                m = re.match(r"\s*[\d.]+", self.masked[self.pos :])
                if m:
                    self.pos += m.end()
        if self._peek() == "@":
            self.pos += 1
            if self._peek() == "*":
                self.pos += 1
            else:
                self._read_balanced()
        word = self._peek_word()
        if word == "begin":
            self._read_word()
            if self._peek() == ":":
                self.pos += 1
                self._read_word()
            while True:
                if self._peek_word() == "end":
                    self._read_word()
                    return
                if self.pos >= self.end:
                    raise self._error("missing 'end'", start)
                self._parse_proc_statement(parent_id, arm)
        elif word == "if":
            self._parse_if(parent_id, arm, start)
        elif word in ("case", "casez", "casex"):
            self._parse_case(parent_id, arm, start)
        elif word in ("for", "while", "repeat", "forever", "fork", "wait", "disable",
                      "deassign", "force", "release"):
            self._skip_proc_unit()
            self._make_opaque(start, self.pos, parent_id, arm=arm)
        else:
            semi = self._find_semicolon()
            body = self.masked[start : semi + 1]
            self.pos = semi + 1
            op = _find_assign_op(body)
            if op:
                at, sym = op
                w, r = _analyze_lvalue(body[:at], self.mod.name)
                r |= self._refs(scan_signal_names(body[at + len(sym) :]))
                self._make(
                    StatementKind.PROCEDURAL_ASSIGN, start, self.pos, r, w,
                    parent_id, arm=arm, assign_op=sym,
                )
            else:
                self._make_opaque(start, self.pos, parent_id, arm=arm)

    def _parse_if(self, parent_id: int | None, arm: str | None, start: int) -> None:
        self._read_word()
        c0, c1 = self._read_balanced()
        cond = re.sub(r"\s+", " ", self.masked[c0:c1]).strip()
        stmt = self._make(
            StatementKind.IF_BLOCK, start, self.pos,
            self._refs(scan_signal_names(cond)), set(), parent_id,
            header=cond, arm=arm,
        )
        self._parse_proc_statement(stmt.id, "then")
        save = self.pos
        if self._peek_word() == "else":
            self._read_word()
            self._parse_proc_statement(stmt.id, "else")
        else:
            self.pos = save
        self._reseat(stmt, start, self.pos)

    def _parse_case(self, parent_id: int | None, arm: str | None, start: int) -> None:
        self._read_word()
        s0, s1 = self._read_balanced()
        selector = re.sub(r"\s+", " ", self.masked[s0:s1]).strip()
        stmt = self._make(
            StatementKind.CASE_BLOCK, start, self.pos,
            self._refs(scan_signal_names(selector)), set(), parent_id,
            header=selector, arm=arm,
        )
        while True:
            self._skip_ws()
            if self.pos >= self.end:
                raise self._error("missing 'endcase'", start)
            if self._peek_word() == "endcase":
                self._read_word()
                break
            self._parse_case_branch(stmt.id)
        self._reseat(stmt, start, self.pos)

    def _parse_case_branch(self, case_id: int) -> None:
        self._skip_ws()
        start = self.pos
        if self._peek_word() == "default":
            self._read_word()
            label = "default"
            if self._peek() == ":":
                self.pos += 1
            reads: set[SignalRef] = set()
        else:
            colon = self._find_label_colon()
            label = re.sub(r"\s+", " ", self.masked[start:colon]).strip()
            reads = self._refs(scan_signal_names(label))
            self.pos = colon + 1
        stmt = self._make(
            StatementKind.CASE_BRANCH, start, self.pos, reads, set(), case_id,
            header=label,
        )
        self._parse_proc_statement(stmt.id, None)
        self._reseat(stmt, start, self.pos)

    def _find_label_colon(self) -> int:
        depth = 0
        pending_ternary = 0
        i = self.pos
        while i < self.end:
            c = self.masked[i]
            if c in "([{":
                depth += 1
            elif c in ")]}":
                depth -= 1
            elif c == "?" and depth == 0:
                pending_ternary += 1
            elif c == ":" and depth == 0:
                if pending_ternary:
                    pending_ternary -= 1
                else:
                    return i
            i += 1
        raise self._error("missing ':' after case label")

    def _skip_proc_unit(self) -> None:
        """Structurally skip one procedural statement without modeling it."""
        self._skip_ws()
        if self.pos >= self.end:
            raise self._error("unexpected end of module body")
        if self._peek() == ";":
            self.pos += 1
            return
        if self._peek() == "#":
            self.pos += 1
            if self._peek() == "(":
                self._read_balanced()
            else:
                m = re.match(r"\s*[\d.]+", self.masked[self.pos :])
                if m:
                    self.pos += m.end()
        if self._peek() == "@":
            self.pos += 1
            if self._peek() == "*":
                self.pos += 1
            else:
                self._read_balanced()
        word = self._peek_word()
        if word == "begin":
            self._read_word()
            if self._peek() == ":":
                self.pos += 1
                self._read_word()
            while self._peek_word() != "end":
                if self.pos >= self.end:
                    raise self._error("missing 'end'")
                self._skip_proc_unit()
            self._read_word()
        elif word == "fork":
            self._read_word()
            while self._peek_word() != "join":
                if self.pos >= self.end:
                    raise self._error("missing 'join'")
                self._skip_proc_unit()
            self._read_word()
        elif word == "if":
            self._read_word()
            self._read_balanced()
            self._skip_proc_unit()
            save = self.pos
            if self._peek_word() == "else":
                self._read_word()
                self._skip_proc_unit()
            else:
                self.pos = save
        elif word in ("case", "casez", "casex"):
            self._read_word()
            self._read_balanced()
            depth = 1
            while depth:
                w = self._peek_word()
                if not w:
                    if self.pos >= self.end:
                        raise self._error("missing 'endcase'")
                    self.pos += 1
                    continue
                if w in ("case", "casez", "casex"):
                    depth += 1
                elif w == "endcase":
                    depth -= 1
                self.pos += len(w)
        elif word in ("for", "while", "repeat", "wait"):
            self._read_word()
            self._read_balanced()
            self._skip_proc_unit()
        elif word == "forever":
            self._read_word()
            self._skip_proc_unit()
        else:
            semi = self._find_semicolon()
            self.pos = semi + 1

    # -- instantiations --------------------------------------------------------

    def _parse_instantiation(self) -> None:
        start = self.pos
        mod_name = self._read_word()
        param_text = ""
        if self._peek() == "#":
            self.pos += 1
            p0, p1 = self._read_balanced()
            param_text = self.masked[p0:p1]
        first = True
        while True:
            self._skip_ws()
            inst_start = start if first else self.pos
            first = False
            inst_name = self._read_word()
            b0, b1 = self._read_balanced()
            container = self._make(
                StatementKind.INSTANCE_CONNECTION, inst_start, self.pos,
                self._refs(scan_signal_names(param_text)), set(), None,
                header=f"{mod_name} {inst_name}",
            )
            inst = Instance(name=inst_name, module=mod_name, statement_id=container.id)
            self._parse_bindings(b0, b1, inst, container)
            self.mod.instances.append(inst)
            if self._peek() == ",":
                self.pos += 1
                continue
            self._expect(";")
            self._reseat(container, inst_start, self.pos)
            return

    def _parse_bindings(self, b0: int, b1: int, inst: Instance,
                        container: Statement) -> None:
        inner = self.masked[b0:b1]
        if not inner.strip():
            return
        for off, chunk in _split_top_level(inner):
            stripped = chunk.strip()
            if not stripped:
                continue
            lead = len(chunk) - len(chunk.lstrip())
            c_start = b0 + off + lead
            c_end = c_start + len(stripped)
            formal = None
            if stripped.startswith("."):
                m = re.match(r"\.\s*([A-Za-z_][A-Za-z0-9_$]*)\s*\((.*)\)\s*$",
                             stripped, re.DOTALL)
                if not m:
                    raise self._error(f"bad port connection '{stripped}'", c_start)
                formal = m.group(1)
                actual = m.group(2)
            else:
                actual = stripped
            # reads/writes are filled in during cross-module resolution
            stmt = self._make(
                StatementKind.INSTANCE_CONNECTION, c_start, c_end,
                set(), set(), container.id,
            )
            inst.bindings.append(
                PortBinding(
                    formal=formal,
                    actual_text=re.sub(r"\s+", " ", actual).strip(),
                    actual_names=frozenset(scan_signal_names(actual)),
                    statement_id=stmt.id,
                )
            )


def _resolve_instances(model: DesignModel) -> None:
    """Assign direction-aware reads/writes to instance binding statements."""
    for mod in model.iter_modules():
        for inst in mod.instances:
            child = model.modules.get(inst.module)
            for idx, b in enumerate(inst.bindings):
                stmt = mod.statement(b.statement_id)
                actual_refs = {SignalRef(mod.name, n) for n in b.actual_names}
                formal_in_text = b.formal is not None
                if child is not None and b.formal is None:
                    if idx < len(child.ports):
                        b.formal = child.ports[idx].name
                direction = None
                if child is not None and b.formal:
                    port = child.port(b.formal)
                    if port:
                        direction = port.direction
                    else:
                        log.warning(
                            "%s: instance '%s' binds unknown port '%s' of '%s'",
                            mod.file, inst.name, b.formal, child.name,
                        )
                formal_ref = (
                    {SignalRef(inst.module, b.formal)}
                    if (b.formal and formal_in_text)
                    else set()
                )
                if direction == "input":
                    stmt.reads = frozenset(actual_refs)
                    stmt.writes = frozenset(formal_ref)
                elif direction == "output":
                    stmt.reads = frozenset(formal_ref)
                    stmt.writes = frozenset(actual_refs)
                else:
                    stmt.reads = frozenset(actual_refs | formal_ref)
                    stmt.writes = frozenset()


def parse_sources(
    sources: list[tuple[str, str]], top: str | None = None
) -> DesignModel:
    """Parse (path, text) pairs into a DesignModel.

    When top is None it is inferred as the unique module never
    instantiated by another parsed module.
    """
    ids = itertools.count(0)
    modules: dict[str, ModuleDef] = {}
    texts: dict[str, str] = {}
    file_order: list[str] = []
    for path, text in sources:
        texts[path] = text
        file_order.append(path)
        masked = mask_comments(text)
        line_starts = [m.start() for m in re.finditer(r"\n", text)]
        for m in re.finditer(r"\bmodule\b", masked):
            e = re.compile(r"\bendmodule\b").search(masked, m.end())
            if not e:
                raise VerilogSyntaxError(
                    path, bisect.bisect_left(line_starts, m.start()) + 1,
                    "missing 'endmodule'",
                )
            parser = _ModuleParser(text, masked, path, line_starts, ids)
            # body scanning stops before the 'endmodule' keyword
            mod = parser.parse_module(m.start(), e.start())
            mod.span = SourceSpan(
                path,
                bisect.bisect_left(line_starts, m.start()) + 1,
                bisect.bisect_left(line_starts, e.end() - 1) + 1,
                m.start(),
                e.end(),
            )
            if mod.name in modules:
                raise VerilogSyntaxError(
                    path, mod.span.line_start, f"duplicate module '{mod.name}'"
                )
            modules[mod.name] = mod

    if not modules:
        raise VerilogSyntaxError(sources[0][0] if sources else "<none>", 1,
                                 "no modules found")

    instantiated = {i.module for m in modules.values() for i in m.instances}
    black_boxes = frozenset(instantiated - set(modules))

    if top is None:
        roots = [n for n in modules if n not in instantiated]
        if len(roots) != 1:
            raise NoTopModule(
                f"cannot infer top module: candidates {sorted(roots)}"
            )
        top = roots[0]
    elif top not in modules:
        raise TopModuleNotFound(f"module '{top}' not found among parsed files")

    model = DesignModel(
        top=top,
        modules=modules,
        sources=texts,
        file_order=file_order,
        black_boxes=black_boxes,
    )
    _resolve_instances(model)
    return model


def parse_design(paths: list[str], top: str | None = None) -> DesignModel:
    """Read Verilog files from disk and parse them into a DesignModel."""
    sources = []
    for p in paths:
        try:
            sources.append((str(p), Path(p).read_text()))
        except OSError as exc:
            raise FileNotReadable(f"cannot read '{p}': {exc}") from exc
    return parse_sources(sources, top)


def statements_referencing(
    model: DesignModel, file: str, name: str
) -> list[Statement]:
    """Statements in one file that read or write the named signal."""
    if file not in model.sources:
        raise UnknownFile(f"file '{file}' is not part of the design")
    hits = []
    for mod in model.modules_in_file(file):
        for stmt in mod.statements:
            if name in stmt.signal_names():
                hits.append(stmt)
    return hits
