"""Signal dependency tracing.

Two layers: a single-scope worklist BFS (trace one file's statement pool
from a set of seed signals) and a cross-module driver that repeatedly
re-seeds every module from the interface signals discovered in the
previous round, mapping port names through instance bindings so renamed
nets do not break the chain.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import FieldError, UnknownFile
from .verilog.model import DesignModel, ModuleDef, SignalRef, Statement, StatementKind

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeedSet:
    """Seed signals that start a trace, optionally tied to a coverage item."""

    signals: frozenset[SignalRef]
    origin: int | None = None

    @classmethod
    def from_names(
        cls, model: DesignModel, names, origin: int | None = None
    ) -> "SeedSet":
        """Resolve bare signal names to every module scope where they occur.

        Unqualified names may legitimately exist in several modules; all
        matching scopes are seeded. Names found nowhere are dropped with
        a warning.
        """
        refs: set[SignalRef] = set()
        for name in names:
            scopes = _scopes_of(model, name)
            if not scopes:
                log.warning("seed signal '%s' not found in any module", name)
            refs.update(SignalRef(scope, name) for scope in scopes)
        return cls(signals=frozenset(refs), origin=origin)


def _scopes_of(model: DesignModel, name: str) -> list[str]:
    scopes = []
    for mod in model.iter_modules():
        if name in mod.port_names() or any(
            name in s.signal_names() for s in mod.statements
        ):
            scopes.append(mod.name)
    return scopes


@dataclass
class DependencySlice:
    statements_by_file: dict[str, frozenset[int]]
    iteration_frontiers: list[frozenset[SignalRef]]
    entry_ports: frozenset[str]
    visited_signals: frozenset[SignalRef]
    seeds: SeedSet
    partial: bool = False
    unresolved: tuple[str, ...] = ()

    def all_statement_ids(self) -> frozenset[int]:
        out: set[int] = set()
        for ids in self.statements_by_file.values():
            out |= ids
        return frozenset(out)

    @property
    def io_reachable(self) -> bool:
        return bool(self.entry_ports)

    def to_json_dict(self) -> dict:
        return {
            "seeds": sorted(str(r) for r in self.seeds.signals),
            "statements_by_file": {
                path: sorted(ids)
                for path, ids in sorted(self.statements_by_file.items())
            },
            "statement_count": len(self.all_statement_ids()),
            "iteration_frontiers": [
                sorted(str(r) for r in frontier)
                for frontier in self.iteration_frontiers
            ],
            "entry_ports": sorted(self.entry_ports),
            "visited_signals": sorted(str(r) for r in self.visited_signals),
            "io_reachable": self.io_reachable,
            "partial": self.partial,
            "unresolved": sorted(self.unresolved),
        }


def _worklist(
    seed_names, index: dict[str, list[Statement]], visited: set[str]
) -> tuple[set[int], list[str]]:
    """Worklist BFS over one statement pool.

    Dequeue a signal, skip it if already visited, otherwise add every
    statement referencing it to the result and enqueue each statement's
    other signals. Mutates visited; returns (statement ids, names newly
    visited in this run).
    """
    queue = deque(sorted(seed_names))
    result: set[int] = set()
    newly: list[str] = []
    while queue:
        s = queue.popleft()
        if s in visited:
            continue
        visited.add(s)
        newly.append(s)
        for stmt in index.get(s, ()):
            result.add(stmt.id)
            for x in sorted(stmt.signal_names() - {s}):
                if x not in visited:
                    queue.append(x)
    return result, newly


def _merged_file_index(model: DesignModel, file: str) -> dict[str, list[Statement]]:
    index: dict[str, list[Statement]] = defaultdict(list)
    for mod in model.modules_in_file(file):
        for name, stmts in mod.signal_index().items():
            index[name].extend(stmts)
    return index


def trace_single_file(
    seeds: SeedSet, model: DesignModel, file: str
) -> tuple[frozenset[int], frozenset[SignalRef]]:
    """Single-scope trace over one file's statements.

    Returns the referenced-statement id set and the visited signals as
    module-scoped refs.
    """
    if file not in model.sources:
        raise UnknownFile(f"file '{file}' is not part of the design")
    index = _merged_file_index(model, file)
    visited: set[str] = set()
    stmt_ids, newly = _worklist({r.name for r in seeds.signals}, index, visited)
    refs: set[SignalRef] = set()
    for name in newly:
        scoped = [
            mod.name
            for mod in model.modules_in_file(file)
            if name in mod.port_names()
            or any(name in s.signal_names() for s in mod.statements)
        ]
        if scoped:
            refs.update(SignalRef(m, name) for m in scoped)
        else:
            refs.update(r for r in seeds.signals if r.name == name)
    return frozenset(stmt_ids), frozenset(refs)


def trace_cross_file(seeds: SeedSet, model: DesignModel) -> DependencySlice:
    """Cross-module trace: re-seed every module from interface signals.

    Each round runs the single-scope worklist in every module (top
    included) with the frontier signals scoped to it, then builds the
    next frontier from newly visited port names: the name itself in
    every other module that declares such a port, plus the parent-side
    nets bound to it in each instantiation. Converges when no new
    interface signals appear.
    """
    mods = list(model.iter_modules())
    indexes = {m.name: m.signal_index() for m in mods}
    visited: dict[str, set[str]] = {m.name: set() for m in mods}
    port_owner: dict[str, list[str]] = defaultdict(list)
    for m in mods:
        for p in m.ports:
            port_owner[p.name].append(m.name)

    by_file: dict[str, set[int]] = defaultdict(set)
    visited_refs: set[SignalRef] = set(seeds.signals)
    frontiers: list[frozenset[SignalRef]] = [frozenset(seeds.signals)]
    frontier: set[SignalRef] = {r for r in seeds.signals if r.module in indexes}
    seen_refs: set[SignalRef] = set(seeds.signals)

    # Hard cap: each non-empty frontier visits at least one new signal.
    cap = len(model.all_signal_names()) + len(seeds.signals) + 1
    rounds = 0
    while frontier:
        rounds += 1
        if rounds > cap:  # pragma: no cover - termination safety net
            log.error("tracing exceeded iteration cap; aborting expansion")
            break
        boundary: set[SignalRef] = set()
        for mod in mods:
            names = {r.name for r in frontier if r.module == mod.name}
            if not names:
                continue
            stmt_ids, newly = _worklist(names, indexes[mod.name], visited[mod.name])
            by_file[mod.file] |= stmt_ids
            for n in newly:
                visited_refs.add(SignalRef(mod.name, n))
                if n in mod.port_names():
                    for parent, inst in model.instances_of(mod.name):
                        for b in inst.bindings_for(n):
                            for actual in b.actual_names:
                                boundary.add(SignalRef(parent.name, actual))
                for owner in port_owner.get(n, ()):
                    if owner != mod.name:
                        boundary.add(SignalRef(owner, n))
        frontier = {
            r for r in boundary
            if r not in seen_refs and r.name not in visited[r.module]
        }
        seen_refs |= frontier
        if frontier:
            frontiers.append(frozenset(frontier))
            visited_refs |= frontier

    sliced_ids: set[int] = set()
    for ids in by_file.values():
        sliced_ids |= ids

    partial = False
    unresolved: set[str] = set()
    for mod in mods:
        for inst in mod.instances:
            if inst.module not in model.black_boxes:
                continue
            touched = any(
                b.statement_id in sliced_ids for b in inst.bindings
            ) or inst.statement_id in sliced_ids
            if touched:
                partial = True
                unresolved.add(inst.module)

    entry = _entry_ports(model, sliced_ids)
    return DependencySlice(
        statements_by_file={p: frozenset(ids) for p, ids in by_file.items()},
        iteration_frontiers=frontiers,
        entry_ports=entry,
        visited_signals=frozenset(visited_refs),
        seeds=seeds,
        partial=partial,
        unresolved=tuple(sorted(unresolved)),
    )


def _entry_ports(model: DesignModel, sliced_ids: set[int]) -> frozenset[str]:
    """Top-level ports that can drive the slice.

    Union of top ports referenced by sliced top-module statements and
    clock/reset signals taken from the sensitivity list of any always
    block that contains sliced statements, mapped up to top-level nets
    through instance bindings.
    """
    top = model.module(model.top)
    top_ports = top.port_names()
    entry: set[str] = set()
    for stmt in top.statements:
        if stmt.id in sliced_ids:
            entry |= stmt.signal_names() & top_ports

    for mod in model.iter_modules():
        by_id = {s.id: s for s in mod.statements}
        sens_names: set[str] = set()
        for stmt in mod.statements:
            if stmt.id not in sliced_ids:
                continue
            cursor: Statement | None = stmt
            while cursor is not None:
                if cursor.kind is StatementKind.ALWAYS_BLOCK:
                    sens_names |= cursor.signal_names()
                    break
                cursor = by_id.get(cursor.parent_id) if cursor.parent_id is not None else None
        for name in sens_names:
            entry |= _map_to_top(model, mod.name, name) & top_ports
    return frozenset(entry)


def _map_to_top(
    model: DesignModel, mod_name: str, name: str, _seen: set | None = None
) -> set[str]:
    """Map a module-scope net name to the top-level nets it connects to."""
    if mod_name == model.top:
        return {name}
    if _seen is None:
        _seen = set()
    if (mod_name, name) in _seen:
        return set()
    _seen.add((mod_name, name))
    out: set[str] = set()
    for parent, inst in model.instances_of(mod_name):
        for b in inst.bindings_for(name):
            for actual in b.actual_names:
                out |= _map_to_top(model, parent.name, actual, _seen)
    return out


# ---------------------------------------------------------------------------
# JSON round-trip (for feeding a saved trace back into the patcher)


_REF_RE = re.compile(r"^([^.]+)\.(.+?)(?:\[(\d+):(\d+)\])?$")


def ref_from_str(text: str) -> SignalRef:
    m = _REF_RE.match(text)
    if m is None:
        raise FieldError(f"bad signal reference '{text}'")
    rng = (int(m.group(3)), int(m.group(4))) if m.group(3) else None
    return SignalRef(m.group(1), m.group(2), rng)


def slice_from_json_dict(data: dict) -> DependencySlice:
    """Rebuild a DependencySlice from its to_json_dict form."""
    try:
        seeds = SeedSet(
            signals=frozenset(ref_from_str(s) for s in data.get("seeds", ()))
        )
        return DependencySlice(
            statements_by_file={
                path: frozenset(int(i) for i in ids)
                for path, ids in data.get("statements_by_file", {}).items()
            },
            iteration_frontiers=[
                frozenset(ref_from_str(s) for s in frontier)
                for frontier in data.get("iteration_frontiers", ())
            ],
            entry_ports=frozenset(data.get("entry_ports", ())),
            visited_signals=frozenset(
                ref_from_str(s) for s in data.get("visited_signals", ())
            ),
            seeds=seeds,
            partial=bool(data.get("partial", False)),
            unresolved=tuple(data.get("unresolved", ())),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise FieldError(f"malformed slice JSON: {exc}") from exc
