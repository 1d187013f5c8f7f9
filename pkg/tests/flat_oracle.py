"""Brute-force slicing oracle, independent of the tracer implementation.

Flattens every statement in the design into one pool (no file or module
boundaries) and grows the statement set to a fixpoint: any statement
sharing a signal name with the current signal set joins, and contributes
all of its signal names. Deliberately simple and quadratic.
"""

from __future__ import annotations


def flat_fixpoint_slice(model, seed_names):
    """Returns (statement id set, signal name set) for the closure."""
    pool = [stmt for _, stmt in model.all_statements()]
    signals = set(seed_names)
    chosen: set[int] = set()
    changed = True
    while changed:
        changed = False
        for stmt in pool:
            if stmt.id in chosen:
                continue
            names = stmt.signal_names()
            if names & signals:
                chosen.add(stmt.id)
                signals |= names
                changed = True
    return chosen, signals


def flat_fixpoint_by_file(model, seed_names):
    """Same closure, grouped by file path for comparison with slices."""
    chosen, _ = flat_fixpoint_slice(model, seed_names)
    by_file: dict[str, set[int]] = {}
    for mod, stmt in model.all_statements():
        if stmt.id in chosen:
            by_file.setdefault(mod.file, set()).add(stmt.id)
    return by_file
