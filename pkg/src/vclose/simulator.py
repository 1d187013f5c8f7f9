"""Simulation backends behind one runner contract.

run(sequence_body, run_label) -> SimOutcome(compile_ok, sim_ok,
error_text, coverage_delta_path). The scripted backend replays canned
outcomes keyed on substrings of the sequence body; the exec backend
shells out to an external command and is deliberately thin.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import SimulatorUnavailable


@dataclass(frozen=True)
class SimOutcome:
    compile_ok: bool
    sim_ok: bool
    error_text: str = ""
    coverage_delta_path: str | None = None

    @property
    def ran(self) -> bool:
        return self.compile_ok and self.sim_ok


def _safe_label(label: str) -> str:
    return re.sub(r"[^\w.-]+", "_", label) or "run"


class ScriptedSimulator:
    """Replays scripted outcomes; the mock stand-in for a real simulator.

    Script format (JSON): {"rules": [{"match": <substring of the
    sequence body>, "compile_ok": bool, "sim_ok": bool, "error": text,
    "delta_text": normalized coverage lines}, ...], "default": {...}}.
    Rules are tried in order; the first match wins, else the default,
    else an inert successful run. Coverage deltas are materialized as
    files named after the run label.
    """

    def __init__(self, script: dict, workdir: str | Path | None = None):
        self.rules = list(script.get("rules", []))
        self.default = script.get("default", {})
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="vclose-sim-"))
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.run_count = 0

    @classmethod
    def from_file(cls, path, workdir=None) -> "ScriptedSimulator":
        try:
            script = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SimulatorUnavailable(f"cannot load sim script '{path}': {exc}") from exc
        return cls(script, workdir=workdir)

    def run(self, sequence_body: str, run_label: str) -> SimOutcome:
        self.run_count += 1
        rule = self.default
        for candidate in self.rules:
            if candidate.get("match", "") in sequence_body:
                rule = candidate
                break
        compile_ok = bool(rule.get("compile_ok", True))
        sim_ok = bool(rule.get("sim_ok", True))
        error_text = rule.get("error", "")
        delta_path = None
        delta_text = rule.get("delta_text", "")
        if compile_ok and sim_ok and delta_text:
            delta_file = self.workdir / f"{_safe_label(run_label)}.cov"
            delta_file.write_text(delta_text)
            delta_path = str(delta_file)
        return SimOutcome(compile_ok, sim_ok, error_text, delta_path)


class ExecSimulator:
    """Runs an external command per sequence.

    The command template may reference {sequence} (path to the sequence
    body), {label}, and {delta} (path where the command should leave a
    coverage delta). Exit statuses: 0 ran clean, 2 compile failed,
    anything else sim failed.
    """

    def __init__(self, command: str, workdir: str | Path | None = None, timeout: float = 60.0):
        self.command = command
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="vclose-sim-"))
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.timeout = timeout

    def run(self, sequence_body: str, run_label: str) -> SimOutcome:
        label = _safe_label(run_label)
        seq_file = self.workdir / f"{label}.seq"
        seq_file.write_text(sequence_body)
        delta_file = self.workdir / f"{label}.cov"
        argv = [
            part.format(sequence=str(seq_file), label=label, delta=str(delta_file))
            for part in shlex.split(self.command)
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout
            )
        except FileNotFoundError as exc:
            raise SimulatorUnavailable(f"simulator command not found: {exc}") from exc
        except subprocess.TimeoutExpired:
            return SimOutcome(True, False, f"simulation timed out after {self.timeout}s")
        error_text = (proc.stderr or "") + (proc.stdout if proc.returncode else "")
        if proc.returncode == 0:
            path = str(delta_file) if delta_file.exists() else None
            return SimOutcome(True, True, "", path)
        if proc.returncode == 2:
            return SimOutcome(False, False, error_text)
        return SimOutcome(True, False, error_text)


def make_simulator(spec: str, workdir=None):
    """Build a runner from a spec: `mock:<script.json>` or `exec:<command>`."""
    if spec.startswith("mock:"):
        return ScriptedSimulator.from_file(spec[len("mock:"):], workdir=workdir)
    if spec.startswith("exec:"):
        return ExecSimulator(spec[len("exec:"):], workdir=workdir)
    raise ValueError(f"unrecognized simulator spec '{spec}' (expected mock:... or exec:...)")
