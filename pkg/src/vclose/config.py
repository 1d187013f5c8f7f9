"""Pipeline configuration: defaults, config file, flag overrides.

Precedence is flags > config file > defaults. The file is TOML with a
[pipeline] table for loop knobs, an [llm] table mapping labels to client
specs, and a [sim] table naming the backend.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

DEFAULT_CONFIG_FILE = "vclose.toml"

_PIPELINE_FIELDS = {
    "context_budget": int,
    "points_per_iter": int,
    "repair_attempts": int,
    "waiver_quorum": int,
    "target_score": float,
    "max_iters": int,
}


@dataclass(frozen=True)
class PipelineConfig:
    context_budget: int = 8000
    points_per_iter: int = 4
    repair_attempts: int = 1
    waiver_quorum: int = 2
    target_score: float = 90.0
    max_iters: int = 20
    llm_specs: dict[str, str] = field(default_factory=dict)
    sim_spec: str | None = None

    def check(self) -> None:
        """Raise ValueError on an out-of-range knob."""
        for name in ("context_budget", "points_per_iter", "max_iters", "waiver_quorum"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.repair_attempts < 0:
            raise ValueError("repair_attempts must be >= 0")
        if not 0 < self.target_score <= 100:
            raise ValueError("target_score must be in (0, 100]")
        if self.waiver_quorum > 3:
            raise ValueError("waiver_quorum must be <= 3")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Read a TOML config file; a missing default file yields defaults."""
    explicit = path is not None
    file = Path(path) if explicit else Path(DEFAULT_CONFIG_FILE)
    if not file.exists():
        if explicit:
            raise FileNotFoundError(f"config file '{file}' not found")
        return PipelineConfig()
    data = tomllib.loads(file.read_text())
    kwargs: dict = {}
    pipeline = data.get("pipeline", {})
    for name, cast in _PIPELINE_FIELDS.items():
        if name in pipeline:
            kwargs[name] = cast(pipeline[name])
    llm = data.get("llm", {})
    if llm:
        kwargs["llm_specs"] = {str(k): str(v) for k, v in llm.items()}
    sim = data.get("sim", {})
    if "backend" in sim:
        kwargs["sim_spec"] = str(sim["backend"])
    config = PipelineConfig(**kwargs)
    config.check()
    return config


def apply_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """Layer non-None overrides (CLI flags) on top of a config."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return config
    merged = dataclasses.replace(config, **updates)
    merged.check()
    return merged
