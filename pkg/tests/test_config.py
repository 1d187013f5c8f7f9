"""Configuration layering tests: defaults, TOML file, flag overrides."""

import pytest

from vclose.config import PipelineConfig, apply_overrides, load_config


def test_defaults():
    config = PipelineConfig()
    assert config.context_budget == 8000
    assert config.points_per_iter == 4
    assert config.repair_attempts == 1
    assert config.waiver_quorum == 2
    assert config.target_score == 90.0
    assert config.max_iters == 20
    assert config.llm_specs == {}
    assert config.sim_spec is None
    config.check()


def test_missing_default_file_yields_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert load_config() == PipelineConfig()


def test_missing_explicit_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.toml")


def test_load_full_file(tmp_path):
    path = tmp_path / "vclose.toml"
    path.write_text(
        "[pipeline]\n"
        "context_budget = 4000\n"
        "points_per_iter = 2\n"
        "repair_attempts = 0\n"
        "waiver_quorum = 3\n"
        "target_score = 95.5\n"
        "max_iters = 7\n"
        "\n"
        "[llm]\n"
        'a = "mock:a.json"\n'
        'b = "https://example.invalid/v1"\n'
        "\n"
        "[sim]\n"
        'backend = "mock:sim.json"\n'
    )
    config = load_config(path)
    assert config.context_budget == 4000
    assert config.points_per_iter == 2
    assert config.repair_attempts == 0
    assert config.waiver_quorum == 3
    assert config.target_score == 95.5
    assert config.max_iters == 7
    assert config.llm_specs == {"a": "mock:a.json", "b": "https://example.invalid/v1"}
    assert config.sim_spec == "mock:sim.json"


def test_partial_file_keeps_other_defaults(tmp_path):
    path = tmp_path / "vclose.toml"
    path.write_text("[pipeline]\nmax_iters = 3\n")
    config = load_config(path)
    assert config.max_iters == 3
    assert config.context_budget == 8000
    assert config.llm_specs == {}


def test_default_file_picked_up_from_cwd(tmp_path, monkeypatch):
    (tmp_path / "vclose.toml").write_text("[pipeline]\nwaiver_quorum = 1\n")
    monkeypatch.chdir(tmp_path)
    assert load_config().waiver_quorum == 1


def test_load_rejects_out_of_range_values(tmp_path):
    path = tmp_path / "vclose.toml"
    path.write_text("[pipeline]\nmax_iters = 0\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "vclose.toml"
    path.write_text("[pipeline]\nmax_iters = 7\ntarget_score = 80.0\n")
    config = apply_overrides(load_config(path), max_iters=2)
    assert config.max_iters == 2
    assert config.target_score == 80.0  # untouched file value survives


def test_none_overrides_are_ignored():
    base = PipelineConfig()
    assert apply_overrides(base, max_iters=None, target_score=None) == base


def test_overrides_are_checked():
    with pytest.raises(ValueError):
        apply_overrides(PipelineConfig(), waiver_quorum=9)


@pytest.mark.parametrize(
    "field,value",
    [
        ("context_budget", 0),
        ("points_per_iter", 0),
        ("max_iters", 0),
        ("waiver_quorum", 0),
        ("waiver_quorum", 4),
        ("repair_attempts", -1),
        ("target_score", 0.0),
        ("target_score", 101.0),
    ],
)
def test_check_rejects_bad_knobs(field, value):
    with pytest.raises(ValueError):
        PipelineConfig(**{field: value}).check()


def test_zero_repair_attempts_allowed():
    PipelineConfig(repair_attempts=0).check()
