from pathlib import Path

import pytest
from pydantic import ValidationError

from src.config import (
    ConfigError,
    ExperimentConfig,
    RuntimeSettings,
    build_config,
    load_config,
    parse_assignment,
    with_overrides,
)
from tests.conftest import CONFIG_DIR


@pytest.mark.parametrize("name", ["experiment.yaml", "mixture.yaml", "online.yaml"])
def test_shipped_configs_are_valid(name):
    config = load_config(CONFIG_DIR / name)
    assert isinstance(config, ExperimentConfig)


def test_defaults_without_file():
    config = load_config()
    assert config.run.mode == "optimize"
    assert config.estimator.p == "auto"
    assert config.metrics.burn_in is None
    assert config.output.value_bits == 64


def test_flags_win_over_file(tmp_path):
    config = load_config(
        CONFIG_DIR / "experiment.yaml",
        overrides=["run.K=5", "compressor.k=3"],
        seed=9,
        output=tmp_path,
    )
    assert config.run.K == 5
    assert config.compressor.k == 3
    assert config.run.seed == 9
    assert config.output.root == tmp_path
    assert config.problem.d == 10


@pytest.mark.parametrize(
    ("assignment", "expected"),
    [
        ("run.h=0.01", ("run.h", 0.01)),
        ("compressor.kind=rand_k", ("compressor.kind", "rand_k")),
        ("run.init_mean=[1, 2]", ("run.init_mean", [1, 2])),
        ("run.shared_noise_seed=true", ("run.shared_noise_seed", True)),
        ("estimator.p = auto", ("estimator.p", "auto")),
    ],
)
def test_parse_assignment(assignment, expected):
    assert parse_assignment(assignment) == expected


def test_assignment_needs_equals_sign():
    with pytest.raises(ConfigError, match="section.field=value"):
        parse_assignment("run.h")


@pytest.mark.parametrize(
    ("overrides", "path"),
    [
        (["run.K=0"], "run.K"),
        (["run.bogus=1"], "run.bogus"),
        (["problem.kind=cubic"], "problem.kind"),
        (["estimator.p=2"], "estimator"),
        (["compressor.kind=rand_k"], "compressor"),
        (["estimator.kind=online"], ""),
    ],
)
def test_errors_carry_field_path(overrides, path):
    with pytest.raises(ConfigError) as info:
        load_config(overrides=overrides)
    assert info.value.path == path


def test_rand_k_larger_than_dimension():
    with pytest.raises(ConfigError, match="k <= d"):
        build_config({"problem": {"d": 3}, "compressor": {"kind": "rand_k", "k": 4}})


def test_mixture_dimension_comes_from_means():
    config = build_config({"problem": {"kind": "mixture", "means": [[0.0, 1.0], [1.0, 0.0]]}})
    assert config.dimension == 2


def test_matrix_shape_is_checked():
    with pytest.raises(ConfigError, match="matrices"):
        build_config({"problem": {"n": 2, "d": 2, "matrices": [[1.0, 1.0]]}})


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read"):
        load_config(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("run: [unclosed\n")
    with pytest.raises(ConfigError, match="Malformed YAML"):
        load_config(broken)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(scalar)


def test_with_overrides_returns_a_new_config():
    config = load_config()
    changed = with_overrides(config, {"run.h": 0.5, "output.name": "other"})
    assert changed.run.h == 0.5 and changed.output.name == "other"
    assert config.run.h == "auto"


def test_configs_are_frozen():
    config = load_config()
    with pytest.raises(ValidationError):
        config.run.K = 3


def test_runtime_settings_from_environment(monkeypatch):
    monkeypatch.setenv("FEDSIM_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("FEDSIM_OUTPUT_ROOT", "/tmp/fedsim-runs")
    monkeypatch.setenv("FEDSIM_MAX_WORKERS", "3")
    settings = RuntimeSettings()
    assert settings.log_level == "DEBUG"
    assert settings.output_root == Path("/tmp/fedsim-runs")
    assert settings.max_workers == 3
