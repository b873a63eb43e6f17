"""Experiment configuration (YAML + pydantic) and runtime settings (environment)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

ROOT = Path(__file__).resolve().parent.parent


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` is the dotted field path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class RuntimeSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="FEDSIM_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    output_root: Path = Path("runs")
    max_workers: PositiveInt = 4


# ── experiment sections ─────────────────────────────────────────────


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProblemConfig(_Section):
    kind: Literal["quadratic", "streaming", "logistic", "mixture"] = "quadratic"
    n: PositiveInt = 1
    d: PositiveInt = 2
    instance_seed: int | None = Field(default=None, ge=0, description="Seed of the random instance; defaults to run.seed")
    # quadratic / streaming
    samples_per_device: PositiveInt = 1
    eigen_range: tuple[float, float] = (0.5, 2.0)
    diagonal: bool = True
    shift_scale: float = 1.0
    matrices: list[list[float]] | None = Field(default=None, description="Per-device diagonals, shape (n, d)")
    vectors: list[list[float]] | None = None
    sigma: float | list[float] = 1.0
    # logistic
    regularization: float = 1e-2
    feature_scale: float = 1.0
    # mixture
    weight: float = 0.9
    means: list[float] | list[list[float]] = [-1.0, 1.0]
    variance: float = 0.25
    mu_lsi: float | None = None

    @model_validator(mode="after")
    def _check_shapes(self) -> ProblemConfig:
        if self.matrices is not None:
            if len(self.matrices) != self.n or any(len(row) != self.d for row in self.matrices):
                raise ValueError(f"matrices must have shape ({self.n}, {self.d})")
        if self.vectors is not None:
            if len(self.vectors) != self.n or any(len(row) != self.d for row in self.vectors):
                raise ValueError(f"vectors must have shape ({self.n}, {self.d})")
        if isinstance(self.sigma, list) and len(self.sigma) != self.n:
            raise ValueError(f"sigma must list one value per device ({self.n})")
        return self


class CompressorConfig(_Section):
    kind: Literal["identity", "rand_k", "stochastic_round"] = "identity"
    k: PositiveInt | None = None
    levels: PositiveInt | None = None

    @model_validator(mode="after")
    def _check_parameters(self) -> CompressorConfig:
        if self.kind == "rand_k" and self.k is None:
            raise ValueError("rand_k needs k")
        if self.kind == "stochastic_round" and self.levels is None:
            raise ValueError("stochastic_round needs levels")
        return self


class EstimatorConfig(_Section):
    kind: Literal["vanilla", "finite_sum", "online"] = "vanilla"
    p: float | Literal["auto"] = "auto"
    batch: PositiveInt = 1
    minibatch: PositiveInt = 1
    coin_scope: Literal["shared", "per_device"] = "shared"

    @model_validator(mode="after")
    def _check_p(self) -> EstimatorConfig:
        if self.p != "auto" and not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1] or be 'auto', got {self.p}")
        return self


class RunConfig(_Section):
    mode: Literal["optimize", "sample"] = "optimize"
    baseline: bool = Field(default=False, description="Plain Langevin with exact gradients (sample mode)")
    h: float | Literal["auto"] = "auto"
    K: PositiveInt = 100
    chains: PositiveInt = 1
    seed: int = Field(default=0, ge=0)
    shared_noise_seed: bool = False
    enforce_cap: bool = False
    init_mean: float | list[float] = 0.0
    init_std: float = Field(default=0.0, ge=0)
    snapshots: list[int] = []

    @model_validator(mode="after")
    def _check_run(self) -> RunConfig:
        if self.h != "auto" and self.h <= 0:
            raise ValueError(f"h must be positive or 'auto', got {self.h}")
        if self.baseline and self.mode != "sample":
            raise ValueError("baseline runs are sample-mode only")
        return self


class HistogramConfig(_Section):
    bins: PositiveInt = 64
    ranges: list[tuple[float, float]] | None = None


class MetricsConfig(_Section):
    burn_in: int | None = Field(default=None, ge=0, description="Pooling starts here; defaults to K // 2")
    sample_every: PositiveInt = 1
    tv_histogram: bool = True
    histogram: HistogramConfig = HistogramConfig()
    bounds: list[Literal["kl", "tv2", "w22", "opt_avg_grad", "opt_pl"]] | None = None


class OutputConfig(_Section):
    root: Path | None = None
    name: str = "run"
    value_bits: PositiveInt = 64
    index_bits: int = Field(default=32, ge=0)


class ExperimentConfig(_Section):
    problem: ProblemConfig = ProblemConfig()
    compressor: CompressorConfig = CompressorConfig()
    estimator: EstimatorConfig = EstimatorConfig()
    run: RunConfig = RunConfig()
    metrics: MetricsConfig = MetricsConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check_cross_references(self) -> ExperimentConfig:
        kind = self.estimator.kind
        if kind == "online" and self.problem.kind != "streaming":
            raise ValueError("online estimator needs a streaming problem")
        if self.problem.kind == "streaming" and kind != "online":
            raise ValueError("streaming problems run with the online estimator")
        if kind == "finite_sum" and self.problem.kind == "mixture":
            raise ValueError("finite_sum estimator needs a finite-sum problem")
        if self.compressor.kind == "rand_k" and self.compressor.k > self._dimension():
            raise ValueError(f"rand_k needs k <= d, got k={self.compressor.k}")
        return self

    def _dimension(self) -> int:
        if self.problem.kind == "mixture":
            means = self.problem.means
            return len(means[0]) if isinstance(means[0], list) else 1
        return self.problem.d

    @property
    def dimension(self) -> int:
        return self._dimension()


# ── loading ─────────────────────────────────────────────────────────


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = target
    for key in parents:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(dotted, f"'{key}' is not a section")
        node = child
    node[leaf] = value


def parse_assignment(assignment: str) -> tuple[str, Any]:
    """``section.field=value`` with the value read as a YAML scalar or list."""
    if "=" not in assignment:
        raise ConfigError("", f"Override '{assignment}' is not of the form section.field=value")
    path, raw = assignment.split("=", 1)
    return path.strip(), yaml.safe_load(raw)


def _error_path(error: ValidationError) -> tuple[str, str]:
    first = error.errors()[0]
    path = ".".join(str(part) for part in first["loc"])
    return path, first["msg"]


def build_config(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        path, message = _error_path(exc)
        raise ConfigError(path, message) from exc


def load_config(
    path: Path | str | None = None,
    *,
    overrides: list[str] | tuple[str, ...] = (),
    seed: int | None = None,
    output: Path | str | None = None,
) -> ExperimentConfig:
    """Read a YAML experiment file; flags win over file values, file values over defaults."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except OSError as exc:
            raise ConfigError("", f"Cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("", f"Malformed YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("", f"Config file {path} must hold a mapping")
    for assignment in overrides:
        _set_dotted(data, *parse_assignment(assignment))
    if seed is not None:
        _set_dotted(data, "run.seed", seed)
    if output is not None:
        _set_dotted(data, "output.root", str(output))
    config = build_config(data)
    logger.debug("Loaded config from %s with %d override(s)", path, len(overrides))
    return config


def with_overrides(config: ExperimentConfig, assignments: dict[str, Any]) -> ExperimentConfig:
    """Copy of ``config`` with dotted-path values replaced, revalidated."""
    data = config.model_dump(mode="json")
    for dotted, value in assignments.items():
        _set_dotted(data, dotted, value)
    return build_config(data)
