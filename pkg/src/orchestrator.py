"""Entry point: resolves experiment configs, runs the simulated federation, writes run directories.

Usage::

    python -m src.orchestrator run config/experiment.yaml --set run.h=0.01
    python -m src.orchestrator bounds config/experiment.yaml
    python -m src.orchestrator sweep config/experiment.yaml --grid run.h=0.01,0.02
    python -m src.orchestrator validate
"""

from __future__ import annotations

import argparse
import asyncio
import itertools
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from dotenv import load_dotenv

from src.compression import BitAccounting, CompressorKind, CompressorSpec, build_compressor
from src.config import ConfigError, ExperimentConfig, RuntimeSettings, load_config, parse_assignment, with_overrides
from src.dynamics import (
    OPTIMIZATION_BOUNDS,
    SAMPLING_BOUNDS,
    BoundKind,
    Mode,
    RunSpec,
    StepSizeCapError,
    TheoryError,
    TheoryParams,
    Trajectory,
    applicable_cap,
    langevin_marina_run,
    langevin_run,
    marina_run,
    theory_bound,
    theory_floor,
    theory_params,
)
from src.estimators import CoinScope, EstimatorKind, EstimatorSpec, MarinaConstants, build_estimator, default_p
from src.metrics import HistogramSpec, kl_gaussian, tv_histogram, w2_sq_moment
from src.reporting import (
    BOUNDS_FILE,
    HEADER_FILE,
    SUMMARY_FILE,
    TRACE_FILE,
    VALIDATION_FILE,
    trace_rows,
    write_csv,
    write_yaml,
)
from src.streams import Purpose, StreamFactory
from src.targets import (
    MixtureProblem,
    Problem,
    ProblemKindError,
    QuadraticProblem,
    StreamingProblem,
    make_logistic,
    make_quadratic,
    make_streaming,
)
from src.validation import run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CAP = 2
EXIT_VALIDATION = 3


@dataclass(frozen=True)
class ResolvedRun:
    """A config with every "auto" value replaced and the objects it describes built."""

    config: ExperimentConfig
    problem: Problem
    estimator_spec: EstimatorSpec
    run: RunSpec
    accounting: BitAccounting
    constants: MarinaConstants
    omega: float
    zeta: float
    cap: float | None
    G0: float

    @property
    def baseline(self) -> bool:
        return self.config.run.baseline


@dataclass
class RunResult:
    directory: Path
    trajectory: Trajectory
    header: dict[str, Any]
    params: TheoryParams = field(repr=False)
    resolved: ResolvedRun = field(repr=False)


def _diagonal_matrices(rows: list[list[float]]) -> np.ndarray:
    return np.stack([np.diag(row) for row in np.asarray(rows, dtype=np.float64)])


class Orchestrator:
    """Builds problems and estimators from configs and runs them."""

    def __init__(self, settings: RuntimeSettings | None = None) -> None:
        self.settings = settings or RuntimeSettings()

    # ── bootstrap ───────────────────────────────────────────────

    def build_problem(self, config: ExperimentConfig) -> Problem:
        cfg = config.problem
        instance_seed = cfg.instance_seed if cfg.instance_seed is not None else config.run.seed
        rng = StreamFactory(instance_seed)(Purpose.INSTANCE)
        match cfg.kind:
            case "quadratic":
                if cfg.matrices is not None:
                    return QuadraticProblem.from_devices(np.asarray(cfg.matrices), cfg.vectors)
                return make_quadratic(
                    cfg.n,
                    cfg.d,
                    rng,
                    eigen_range=cfg.eigen_range,
                    samples_per_device=cfg.samples_per_device,
                    diagonal=cfg.diagonal,
                    shift_scale=cfg.shift_scale,
                )
            case "streaming":
                if cfg.matrices is not None:
                    vectors = np.zeros((cfg.n, cfg.d)) if cfg.vectors is None else np.asarray(cfg.vectors)
                    return StreamingProblem(_diagonal_matrices(cfg.matrices), vectors, np.asarray(cfg.sigma))
                return make_streaming(
                    cfg.n,
                    cfg.d,
                    rng,
                    sigma=cfg.sigma,
                    eigen_range=cfg.eigen_range,
                    diagonal=cfg.diagonal,
                    shift_scale=cfg.shift_scale,
                )
            case "logistic":
                return make_logistic(
                    cfg.n,
                    cfg.d,
                    rng,
                    samples_per_device=cfg.samples_per_device,
                    regularization=cfg.regularization,
                    feature_scale=cfg.feature_scale,
                )
            case "mixture":
                return MixtureProblem(cfg.weight, np.asarray(cfg.means), cfg.variance, n=cfg.n, mu_lsi=cfg.mu_lsi)
        raise ConfigError("problem.kind", f"Unknown problem kind '{cfg.kind}'")

    def resolve(self, config: ExperimentConfig) -> ResolvedRun:
        try:
            problem = self.build_problem(config)
        except ValueError as exc:
            raise ConfigError("problem", str(exc)) from exc
        accounting = BitAccounting(config.output.value_bits, config.output.index_bits)
        run_cfg = config.run

        if run_cfg.baseline:
            compressor_spec = CompressorSpec(CompressorKind.IDENTITY)
            kind, p = EstimatorKind.VANILLA, 1.0
        else:
            c = config.compressor
            compressor_spec = CompressorSpec(CompressorKind(c.kind), k=c.k, levels=c.levels)
            kind = EstimatorKind(config.estimator.kind)
            p = config.estimator.p
        compressor = build_compressor(compressor_spec, problem.d)
        if p == "auto":
            p = default_p(
                kind,
                compressor,
                N=problem.samples_per_device,
                batch=config.estimator.batch,
                minibatch=config.estimator.minibatch,
            )
            logger.info("Resolved estimator.p=auto to %.6g", p)

        estimator_spec = EstimatorSpec(
            kind=kind,
            compressor=compressor_spec,
            p=float(p),
            minibatch=config.estimator.minibatch,
            batch=config.estimator.batch,
            coin_scope=CoinScope(config.estimator.coin_scope),
        )
        try:
            estimator = build_estimator(estimator_spec, problem, accounting)
        except ProblemKindError as exc:
            raise ConfigError("estimator.kind", str(exc)) from exc

        mode = Mode(run_cfg.mode)
        cap = applicable_cap(mode, problem, estimator)
        h = run_cfg.h
        if h == "auto":
            if cap is None:
                raise ConfigError("run.h", "'auto' needs a declared LSI constant for sampling runs")
            h = cap
            logger.info("Resolved run.h=auto to the step size cap %.6g", h)

        try:
            init_mean = np.broadcast_to(np.asarray(run_cfg.init_mean, dtype=np.float64), (problem.d,))
        except ValueError as exc:
            raise ConfigError("run.init_mean", f"expected a scalar or {problem.d} values") from exc
        sampling = mode is Mode.SAMPLE and self._histogram_spec(config, problem) is not None
        burn_in = config.metrics.burn_in if config.metrics.burn_in is not None else run_cfg.K // 2
        run = RunSpec(
            mode=mode,
            h=float(h),
            K=run_cfg.K,
            chains=run_cfg.chains,
            seed=run_cfg.seed,
            shared_noise_seed=run_cfg.shared_noise_seed,
            enforce_cap=run_cfg.enforce_cap,
            init_mean=tuple(float(v) for v in init_mean),
            init_std=run_cfg.init_std,
            snapshots=tuple(run_cfg.snapshots),
            sample_from=burn_in if sampling else None,
            sample_every=config.metrics.sample_every,
        )
        return ResolvedRun(
            config=config,
            problem=problem,
            estimator_spec=estimator_spec,
            run=run,
            accounting=accounting,
            constants=estimator.constants(),
            omega=estimator.compressor.omega,
            zeta=estimator.compressor.zeta,
            cap=cap,
            G0=estimator.initial_error(),
        )

    def _histogram_spec(self, config: ExperimentConfig, problem: Problem) -> HistogramSpec | None:
        if not config.metrics.tv_histogram or problem.d > 2 or problem.target_density() is None:
            return None
        hist = config.metrics.histogram
        if hist.ranges is not None:
            return HistogramSpec(tuple(tuple(r) for r in hist.ranges), hist.bins)
        target = problem.target_gaussian()
        if target is not None:
            spread = 6 * np.sqrt(target.variances)
            lo, hi = target.mean - spread, target.mean + spread
        elif isinstance(problem, MixtureProblem):
            spread = 5 * np.sqrt(problem.variance)
            lo, hi = problem.means.min(axis=0) - spread, problem.means.max(axis=0) + spread
        else:
            return None
        return HistogramSpec(tuple((float(a), float(b)) for a, b in zip(lo, hi)), hist.bins)

    def theory(self, resolved: ResolvedRun) -> TheoryParams:
        run = resolved.run
        rho0 = run.initial_law(resolved.problem.d) if run.init_std > 0 else None
        return theory_params(
            resolved.problem,
            h=run.h,
            p=resolved.constants.p,
            alpha=resolved.constants.alpha,
            theta=resolved.constants.theta,
            G0=resolved.G0,
            x0=np.asarray(run.init_mean),
            rho0=rho0,
            batch=resolved.estimator_spec.batch,
        )

    # ── operations ──────────────────────────────────────────────

    def execute(self, resolved: ResolvedRun) -> Trajectory:
        if resolved.run.mode is Mode.OPTIMIZE:
            return marina_run(resolved.problem, resolved.estimator_spec, resolved.run, resolved.accounting)
        if resolved.baseline:
            return langevin_run(resolved.problem, resolved.run, resolved.accounting)
        return langevin_marina_run(resolved.problem, resolved.estimator_spec, resolved.run, resolved.accounting)

    def output_dir(self, config: ExperimentConfig) -> Path:
        root = config.output.root if config.output.root is not None else self.settings.output_root
        return Path(root) / config.output.name

    def _final_block(self, resolved: ResolvedRun, trajectory: Trajectory) -> dict[str, Any]:
        final: dict[str, Any] = {
            "objective": trajectory.objective[-1],
            "grad_norm_sq": trajectory.grad_norm_sq[-1],
            "estimator_error": trajectory.estimator_error[-1],
            "cum_bits": trajectory.cum_bits[-1],
        }
        target = resolved.problem.target_gaussian()
        if target is not None and resolved.run.chains >= 2:
            moments = trajectory.moments(trajectory.K)
            final["w2_sq_moment"] = w2_sq_moment(moments, target)
            if target.is_diagonal:
                final["kl_moment"] = kl_gaussian(moments, target.diagonal())
        spec = self._histogram_spec(resolved.config, resolved.problem)
        if spec is not None and trajectory.pooled is not None:
            final["tv_histogram"] = tv_histogram(trajectory.pooled, resolved.problem.target_density(), spec)
            final["pooled_samples"] = int(trajectory.pooled.shape[0])
        return final

    def _header(self, resolved: ResolvedRun, params: TheoryParams, trajectory: Trajectory) -> dict[str, Any]:
        descriptor = resolved.problem.describe()
        constants = resolved.problem.constants
        return {
            "config": resolved.config.model_dump(mode="json"),
            "problem": {
                "kind": descriptor.kind,
                "d": descriptor.d,
                "n": descriptor.n,
                "samples_per_device": descriptor.samples_per_device,
                "details": descriptor.details,
                "L": constants.L,
                "L_devices": constants.L_devices,
                "mu_pl": constants.mu_pl,
                "mu_lsi": constants.mu_lsi,
                "f_star": constants.f_star,
            },
            "resolved": {
                "algorithm": trajectory.algorithm,
                "p": resolved.constants.p,
                "h": resolved.run.h,
                "step_cap": resolved.cap,
                "omega": resolved.omega,
                "zeta": resolved.zeta,
                "alpha": resolved.constants.alpha,
                "theta": resolved.constants.theta,
                "G0": resolved.G0,
                "value_bits": resolved.accounting.value_bits,
                "index_bits": resolved.accounting.index_bits,
            },
            "theory": {**params.summary(), "kl0": params.kl0, "f0": params.f0},
            "final": self._final_block(resolved, trajectory),
        }

    def run_experiment(self, config: ExperimentConfig, out_dir: Path | None = None) -> RunResult:
        """Run one configured experiment; writes ``trace.csv`` and ``header.yaml``."""
        resolved = self.resolve(config)
        directory = Path(out_dir) if out_dir is not None else self.output_dir(config)
        logger.info("Running %s into %s", config.output.name, directory)
        trajectory = self.execute(resolved)
        params = self.theory(resolved)

        target = resolved.problem.target_gaussian() if resolved.run.mode is Mode.SAMPLE else None
        fields, rows = trace_rows(trajectory, target)
        write_csv(directory / TRACE_FILE, fields, rows)
        header = self._header(resolved, params, trajectory)
        write_yaml(directory / HEADER_FILE, header)
        logger.info(
            "Finished %s: objective=%.6g cum_bits=%d",
            config.output.name,
            trajectory.objective[-1],
            int(trajectory.cum_bits[-1]),
        )
        return RunResult(directory=directory, trajectory=trajectory, header=header, params=params, resolved=resolved)

    def bounds(self, config: ExperimentConfig, out_dir: Path | None = None) -> Path:
        """Run the experiment and write theoretical envelopes next to the observed metric."""
        result = self.run_experiment(config, out_dir)
        params = result.params
        trajectory = result.trajectory
        ks = np.arange(trajectory.K + 1)
        sampling = config.run.mode == "sample"
        kinds = (
            [BoundKind(kind) for kind in config.metrics.bounds]
            if config.metrics.bounds is not None
            else list(SAMPLING_BOUNDS if sampling else OPTIMIZATION_BOUNDS)
        )

        constants = params.summary()
        columns: dict[str, np.ndarray] = {"k": ks}
        for name in ("C", "C_unit", "tau"):
            if constants[name] is not None:
                columns[name] = np.full(ks.shape, constants[name])
        for kind in kinds:
            try:
                columns[kind.value] = theory_bound(kind, params, ks)
            except TheoryError as exc:
                try:
                    columns[f"{kind.value}_floor"] = theory_floor(kind, params, ks)
                    logger.warning("Bound %s reported as its floor only: %s", kind.value, exc)
                except TheoryError as floor_exc:
                    logger.warning("Bound %s cannot be evaluated: %s", kind.value, floor_exc)

        f_star = result.header["problem"]["f_star"]
        if f_star is not None:
            columns["objective_gap"] = trajectory.objective - f_star
        running = np.cumsum(trajectory.grad_norm_sq)
        columns["avg_grad_norm_sq"] = np.concatenate([[np.nan], running[:-1] / ks[1:]])
        gaussian = result.resolved.problem.target_gaussian() if sampling and config.run.chains >= 2 else None
        if gaussian is not None:
            _, rows = trace_rows(trajectory, gaussian)
            columns["w2_sq_moment"] = np.array([row["w2_sq_moment"] for row in rows])

        fieldnames = list(columns)
        rows = [{name: columns[name][k] for name in fieldnames} for k in range(len(ks))]
        path = write_csv(result.directory / BOUNDS_FILE, fieldnames, rows)
        logger.info("Wrote bound curves %s", path)
        return path

    async def sweep(self, config: ExperimentConfig, grid: dict[str, list[Any]], out_dir: Path | None = None) -> Path:
        """One run per grid point, executed concurrently; writes ``summary.csv``."""
        if not grid:
            raise ConfigError("grid", "Sweep grid is empty")
        directory = Path(out_dir) if out_dir is not None else self.output_dir(config)
        keys = sorted(grid)
        points = [dict(zip(keys, values)) for values in itertools.product(*(grid[key] for key in keys))]
        streams = StreamFactory(config.run.seed)
        instance_seed = config.problem.instance_seed if config.problem.instance_seed is not None else config.run.seed

        point_configs = []
        for index, point in enumerate(points):
            assignments = {"problem.instance_seed": instance_seed, "output.name": f"point-{index:04d}"}
            assignments["run.seed"] = streams.derive_seed(Purpose.SWEEP, index)
            assignments.update(point)
            point_configs.append(with_overrides(config, assignments))

        semaphore = asyncio.Semaphore(self.settings.max_workers)
        results: list[RunResult | None] = [None] * len(points)

        async def run_point(index: int) -> None:
            async with semaphore:
                results[index] = await asyncio.to_thread(
                    self.run_experiment, point_configs[index], directory / f"point-{index:04d}"
                )
            logger.info("Sweep point %d/%d done: %s", index + 1, len(points), points[index])

        logger.info("Sweeping %d point(s) over %s", len(points), ", ".join(keys))
        try:
            async with asyncio.TaskGroup() as tg:
                for index in range(len(points)):
                    tg.create_task(run_point(index))
        except ExceptionGroup as group:
            raise group.exceptions[0] from group

        rows = []
        for index, (point, result) in enumerate(zip(points, results)):
            final = result.header["final"]
            trajectory = result.trajectory
            tail = max(1, (trajectory.K + 1) // 5)
            row = {"point": index, **point}
            row.update(
                seed=point_configs[index].run.seed,
                h=result.header["resolved"]["h"],
                p=result.header["resolved"]["p"],
                final_objective=final["objective"],
                final_grad_norm_sq=final["grad_norm_sq"],
                plateau_objective=float(np.mean(trajectory.objective[-tail:])),
                final_w2_sq_moment=final.get("w2_sq_moment"),
                tv_histogram=final.get("tv_histogram"),
                cum_bits=final["cum_bits"],
            )
            rows.append(row)
        fieldnames = ["point", *keys, "seed", "h", "p", "final_objective", "final_grad_norm_sq",
                      "plateau_objective", "final_w2_sq_moment", "tv_histogram", "cum_bits"]
        path = write_csv(directory / SUMMARY_FILE, fieldnames, rows)
        logger.info("Wrote sweep summary %s", path)
        return path

    def validate(self, out_dir: Path | None = None, *, quick: bool = False) -> tuple[bool, Path]:
        report = run_suite(quick=quick)
        directory = Path(out_dir) if out_dir is not None else self.settings.output_root / "validation"
        path = write_yaml(directory / VALIDATION_FILE, report.to_dict())
        failed = [check.name for check in report.checks if not check.passed]
        if failed:
            logger.error("Property suite failed: %s", ", ".join(failed))
        else:
            logger.info("Property suite passed (%d checks)", len(report.checks))
        return report.passed, path


# ── command line ────────────────────────────────────────────────────


def parse_grid(assignments: list[str], grid_file: str | None = None) -> dict[str, list[Any]]:
    """``--grid run.h=0.01,0.02`` entries and/or a YAML mapping of dotted paths to value lists."""
    grid: dict[str, list[Any]] = {}
    if grid_file is not None:
        with open(grid_file) as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError("grid", f"Grid file {grid_file} must hold a mapping")
        for key, values in data.items():
            grid[str(key)] = list(values) if isinstance(values, list) else [values]
    for assignment in assignments:
        key, raw = assignment.split("=", 1) if "=" in assignment else (assignment, "")
        if not raw:
            raise ConfigError("grid", f"Grid entry '{assignment}' is not of the form section.field=v1,v2")
        grid[key.strip()] = [parse_assignment(f"{key}={value}")[1] for value in raw.split(",")]
    return grid


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src.orchestrator", description="Federated Langevin simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", nargs="?", default=None, help="Experiment YAML file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", default=None, help="Output root directory")

    add_common(sub.add_parser("run", help="Run one experiment"))
    add_common(sub.add_parser("bounds", help="Run and write theoretical bound curves"))
    sweep_parser = sub.add_parser("sweep", help="Run a parameter grid")
    add_common(sweep_parser)
    sweep_parser.add_argument("--grid", action="append", default=[], metavar="SECTION.FIELD=V1,V2")
    sweep_parser.add_argument("--grid-file", default=None)
    validate_parser = sub.add_parser("validate", help="Run the property suite")
    validate_parser.add_argument("--output", default=None)
    validate_parser.add_argument("--quick", action="store_true", help="Smaller Monte-Carlo sizes")
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    settings = RuntimeSettings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    args = _build_parser().parse_args(argv)
    orchestrator = Orchestrator(settings)

    try:
        if args.command == "validate":
            passed, _ = orchestrator.validate(args.output and Path(args.output), quick=args.quick)
            return EXIT_OK if passed else EXIT_VALIDATION
        config = load_config(args.config, overrides=args.overrides, seed=args.seed, output=args.output)
        match args.command:
            case "run":
                orchestrator.run_experiment(config)
            case "bounds":
                orchestrator.bounds(config)
            case "sweep":
                asyncio.run(orchestrator.sweep(config, parse_grid(args.grid, args.grid_file)))
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG
    except StepSizeCapError as exc:
        logger.error("%s", exc)
        return EXIT_CAP
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
