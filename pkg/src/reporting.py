"""CSV traces and YAML headers of a run directory."""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Mapping
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from src.dynamics import Trajectory
from src.metrics import GaussianSummary, w2_sq_moment

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
HEADER_FILE = "header.yaml"
BOUNDS_FILE = "bounds.csv"
SUMMARY_FILE = "summary.csv"
VALIDATION_FILE = "validation.yaml"


def format_value(value: Any) -> str:
    """Fixed textual form: shortest round-trip floats, ints as is, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, fieldnames: list[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
    logger.debug("Wrote %s", path)
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def to_builtin(value: Any) -> Any:
    """Plain Python structure safe for ``yaml.safe_dump``."""
    if isinstance(value, Mapping):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def write_yaml(path: Path, data: Mapping[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        yaml.safe_dump(to_builtin(data), f, sort_keys=False, default_flow_style=False)
    return path


# ── trace ───────────────────────────────────────────────────────────


def trace_rows(trajectory: Trajectory, target: GaussianSummary | None = None) -> tuple[list[str], list[dict[str, Any]]]:
    """Rows k = 0..K; a moment-proxy W2 column is added when the target is Gaussian and R ≥ 2."""
    with_w2 = target is not None and trajectory.final.shape[0] >= 2
    fields = ["k", "objective", "grad_norm_sq", "estimator_error"]
    if with_w2:
        fields.append("w2_sq_moment")
    fields += ["uplink_bits", "downlink_bits", "cum_bits", "refresh"]

    cum_bits = trajectory.cum_bits
    rows = []
    for k in range(trajectory.K + 1):
        row: dict[str, Any] = {
            "k": k,
            "objective": trajectory.objective[k],
            "grad_norm_sq": trajectory.grad_norm_sq[k],
            "estimator_error": trajectory.estimator_error[k],
            "uplink_bits": trajectory.uplink[k, 0],
            "downlink_bits": trajectory.downlink[k],
            "cum_bits": cum_bits[k],
            "refresh": trajectory.refresh[k, 0],
        }
        if with_w2:
            row["w2_sq_moment"] = w2_sq_moment(trajectory.moments(k), target)
        rows.append(row)
    return fields, rows
