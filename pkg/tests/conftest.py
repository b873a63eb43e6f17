from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from src.config import ROOT, RuntimeSettings, build_config
from src.orchestrator import Orchestrator
from src.streams import StreamFactory
from src.targets import QuadraticProblem, make_quadratic

CONFIG_DIR = ROOT / "config"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def streams() -> StreamFactory:
    return StreamFactory(42)


@pytest.fixture
def quadratic(rng: np.random.Generator) -> QuadraticProblem:
    """Four devices in R^8 with rotated device matrices."""
    return make_quadratic(4, 8, rng, diagonal=False)


@pytest.fixture
def scalar_quadratic() -> QuadraticProblem:
    """F(x) = x²/2 on one device."""
    return QuadraticProblem.from_devices(np.ones((1, 1)))


@pytest.fixture
def orchestrator(tmp_path: Path) -> Orchestrator:
    return Orchestrator(RuntimeSettings(output_root=tmp_path, max_workers=2))


def minimal_config(**sections: dict[str, Any]):
    """Small optimize-mode quadratic experiment; each keyword replaces fields of one section."""
    data: dict[str, dict[str, Any]] = {
        "problem": {"kind": "quadratic", "n": 2, "d": 4},
        "compressor": {"kind": "rand_k", "k": 1},
        "estimator": {"kind": "vanilla", "p": 0.25},
        "run": {"mode": "optimize", "h": "auto", "K": 10, "chains": 2, "seed": 3, "init_mean": 1.0},
    }
    for name, fields in sections.items():
        data.setdefault(name, {}).update(fields)
    return build_config(data)
