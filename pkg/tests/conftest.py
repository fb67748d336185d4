import json
from pathlib import Path

import pytest

from aimdalloc import QuadraticCost, SystemConfig

REPO = Path(__file__).resolve().parents[1]
SCHEMA_DIR = REPO / "src" / "aimdalloc" / "schemas"
CONFIG_DIR = REPO / "configs"


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / name).read_text(encoding="utf-8"))


@pytest.fixture
def symmetric_cfg():
    """Two identical quadratic agents over two resources (reference system)."""
    return SystemConfig(
        n=2,
        m=2,
        capacity=[1.0, 0.8],
        alpha=[0.1, 0.15],
        beta=[0.8, 0.85],
        window=4,
        lambda_min=0.1,
        lambda_max=0.95,
        seed=20240601,
    )


@pytest.fixture
def symmetric_costs():
    return [QuadraticCost([1.0, 1.0], [0.01, 0.01]), QuadraticCost([1.0, 1.0], [0.01, 0.01])]


@pytest.fixture
def asymmetric_costs():
    return [QuadraticCost([1.0, 1.0], [0.01, 0.01]), QuadraticCost([1.5, 1.5], [0.01, 0.01])]


def interior_point(rng, m, scale=1.0):
    return scale * (0.1 + rng.random(m))
