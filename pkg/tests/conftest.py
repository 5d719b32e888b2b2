import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gazecomm.graph import Entity
from gazecomm.simulator import GeneratorConfig, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(40, "paper", GeneratorConfig(seed=7))


def make_entities(n_humans=3, attention=None, raw_dim=8, seed=0):
    """A frame with one scene, ``n_humans`` humans (ids 1..n) and one object (id n+1)."""
    r = np.random.default_rng(seed)
    attention = attention or {}
    ents = [Entity(0, "scene", (0.0, 0.0, 1.0, 1.0), None, tuple(r.normal(size=raw_dim)))]
    for i in range(1, n_humans + 1):
        ents.append(
            Entity(
                i,
                "human",
                (float(r.uniform(0, 0.8)), float(r.uniform(0, 0.8)), 0.08, 0.1),
                attention.get(i),
                tuple(r.normal(size=raw_dim)),
            )
        )
    ents.append(Entity(n_humans + 1, "object", (0.4, 0.8, 0.1, 0.08), None, tuple(r.normal(size=raw_dim))))
    return ents


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
