import json
from pathlib import Path

import numpy as np
import pytest

from sace import simulation as sim
from sace.oracle import build_population

FIXTURES = Path(__file__).parent / "fixtures"


def load_population_specs() -> dict:
    return json.loads((FIXTURES / "populations.json").read_text())


@pytest.fixture(scope="session")
def population_specs():
    return load_population_specs()


@pytest.fixture(scope="session")
def populations(population_specs):
    return {name: build_population(spec) for name, spec in population_specs.items()}


@pytest.fixture(scope="session")
def setting3_data():
    return sim.generate(sim.SimulationConfig.preset(3, n=3000, reps=1, seed=11), 0).data


@pytest.fixture(scope="session")
def setting3_binary():
    return sim.generate(sim.SimulationConfig.preset(3, n=3000, reps=1, seed=12, outcome_kind="binary"), 0).data


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
