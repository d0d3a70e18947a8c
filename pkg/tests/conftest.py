from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from green_routing import FlowProfile, GameInstance, PlayerSpec, RouteSpec, load_scenario
from green_routing.game import DelayCost
from green_routing.scenario import bundled_scenario_path

SQRT10 = np.sqrt(10.0)


@pytest.fixture(scope="session")
def example1():
    return load_scenario(bundled_scenario_path("example1")).build_instance()


@pytest.fixture(scope="session")
def paper_sec5_scenario():
    return load_scenario(bundled_scenario_path("paper_sec5"))


@pytest.fixture(scope="session")
def paper_sec5(paper_sec5_scenario):
    return paper_sec5_scenario.build_instance()


@pytest.fixture(scope="session")
def example1_first_ne():
    return FlowProfile([[0.0, 1.0, 1.0], [8.0, 1.0, 1.0]])


@pytest.fixture(scope="session")
def example1_second_ne():
    s = SQRT10
    return FlowProfile([[0.0, 2.0, 0.0],
                        [10.0 - 2.0 * s / 3.0, (s - 2.0) / 3.0, (s + 2.0) / 3.0]])


def linear_instance(slope: float = 1.0, demands=(1.0, 2.0), alphas=(0.3, 0.4), routes: int = 2):
    """Identical linear delay cost on every route; curvature-free."""
    players = [PlayerSpec(d, a) for d, a in zip(demands, alphas)]
    row = [DelayCost.linear(0.0, slope) for _ in range(routes)]
    return GameInstance(players, [RouteSpec() for _ in range(routes)],
                        [list(row) for _ in players])


def random_identical_instance(rng: np.random.Generator) -> GameInstance:
    """Random game with identical quadratic-beyond-threshold costs."""
    n = int(rng.integers(2, 5))
    r = int(rng.integers(1, 5))
    players = [PlayerSpec(float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.05, 3.0)))
               for _ in range(n)]
    shared = [DelayCost.quadratic(float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.2, 2.0)))
              for _ in range(r)]
    return GameInstance(players, [RouteSpec() for _ in range(r)], [list(shared)] * n)


def random_instance(rng: np.random.Generator, max_players: int = 4, max_routes: int = 4) -> GameInstance:
    """Random game with heterogeneous quadratic costs."""
    n = int(rng.integers(1, max_players + 1))
    r = int(rng.integers(1, max_routes + 1))
    players = [PlayerSpec(float(rng.uniform(0.2, 4.0)), float(rng.uniform(0.0, 3.0)))
               for _ in range(n)]
    matrix = [[DelayCost.quadratic(float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.2, 2.0)))
               for _ in range(r)] for _ in range(n)]
    return GameInstance(players, [RouteSpec() for _ in range(r)], matrix)


def random_feasible(rng: np.random.Generator, instance: GameInstance) -> FlowProfile:
    w = rng.dirichlet(np.ones(instance.n_routes + 1), size=instance.n_players)
    return FlowProfile(w * instance.demands[:, None])
