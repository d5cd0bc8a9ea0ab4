"""Shared fixtures: the benchmark problem, seeded generators and random plants."""

from typing import Callable, Optional, Tuple

import numpy as np
import pytest

from iohlqg.ioh_lift import build_history_system, lift_controller
from iohlqg.lqg_engine import RelaxedProblem
from iohlqg.plant_ctl import (
    CostWeights,
    DynController,
    NoiseSpec,
    Plant,
    benchmark_problem,
    check_l_step_observable,
    lqg_baseline,
)

# Riccati-optimal cost of the benchmark problem, tr(QV_v) = 20 included
LQG_COST = 77.408545
# Cost of its order-2 balanced truncation
REDUCED_2_COST = 78.555122


@pytest.fixture(scope="session")
def benchmark() -> Tuple[Plant, NoiseSpec, CostWeights]:
    return benchmark_problem()


@pytest.fixture(scope="session")
def lqg_controller(benchmark) -> DynController:
    return lqg_baseline(*benchmark)


@pytest.fixture(scope="session")
def relaxed_l3(benchmark) -> RelaxedProblem:
    plant, noise, weights = benchmark
    return RelaxedProblem(build_history_system(plant, 3), noise, weights, epsilon=1e-8)


@pytest.fixture(scope="session")
def lifted_lqg(lqg_controller):
    return lift_controller(lqg_controller, 3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(20240611))


def _stable(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    M = rng.standard_normal((n, n))
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    return M * (radius / rho) if rho > 0 else M


@pytest.fixture
def random_plant(rng) -> Callable[..., Plant]:
    """Factory of Schur-stable plants that are observable in ``n_x`` steps."""

    def make(
        n_x: int = 3,
        n_u: int = 1,
        n_y: int = 2,
        radius: float = 0.8,
        gen: Optional[np.random.Generator] = None,
    ) -> Plant:
        g = rng if gen is None else gen
        while True:
            plant = Plant(
                A=_stable(g, n_x, radius),
                B=g.standard_normal((n_x, n_u)),
                C=g.standard_normal((n_y, n_x)),
            )
            if check_l_step_observable(plant.A, plant.C, n_x):
                return plant

    return make


@pytest.fixture
def random_controller(rng) -> Callable[..., DynController]:
    def make(
        n_xi: int,
        n_in: int,
        n_out: int,
        radius: float = 0.7,
        scale: float = 1.0,
        gen: Optional[np.random.Generator] = None,
    ) -> DynController:
        g = rng if gen is None else gen
        return DynController(
            G=_stable(g, n_xi, radius),
            H=scale * g.standard_normal((n_xi, n_in)),
            F=scale * g.standard_normal((n_out, n_xi)),
        )

    return make
