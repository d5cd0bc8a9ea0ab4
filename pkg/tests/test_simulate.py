import numpy as np
import pytest

from iohlqg.exceptions import DivergingRolloutError, RejectedInputError
from iohlqg.lqg_engine import cost, cost_of_dyn_controller
from iohlqg.plant_ctl import CostWeights, DynController, NoiseSpec, Plant
from iohlqg.simulate import (
    SINGLE_ROLLOUT_BATCHES,
    SimConfig,
    block_cost_identity_check,
    estimate_cost_dyn,
    estimate_cost_ioh,
    sample_trajectory,
)

QUICK = SimConfig(horizon=10_000, n_rollouts=10, seed=1)

SCALAR_PLANT = Plant(A=[[0.5]], B=[[1.0]], C=[[1.0]])
IDLE = DynController(G=[[0.0]], H=[[0.0]], F=[[0.0]])


def test_config_defaults_and_validation():
    cfg = SimConfig(horizon=1000)
    assert cfg.burn_in == 100
    assert cfg.window == 900
    with pytest.raises(RejectedInputError):
        SimConfig(n_rollouts=0)
    with pytest.raises(RejectedInputError):
        SimConfig(horizon=100, burn_in=100)
    with pytest.raises(RejectedInputError):
        SimConfig(horizon=10, n_rollouts=1, burn_in=5)


def test_noise_free_loop_costs_nothing(benchmark, lqg_controller):
    plant, _, weights = benchmark
    quiet = NoiseSpec(np.zeros((3, 3)), np.zeros((2, 2)))
    est = estimate_cost_dyn(plant, quiet, weights, lqg_controller, SimConfig(horizon=500, n_rollouts=2))
    assert est.mean == 0.0
    assert est.std_err == 0.0


def test_scalar_open_loop_matches_closed_form():
    noise = NoiseSpec([[1.0]], [[0.5]])
    weights = CostWeights([[2.0]], [[1.0]])
    est = estimate_cost_dyn(SCALAR_PLANT, noise, weights, IDLE, QUICK)
    # stationary state variance 1 / (1 - 0.25)
    expected = 2.0 * 4.0 / 3.0 + 1.0
    assert est.within(expected, k=4.0)
    assert est.n_samples == 10


def test_single_rollout_uses_batch_means():
    noise = NoiseSpec([[1.0]], [[0.5]])
    weights = CostWeights([[2.0]], [[1.0]])
    cfg = SimConfig(horizon=20_000, n_rollouts=1)
    est = estimate_cost_dyn(SCALAR_PLANT, noise, weights, IDLE, cfg)
    assert est.n_samples == SINGLE_ROLLOUT_BATCHES
    assert est.std_err > 0
    assert est.within(2.0 * 4.0 / 3.0 + 1.0, k=4.0)


def test_doubling_rollouts_shrinks_standard_error():
    noise = NoiseSpec([[1.0]], [[0.5]])
    weights = CostWeights([[2.0]], [[1.0]])
    few, many = (
        estimate_cost_dyn(
            SCALAR_PLANT, noise, weights, IDLE, SimConfig(horizon=1000, n_rollouts=n, seed=5)
        )
        for n in (100, 200)
    )
    assert 1.2 <= few.std_err / many.std_err <= 1.7


def test_lqg_estimate_agrees_with_analytic_cost(benchmark, lqg_controller):
    est = estimate_cost_dyn(*benchmark, lqg_controller, QUICK)
    assert est.within(cost_of_dyn_controller(*benchmark, lqg_controller), k=4.0)


def test_history_estimate_agrees_with_analytic_cost(relaxed_l3, lifted_lqg):
    est = estimate_cost_ioh(relaxed_l3, lifted_lqg, QUICK)
    assert est.within(cost(relaxed_l3, lifted_lqg).J, k=4.0)


def test_history_perturbation_adds_relaxation_term(relaxed_l3, lifted_lqg):
    prob = relaxed_l3.relaxed(0.1)
    report = cost(prob, lifted_lqg)
    est = estimate_cost_ioh(prob, lifted_lqg, QUICK, with_delta=True)
    assert est.within(report.J_eps, k=4.0)
    assert report.J_eps > report.J


def test_block_cost_identity(relaxed_l3, lifted_lqg):
    check = block_cost_identity_check(relaxed_l3, lifted_lqg, QUICK)
    assert check.gap <= 5.0 * check.combined_std_err


def test_estimate_is_reproducible_across_workers(benchmark, lqg_controller):
    cfg = SimConfig(horizon=2_000, n_rollouts=4, seed=9, n_jobs=1)
    first = estimate_cost_dyn(*benchmark, lqg_controller, cfg)
    again = estimate_cost_dyn(*benchmark, lqg_controller, cfg)
    split = estimate_cost_dyn(
        *benchmark, lqg_controller, SimConfig(horizon=2_000, n_rollouts=4, seed=9, n_jobs=2)
    )
    assert first == again
    assert split.mean == pytest.approx(first.mean, rel=1e-12)
    assert split.std_err == pytest.approx(first.std_err, rel=1e-9)
    other = estimate_cost_dyn(*benchmark, lqg_controller, SimConfig(horizon=2_000, n_rollouts=4, seed=10))
    assert other.mean != first.mean


def test_unstable_loop_diverges():
    plant = Plant(A=[[1.5]], B=[[1.0]], C=[[1.0]])
    noise = NoiseSpec([[1.0]], [[1.0]])
    with pytest.raises(DivergingRolloutError):
        estimate_cost_dyn(
            plant, noise, CostWeights([[1.0]], [[1.0]]), IDLE, SimConfig(horizon=2_000, n_rollouts=2)
        )


def test_sample_trajectory_shapes(benchmark, lqg_controller):
    traj = sample_trajectory(*benchmark, lqg_controller, SimConfig(horizon=50, n_rollouts=2))
    np.testing.assert_array_equal(traj.t, np.arange(50))
    assert traj.y.shape == (50, 2)
    assert traj.u.shape == (50, 1)
    # the controller starts at rest
    np.testing.assert_array_equal(traj.u[0], [0.0])


@pytest.mark.slow
def test_long_horizon_lqg_estimate(benchmark, lqg_controller):
    est = estimate_cost_dyn(*benchmark, lqg_controller, SimConfig(horizon=100_000, n_rollouts=20))
    assert est.within(cost_of_dyn_controller(*benchmark, lqg_controller))


@pytest.mark.slow
def test_long_horizon_relaxed_history_estimate(relaxed_l3, lifted_lqg):
    prob = relaxed_l3.relaxed(1e-2)
    cfg = SimConfig(horizon=100_000, n_rollouts=20)
    est = estimate_cost_ioh(prob, lifted_lqg, cfg, with_delta=True)
    assert est.within(cost(prob, lifted_lqg).J_eps)
