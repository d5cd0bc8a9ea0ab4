import numpy as np
import pytest

from conftest import LQG_COST, REDUCED_2_COST
from iohlqg.exceptions import NotObservableError, RejectedInputError
from iohlqg.linalg_core import spectral_radius
from iohlqg.lqg_engine import cost_of_dyn_controller
from iohlqg.plant_ctl import (
    CostWeights,
    DynController,
    NoiseSpec,
    Plant,
    check_assumptions,
    check_l_step_observable,
    check_stabilizable,
    closed_loop,
    controller_from_dict,
    controller_to_dict,
    lqg_baseline,
    problem_from_dict,
    problem_to_dict,
    reduce_controller,
    rollout_closed_loop,
    rollout_open_loop,
)


def test_plant_dimensions(benchmark):
    plant, noise, _ = benchmark
    assert (plant.n_x, plant.n_u, plant.n_y) == (3, 1, 2)
    assert (plant.n_w, plant.n_v) == (3, 2)
    assert noise.V_d.shape == (5, 5)


def test_types_validate_inputs():
    with pytest.raises(RejectedInputError):
        Plant(A=np.ones((2, 3)), B=np.ones((2, 1)), C=np.ones((1, 2)))
    with pytest.raises(RejectedInputError):
        Plant(A=np.eye(2), B=np.ones((3, 1)), C=np.ones((1, 2)))
    with pytest.raises(RejectedInputError):
        NoiseSpec(V_w=-np.eye(2), V_v=np.eye(1))
    with pytest.raises(RejectedInputError):
        CostWeights(Q=np.eye(2), R=np.zeros((1, 1)))
    with pytest.raises(RejectedInputError):
        CostWeights(Q=[[1.0, 2.0], [0.0, 1.0]], R=[[1.0]])
    with pytest.raises(RejectedInputError):
        Plant(A=[[np.nan]], B=[[1.0]], C=[[1.0]])


def test_controller_defaults_initial_state_to_zero():
    ctl = DynController(G=np.eye(2) * 0.5, H=np.ones((2, 1)), F=np.ones((1, 2)))
    np.testing.assert_array_equal(ctl.xi0, np.zeros(2))
    assert (ctl.n_xi, ctl.n_in, ctl.n_out) == (2, 1, 1)


def test_l_step_observability(benchmark):
    plant, _, _ = benchmark
    assert check_l_step_observable(plant.A, plant.C, 3)
    assert check_l_step_observable(plant.A, plant.C, 2)
    for L in (1, 2, 5):
        assert not check_l_step_observable(np.eye(2), [[1.0, 0.0]], L)


def test_stabilizability_pbh():
    assert check_stabilizable(np.diag([1.5, 0.5]), [[1.0], [0.0]])
    assert not check_stabilizable(np.diag([1.5, 0.5]), [[0.0], [1.0]])


def test_assumptions_need_positive_measurement_noise(benchmark):
    plant, _, _ = benchmark
    check_assumptions(plant, NoiseSpec(0.1 * np.eye(3), 0.1 * np.eye(2)))
    with pytest.raises(RejectedInputError):
        check_assumptions(plant, NoiseSpec(0.1 * np.eye(3), np.zeros((2, 2))))
    with pytest.raises(NotObservableError):
        check_assumptions(
            Plant(A=np.eye(2) * 0.5, B=np.ones((2, 1)), C=[[1.0, 0.0]]),
            NoiseSpec(np.eye(2), np.eye(1)),
        )


def test_closed_loop_without_coupling_is_block_diagonal(benchmark):
    plant, _, _ = benchmark
    G = np.diag([0.3, -0.1])
    ctl = DynController(G=G, H=np.zeros((2, 2)), F=np.zeros((1, 2)))
    loop = closed_loop(plant, ctl)
    np.testing.assert_array_equal(loop.A[:3, :3], plant.A)
    np.testing.assert_array_equal(loop.A[3:, 3:], G)
    np.testing.assert_array_equal(loop.A[:3, 3:], 0.0)
    np.testing.assert_array_equal(loop.A[3:, :3], 0.0)


def test_closed_loop_spectrum_of_scalar_cascade():
    plant = Plant(A=[[0.5]], B=[[1.0]], C=[[1.0]])
    ctl = DynController(G=[[0.2]], H=[[0.0]], F=[[0.0]])
    eig = np.sort(np.linalg.eigvals(closed_loop(plant, ctl).A).real)
    np.testing.assert_allclose(eig, [0.2, 0.5])


def test_closed_loop_rejects_mismatched_controller(benchmark):
    plant, _, _ = benchmark
    with pytest.raises(RejectedInputError):
        closed_loop(plant, DynController(G=[[0.1]], H=[[1.0]], F=[[1.0]]))


def test_lqg_gains_match_published_values(lqg_controller, benchmark):
    plant, _, _ = benchmark
    expected_H = np.array([[-0.0422, 0.6096], [-0.5763, 0.3403], [0.1703, 0.4165]])
    expected_F = np.array([[0.3031, -1.0174, 0.8212]])
    np.testing.assert_allclose(lqg_controller.H, expected_H, atol=5e-3)
    np.testing.assert_allclose(lqg_controller.F, expected_F, atol=5e-3)
    G = plant.A + plant.B @ lqg_controller.F - lqg_controller.H @ plant.C
    np.testing.assert_allclose(lqg_controller.G, G)
    assert spectral_radius(closed_loop(plant, lqg_controller).A) < 1.0


def test_lqg_cost_band(benchmark, lqg_controller):
    J = cost_of_dyn_controller(*benchmark, lqg_controller)
    assert J == pytest.approx(LQG_COST, rel=1e-6)


def test_lqg_stabilizes_random_plants(random_plant):
    gen = np.random.Generator(np.random.PCG64(42))
    noise = NoiseSpec(0.1 * np.eye(3), 0.1 * np.eye(2))
    weights = CostWeights(np.eye(2), np.eye(1))
    for _ in range(100):
        plant = random_plant(radius=float(gen.uniform(0.5, 1.3)), gen=gen)
        ctl = lqg_baseline(plant, noise, weights)
        assert spectral_radius(closed_loop(plant, ctl).A) < 1.0


def test_lqg_beats_random_stabilizing_controllers(random_plant, random_controller):
    gen = np.random.Generator(np.random.PCG64(43))
    plant = random_plant(gen=gen)
    noise = NoiseSpec(0.1 * np.eye(3), 0.1 * np.eye(2))
    weights = CostWeights(np.eye(2), np.eye(1))
    best = cost_of_dyn_controller(plant, noise, weights, lqg_baseline(plant, noise, weights))
    tried = 0
    while tried < 50:
        ctl = random_controller(n_xi=3, n_in=2, n_out=1, scale=0.5, gen=gen)
        if spectral_radius(closed_loop(plant, ctl).A) >= 0.99:
            continue
        tried += 1
        assert cost_of_dyn_controller(plant, noise, weights, ctl) >= best * (1.0 - 1e-10)


def test_lqg_of_memoryless_plant_has_zero_feedback():
    plant = Plant(A=[[0.0]], B=[[1.0]], C=[[1.0]])
    ctl = lqg_baseline(plant, NoiseSpec([[1.0]], [[1.0]]), CostWeights([[1.0]], [[1.0]]))
    np.testing.assert_allclose(ctl.F, [[0.0]], atol=1e-12)
    assert spectral_radius(closed_loop(plant, ctl).A) < 1.0


def test_lqg_filter_without_process_noise_is_stable():
    plant = Plant(A=np.diag([0.9, 0.5]), B=[[1.0], [1.0]], C=[[1.0, 1.0]])
    noise = NoiseSpec(np.zeros((2, 2)), [[1.0]])
    ctl = lqg_baseline(plant, noise, CostWeights([[1.0]], [[1.0]]))
    assert spectral_radius(plant.A - ctl.H @ plant.C) < 1.0


def test_reduced_order_two_cost_band(benchmark, lqg_controller):
    reduced = reduce_controller(lqg_controller, 2)
    assert reduced.n_xi == 2
    J = cost_of_dyn_controller(*benchmark, reduced)
    assert J == pytest.approx(REDUCED_2_COST, rel=1e-6)
    assert J > cost_of_dyn_controller(*benchmark, lqg_controller)


def test_full_order_reduction_keeps_cost(benchmark, lqg_controller):
    full = cost_of_dyn_controller(*benchmark, lqg_controller)
    same = cost_of_dyn_controller(*benchmark, reduce_controller(lqg_controller, 3))
    assert same == pytest.approx(full, rel=1e-8)


def test_open_loop_rollout_scalar():
    plant = Plant(A=[[0.5]], B=[[1.0]], C=[[2.0]])
    u = np.array([[1.0], [0.0], [0.0]])
    zeros = np.zeros((3, 1))
    out = rollout_open_loop(plant, u, zeros, zeros)
    np.testing.assert_allclose(out.x[:, 0], [0.0, 1.0, 0.5])
    np.testing.assert_allclose(out.y[:, 0], [0.0, 2.0, 1.0])


def test_closed_loop_rollout_follows_recursion(benchmark, lqg_controller, rng):
    plant, _, _ = benchmark
    T = 30
    w = rng.standard_normal((T, 3))
    v = rng.standard_normal((T, 2))
    out = rollout_closed_loop(plant, lqg_controller, w, v)
    xi = np.zeros(3)
    for t in range(T):
        np.testing.assert_allclose(out.u[t], lqg_controller.F @ xi, atol=1e-12)
        xi = lqg_controller.G @ xi + lqg_controller.H @ out.y[t]
    np.testing.assert_allclose(out.y[0], v[0])


def test_problem_document_parsing(benchmark):
    doc = problem_to_dict(*benchmark)
    plant, noise, weights = problem_from_dict(doc)
    np.testing.assert_array_equal(plant.A, benchmark[0].A)
    np.testing.assert_array_equal(weights.R, [[10.0]])
    broken = dict(doc)
    del broken["Vv"]
    with pytest.raises(RejectedInputError):
        problem_from_dict(broken)
    broken = dict(doc, Q=[[1.0]])
    with pytest.raises(RejectedInputError):
        problem_from_dict(broken)


def test_controller_document_keeps_initial_state():
    ctl = DynController(G=[[0.5]], H=[[1.0, 2.0]], F=[[3.0]], xi0=[0.25])
    back = controller_from_dict(controller_to_dict(ctl))
    np.testing.assert_array_equal(back.xi0, [0.25])
    np.testing.assert_array_equal(back.H, [[1.0, 2.0]])


def test_plant_construction_leaves_structure_to_assumption_check():
    plant = Plant(A=np.eye(2) * 0.5, B=np.ones((2, 1)), C=[[1.0, 0.0]])
    assert plant.n_x == 2
    noise = NoiseSpec(np.eye(2), np.eye(1))
    with pytest.raises(NotObservableError):
        check_assumptions(plant, noise)
    with pytest.raises(NotObservableError):
        lqg_baseline(plant, noise, CostWeights(np.eye(1), np.eye(1)))
