import numpy as np
import pytest
import scipy.linalg as la

from iohlqg.exceptions import InstabilityError, RejectedInputError, SolverFailureError
from iohlqg.linalg_core import (
    SolverTolerances,
    balanced_truncation,
    block_hankel,
    bode,
    frequency_response,
    gramians,
    h2_norm,
    hankel_singular_values,
    minimal_realization,
    numerical_rank,
    observability,
    pinv,
    psd_factor,
    psd_sqrt,
    reachability,
    solve_dare,
    solve_dlyap,
    solve_dlyap_transpose,
    spectral_radius,
)


def test_reachability_scalar_powers():
    np.testing.assert_array_equal(reachability([[2.0]], [[1.0]], 3), [[4.0, 2.0, 1.0]])


def test_reachability_single_block_is_B(benchmark):
    plant, _, _ = benchmark
    np.testing.assert_array_equal(reachability(plant.A, plant.B, 1), plant.B)


def test_reachability_columns_match_repeated_products(benchmark):
    plant, _, _ = benchmark
    R = reachability(plant.A, plant.B, 3)
    assert R.shape == (3, 3)
    np.testing.assert_allclose(R[:, 0:1], plant.A @ plant.A @ plant.B)
    np.testing.assert_allclose(R[:, 1:2], plant.A @ plant.B)
    np.testing.assert_allclose(R[:, 2:3], plant.B)


def test_observability_examples(benchmark):
    np.testing.assert_array_equal(observability([[1.0]], [[1.0]], 2), [[1.0], [1.0]])
    plant, _, _ = benchmark
    O = observability(plant.A, plant.C, 3)
    assert O.shape == (6, 3)
    assert numerical_rank(O) == 3
    assert numerical_rank(observability(plant.A, np.zeros((2, 3)), 3)) == 0


def test_block_hankel_scalar_markov_parameters():
    H = block_hankel([[0.5]], [[1.0]], [[1.0]], 3)
    np.testing.assert_allclose(H, [[0, 0, 0], [1, 0, 0], [0.5, 1, 0]])


def test_block_hankel_single_block_is_zero(benchmark):
    plant, _, _ = benchmark
    np.testing.assert_array_equal(block_hankel(plant.A, plant.B, plant.C, 1), np.zeros((2, 1)))


def test_block_hankel_lower_corner_is_CAB(benchmark):
    plant, _, _ = benchmark
    H = block_hankel(plant.A, plant.B, plant.C, 3)
    np.testing.assert_allclose(H[4:6, 0:1], plant.C @ plant.A @ plant.B)
    np.testing.assert_allclose(H[2:4, 0:1], plant.C @ plant.B)


def test_block_operators_reject_bad_shapes():
    with pytest.raises(RejectedInputError):
        reachability(np.eye(2), np.ones((3, 1)), 2)
    with pytest.raises(RejectedInputError):
        observability(np.eye(2), np.ones((1, 3)), 2)
    with pytest.raises(RejectedInputError):
        reachability(np.eye(2), np.ones((2, 1)), 0)


def test_scalar_lyapunov_solutions():
    np.testing.assert_allclose(solve_dlyap_transpose([[0.5]], [[1.0]]), [[4.0 / 3.0]])
    np.testing.assert_allclose(solve_dlyap([[0.5]], [[3.0]]), [[4.0]])
    np.testing.assert_array_equal(solve_dlyap_transpose([[0.5]], [[0.0]]), [[0.0]])


def test_lyapunov_matches_truncated_series(rng):
    M = rng.standard_normal((4, 4))
    A = 0.7 * M / np.max(np.abs(np.linalg.eigvals(M)))
    N = rng.standard_normal((4, 4))
    Q = N.T @ N
    X = solve_dlyap_transpose(A, Q)
    series = np.zeros((4, 4))
    term = Q.copy()
    for _ in range(200):
        series += term
        term = A.T @ term @ A
    np.testing.assert_allclose(X, series, rtol=1e-10, atol=1e-10)


def test_large_lyapunov_agrees_across_solver_paths(rng):
    n = 30
    M = rng.standard_normal((n, n))
    A = 0.9 * M / np.max(np.abs(np.linalg.eigvals(M)))
    Q = np.eye(n)
    X = solve_dlyap(A, Q)
    assert np.linalg.norm(A @ X @ A.T - X + Q) < 1e-8 * n
    kron = solve_dlyap(A, Q, SolverTolerances(kron_max_order=n))
    np.testing.assert_allclose(kron, X, rtol=1e-7, atol=1e-9 * np.linalg.norm(X))


def test_lyapunov_rejects_unstable_matrix():
    with pytest.raises(InstabilityError) as info:
        solve_dlyap([[1.2]], [[1.0]])
    assert info.value.rho == pytest.approx(1.2)


def test_scalar_dare_closed_form_root():
    P = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    # p^2 - 0.25 p - 1 = 0
    expected = (0.25 + np.sqrt(0.25 ** 2 + 4.0)) / 2.0
    assert P[0, 0] == pytest.approx(expected, abs=1e-12)
    assert P[0, 0] == pytest.approx(1.1328, abs=1e-4)


def test_dare_with_zero_dynamics_returns_state_weight():
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    P = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    np.testing.assert_allclose(P, Q, atol=1e-12)


def test_dare_rejects_unstabilizable_pair():
    with pytest.raises(SolverFailureError):
        solve_dare([[1.5]], [[0.0]], [[1.0]], [[1.0]])


@pytest.mark.parametrize("index", range(10))
def test_dare_agrees_with_scipy_on_random_pairs(index):
    g = np.random.Generator(np.random.PCG64(100 + index))
    n, m = 2 + index % 3, 1 + index % 2
    A = g.standard_normal((n, n))
    A *= (0.5 + 0.1 * index) / spectral_radius(A)
    B = g.standard_normal((n, m))
    N = g.standard_normal((n, n))
    Q = N @ N.T + 0.1 * np.eye(n)
    R = np.eye(m) * (1.0 + index)
    P = solve_dare(A, B, Q, R)
    np.testing.assert_allclose(P, P.T)
    np.testing.assert_allclose(P, la.solve_discrete_are(A, B, Q, R), rtol=1e-9, atol=1e-10)


def test_pinv_examples(rng):
    np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(pinv(np.zeros((2, 3))), np.zeros((3, 2)))
    M = rng.standard_normal((5, 2))
    np.testing.assert_allclose(pinv(M), np.linalg.solve(M.T @ M, M.T), atol=1e-12)


@pytest.mark.parametrize("shape,rank", [((5, 2), 2), ((2, 5), 2), ((4, 4), 2), ((6, 3), 1)])
def test_pinv_satisfies_penrose_identities(shape, rank, rng):
    rows, cols = shape
    M = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
    P = pinv(M)
    assert P.shape == (cols, rows)
    np.testing.assert_allclose(M @ P @ M, M, atol=1e-10)
    np.testing.assert_allclose(P @ M @ P, P, atol=1e-10)
    np.testing.assert_allclose((M @ P).T, M @ P, atol=1e-10)
    np.testing.assert_allclose((P @ M).T, P @ M, atol=1e-10)


def test_spectral_radius_examples():
    assert spectral_radius(np.diag([0.9, -0.3])) == pytest.approx(0.9)
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert spectral_radius(rot) == pytest.approx(1.0)
    # z^2 - z + 0.24 = (z - 0.4)(z - 0.6)
    assert spectral_radius([[1.0, -0.24], [1.0, 0.0]]) == pytest.approx(0.6)


def test_psd_factor_and_sqrt(rng):
    N = rng.standard_normal((3, 2))
    W = N @ N.T
    F = psd_factor(W)
    np.testing.assert_allclose(F @ F.T, W, atol=1e-12)
    S = psd_sqrt(W)
    np.testing.assert_allclose(S, S.T)
    np.testing.assert_allclose(S @ S, W, atol=1e-12)
    with pytest.raises(RejectedInputError):
        psd_factor(-np.eye(2))


def test_scalar_gramians_and_hankel_value():
    Wc, Wo = gramians([[0.5]], [[1.0]], [[1.0]])
    np.testing.assert_allclose(Wc, [[4.0 / 3.0]])
    np.testing.assert_allclose(Wo, [[4.0 / 3.0]])
    np.testing.assert_allclose(hankel_singular_values([[0.5]], [[1.0]], [[1.0]]), [4.0 / 3.0])
    assert h2_norm([[0.5]], [[1.0]], [[1.0]]) == pytest.approx(np.sqrt(4.0 / 3.0))


def test_hankel_values_vanish_without_output():
    hsv = hankel_singular_values(np.diag([0.5, 0.2]), np.ones((2, 1)), np.zeros((1, 2)))
    np.testing.assert_allclose(hsv, [0.0, 0.0], atol=1e-15)


def test_lqg_controller_hankel_values_are_positive(lqg_controller):
    hsv = hankel_singular_values(lqg_controller.G, lqg_controller.H, lqg_controller.F)
    assert hsv.shape == (3,)
    assert np.all(hsv > 0)
    assert np.all(np.diff(hsv) <= 0)


@pytest.mark.parametrize("index", range(5))
def test_hankel_values_survive_change_of_coordinates(index, random_controller):
    g = np.random.Generator(np.random.PCG64(300 + index))
    ctl = random_controller(3, 2, 1, gen=g)
    T = np.eye(3) + 0.3 * g.standard_normal((3, 3))
    T_inv = np.linalg.inv(T)
    np.testing.assert_allclose(
        hankel_singular_values(T_inv @ ctl.G @ T, T_inv @ ctl.H, ctl.F @ T),
        hankel_singular_values(ctl.G, ctl.H, ctl.F),
        rtol=1e-8,
        atol=1e-12,
    )


def test_full_order_truncation_keeps_frequency_response(lqg_controller):
    G, H, F = lqg_controller.G, lqg_controller.H, lqg_controller.F
    Gr, Hr, Fr = balanced_truncation(G, H, F, 3)
    omegas = np.geomspace(1e-3, np.pi, 50)
    np.testing.assert_allclose(
        frequency_response(Gr, Hr, Fr, omegas), frequency_response(G, H, F, omegas), atol=1e-8
    )


def test_truncation_keeps_dominant_decoupled_mode():
    A = np.diag([0.9, 0.1])
    B = np.diag([1.0, 0.1])
    C = np.diag([1.0, 0.1])
    Ar, Br, Cr = balanced_truncation(A, B, C, 1)
    assert Ar[0, 0] == pytest.approx(0.9)
    assert (Cr @ Br)[0, 0] == pytest.approx(1.0)


def test_truncation_rejects_bad_order():
    with pytest.raises(RejectedInputError):
        balanced_truncation(np.diag([0.5, 0.2]), np.ones((2, 1)), np.ones((1, 2)), 3)


def test_minimal_realization_drops_hidden_modes():
    A = np.diag([0.5, 0.3, -0.2])
    B = np.array([[1.0], [1.0], [0.0]])  # third mode unreachable
    C = np.array([[1.0, 0.0, 1.0]])  # second mode unobservable
    Am, Bm, Cm = minimal_realization(A, B, C)
    assert Am.shape == (1, 1)
    assert Am[0, 0] == pytest.approx(0.5)
    omegas = np.linspace(0.1, 3.0, 7)
    np.testing.assert_allclose(
        frequency_response(Am, Bm, Cm, omegas), frequency_response(A, B, C, omegas), atol=1e-12
    )


def test_frequency_response_of_scalar_system():
    omegas = np.array([0.0, np.pi])
    resp = frequency_response([[0.5]], [[1.0]], [[1.0]], omegas)
    assert resp.shape == (2, 1, 1)
    np.testing.assert_allclose(resp[:, 0, 0], [2.0, -1.0 / 1.5], atol=1e-12)
    mag_db, phase = bode([[0.5]], [[1.0]], [[1.0]], [0.0])
    assert mag_db[0, 0, 0] == pytest.approx(20 * np.log10(2.0))
    assert phase[0, 0, 0] == pytest.approx(0.0)
