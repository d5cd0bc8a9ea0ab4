"""Plant, noise, cost-weight and dynamic-controller types plus closed-loop plumbing."""

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg as la
from numpy.typing import ArrayLike

from iohlqg.exceptions import NotObservableError, RejectedInputError
from iohlqg.linalg_core import (
    DEFAULT_TOLERANCES,
    Matrix,
    SolverTolerances,
    Vector,
    as_matrix,
    as_vector,
    balanced_truncation,
    numerical_rank,
    observability,
    solve_dare,
    symmetrize,
)


@dataclass(frozen=True)
class Plant:
    """x(t+1) = A x + B u + w,  y = C x + v.

    Construction only checks shapes and finiteness. Stabilizability of (A, B) and
    observability of (A, C) are only checked by `check_assumptions`, which
    `lqg_baseline` calls before solving.
    """

    A: Matrix
    B: Matrix
    C: Matrix

    def __post_init__(self) -> None:
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise RejectedInputError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", as_matrix(self.B, "B", (n, None)))
        object.__setattr__(self, "C", as_matrix(self.C, "C", (None, n)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_w(self) -> int:
        return self.n_x

    @property
    def n_v(self) -> int:
        return self.n_y


def _min_eig(M: Matrix) -> float:
    return float(np.min(la.eigvalsh(M))) if M.size else 0.0


def _symmetric(M: ArrayLike, name: str, n: Optional[int] = None) -> Matrix:
    M = as_matrix(M, name, (n, n))
    if M.shape[0] != M.shape[1]:
        raise RejectedInputError(f"{name} must be square, got {M.shape}")
    if np.linalg.norm(M - M.T) > 1e-10 * (1.0 + np.linalg.norm(M)):
        raise RejectedInputError(f"{name} must be symmetric")
    return symmetrize(M)


@dataclass(frozen=True)
class NoiseSpec:
    """
    Covariances of the i.i.d. Gaussian process noise w and measurement noise v.

    V_v = 0 is accepted so that noiseless problems can be evaluated; synthesis
    of the Riccati baseline requires V_v > 0 (see ``check_assumptions``).
    """

    V_w: Matrix
    V_v: Matrix

    def __post_init__(self) -> None:
        V_w = _symmetric(self.V_w, "V_w")
        V_v = _symmetric(self.V_v, "V_v")
        for name, M in (("V_w", V_w), ("V_v", V_v)):
            if _min_eig(M) < -1e-12:
                raise RejectedInputError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "V_w", V_w)
        object.__setattr__(self, "V_v", V_v)

    @property
    def V_d(self) -> Matrix:
        """Covariance of d = [w; v]."""
        return la.block_diag(self.V_w, self.V_v)

    @property
    def measurement_positive(self) -> bool:
        return _min_eig(self.V_v) > 0.0


@dataclass(frozen=True)
class CostWeights:
    """Output weight Q > 0 and input weight R > 0 of the stage cost y'Qy + u'Ru."""

    Q: Matrix
    R: Matrix

    def __post_init__(self) -> None:
        Q = _symmetric(self.Q, "Q")
        R = _symmetric(self.R, "R")
        for name, M in (("Q", Q), ("R", R)):
            if _min_eig(M) <= 0.0:
                raise RejectedInputError(f"{name} must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class DynController:
    """xi(t+1) = G xi + H y,  u = F xi,  xi(0) = xi0."""

    G: Matrix
    H: Matrix
    F: Matrix
    xi0: Vector = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        G = as_matrix(self.G, "G")
        if G.shape[0] != G.shape[1]:
            raise RejectedInputError(f"G must be square, got {G.shape}")
        n = G.shape[0]
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", as_matrix(self.H, "H", (n, None)))
        object.__setattr__(self, "F", as_matrix(self.F, "F", (None, n)))
        xi0 = np.zeros(n) if self.xi0 is None else as_vector(self.xi0, "xi0", n)
        object.__setattr__(self, "xi0", xi0)

    @property
    def n_xi(self) -> int:
        return self.G.shape[0]

    @property
    def n_in(self) -> int:
        return self.H.shape[1]

    @property
    def n_out(self) -> int:
        return self.F.shape[0]

    def check_against(self, plant: Plant) -> None:
        """Raise RejectedInputError unless the controller fits the plant's y and u."""
        if self.n_in != plant.n_y or self.n_out != plant.n_u:
            raise RejectedInputError(
                f"controller maps {self.n_in} outputs to {self.n_out} inputs, "
                f"plant has n_y={plant.n_y}, n_u={plant.n_u}"
            )


class ClosedLoop(NamedTuple):
    """State [x; xi], noise input [w; v], outputs [y; u] = C x_cl + D d."""

    A: Matrix
    B: Matrix
    C: Matrix
    D: Matrix


def check_l_step_observable(
    A: ArrayLike, C: ArrayLike, L: int, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> bool:
    """True iff rank O_L(A, C) equals the state dimension."""
    A = as_matrix(A, "A")
    return numerical_rank(observability(A, C, L), tol) == A.shape[0]


def check_stabilizable(
    A: ArrayLike, B: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> bool:
    """PBH test: rank [lambda I - A, B] = n for every eigenvalue with |lambda| >= 1."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B", (A.shape[0], None))
    n = A.shape[0]
    for lam in la.eigvals(A):
        if abs(lam) < 1.0:
            continue
        pencil = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
        s = la.svd(pencil, compute_uv=False)
        if s.size == 0 or np.sum(s > tol.pinv_cutoff * max(s[0], 1.0)) < n:
            return False
    return True


def check_assumptions(
    plant: Plant, noise: NoiseSpec, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> None:
    """Raise unless (A, B) is stabilizable, (A, C) observable and V_v > 0."""
    if not check_stabilizable(plant.A, plant.B, tol):
        raise NotObservableError("(A, B) is not stabilizable")
    if not check_l_step_observable(plant.A, plant.C, plant.n_x, tol):
        raise NotObservableError("(A, C) is not observable")
    if noise.V_w.shape[0] != plant.n_w or noise.V_v.shape[0] != plant.n_v:
        raise RejectedInputError("noise covariances do not match the plant dimensions")
    if not noise.measurement_positive:
        raise RejectedInputError("measurement noise covariance V_v must be positive definite")


def closed_loop(plant: Plant, ctl: DynController) -> ClosedLoop:
    """Interconnect plant and controller with u = F xi and y = C x + v."""
    ctl.check_against(plant)
    n_x, n_xi = plant.n_x, ctl.n_xi
    n_y, n_u = plant.n_y, plant.n_u
    A_cl = np.block([
        [plant.A, plant.B @ ctl.F],
        [ctl.H @ plant.C, ctl.G],
    ])
    B_cl = np.block([
        [np.eye(n_x), np.zeros((n_x, n_y))],
        [np.zeros((n_xi, n_x)), ctl.H],
    ])
    C_cl = np.block([
        [plant.C, np.zeros((n_y, n_xi))],
        [np.zeros((n_u, n_x)), ctl.F],
    ])
    D_cl = np.block([
        [np.zeros((n_y, n_x)), np.eye(n_y)],
        [np.zeros((n_u, n_x)), np.zeros((n_u, n_y))],
    ])
    return ClosedLoop(A_cl, B_cl, C_cl, D_cl)


def lqg_baseline(
    plant: Plant,
    noise: NoiseSpec,
    weights: CostWeights,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
) -> DynController:
    """
    Optimal LQG controller in one-step-predictor form.

    F solves the control Riccati equation with state weight C'QC; H is the
    predictor gain of the filter Riccati equation with covariances (V_w, V_v);
    G = A + B F - H C.
    """
    check_assumptions(plant, noise, tol)
    A, B, C = plant.A, plant.B, plant.C
    P = solve_dare(A, B, C.T @ weights.Q @ C, weights.R, tol)
    F = -la.solve(weights.R + B.T @ P @ B, B.T @ P @ A, assume_a="pos")
    S = solve_dare(A.T, C.T, noise.V_w, noise.V_v, tol)
    H = la.solve(C @ S @ C.T + noise.V_v, C @ S @ A.T, assume_a="pos").T
    G = A + B @ F - H @ C
    return DynController(G=G, H=H, F=F)


def reduce_controller(
    ctl: DynController, order: int, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> DynController:
    """Balanced truncation of a (stable) controller to ``order`` states."""
    G_r, H_r, F_r = balanced_truncation(ctl.G, ctl.H, ctl.F, order, tol)
    return DynController(G=G_r, H=H_r, F=F_r)


class Rollout(NamedTuple):
    """Signals indexed by time t = 0..T-1 (rows)."""

    y: Matrix
    u: Matrix
    x: Matrix


def rollout_open_loop(
    plant: Plant,
    u: ArrayLike,
    w: ArrayLike,
    v: ArrayLike,
    x0: Optional[ArrayLike] = None,
) -> Rollout:
    """Drive the plant with given input and noise sequences (time along rows)."""
    u = as_matrix(u, "u", (None, plant.n_u))
    T = u.shape[0]
    w = as_matrix(w, "w", (T, plant.n_w))
    v = as_matrix(v, "v", (T, plant.n_v))
    x = np.zeros(plant.n_x) if x0 is None else as_vector(x0, "x0", plant.n_x)
    xs = np.empty((T, plant.n_x))
    ys = np.empty((T, plant.n_y))
    for t in range(T):
        xs[t] = x
        ys[t] = plant.C @ x + v[t]
        x = plant.A @ x + plant.B @ u[t] + w[t]
    return Rollout(ys, u, xs)


def rollout_closed_loop(
    plant: Plant,
    ctl: DynController,
    w: ArrayLike,
    v: ArrayLike,
    x0: Optional[ArrayLike] = None,
) -> Rollout:
    """Simulate (plant, controller) from x(0) = x0 and xi(0) = ctl.xi0."""
    ctl.check_against(plant)
    w = as_matrix(w, "w", (None, plant.n_w))
    T = w.shape[0]
    v = as_matrix(v, "v", (T, plant.n_v))
    x = np.zeros(plant.n_x) if x0 is None else as_vector(x0, "x0", plant.n_x)
    xi = ctl.xi0.copy()
    xs = np.empty((T, plant.n_x))
    ys = np.empty((T, plant.n_y))
    us = np.empty((T, plant.n_u))
    for t in range(T):
        xs[t] = x
        us[t] = ctl.F @ xi
        ys[t] = plant.C @ x + v[t]
        x = plant.A @ x + plant.B @ us[t] + w[t]
        xi = ctl.G @ xi + ctl.H @ ys[t]
    return Rollout(ys, us, xs)


def benchmark_problem() -> Tuple[Plant, NoiseSpec, CostWeights]:
    """Three-state, one-input, two-output benchmark with its noise and weights."""
    plant = Plant(
        A=np.array([
            [0.7349, 0.1195, 0.3545],
            [0.08005, 0.961, -0.1506],
            [0.3654, -0.1217, 0.5076],
        ]),
        B=np.array([[-0.1158], [0.0], [-0.5297]]),
        C=np.array([
            [-0.2326, -0.5851, 0.9771],
            [-0.1116, 0.0, 0.6755],
        ]),
    )
    noise = NoiseSpec(V_w=0.1 * np.eye(3), V_v=0.1 * np.eye(2))
    weights = CostWeights(Q=100.0 * np.eye(2), R=np.array([[10.0]]))
    return plant, noise, weights


def _matrix_field(doc: Mapping[str, Any], key: str) -> Matrix:
    if key not in doc:
        raise RejectedInputError(f"missing field '{key}'")
    return as_matrix(doc[key], key)


def problem_from_dict(doc: Mapping[str, Any]) -> Tuple[Plant, NoiseSpec, CostWeights]:
    """Parse {"A","B","C","Vw","Vv","Q","R"} (row-major nested lists)."""
    plant = Plant(_matrix_field(doc, "A"), _matrix_field(doc, "B"), _matrix_field(doc, "C"))
    noise = NoiseSpec(_matrix_field(doc, "Vw"), _matrix_field(doc, "Vv"))
    weights = CostWeights(_matrix_field(doc, "Q"), _matrix_field(doc, "R"))
    if noise.V_w.shape[0] != plant.n_w or noise.V_v.shape[0] != plant.n_v:
        raise RejectedInputError("noise covariances do not match the plant dimensions")
    if weights.Q.shape[0] != plant.n_y or weights.R.shape[0] != plant.n_u:
        raise RejectedInputError("cost weights do not match the plant dimensions")
    return plant, noise, weights


def problem_to_dict(plant: Plant, noise: NoiseSpec, weights: CostWeights) -> Dict[str, Any]:
    return {
        "A": plant.A.tolist(),
        "B": plant.B.tolist(),
        "C": plant.C.tolist(),
        "Vw": noise.V_w.tolist(),
        "Vv": noise.V_v.tolist(),
        "Q": weights.Q.tolist(),
        "R": weights.R.tolist(),
    }


def controller_to_dict(ctl: DynController) -> Dict[str, Any]:
    return {
        "G": ctl.G.tolist(),
        "H": ctl.H.tolist(),
        "F": ctl.F.tolist(),
        "xi0": ctl.xi0.tolist(),
    }


def controller_from_dict(doc: Mapping[str, Any]) -> DynController:
    """Parse {"G","H","F"[,"xi0"]}."""
    G = _matrix_field(doc, "G")
    n = G.shape[0]
    H = np.zeros((0, 0)) if n == 0 and not doc.get("H") else _matrix_field(doc, "H")
    F = np.zeros((0, 0)) if n == 0 and not doc.get("F") else _matrix_field(doc, "F")
    return DynController(G=G, H=H, F=F, xi0=doc.get("xi0"))
