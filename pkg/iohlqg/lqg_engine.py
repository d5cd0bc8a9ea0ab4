"""
Analytic cost and gradient of IOH gains on the (relaxed) history system.

For u = K z the closed history matrix is Theta_K = Theta + Pi_u K Gamma. With
Phi the solution of

    Theta_K^T Phi Theta_K - Phi + Psi^T Q Psi + Gamma^T K^T R K Gamma = 0

the relaxed cost is J_eps = tr(Phi (Pi_d V_d Pi_d^T + eps I)) + tr(Q V_v),
so J_eps = J + eps * gamma_K with gamma_K = tr(Phi).
"""

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from iohlqg.exceptions import RejectedInputError, UnboundedCostError
from iohlqg.ioh_lift import HistorySystem, IohGain, structured_gain
from iohlqg.linalg_core import (
    DEFAULT_TOLERANCES,
    Matrix,
    SolverTolerances,
    check_stable,
    solve_dlyap,
    solve_dlyap_transpose,
    spectral_radius,
    symmetrize,
)
from iohlqg.plant_ctl import CostWeights, DynController, NoiseSpec, Plant, closed_loop


@dataclass(frozen=True)
class RelaxedProblem:
    """History system, noise, weights and the relaxation level epsilon >= 0."""

    sys: HistorySystem
    noise: NoiseSpec
    weights: CostWeights
    epsilon: float = 0.0
    tol: SolverTolerances = DEFAULT_TOLERANCES

    def __post_init__(self) -> None:
        layout = self.sys.layout
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise RejectedInputError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.noise.V_w.shape[0] != layout.n_w or self.noise.V_v.shape[0] != layout.n_v:
            raise RejectedInputError("noise covariances do not match the history system")
        if self.weights.Q.shape[0] != layout.n_y or self.weights.R.shape[0] != layout.n_u:
            raise RejectedInputError("cost weights do not match the history system")

    def relaxed(self, epsilon: float) -> "RelaxedProblem":
        """Same problem at another relaxation level."""
        if epsilon == self.epsilon:
            return self
        return replace(self, epsilon=float(epsilon))

    @cached_property
    def noise_cov(self) -> Matrix:
        """Pi_d V_d Pi_d^T."""
        Pi_d = self.sys.Pi_d
        return symmetrize(Pi_d @ self.noise.V_d @ Pi_d.T)

    @cached_property
    def relaxed_noise_cov(self) -> Matrix:
        """Pi_d V_d Pi_d^T + eps I."""
        return self.noise_cov + self.epsilon * np.eye(self.sys.layout.n_h)

    @cached_property
    def output_weight(self) -> Matrix:
        """Psi^T Q Psi."""
        Psi = self.sys.Psi
        return symmetrize(Psi.T @ self.weights.Q @ Psi)

    @cached_property
    def const_term(self) -> float:
        """tr(Q V_v): direct feed-through of measurement noise into y."""
        return float(np.trace(self.weights.Q @ self.noise.V_v))


@dataclass(frozen=True)
class CostReport:
    J: float
    J_eps: float
    gamma_K: float
    const_term: float
    stable: bool
    epsilon: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "J": self.J,
            "J_eps": self.J_eps,
            "gamma_K": self.gamma_K,
            "const_term": self.const_term,
            "epsilon": self.epsilon,
            "stable": self.stable,
        }


class ClosedHistory(NamedTuple):
    theta: Matrix
    rho: float


class Evaluation(NamedTuple):
    """Cost report, relaxed gradient and the two Lyapunov solutions behind them."""

    report: CostReport
    grad: Matrix
    Phi: Matrix
    Y: Matrix
    rho: float

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad, "fro"))


class StationarityCert(NamedTuple):
    grad_norm_J: float
    bound: float


def theta_closed(prob: RelaxedProblem, K: IohGain) -> ClosedHistory:
    """Theta_K = Theta + Pi_u K Gamma and its spectral radius."""
    theta = prob.sys.Theta + prob.sys.Pi_u @ structured_gain(K, prob.sys)
    return ClosedHistory(theta, spectral_radius(theta))


def is_stabilizing(prob: RelaxedProblem, K: IohGain) -> bool:
    return theta_closed(prob, K).rho < 1.0 - prob.tol.stability_margin


def _stable_theta(prob: RelaxedProblem, K: IohGain) -> ClosedHistory:
    closed = theta_closed(prob, K)
    if closed.rho >= 1.0 - prob.tol.stability_margin:
        raise UnboundedCostError(
            f"gain is not stabilizing (spectral radius of Theta_K {closed.rho:.6g})",
            rho=closed.rho,
        )
    return closed


def _cost_to_go(prob: RelaxedProblem, K: IohGain, theta: Matrix) -> Matrix:
    KG = structured_gain(K, prob.sys)
    weight = prob.output_weight + symmetrize(KG.T @ prob.weights.R @ KG)
    return solve_dlyap_transpose(theta, weight, prob.tol)


def _report(prob: RelaxedProblem, Phi: Matrix) -> CostReport:
    c = prob.const_term
    J = float(np.sum(Phi * prob.noise_cov)) + c
    gamma = float(np.trace(Phi))
    return CostReport(
        J=J,
        J_eps=J + prob.epsilon * gamma,
        gamma_K=gamma,
        const_term=c,
        stable=True,
        epsilon=prob.epsilon,
    )


def _grad_from(
    prob: RelaxedProblem, K: IohGain, Phi: Matrix, Y: Matrix
) -> Matrix:
    # 2 W_K Y_K Gamma^T with W_K = (Pi_u^T Phi Pi_u + R) K Gamma + Pi_u^T Phi Theta
    sys = prob.sys
    Pi_u_Phi = sys.Pi_u.T @ Phi
    W = (Pi_u_Phi @ sys.Pi_u + prob.weights.R) @ structured_gain(K, sys) + Pi_u_Phi @ sys.Theta
    return 2.0 * W @ Y[:, : sys.layout.n_z]


def cost(prob: RelaxedProblem, K: IohGain) -> CostReport:
    """
    Cost report of a stabilizing gain.

    Raises:
        UnboundedCostError: rho(Theta_K) >= 1 - stability_margin
    """
    closed = _stable_theta(prob, K)
    return _report(prob, _cost_to_go(prob, K, closed.theta))


def evaluate(prob: RelaxedProblem, K: IohGain) -> Evaluation:
    """Cost report and relaxed gradient sharing one pair of Lyapunov solves."""
    closed = _stable_theta(prob, K)
    Phi = _cost_to_go(prob, K, closed.theta)
    Y = solve_dlyap(closed.theta, prob.relaxed_noise_cov, prob.tol)
    return Evaluation(_report(prob, Phi), _grad_from(prob, K, Phi, Y), Phi, Y, closed.rho)


def gradient(prob: RelaxedProblem, K: IohGain) -> Matrix:
    """Gradient of J_eps with respect to K (shape n_u x n_z)."""
    return evaluate(prob, K).grad


def gamma_gradient(prob: RelaxedProblem, K: IohGain) -> Matrix:
    """Gradient of gamma_K = tr(Phi_K): the same formula with the noise covariance replaced by I."""
    closed = _stable_theta(prob, K)
    Phi = _cost_to_go(prob, K, closed.theta)
    Y_id = solve_dlyap(closed.theta, np.eye(prob.sys.layout.n_h), prob.tol)
    return _grad_from(prob, K, Phi, Y_id)


def coercivity_lower_bound(prob: RelaxedProblem, K: IohGain) -> float:
    """sigma_min(R) * eps * ||K||_F^2, a lower bound on J_eps(K)."""
    sigma_min = float(np.min(la.eigvalsh(prob.weights.R)))
    return sigma_min * prob.epsilon * K.fro_norm ** 2


def epsilon_stationarity_cert(
    prob: RelaxedProblem, K: IohGain, beta_estimate: Optional[float] = None
) -> StationarityCert:
    """
    Compare ||grad J(K)||_F with eps * ||grad gamma_K||_F.

    At a stationary point of J_eps, grad J = -eps * grad gamma_K exactly. When
    ``beta_estimate`` is given the bound is eps * max(||grad gamma_K||_F, beta).
    """
    if beta_estimate is not None and beta_estimate < 0:
        raise RejectedInputError("beta_estimate must be >= 0")
    grad_J = gradient(prob.relaxed(0.0), K)
    scale = float(np.linalg.norm(gamma_gradient(prob, K), "fro"))
    if beta_estimate is not None:
        scale = max(scale, float(beta_estimate))
    return StationarityCert(float(np.linalg.norm(grad_J, "fro")), prob.epsilon * scale)


def closed_loop_cost_parts(
    plant: Plant,
    noise: NoiseSpec,
    weights: CostWeights,
    ctl: DynController,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
) -> Tuple[float, float]:
    """(state-driven part tr(Phi_cl B_cl V_d B_cl^T), feed-through part tr(Q V_v))."""
    loop = closed_loop(plant, ctl)
    check_stable(loop.A, tol, what="closed-loop matrix")
    weight = la.block_diag(weights.Q, weights.R)
    Phi_cl = solve_dlyap_transpose(loop.A, symmetrize(loop.C.T @ weight @ loop.C), tol)
    driven = float(np.sum(Phi_cl * (loop.B @ noise.V_d @ loop.B.T)))
    return driven, float(np.trace(weights.Q @ noise.V_v))


def cost_of_dyn_controller(
    plant: Plant,
    noise: NoiseSpec,
    weights: CostWeights,
    ctl: DynController,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
) -> float:
    """
    Stationary LQG cost E[y'Qy + u'Ru] of the loop (plant, ctl).

    Raises:
        InstabilityError: the closed loop is not Schur stable
    """
    driven, feedthrough = closed_loop_cost_parts(plant, noise, weights, ctl, tol)
    return driven + feedthrough


class GradientCheck(NamedTuple):
    max_rel_error: float
    analytic: Matrix
    numeric: Matrix
    coords: Tuple[Tuple[int, int], ...]


def finite_difference_check(
    prob: RelaxedProblem,
    K: IohGain,
    step: float = 1e-6,
    coords: Optional[Sequence[Tuple[int, int]]] = None,
) -> GradientCheck:
    """
    Central differences of J_eps against the analytic gradient.

    The error is max |g_fd - g| over the probed entries divided by
    max(||g||_inf, 1e-12). All entries are probed when ``coords`` is None.
    """
    if step <= 0:
        raise RejectedInputError(f"step must be > 0, got {step}")
    g = gradient(prob, K)
    picks = tuple(np.ndindex(*g.shape)) if coords is None else tuple(tuple(c) for c in coords)
    numeric = np.full(g.shape, np.nan)
    for i, j in picks:
        E = np.zeros_like(K.K)
        E[i, j] = step
        up = cost(prob, K.with_matrix(K.K + E)).J_eps
        down = cost(prob, K.with_matrix(K.K - E)).J_eps
        numeric[i, j] = (up - down) / (2.0 * step)
    errors = [abs(numeric[i, j] - g[i, j]) for i, j in picks]
    scale = max(float(np.max(np.abs(g))) if g.size else 0.0, 1e-12)
    return GradientCheck(max(errors, default=0.0) / scale, g, numeric, picks)
