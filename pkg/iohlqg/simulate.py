"""
Monte-Carlo estimates of stationary LQG costs.

Each rollout owns a PCG64 stream spawned from ``SeedSequence(seed)``, so an
estimate depends only on the seed and the rollout count, never on how the
rollouts are split across workers.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from joblib import Parallel, delayed
from rich.console import Console

from iohlqg.common_utils import thread_count
from iohlqg.exceptions import DivergingRolloutError, RejectedInputError
from iohlqg.ioh_lift import IohGain, structured_gain
from iohlqg.linalg_core import Matrix, psd_factor
from iohlqg.lqg_engine import RelaxedProblem, theta_closed
from iohlqg.plant_ctl import CostWeights, DynController, NoiseSpec, Plant, closed_loop

console = Console(stderr=True)

STATE_GUARD = 1e12
NOISE_CHUNK = 4096
# with a single rollout the standard error comes from this many batch means
SINGLE_ROLLOUT_BATCHES = 10


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 100_000
    n_rollouts: int = 20
    burn_in: Optional[int] = None
    seed: int = 0
    n_jobs: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_rollouts < 1:
            raise RejectedInputError(f"n_rollouts must be >= 1, got {self.n_rollouts}")
        burn_in = self.horizon // 10 if self.burn_in is None else self.burn_in
        if burn_in < 0 or self.horizon <= burn_in:
            raise RejectedInputError(
                f"need horizon > burn_in >= 0, got horizon={self.horizon}, burn_in={burn_in}"
            )
        if self.n_rollouts == 1 and self.horizon - burn_in < SINGLE_ROLLOUT_BATCHES:
            raise RejectedInputError("a single rollout needs at least 10 averaged samples")
        object.__setattr__(self, "burn_in", burn_in)

    @property
    def window(self) -> int:
        return self.horizon - int(self.burn_in or 0)


class CostEstimate(NamedTuple):
    mean: float
    std_err: float
    n_samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean, "std_err": self.std_err, "n_samples": self.n_samples}

    def within(self, value: float, k: float = 3.0) -> bool:
        """True when |mean - value| <= k * std_err."""
        return abs(self.mean - value) <= k * self.std_err


class BlockCostCheck(NamedTuple):
    """Stage-cost average against the history-weighted average z'Sz/L."""

    lhs: CostEstimate
    rhs: CostEstimate

    @property
    def gap(self) -> float:
        return abs(self.lhs.mean - self.rhs.mean)

    @property
    def combined_std_err(self) -> float:
        return float(np.hypot(self.lhs.std_err, self.rhs.std_err))


class Trajectory(NamedTuple):
    t: np.ndarray
    y: Matrix
    u: Matrix


class _QuadraticOutput(NamedTuple):
    C: Matrix
    D: Matrix
    W: Matrix


@dataclass(frozen=True)
class _NoisyLoop:
    """s(t+1) = A s + B d (+ delta), each output o = C s + D d weighted by o'Wo."""

    A: Matrix
    B: Matrix
    s0: np.ndarray
    d_factor: Matrix
    outputs: Tuple[_QuadraticOutput, ...]
    delta_scale: float = 0.0


class _NoiseStream:
    def __init__(self, seq: np.random.SeedSequence, n_d: int, n_delta: int):
        self._rng = np.random.Generator(np.random.PCG64(seq))
        self._n_d = n_d
        self._n_delta = n_delta

    def draw(self, steps: int) -> Tuple[np.ndarray, np.ndarray]:
        d = self._rng.standard_normal((steps, self._n_d))
        delta = self._rng.standard_normal((steps, self._n_delta)) if self._n_delta else np.zeros((steps, 0))
        return d, delta


def _streams(loop: _NoisyLoop, seed: int, indices: Sequence[int], total: int) -> List[_NoiseStream]:
    children = np.random.SeedSequence(seed).spawn(total)
    n_delta = loop.A.shape[0] if loop.delta_scale > 0 else 0
    return [_NoiseStream(children[i], loop.d_factor.shape[0], n_delta) for i in indices]


def _simulate_group(
    loop: _NoisyLoop,
    cfg: SimConfig,
    indices: Sequence[int],
    record: bool = False,
) -> Tuple[np.ndarray, Optional[List[np.ndarray]]]:
    """
    Per-rollout window averages, shape (len(indices), n_outputs, n_batches).

    With ``record`` the raw outputs of the first rollout in the group are returned too.
    """
    streams = _streams(loop, cfg.seed, indices, cfg.n_rollouts)
    R = len(indices)
    burn_in = int(cfg.burn_in or 0)
    n_batches = SINGLE_ROLLOUT_BATCHES if cfg.n_rollouts == 1 else 1
    batch_len = cfg.window // n_batches
    sums = np.zeros((R, len(loop.outputs), n_batches))
    S = np.tile(loop.s0, (R, 1))
    A_T, B_T, F_T = loop.A.T, loop.B.T, loop.d_factor.T
    recorded: Optional[List[np.ndarray]] = (
        [np.empty((cfg.horizon, out.C.shape[0])) for out in loop.outputs] if record else None
    )

    t = 0
    while t < cfg.horizon:
        steps = min(NOISE_CHUNK, cfg.horizon - t)
        draws = [s.draw(steps) for s in streams]
        d_chunk = np.stack([dr[0] for dr in draws]) @ F_T
        delta_chunk = np.stack([dr[1] for dr in draws]) * loop.delta_scale
        for k in range(steps):
            d = d_chunk[:, k, :]
            if t >= burn_in:
                b = min((t - burn_in) // batch_len, n_batches - 1) if batch_len else 0
            for j, out in enumerate(loop.outputs):
                o = S @ out.C.T + d @ out.D.T
                if recorded is not None:
                    recorded[j][t] = o[0]
                if t >= burn_in:
                    sums[:, j, b] += np.einsum("ri,ij,rj->r", o, out.W, o)
            S = S @ A_T + d @ B_T
            if loop.delta_scale > 0:
                S = S + delta_chunk[:, k, :]
            peak = np.max(np.abs(S)) if S.size else 0.0
            if not np.isfinite(peak) or peak > STATE_GUARD:
                raise DivergingRolloutError(
                    f"rollout state norm exceeded {STATE_GUARD:.0e} at t={t}"
                )
            t += 1

    counts = np.full(n_batches, batch_len, dtype=float)
    counts[-1] = cfg.window - batch_len * (n_batches - 1)
    return sums / counts, recorded


def _run(loop: _NoisyLoop, cfg: SimConfig) -> np.ndarray:
    workers = thread_count() if cfg.n_jobs is None else cfg.n_jobs
    workers = max(1, min(workers, cfg.n_rollouts))
    groups = [list(g) for g in np.array_split(np.arange(cfg.n_rollouts), workers) if len(g)]
    try:
        if workers == 1:
            parts = [_simulate_group(loop, cfg, groups[0])[0]]
        else:
            parts = [
                p[0]
                for p in Parallel(n_jobs=workers)(
                    delayed(_simulate_group)(loop, cfg, g) for g in groups
                )
            ]
    except DivergingRolloutError as e:
        console.log(f"[red]simulate: {e}[/]")
        raise
    return np.concatenate(parts, axis=0)


def _estimate(samples: np.ndarray) -> CostEstimate:
    """samples: (n_rollouts, n_batches) window averages."""
    flat = samples.reshape(-1)
    n = flat.size
    std_err = float(np.std(flat, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return CostEstimate(float(np.mean(flat)), std_err, n)


def _stage_weight(weights: CostWeights) -> Matrix:
    return la.block_diag(weights.Q, weights.R)


def _dyn_loop(plant: Plant, noise: NoiseSpec, weights: CostWeights, ctl: DynController) -> _NoisyLoop:
    loop = closed_loop(plant, ctl)
    s0 = np.concatenate([np.zeros(plant.n_x), ctl.xi0])
    return _NoisyLoop(
        A=loop.A,
        B=loop.B,
        s0=s0,
        d_factor=psd_factor(noise.V_d),
        outputs=(_QuadraticOutput(loop.C, loop.D, _stage_weight(weights)),),
    )


def _ioh_loop(prob: RelaxedProblem, K: IohGain, with_delta: bool, block_cost: bool = False) -> _NoisyLoop:
    sys = prob.sys
    layout = sys.layout
    KG = structured_gain(K, sys)
    C = np.vstack([sys.Psi, KG])
    D = np.vstack([sys.Upsilon, np.zeros((layout.n_u, layout.n_d))])
    outputs = [_QuadraticOutput(C, D, _stage_weight(prob.weights))]
    if block_cost:
        L = layout.L
        S = la.block_diag(np.kron(np.eye(L), prob.weights.R), np.kron(np.eye(L), prob.weights.Q))
        outputs.append(_QuadraticOutput(sys.Gamma, np.zeros((layout.n_z, layout.n_d)), S / L))
    return _NoisyLoop(
        A=theta_closed(prob, K).theta,
        B=sys.Pi_d,
        s0=np.zeros(layout.n_h),
        d_factor=psd_factor(prob.noise.V_d),
        outputs=tuple(outputs),
        delta_scale=float(np.sqrt(prob.epsilon)) if with_delta else 0.0,
    )


def estimate_cost_dyn(
    plant: Plant,
    noise: NoiseSpec,
    weights: CostWeights,
    ctl: DynController,
    cfg: SimConfig = SimConfig(),
) -> CostEstimate:
    """
    Time-averaged y'Qy + u'Ru of the loop (plant, ctl) over [burn_in, horizon).

    Raises:
        DivergingRolloutError: a rollout state exceeded the norm guard
    """
    ctl.check_against(plant)
    samples = _run(_dyn_loop(plant, noise, weights, ctl), cfg)
    return _estimate(samples[:, 0, :])


def estimate_cost_ioh(
    prob: RelaxedProblem,
    K: IohGain,
    cfg: SimConfig = SimConfig(),
    with_delta: bool = False,
) -> CostEstimate:
    """Same estimator on the history system, adding N(0, eps I) to h iff ``with_delta``."""
    samples = _run(_ioh_loop(prob, K, with_delta), cfg)
    return _estimate(samples[:, 0, :])


def block_cost_identity_check(
    prob: RelaxedProblem, K: IohGain, cfg: SimConfig = SimConfig()
) -> BlockCostCheck:
    """
    Stage-cost average and z'Sz/L average, S = diag(I_L (x) R, I_L (x) Q),
    along the same trajectories of the history system.
    """
    samples = _run(_ioh_loop(prob, K, with_delta=False, block_cost=True), cfg)
    return BlockCostCheck(_estimate(samples[:, 0, :]), _estimate(samples[:, 1, :]))


def sample_trajectory(
    plant: Plant,
    noise: NoiseSpec,
    weights: CostWeights,
    ctl: DynController,
    cfg: SimConfig = SimConfig(),
) -> Trajectory:
    """Outputs y and inputs u of rollout 0, the same draw ``estimate_cost_dyn`` averages."""
    _, recorded = _simulate_group(_dyn_loop(plant, noise, weights, ctl), cfg, [0], record=True)
    assert recorded is not None
    yu = recorded[0]
    return Trajectory(np.arange(cfg.horizon), yu[:, : plant.n_y], yu[:, plant.n_y :])
