"""Policy-gradient descent over IOH gains on the relaxed LQG problem."""

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from rich.console import Console

from iohlqg.common_utils import thread_count
from iohlqg.exceptions import (
    IohLqgError,
    NoStabilizerFoundError,
    RejectedInputError,
    StepDestabilizedError,
    UnboundedCostError,
)
from iohlqg.ioh_lift import IohGain, realize_controller
from iohlqg.linalg_core import hankel_singular_values, spectral_radius
from iohlqg.lqg_engine import (
    Evaluation,
    RelaxedProblem,
    coercivity_lower_bound,
    evaluate,
    is_stabilizing,
)

console = Console(stderr=True)

MAX_REJECTION_DRAWS = 10_000
DESCENT_SLACK = 1e-12


@dataclass(frozen=True)
class PgmConfig:
    alpha: float = 1e-3
    epsilon: float = 1e-8
    max_iters: int = 100_000
    grad_tol: float = 1e-9
    record_every: int = 100
    seed: int = 0
    init_norm: float = 1.0
    max_backoff: int = 30
    track_hsv: bool = True

    def __post_init__(self) -> None:
        for name in ("alpha", "epsilon", "grad_tol", "init_norm"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise RejectedInputError(f"{name} must be > 0, got {value}")
        if self.max_iters < 1:
            raise RejectedInputError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.record_every < 1:
            raise RejectedInputError(f"record_every must be >= 1, got {self.record_every}")
        if self.max_backoff < 0:
            raise RejectedInputError("max_backoff must be >= 0")


class DescentCheck(NamedTuple):
    """Realized change of J_eps over one step against alpha ||g||_F^2."""

    delta_J_eps: float
    alpha_grad_sq: float

    @property
    def monotone(self) -> bool:
        return self.delta_J_eps <= DESCENT_SLACK

    @property
    def sufficient(self) -> bool:
        return -self.delta_J_eps >= 0.5 * self.alpha_grad_sq


class StepResult(NamedTuple):
    gain: IohGain
    check: DescentCheck
    evaluation: Evaluation
    alpha: float


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    J: float
    J_eps: float
    grad_norm: float
    rho: float
    hankel_svs: Tuple[float, ...]
    wall_ms: float
    alpha: float
    monotone: bool
    sufficient_decrease: bool
    coercive: bool


@dataclass
class PgmTrace:
    records: List[TraceRecord] = field(default_factory=list)
    stop_reason: str = ""
    iterations: int = 0
    backoffs: int = 0
    # tallied over every step, recorded or not
    ascent_steps: int = 0
    insufficient_steps: int = 0
    non_coercive: int = 0
    max_delta_J_eps: Optional[float] = None

    @property
    def final(self) -> TraceRecord:
        if not self.records:
            raise RejectedInputError("trace is empty")
        return self.records[-1]

    @property
    def monotone(self) -> bool:
        return self.ascent_steps == 0

    def tally(self, check: DescentCheck, coercive: bool) -> None:
        if self.max_delta_J_eps is None or check.delta_J_eps > self.max_delta_J_eps:
            self.max_delta_J_eps = check.delta_J_eps
        if not check.monotone:
            self.ascent_steps += 1
        if not check.sufficient:
            self.insufficient_steps += 1
        if not coercive:
            self.non_coercive += 1

    def header(self) -> List[str]:
        n_hsv = max((len(r.hankel_svs) for r in self.records), default=0)
        return (
            ["iter", "J", "J_eps", "grad_norm", "rho"]
            + [f"hsv_{i + 1}" for i in range(n_hsv)]
            + ["wall_ms", "alpha", "monotone", "sufficient_decrease", "coercive"]
        )

    def rows(self) -> List[List[Any]]:
        n_hsv = len(self.header()) - 10
        out = []
        for r in self.records:
            hsv = list(r.hankel_svs) + [float("nan")] * (n_hsv - len(r.hankel_svs))
            out.append(
                [r.iteration, r.J, r.J_eps, r.grad_norm, r.rho]
                + hsv
                + [r.wall_ms, r.alpha, int(r.monotone), int(r.sufficient_decrease), int(r.coercive)]
            )
        return out


class PgmResult(NamedTuple):
    gain: IohGain
    trace: PgmTrace


class SeedOutcome(NamedTuple):
    index: int
    result: Optional[PgmResult]
    error: Optional[str]


def _generator(seed: Any) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def random_stabilizing_gain(
    prob: RelaxedProblem,
    norm: float = 1.0,
    seed: Any = None,
    max_draws: int = MAX_REJECTION_DRAWS,
) -> IohGain:
    """
    Rejection-sample a stabilizing gain with ||K||_F = norm.

    Entries are drawn i.i.d. U(-1, 1) from a PCG64 stream and rescaled.

    Raises:
        NoStabilizerFoundError: no draw in ``max_draws`` attempts was stabilizing
    """
    if not np.isfinite(norm) or norm <= 0:
        raise RejectedInputError(f"norm must be > 0, got {norm}")
    layout = prob.sys.layout
    rng = _generator(seed)
    shape = (layout.n_u, layout.n_z)
    for draw in range(1, max_draws + 1):
        K = rng.uniform(-1.0, 1.0, size=shape)
        scale = np.linalg.norm(K, "fro")
        if scale == 0.0:
            continue
        gain = IohGain.for_layout(K * (norm / scale), layout)
        if is_stabilizing(prob, gain):
            if draw > 1:
                console.log(f"[dim]random_stabilizing_gain: rejected {draw - 1} draws[/]")
            return gain
    raise NoStabilizerFoundError(
        f"no stabilizing gain of norm {norm} found in {max_draws} draws"
    )


def step(
    prob: RelaxedProblem,
    K: IohGain,
    alpha: float,
    current: Optional[Evaluation] = None,
) -> StepResult:
    """
    K_next = K - alpha * grad J_eps(K).

    Raises:
        UnboundedCostError: K is not stabilizing
        StepDestabilizedError: K_next is not stabilizing
    """
    if not np.isfinite(alpha) or alpha <= 0:
        raise RejectedInputError(f"alpha must be > 0, got {alpha}")
    here = evaluate(prob, K) if current is None else current
    K_next = K.with_matrix(K.K - alpha * here.grad)
    try:
        there = evaluate(prob, K_next)
    except UnboundedCostError as e:
        rho = e.rho if e.rho is not None else float("inf")
        raise StepDestabilizedError(
            f"step with alpha={alpha:.3g} left the stabilizing set (rho={rho:.6g})",
            rho=rho,
            alpha=alpha,
        ) from e
    check = DescentCheck(
        delta_J_eps=there.report.J_eps - here.report.J_eps,
        alpha_grad_sq=alpha * here.grad_norm ** 2,
    )
    return StepResult(K_next, check, there, alpha)


def _hankel_svs(K: IohGain) -> Tuple[float, ...]:
    ctl = realize_controller(K)
    if spectral_radius(ctl.G) >= 1.0:
        return tuple([float("nan")] * ctl.n_xi)
    try:
        return tuple(float(s) for s in hankel_singular_values(ctl.G, ctl.H, ctl.F))
    except IohLqgError:
        return tuple([float("nan")] * ctl.n_xi)


def run(
    prob: RelaxedProblem,
    K0: IohGain,
    config: PgmConfig = PgmConfig(),
    on_record: Optional[Callable[[TraceRecord], None]] = None,
) -> PgmResult:
    """
    Iterate ``step`` until ||grad J_eps||_F < grad_tol or max_iters steps.

    A destabilizing step is retried with half the step size, up to
    ``max_backoff`` times; the reduced size applies to that step only.
    """
    prob = prob.relaxed(config.epsilon)
    K0.check_against(prob.sys.layout)
    trace = PgmTrace()
    start = time.perf_counter()
    K = K0
    ev = evaluate(prob, K)
    if ev.report.J_eps < coercivity_lower_bound(prob, K):
        trace.non_coercive += 1

    def record(i: int, alpha: float, check: Optional[DescentCheck]) -> None:
        rec = TraceRecord(
            iteration=i,
            J=ev.report.J,
            J_eps=ev.report.J_eps,
            grad_norm=ev.grad_norm,
            rho=ev.rho,
            hankel_svs=_hankel_svs(K) if config.track_hsv else (),
            wall_ms=1e3 * (time.perf_counter() - start),
            alpha=alpha,
            monotone=True if check is None else check.monotone,
            sufficient_decrease=True if check is None else check.sufficient,
            coercive=ev.report.J_eps >= coercivity_lower_bound(prob, K),
        )
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)

    last_alpha = config.alpha
    i = 0
    while True:
        if ev.grad_norm < config.grad_tol:
            trace.stop_reason = "grad_tol"
            break
        if i >= config.max_iters:
            trace.stop_reason = "max_iters"
            break
        alpha = config.alpha
        for attempt in range(config.max_backoff + 1):
            try:
                res = step(prob, K, alpha, current=ev)
                break
            except StepDestabilizedError as e:
                if attempt == config.max_backoff:
                    raise
                trace.backoffs += 1
                alpha *= 0.5
                console.log(
                    f"[yellow]pgm: iteration {i} left the stabilizing set "
                    f"(rho={e.rho:.6g}), retrying with alpha={alpha:.3g}[/]"
                )
        if i % config.record_every == 0:
            record(i, res.alpha, res.check)
        K, ev = res.gain, res.evaluation
        trace.tally(res.check, ev.report.J_eps >= coercivity_lower_bound(prob, K))
        last_alpha = res.alpha
        i += 1

    trace.iterations = i
    if trace.ascent_steps:
        console.log(
            f"[yellow]pgm: {trace.ascent_steps} of {i} steps increased J_eps "
            f"(largest increase {trace.max_delta_J_eps:.3e})[/]"
        )
    if not trace.records or trace.records[-1].iteration != i:
        record(i, last_alpha, None)
    console.log(
        f"[dim]pgm: stopped after {i} iterations ({trace.stop_reason}), "
        f"J={ev.report.J:.6f}, |grad|={ev.grad_norm:.3e}[/]"
    )
    return PgmResult(K, trace)


def _seeded_run(
    prob: RelaxedProblem, index: int, seq: np.random.SeedSequence, config: PgmConfig
) -> SeedOutcome:
    try:
        K0 = random_stabilizing_gain(prob, config.init_norm, seq)
        return SeedOutcome(index, run(prob, K0, config), None)
    except IohLqgError as e:
        return SeedOutcome(index, None, f"{type(e).__name__}: {e}")


def seed_streams(seed: int, n: int) -> Sequence[np.random.SeedSequence]:
    """Independent child streams of SeedSequence(seed)."""
    return np.random.SeedSequence(seed).spawn(n)


def multi_seed_study(
    prob: RelaxedProblem,
    n_seeds: int,
    config: PgmConfig = PgmConfig(),
    n_jobs: Optional[int] = None,
    on_done: Optional[Callable[[SeedOutcome], None]] = None,
) -> List[SeedOutcome]:
    """
    Run PGM from ``n_seeds`` random stabilizing gains.

    Per-run failures are returned in ``SeedOutcome.error``; results are
    ordered by seed index regardless of the worker count.
    """
    if n_seeds < 1:
        raise RejectedInputError(f"n_seeds must be >= 1, got {n_seeds}")
    workers = thread_count() if n_jobs is None else n_jobs
    streams = seed_streams(config.seed, n_seeds)
    if workers == 1:
        runs: Iterable[SeedOutcome] = (_seeded_run(prob, i, s, config) for i, s in enumerate(streams))
    else:
        runs = Parallel(n_jobs=workers, return_as="generator")(
            delayed(_seeded_run)(prob, i, s, config) for i, s in enumerate(streams)
        )
    outcomes: List[SeedOutcome] = []
    for o in runs:
        outcomes.append(o)
        if on_done is not None:
            on_done(o)
        if o.error is not None:
            console.log(f"[red]pgm: seed {o.index} failed: {o.error}[/]")
    return sorted(outcomes, key=lambda o: o.index)


def summarize(outcomes: Sequence[SeedOutcome]) -> Dict[str, Any]:
    """Final-cost statistics over the successful runs."""
    finals = [o.result.trace.final.J for o in outcomes if o.result is not None]
    return {
        "runs": len(outcomes),
        "succeeded": len(finals),
        "best_J": min(finals) if finals else None,
        "worst_J": max(finals) if finals else None,
        "mean_J": float(np.mean(finals)) if finals else None,
    }
