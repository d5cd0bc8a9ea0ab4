"""Type definitions for the JSON documents written by iohlqg."""

from typing import List, Optional, TypedDict

Rows = List[List[float]]


class ControllerDoc(TypedDict, total=False):
    G: Rows
    H: Rows
    F: Rows
    xi0: List[float]


class SeedSummary(TypedDict):
    seed: int
    final_J: Optional[float]
    final_J_eps: Optional[float]
    grad_norm: Optional[float]
    iterations: int
    stop_reason: str
    backoffs: int
    monotone: bool
    ascent_steps: int
    max_delta_J_eps: Optional[float]
    non_coercive: int
    error: Optional[str]


class SynthSummary(TypedDict):
    """summary.json written by ``synth``."""

    report_type: str
    L: int
    alpha: float
    epsilon: float
    max_iters: int
    seeds: int
    succeeded: int
    best_seed: Optional[int]
    final_J: Optional[float]
    baseline_J: Optional[float]
    gap: Optional[float]
    gap_percent: Optional[float]
    hankel_singular_values: List[float]
    runs: List[SeedSummary]


class BaselineSummary(TypedDict, total=False):
    report_type: str
    J: float
    order: int
    hankel_singular_values: List[float]
    controller: ControllerDoc
    reduced_order: int
    reduced_J: float
    reduced_controller: ControllerDoc


class GradCheckSummary(TypedDict):
    report_type: str
    L: int
    epsilon: float
    seed: int
    max_rel_error: float
    grad_norm: float
    threshold: float
    passed: bool


class SimulationSummary(TypedDict, total=False):
    report_type: str
    mean: float
    std_err: float
    n_samples: int
    horizon: int
    rollouts: int
    burn_in: int
    seed: int
    analytic: Optional[float]
    within_3_std_err: Optional[bool]
