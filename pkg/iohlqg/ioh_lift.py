"""
Input-output-history (IOH) lift of a plant and conversion between dynamic
controllers and static IOH gains.

Every stacked signal in this module is ordered oldest sample first: the
history of length L at time t is [s(t-L); ...; s(t-1)].
"""

from dataclasses import dataclass
from typing import Any, Dict, Mapping, NamedTuple, Optional

import numpy as np
import scipy.linalg as la
from numpy.typing import ArrayLike
from rich.console import Console

from iohlqg.exceptions import (
    InternalInvariantError,
    NotLiftableError,
    NotObservableError,
    RejectedInputError,
)
from iohlqg.linalg_core import (
    DEFAULT_TOLERANCES,
    Matrix,
    SolverTolerances,
    Vector,
    as_matrix,
    as_vector,
    block_hankel,
    minimal_realization,
    numerical_rank,
    observability,
    pinv,
    reachability,
    require_horizon,
)
from iohlqg.plant_ctl import DynController, Plant, check_l_step_observable

console = Console(stderr=True)

_SIGNALS = ("u", "y", "w", "v")


@dataclass(frozen=True)
class HistoryLayout:
    """Dimensions and slices of h = [z_u; z_y; e_w; e_v]."""

    L: int
    n_u: int
    n_y: int
    n_w: int
    n_v: int

    def __post_init__(self) -> None:
        require_horizon(self.L)
        for name in ("n_u", "n_y", "n_w", "n_v"):
            if getattr(self, name) < 0:
                raise RejectedInputError(f"{name} must be >= 0")

    @classmethod
    def for_plant(cls, plant: Plant, L: int) -> "HistoryLayout":
        return cls(L=int(L), n_u=plant.n_u, n_y=plant.n_y, n_w=plant.n_w, n_v=plant.n_v)

    @property
    def n_z(self) -> int:
        return self.L * (self.n_u + self.n_y)

    @property
    def n_e(self) -> int:
        return self.L * (self.n_w + self.n_v)

    @property
    def n_h(self) -> int:
        return self.n_z + self.n_e

    @property
    def n_d(self) -> int:
        return self.n_w + self.n_v

    def width(self, signal: str) -> int:
        if signal not in _SIGNALS:
            raise RejectedInputError(f"unknown signal '{signal}'")
        return getattr(self, f"n_{signal}")

    def block(self, signal: str) -> slice:
        """Slice of h holding the whole history of ``signal``."""
        start = 0
        for name in _SIGNALS:
            size = self.L * self.width(name)
            if name == signal:
                return slice(start, start + size)
            start += size
        raise RejectedInputError(f"unknown signal '{signal}'")

    def lag(self, signal: str, i: int) -> slice:
        """Slice of h holding s(t - i), 1 <= i <= L."""
        if not 1 <= i <= self.L:
            raise RejectedInputError(f"lag must be in [1, {self.L}], got {i}")
        n = self.width(signal)
        start = self.block(signal).start + (self.L - i) * n
        return slice(start, start + n)

    def stack(self, samples: ArrayLike, signal: str) -> Vector:
        """Flatten an (L, n) array of samples, row 0 oldest, into the history vector."""
        arr = as_matrix(samples, signal, (self.L, self.width(signal)))
        return arr.reshape(-1)

    def unstack(self, history: ArrayLike, signal: str) -> Matrix:
        vec = as_vector(history, signal, self.L * self.width(signal))
        return vec.reshape(self.L, self.width(signal))


def shift_operator(n: int, L: int) -> Matrix:
    """J_n: drops the oldest of L blocks of size n and leaves the newest slot zero."""
    return np.kron(np.eye(L, k=1), np.eye(n))


def newest_selector(n: int, L: int) -> Matrix:
    """E_n: writes an n-vector into the newest of L blocks."""
    e = np.zeros((L, 1))
    e[-1, 0] = 1.0
    return np.kron(e, np.eye(n))


@dataclass(frozen=True)
class HistorySystem:
    """
    Lifted dynamics of a plant on the history state h = [z; e]:

        h(t+1) = Theta h(t) + Pi_d d(t) + Pi_u u(t)
        y(t)   = Psi h(t) + Upsilon d(t)
        z(t)   = Gamma h(t)

    with d = [w; v]. ``state_map`` is [M1, M2, M3, M4], so x(t) = state_map h(t).
    """

    Theta: Matrix
    Pi_d: Matrix
    Pi_u: Matrix
    Psi: Matrix
    Gamma: Matrix
    Upsilon: Matrix
    state_map: Matrix
    layout: HistoryLayout

    @property
    def L(self) -> int:
        return self.layout.L


@dataclass(frozen=True)
class IohGain:
    """
    Static gain u(t) = K z(t) on the input-output history.

    K = [K^u, K^y] with K^u = [K^u_L, ..., K^u_1] and K^y = [K^y_L, ..., K^y_1];
    K^u_i multiplies u(t - i).
    """

    K: Matrix
    L: int
    n_u: int
    n_y: int

    def __post_init__(self) -> None:
        require_horizon(self.L)
        K = as_matrix(self.K, "K", (self.n_u, self.L * (self.n_u + self.n_y)))
        object.__setattr__(self, "K", K)

    @classmethod
    def zeros(cls, L: int, n_u: int, n_y: int) -> "IohGain":
        return cls(np.zeros((n_u, L * (n_u + n_y))), L, n_u, n_y)

    @classmethod
    def for_layout(cls, K: ArrayLike, layout: HistoryLayout) -> "IohGain":
        return cls(as_matrix(K, "K"), layout.L, layout.n_u, layout.n_y)

    def with_matrix(self, K: ArrayLike) -> "IohGain":
        return IohGain(as_matrix(K, "K"), self.L, self.n_u, self.n_y)

    @property
    def K_u(self) -> Matrix:
        return self.K[:, : self.L * self.n_u]

    @property
    def K_y(self) -> Matrix:
        return self.K[:, self.L * self.n_u :]

    def input_lag(self, i: int) -> Matrix:
        """K^u_i."""
        start = (self.L - i) * self.n_u
        return self.K_u[:, start : start + self.n_u]

    def output_lag(self, i: int) -> Matrix:
        """K^y_i."""
        start = (self.L - i) * self.n_y
        return self.K_y[:, start : start + self.n_y]

    @property
    def fro_norm(self) -> float:
        return float(np.linalg.norm(self.K, "fro"))

    def check_against(self, layout: HistoryLayout) -> None:
        if (self.L, self.n_u, self.n_y) != (layout.L, layout.n_u, layout.n_y):
            raise RejectedInputError(
                f"gain with (L, n_u, n_y) = {(self.L, self.n_u, self.n_y)} does not "
                f"match history layout {(layout.L, layout.n_u, layout.n_y)}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {"L": self.L, "nu": self.n_u, "ny": self.n_y, "K": self.K.tolist()}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "IohGain":
        try:
            return cls(as_matrix(doc["K"], "K"), int(doc["L"]), int(doc["nu"]), int(doc["ny"]))
        except KeyError as e:
            raise RejectedInputError(f"IOH gain document is missing field {e}") from e


@dataclass(frozen=True)
class HistoryState:
    """h = [z; e] with z = [u-history; y-history] and e = [w-history; v-history]."""

    z: Vector
    e: Vector

    @property
    def h(self) -> Vector:
        return np.concatenate([self.z, self.e])

    @classmethod
    def zeros(cls, layout: HistoryLayout) -> "HistoryState":
        return cls(np.zeros(layout.n_z), np.zeros(layout.n_e))

    @classmethod
    def from_signals(
        cls,
        layout: HistoryLayout,
        u: ArrayLike,
        y: ArrayLike,
        w: ArrayLike,
        v: ArrayLike,
        t: Optional[int] = None,
    ) -> "HistoryState":
        """
        Build h(t) from signal arrays indexed by time along rows.

        With ``t`` omitted the arrays must hold exactly the L samples t-L..t-1.
        """
        parts = []
        for name, sig in zip(_SIGNALS, (u, y, w, v)):
            arr = as_matrix(sig, name, (None, layout.width(name)))
            if t is not None:
                if t < layout.L or t > arr.shape[0]:
                    raise RejectedInputError(
                        f"history at t={t} needs samples {t - layout.L}..{t - 1} of {name}"
                    )
                arr = arr[t - layout.L : t]
            parts.append(layout.stack(arr, name))
        return cls(np.concatenate(parts[:2]), np.concatenate(parts[2:]))


class HistoryTrajectory(NamedTuple):
    """Row k holds step k of the run; ``h`` has one extra final row."""

    y: Matrix
    u: Matrix
    h: Matrix


def build_history_system(
    plant: Plant, L: int, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> HistorySystem:
    """
    Lift ``plant`` to its history dynamics of length L.

    Raises:
        NotObservableError: rank O_L(A, C) < n_x
    """
    require_horizon(L)
    L = int(L)
    A, B, C = plant.A, plant.B, plant.C
    n_x = plant.n_x
    if not check_l_step_observable(A, C, L, tol):
        raise NotObservableError(f"plant is not {L}-step observable")
    layout = HistoryLayout.for_plant(plant, L)
    n_u, n_y, n_w, n_v = layout.n_u, layout.n_y, layout.n_w, layout.n_v

    O_pinv = pinv(observability(A, C, L), tol)
    AL_O = np.linalg.matrix_power(A, L) @ O_pinv
    eye = np.eye(n_x)
    M1 = reachability(A, B, L) - AL_O @ block_hankel(A, B, C, L)
    M2 = AL_O
    M3 = reachability(A, eye, L) - AL_O @ block_hankel(A, eye, C, L)
    M4 = -AL_O
    state_map = np.hstack([M1, M2, M3, M4])
    if not np.array_equal(M4, -M2):
        raise InternalInvariantError("M4 != -M2")
    Psi = C @ state_map

    Theta = la.block_diag(
        shift_operator(n_u, L),
        shift_operator(n_y, L),
        shift_operator(n_w, L),
        shift_operator(n_v, L),
    )
    y_rows = layout.block("y")
    Theta[y_rows] += newest_selector(n_y, L) @ Psi

    Pi_d = np.zeros((layout.n_h, layout.n_d))
    Pi_d[y_rows, n_w:] = newest_selector(n_y, L)
    Pi_d[layout.block("w"), :n_w] = newest_selector(n_w, L)
    Pi_d[layout.block("v"), n_w:] = newest_selector(n_v, L)

    Pi_u = np.zeros((layout.n_h, n_u))
    Pi_u[layout.block("u")] = newest_selector(n_u, L)

    Gamma = np.hstack([np.eye(layout.n_z), np.zeros((layout.n_z, layout.n_e))])
    Upsilon = np.hstack([np.zeros((n_y, n_w)), np.eye(n_y)])
    return HistorySystem(
        Theta=Theta,
        Pi_d=Pi_d,
        Pi_u=Pi_u,
        Psi=Psi,
        Gamma=Gamma,
        Upsilon=Upsilon,
        state_map=state_map,
        layout=layout,
    )


def structured_gain(K: IohGain, sys: HistorySystem) -> Matrix:
    """[K^u, K^y, 0, 0], i.e. K Gamma."""
    K.check_against(sys.layout)
    return np.hstack([K.K, np.zeros((K.n_u, sys.layout.n_e))])


def simulate_history(
    sys: HistorySystem,
    K: IohGain,
    w: ArrayLike,
    v: ArrayLike,
    h_L: Optional[HistoryState] = None,
    T: Optional[int] = None,
    delta: Optional[ArrayLike] = None,
) -> HistoryTrajectory:
    """
    Run the history system in closed loop with u = K z.

    Step k corresponds to plant time L + k. ``delta`` (shape (T, n_h)) is added
    to the history update when given.
    """
    layout = sys.layout
    K.check_against(layout)
    w = as_matrix(w, "w", (None, layout.n_w))
    v = as_matrix(v, "v", (None, layout.n_v))
    T = w.shape[0] if T is None else int(T)
    if T < 1:
        raise RejectedInputError(f"T must be >= 1, got {T}")
    if w.shape[0] < T or v.shape[0] < T:
        raise RejectedInputError(f"noise sequences are shorter than T={T}")
    if delta is not None:
        delta = as_matrix(delta, "delta", (None, layout.n_h))
        if delta.shape[0] < T:
            raise RejectedInputError(f"delta sequence is shorter than T={T}")
    h0 = HistoryState.zeros(layout) if h_L is None else h_L
    h = as_vector(h0.h, "h_L", layout.n_h)

    KG = structured_gain(K, sys)
    Theta_K = sys.Theta + sys.Pi_u @ KG
    d = np.hstack([w[:T], v[:T]])
    ys = np.empty((T, layout.n_y))
    us = np.empty((T, layout.n_u))
    hs = np.empty((T + 1, layout.n_h))
    for k in range(T):
        hs[k] = h
        us[k] = KG @ h
        ys[k] = sys.Psi @ h + sys.Upsilon @ d[k]
        h = Theta_K @ h + sys.Pi_d @ d[k]
        if delta is not None:
            h = h + delta[k]
    hs[T] = h
    return HistoryTrajectory(ys, us, hs)


def lift_controller(
    ctl: DynController, L: int, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> IohGain:
    """
    IOH gain of length L producing the same input-output behaviour as ``ctl``.

    A realization whose O_L(G, F) is rank deficient is first reduced to a
    minimal one; the lift needs only the minimal realization to be L-step
    observable.

    Raises:
        NotLiftableError: the minimal realization is not L-step observable
    """
    require_horizon(L)
    L = int(L)
    n_u, n_y = ctl.n_out, ctl.n_in
    G, H, F = ctl.G, ctl.H, ctl.F
    if numerical_rank(observability(G, F, L), tol) < ctl.n_xi:
        G, H, F = minimal_realization(G, H, F, tol)
        console.log(
            f"[dim]lift_controller: reduced controller order {ctl.n_xi} -> {G.shape[0]}[/]"
        )
        if G.shape[0] > 0 and numerical_rank(observability(G, F, L), tol) < G.shape[0]:
            raise NotLiftableError(
                f"controller of minimal order {G.shape[0]} is not {L}-step observable"
            )
    if G.shape[0] == 0:
        return IohGain.zeros(L, n_u, n_y)

    F_GL_Opinv = F @ np.linalg.matrix_power(G, L) @ pinv(observability(G, F, L), tol)
    K_u = F_GL_Opinv
    K_y = F @ reachability(G, H, L) - F_GL_Opinv @ block_hankel(G, H, F, L)
    return IohGain(np.hstack([K_u, K_y]), L, n_u, n_y)


def realize_controller(K: IohGain, z_L: Optional[ArrayLike] = None) -> DynController:
    """
    Dynamic controller of order L n_u realizing u = K z.

    G carries identities on its block subdiagonal and [K^u_L; ...; K^u_1] in its
    last block column, H stacks [K^y_L; ...; K^y_1] and F reads the last block.
    For L = 1 this is G = K^u_1, H = K^y_1, F = I.
    """
    L, n_u, n_y = K.L, K.n_u, K.n_y
    n_xi = L * n_u
    G = np.kron(np.eye(L, k=-1), np.eye(n_u))
    H = np.empty((n_xi, n_y))
    for j in range(L):
        rows = slice(j * n_u, (j + 1) * n_u)
        G[rows, (L - 1) * n_u :] += K.input_lag(L - j)
        H[rows] = K.output_lag(L - j)
    F = np.hstack([np.zeros((n_u, (L - 1) * n_u)), np.eye(n_u)])

    if z_L is None:
        return DynController(G=G, H=H, F=F)

    z_L = as_vector(z_L, "z_L", L * (n_u + n_y))
    O = observability(G, F, L)
    rhs = z_L[: L * n_u] - block_hankel(G, H, F, L) @ z_L[L * n_u :]
    try:
        xi0 = la.solve(O, rhs)
    except la.LinAlgError as e:
        raise InternalInvariantError("O_L(G, F) of a realized IOH gain is singular") from e
    return DynController(G=G, H=H, F=F, xi0=xi0)
