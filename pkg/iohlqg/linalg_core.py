"""Dense linear-algebra kernels: block operators, Lyapunov/Riccati solvers and Gramians."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from numpy.typing import ArrayLike, NDArray

from iohlqg.exceptions import InstabilityError, RejectedInputError, SolverFailureError

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]


@dataclass(frozen=True)
class SolverTolerances:
    """Numerical gates shared by every solver call."""

    stability_margin: float = 1e-9
    pinv_cutoff: float = 1e-10
    lyap_residual: float = 1e-8
    # Stein equations up to this order are solved through the Kronecker system.
    kron_max_order: int = 12

    def __post_init__(self) -> None:
        for name in ("stability_margin", "pinv_cutoff", "lyap_residual"):
            if not getattr(self, name) > 0:
                raise RejectedInputError(f"{name} must be strictly positive")
        if self.stability_margin >= 1:
            raise RejectedInputError("stability_margin must be < 1")
        if self.kron_max_order < 0:
            raise RejectedInputError("kron_max_order must be >= 0")


DEFAULT_TOLERANCES = SolverTolerances()


def as_matrix(
    value: ArrayLike,
    name: str = "matrix",
    shape: Optional[Tuple[Optional[int], Optional[int]]] = None,
) -> Matrix:
    """
    Coerce input to a finite 2-D float array.

    Scalars become 1x1 matrices. ``shape`` entries left as ``None`` are not checked.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim < 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != 2:
        raise RejectedInputError(f"{name} must be 2-D, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains NaN or Inf entries")
    if shape is not None:
        rows, cols = shape
        if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
            raise RejectedInputError(
                f"{name} has shape {arr.shape}, expected ({rows}, {cols})"
            )
    return arr


def as_vector(value: ArrayLike, name: str = "vector", size: Optional[int] = None) -> Vector:
    """Coerce input to a finite 1-D float array."""
    arr = np.asarray(value, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} contains NaN or Inf entries")
    if size is not None and arr.size != size:
        raise RejectedInputError(f"{name} has length {arr.size}, expected {size}")
    return arr


def _require_square(M: Matrix, name: str) -> int:
    if M.shape[0] != M.shape[1]:
        raise RejectedInputError(f"{name} must be square, got {M.shape}")
    return M.shape[0]


def require_horizon(L: int) -> None:
    if int(L) != L or L < 1:
        raise RejectedInputError(f"history length L must be an integer >= 1, got {L}")


def symmetrize(X: Matrix) -> Matrix:
    """Return (X + X^T) / 2."""
    return 0.5 * (X + X.T)


def reachability(A: ArrayLike, B: ArrayLike, L: int) -> Matrix:
    """Block reachability matrix [A^(L-1) B, ..., A B, B], highest power leftmost."""
    require_horizon(L)
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    blocks = []
    M = B
    for _ in range(L):
        blocks.append(M)
        M = A @ M
    return np.hstack(blocks[::-1])


def observability(A: ArrayLike, C: ArrayLike, L: int) -> Matrix:
    """Block observability matrix [C; C A; ...; C A^(L-1)]."""
    require_horizon(L)
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    C = as_matrix(C, "C", (None, n))
    rows = []
    M = C
    for _ in range(L):
        rows.append(M)
        M = M @ A
    return np.vstack(rows)


def block_hankel(A: ArrayLike, B: ArrayLike, C: ArrayLike, L: int) -> Matrix:
    """
    Strictly block-lower-triangular Toeplitz matrix of Markov parameters.

    Block (i, j) is C A^(i-j-1) B for i > j and zero otherwise, so that
    ``[y] = O_L x + H_L [u]`` for oldest-first stacked signals.
    """
    require_horizon(L)
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    C = as_matrix(C, "C", (None, n))
    p, m = C.shape[0], B.shape[1]
    markov = []
    M = B
    for _ in range(L - 1):
        markov.append(C @ M)
        M = A @ M
    H = np.zeros((L * p, L * m))
    for i in range(L):
        for j in range(i):
            H[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j - 1]
    return H


def spectral_radius(M: ArrayLike) -> float:
    """Largest eigenvalue modulus (0 for an empty matrix)."""
    M = as_matrix(M, "M")
    _require_square(M, "M")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(la.eigvals(M))))


def singular_values(M: ArrayLike) -> Vector:
    """Singular values in descending order."""
    M = as_matrix(M, "M")
    if M.size == 0:
        return np.zeros(0)
    return la.svd(M, compute_uv=False)


def numerical_rank(M: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES) -> int:
    """Count singular values above ``pinv_cutoff`` times the largest one."""
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.pinv_cutoff * s[0]))


def pinv(M: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES) -> Matrix:
    """Moore-Penrose pseudoinverse with a relative singular-value cutoff."""
    M = as_matrix(M, "M")
    if M.size == 0:
        return np.zeros((M.shape[1], M.shape[0]))
    U, s, Vt = la.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))
    keep = s > tol.pinv_cutoff * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def check_stable(A: Matrix, tol: SolverTolerances = DEFAULT_TOLERANCES, what: str = "A") -> float:
    """Raise InstabilityError unless rho(A) < 1 - stability_margin; return rho(A)."""
    rho = spectral_radius(A)
    if rho >= 1.0 - tol.stability_margin:
        raise InstabilityError(f"{what} is not Schur stable (spectral radius {rho:.6g})", rho=rho)
    return rho


def _stein(M: Matrix, Q: Matrix, tol: SolverTolerances) -> Matrix:
    # M X M^T - X + Q = 0
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        if n <= tol.kron_max_order:
            lhs = np.eye(n * n) - np.kron(M, M)
            x = np.linalg.solve(lhs, Q.reshape(-1, order="F"))
            X = x.reshape((n, n), order="F")
        else:
            X = la.solve_discrete_lyapunov(M, Q, method="bilinear")
    except (np.linalg.LinAlgError, la.LinAlgError) as e:
        raise SolverFailureError(f"Lyapunov solve failed: {e}") from e
    X = symmetrize(np.real_if_close(X).astype(float))
    residual = np.linalg.norm(M @ X @ M.T - X + Q, "fro")
    bound = tol.lyap_residual * (1.0 + np.linalg.norm(Q, "fro"))
    if not np.isfinite(residual) or residual > bound:
        raise SolverFailureError(
            f"Lyapunov residual {residual:.3e} exceeds gate {bound:.3e}"
        )
    return X


def _lyap_inputs(A: ArrayLike, Q: ArrayLike) -> Tuple[Matrix, Matrix]:
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    Q = as_matrix(Q, "Q", (n, n))
    scale = 1.0 + np.linalg.norm(Q, "fro")
    if np.linalg.norm(Q - Q.T, "fro") > 1e-8 * scale:
        raise RejectedInputError("Q must be symmetric")
    return A, symmetrize(Q)


def solve_dlyap_transpose(
    A: ArrayLike, Q: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> Matrix:
    """
    Solve the observability-type equation A^T X A - X + Q = 0.

    Args:
        A: Schur-stable square matrix
        Q: Symmetric right-hand side
        tol: Solver tolerances (stability and residual gates)

    Returns:
        Symmetric solution X
    """
    A, Q = _lyap_inputs(A, Q)
    check_stable(A, tol)
    return _stein(A.T, Q, tol)


def solve_dlyap(A: ArrayLike, Q: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES) -> Matrix:
    """Solve the controllability-type equation A X A^T - X + Q = 0."""
    A, Q = _lyap_inputs(A, Q)
    check_stable(A, tol)
    return _stein(A, Q, tol)


def solve_dare(
    A: ArrayLike,
    B: ArrayLike,
    Q: ArrayLike,
    R: ArrayLike,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
) -> Matrix:
    """
    Stabilizing solution of A^T P A - P - A^T P B (R + B^T P B)^-1 B^T P A + Q = 0.

    Delegates to ``scipy.linalg.solve_discrete_are``; the result is then checked
    for its residual and for closed-loop stability of A - B (R + B^T P B)^-1 B^T P A.

    Raises:
        SolverFailureError: non-stabilizable pair or residual failure
    """
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    m = B.shape[1]
    Q = symmetrize(as_matrix(Q, "Q", (n, n)))
    R = symmetrize(as_matrix(R, "R", (m, m)))
    try:
        la.cholesky(R)
    except la.LinAlgError as e:
        raise RejectedInputError("R must be positive definite") from e

    try:
        P = symmetrize(la.solve_discrete_are(A, B, Q, R))
    except (la.LinAlgError, ValueError) as e:
        raise SolverFailureError(f"Riccati solve failed (pair not stabilizable?): {e}") from e
    if not np.all(np.isfinite(P)):
        raise SolverFailureError("Riccati solution is not finite (pair not stabilizable?)")

    S = R + B.T @ P @ B
    gain = la.solve(S, B.T @ P @ A)
    residual = np.linalg.norm(A.T @ P @ A - P - A.T @ P @ B @ gain + Q, "fro")
    if residual > tol.lyap_residual * (1.0 + np.linalg.norm(P, "fro")):
        raise SolverFailureError(f"Riccati residual {residual:.3e} too large")
    rho = spectral_radius(A - B @ gain)
    if rho >= 1.0:
        raise SolverFailureError(
            f"Riccati solution is not stabilizing (closed-loop spectral radius {rho:.6g})"
        )
    return P


def _psd_eig(W: ArrayLike) -> Tuple[Vector, Matrix]:
    W = symmetrize(as_matrix(W, "W"))
    if W.size == 0:
        return np.zeros(0), np.zeros_like(W)
    lam, V = la.eigh(W)
    floor = -1e-12 * max(1.0, float(np.max(np.abs(lam))))
    if np.min(lam) < floor:
        raise RejectedInputError(
            f"matrix is not positive semidefinite (min eigenvalue {np.min(lam):.3e})"
        )
    return np.clip(lam, 0.0, None), V


def psd_factor(W: ArrayLike) -> Matrix:
    """Square factor F with F F^T = W for symmetric W >= 0 (tiny negative eigenvalues clamped)."""
    lam, V = _psd_eig(W)
    return V * np.sqrt(lam)


def psd_sqrt(W: ArrayLike) -> Matrix:
    """Symmetric square root of W >= 0."""
    lam, V = _psd_eig(W)
    return symmetrize((V * np.sqrt(lam)) @ V.T)


def gramians(
    A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> Tuple[Matrix, Matrix]:
    """Controllability and observability Gramians of a stable discrete-time system."""
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    C = as_matrix(C, "C", (None, n))
    Wc = solve_dlyap(A, B @ B.T, tol)
    Wo = solve_dlyap_transpose(A, C.T @ C, tol)
    return Wc, Wo


def h2_norm(A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES) -> float:
    """H2 norm of C (zI - A)^-1 B."""
    C = as_matrix(C, "C")
    Wc, _ = gramians(A, B, C, tol)
    return float(np.sqrt(max(np.trace(C @ Wc @ C.T), 0.0)))


def _balancing_svd(
    A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: SolverTolerances
) -> Tuple[Matrix, Matrix, Matrix, Vector, Matrix]:
    A = as_matrix(A, "A")
    _require_square(A, "A")
    check_stable(A, tol)
    Wc, Wo = gramians(A, B, C, tol)
    Lc = psd_factor(Wc)
    Lo = psd_factor(Wo)
    U, s, Vt = la.svd(Lo.T @ Lc)
    return Lc, Lo, U, s, Vt


def hankel_singular_values(
    A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> Vector:
    """
    Hankel singular values, descending.

    Computed as singular values of Lo^T Lc where Wc = Lc Lc^T and Wo = Lo Lo^T,
    which equals sqrt(eig(Wc Wo)) without forming the product.
    """
    if as_matrix(A, "A").size == 0:
        return np.zeros(0)
    _, _, _, s, _ = _balancing_svd(A, B, C, tol)
    return s


def balanced_truncation(
    A: ArrayLike,
    B: ArrayLike,
    C: ArrayLike,
    target_order: int,
    tol: SolverTolerances = DEFAULT_TOLERANCES,
) -> Tuple[Matrix, Matrix, Matrix]:
    """
    Square-root balanced truncation.

    Args:
        A, B, C: Stable realization
        target_order: Number of states to keep, 1 <= target_order <= n
        tol: Solver tolerances

    Returns:
        Tuple (A_r, B_r, C_r) of the balanced, truncated realization
    """
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    C = as_matrix(C, "C", (None, n))
    if int(target_order) != target_order or not 1 <= target_order <= n:
        raise RejectedInputError(f"target_order must be in [1, {n}], got {target_order}")
    Lc, Lo, U, s, Vt = _balancing_svd(A, B, C, tol)
    r = int(target_order)
    if s[0] == 0.0 or s[r - 1] <= tol.pinv_cutoff * s[0]:
        raise SolverFailureError(
            f"order {r} exceeds the numerically minimal order of the system"
        )
    scale = 1.0 / np.sqrt(s[:r])
    T = (Lc @ Vt[:r].T) * scale
    T_inv = scale[:, None] * (U[:, :r].T @ Lo.T)
    return T_inv @ A @ T, T_inv @ B, C @ T


def minimal_realization(
    A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: SolverTolerances = DEFAULT_TOLERANCES
) -> Tuple[Matrix, Matrix, Matrix]:
    """
    Remove unreachable then unobservable states by orthogonal projection.

    The reachable subspace is A-invariant and the unobservable subspace is the
    kernel of the observability matrix, so both restrictions keep the transfer
    function unchanged.
    """
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    C = as_matrix(C, "C", (None, n))
    m, p = B.shape[1], C.shape[0]
    if n == 0:
        return A, B, C

    U, s, _ = la.svd(reachability(A, B, n))
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > tol.pinv_cutoff * s[0]))
    if r == 0:
        return np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0))
    U1 = U[:, :r]
    A1, B1, C1 = U1.T @ A @ U1, U1.T @ B, C @ U1

    _, s2, Vt = la.svd(observability(A1, C1, r))
    r2 = 0 if s2.size == 0 or s2[0] == 0.0 else int(np.sum(s2 > tol.pinv_cutoff * s2[0]))
    if r2 == 0:
        return np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0))
    V1 = Vt[:r2].T
    return V1.T @ A1 @ V1, V1.T @ B1, C1 @ V1


def frequency_response(
    A: ArrayLike,
    B: ArrayLike,
    C: ArrayLike,
    omegas: Sequence[float],
    D: Optional[ArrayLike] = None,
) -> NDArray[np.complex128]:
    """Evaluate C (e^{jw} I - A)^-1 B + D on a grid; result has shape (len(omegas), p, m)."""
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    B = as_matrix(B, "B", (n, None))
    C = as_matrix(C, "C", (None, n))
    p, m = C.shape[0], B.shape[1]
    D = np.zeros((p, m)) if D is None else as_matrix(D, "D", (p, m))
    w = np.asarray(omegas, dtype=float).reshape(-1)
    out = np.empty((w.size, p, m), dtype=complex)
    eye = np.eye(n)
    for k, omega in enumerate(w):
        if n == 0:
            out[k] = D
            continue
        out[k] = C @ np.linalg.solve(np.exp(1j * omega) * eye - A, B) + D
    return out


def bode(
    A: ArrayLike, B: ArrayLike, C: ArrayLike, omegas: Sequence[float]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Magnitude (dB) and unwrapped phase (deg), each shaped (len(omegas), p, m)."""
    resp = frequency_response(A, B, C, omegas)
    with np.errstate(divide="ignore"):
        mag_db = 20.0 * np.log10(np.abs(resp))
    phase = np.degrees(np.unwrap(np.angle(resp), axis=0))
    return mag_db, phase
