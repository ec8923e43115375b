"""Discrete algebraic Riccati equation and the closed-loop quantities derived from it.

Every controller in this package is written in terms of

    P    solution of  P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA
    K    (R + B'PB)^-1 B'PA                  optimal LQR gain
    F    A - BK                              closed-loop matrix
    H    B (R + B'PB)^-1 B'                  weight of the cost-gap identity
    G    (R + B'PB)^-1 B'                    maps a disturbance preview to an action

plus a cache of the matrices (F')^k P for k < T that turns every preview sum
into a single matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadInput, NonConvergence, NotStabilizable, NumericalError

SYMMETRY_TOL = 1e-10
REGULARIZATION = 1e-9


def _as_matrix(name: str, value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise BadInput(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise BadInput(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_symmetric(name: str, M: np.ndarray) -> None:
    if M.shape[0] != M.shape[1]:
        raise BadInput(f"{name} must be square, got {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > SYMMETRY_TOL:
        raise BadInput(f"{name} is not symmetric")


@dataclass(frozen=True)
class SystemMatrices:
    """The quadruple (A, B, Q, R) of a linear quadratic control instance.

    ``Q`` must be positive definite unless ``allow_psd_q`` is set; the robot
    tracking scenario penalises position only and needs the relaxation.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    allow_psd_q: bool = False

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            object.__setattr__(self, name, _as_matrix(name, getattr(self, name)))
        n, m = self.A.shape[0], self.B.shape[1]
        if self.A.shape != (n, n):
            raise BadInput(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, m):
            raise BadInput(f"B must be {n}x{m}, got {self.B.shape}")
        if self.Q.shape != (n, n):
            raise BadInput(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (m, m):
            raise BadInput(f"R must be {m}x{m}, got {self.R.shape}")
        _check_symmetric("Q", self.Q)
        _check_symmetric("R", self.R)
        q_min = np.linalg.eigvalsh(self.Q).min()
        if q_min < -SYMMETRY_TOL or (q_min <= 0 and not self.allow_psd_q):
            raise BadInput("Q must be positive definite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise BadInput("R must be positive definite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def regularized(self, eps: float = REGULARIZATION) -> "SystemMatrices":
        """Copy with ``eps * I`` added to Q, turning a PSD state cost into a PD one."""
        return SystemMatrices(self.A, self.B, self.Q + eps * np.eye(self.n), self.R, self.allow_psd_q)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    F: np.ndarray
    H: np.ndarray
    Minv: np.ndarray
    G: np.ndarray
    rho: float
    ft_powers_P: np.ndarray
    residual: float
    iterations: int
    _flat_powers: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.ft_powers_P.shape[0]

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def preview(self, t: int, seq: np.ndarray) -> np.ndarray:
        """Return sum_{tau=t}^{T-1} (F')^(tau-t) P seq[tau] from the power cache."""
        T = self.horizon
        k = T - t
        tail = np.ascontiguousarray(seq[t:T], dtype=float).reshape(-1)
        return self._flat_powers[:, : k * self.n] @ tail

    def suffix_sums(self, seq) -> np.ndarray:
        """All previews at once, via S_t = P seq_t + F' S_{t+1}.

        Works for any sequence length, independently of the power cache.
        """
        seq = np.asarray(seq, dtype=float)
        out = np.zeros_like(seq)
        acc = np.zeros(self.n)
        FT = self.F.T
        for t in range(len(seq) - 1, -1, -1):
            acc = self.P @ seq[t] + FT @ acc
            out[t] = acc
        return out


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise BadInput(f"spectral radius needs a square matrix, got shape {M.shape}")
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise NumericalError("eigenvalue computation returned non-finite values")
    return float(np.max(np.abs(eig), initial=0.0))


def dare_residual(sys: SystemMatrices, P: np.ndarray) -> float:
    """Frobenius norm of the DARE defect at ``P``."""
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    gain = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return float(np.linalg.norm(P - Q - A.T @ P @ A + A.T @ P @ B @ gain))


def _ft_powers(F: np.ndarray, P: np.ndarray, horizon: int) -> np.ndarray:
    n = P.shape[0]
    out = np.empty((horizon, n, n))
    if horizon:
        out[0] = P
    for k in range(1, horizon):
        out[k] = F.T @ out[k - 1]
    return out


def solve_dare(
    sys: SystemMatrices,
    horizon: int,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> RiccatiSolution:
    """Solve the DARE by value iteration from P_0 = Q.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA until successive iterates
    differ by at most ``tol * max(1, ||P||_F)``.

    Args:
        sys: validated system matrices.
        horizon: length T of the (F')^k P cache, one entry per control step.
        tol: convergence threshold on the successive-iterate difference.
        max_iter: iteration cap.

    Raises:
        NonConvergence: the iteration did not settle or blew up.
        NotStabilizable: it settled on a P whose closed loop has rho(F) >= 1.
    """
    if not isinstance(sys, SystemMatrices):
        raise BadInput("sys must be a SystemMatrices instance")
    if horizon < 1:
        raise BadInput("horizon must be a positive integer")
    if not tol > 0:
        raise BadInput("tol must be positive")
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    AT = A.T
    P = Q.copy()
    step = np.inf
    for it in range(1, max_iter + 1):
        PB = P @ B
        nxt = Q + AT @ P @ A - AT @ PB @ np.linalg.solve(R + B.T @ PB, PB.T @ A)
        nxt = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(nxt)):
            raise NonConvergence(f"Riccati iteration diverged after {it} iterations")
        step = np.linalg.norm(nxt - P)
        P = nxt
        if step <= tol * max(1.0, np.linalg.norm(P)):
            break
    else:
        raise NonConvergence(
            f"Riccati iteration did not converge in {max_iter} iterations (last step {step:.3e})"
        )

    Minv = np.linalg.inv(R + B.T @ P @ B)
    Minv = 0.5 * (Minv + Minv.T)
    G = Minv @ B.T
    K = G @ P @ A
    F = A - B @ K
    H = B @ G
    H = 0.5 * (H + H.T)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise NotStabilizable(f"closed loop A - BK has spectral radius {rho:.6g} >= 1")

    powers = _ft_powers(F, P, horizon)
    n = sys.n
    flat = np.ascontiguousarray(powers.transpose(1, 0, 2).reshape(n, horizon * n))
    for arr in (P, K, F, H, Minv, G, powers, flat):
        arr.setflags(write=False)
    return RiccatiSolution(
        P=P,
        K=K,
        F=F,
        H=H,
        Minv=Minv,
        G=G,
        rho=rho,
        ft_powers_P=powers,
        residual=dare_residual(sys, P),
        iterations=it,
        _flat_powers=flat,
    )


def solve_dare_regularized(sys: SystemMatrices, horizon: int, **kwargs) -> tuple[RiccatiSolution, SystemMatrices]:
    """Solve the DARE, retrying with ``Q + 1e-9 I`` if the plain iteration stalls.

    Returns the solution together with the system actually solved, so callers
    evaluate costs with the same Q the controller was synthesised for.
    """
    try:
        return solve_dare(sys, horizon, **kwargs), sys
    except NonConvergence:
        reg = sys.regularized()
        return solve_dare(reg, horizon, **kwargs), reg
