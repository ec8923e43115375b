"""Scalar quantities used to analyse the policies: prediction error, cost gap, variation, ratios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadInput
from .riccati import RiccatiSolution


def _pair(w, w_hat) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    if w.shape != w_hat.shape or w.ndim != 2:
        raise BadInput(f"sequences must have equal (T, n) shapes, got {w.shape} and {w_hat.shape}")
    return w, w_hat


def _kernel_energy(ric: RiccatiSolution, seq: np.ndarray) -> float:
    # sum_t || sum_{tau>=t} (F')^(tau-t) P seq_tau ||^2
    S = ric.suffix_sums(seq)
    return float(np.sum(S * S))


def prediction_error(ric: RiccatiSolution, w, w_hat) -> float:
    """Weighted prediction error eps = sum_t ||sum_{tau>=t} (F')^(tau-t) P (w_tau - w_hat_tau)||^2."""
    w, w_hat = _pair(w, w_hat)
    return _kernel_energy(ric, w - w_hat)


def w_bar(ric: RiccatiSolution, w_hat) -> float:
    """Same kernel as :func:`prediction_error`, applied to the predictions themselves."""
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.ndim != 2:
        raise BadInput(f"predictions must be a (T, n) array, got {w_hat.shape}")
    return _kernel_energy(ric, w_hat)


def self_variation(seq) -> float:
    """sum_{s=1}^{T-1} max_{tau<s} ||y_tau - y_{tau+T-s}||.

    Substituting d = T - s turns the inner max into the largest difference
    between points d steps apart. Returns 0 for sequences shorter than 2.
    """
    y = np.asarray(seq, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    T = len(y)
    total = 0.0
    for d in range(1, T):
        total += float(np.max(np.linalg.norm(y[:-d] - y[d:], axis=1)))
    return total


def lambda_confident_psi(ric: RiccatiSolution, w, w_hat, lam: float) -> np.ndarray:
    """Deviation vectors psi_t = sum_{tau>=t} (F')^(tau-t) P (w_tau - lam w_hat_tau) of the lam-confident policy."""
    w, w_hat = _pair(w, w_hat)
    return ric.suffix_sums(w - lam * w_hat)


def gap_identity(ric: RiccatiSolution, psi) -> float:
    """sum_t psi_t' H psi_t, the excess cost over the offline optimum of a policy with deviations psi."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[1] != ric.n:
        raise BadInput(f"psi must be a (T, {ric.n}) array, got {psi.shape}")
    return float(np.sum(psi * (psi @ ric.H)))


def optimal_trust(ric: RiccatiSolution, w, w_hat) -> float:
    """Closed-form minimiser over lam of the lam-confident cost in hindsight.

    The cost gap is a quadratic in lam, so the minimiser is a ratio of
    H-weighted inner products. Returns 1 if the predictions carry no energy.
    """
    w, w_hat = _pair(w, w_hat)
    ew, eh = ric.suffix_sums(w), ric.suffix_sums(w_hat)
    den = float(np.sum(eh * (eh @ ric.H)))
    if den > 0:
        return float(np.sum(ew * (eh @ ric.H))) / den
    return 1.0


def regret(alg_cost_adaptive: float, alg_cost_best_fixed: float) -> float:
    return float(alg_cost_adaptive) - float(alg_cost_best_fixed)


def competitive_ratio(alg_cost: float, opt_cost: float) -> float:
    if not opt_cost > 0:
        raise BadInput("competitive ratio needs a positive optimal cost")
    return float(alg_cost) / float(opt_cost)


def theorem2_bound(
    ric: RiccatiSolution,
    lam: float,
    epsilon: float,
    w_bar: float,
    opt: float,
    C: float = 1.0,
) -> float:
    """Upper bound on the competitive ratio of the fixed-lam policy.

    1 + 2||H|| min(lam^2 eps / OPT + (1 - lam)^2 / C, 1 / C + lam^2 W / OPT).
    ``C`` is a system-dependent existence constant and has to be supplied,
    so the value is only meaningful for comparing shapes.
    """
    if not opt > 0:
        raise BadInput("bound needs a positive optimal cost")
    if not C > 0:
        raise BadInput("constant C must be positive")
    h_norm = float(np.linalg.norm(ric.H, 2))
    first = lam**2 * epsilon / opt + (1.0 - lam) ** 2 / C
    second = 1.0 / C + lam**2 * w_bar / opt
    return 1.0 + 2.0 * h_norm * min(first, second)


@dataclass(frozen=True)
class InstanceMetrics:
    epsilon: float
    w_bar: float
    mu_var_w: float
    mu_var_wh: float
    opt_cost: float
    alg_cost: float
    cr: float


def instance_metrics(ric: RiccatiSolution, w, w_hat, opt_cost: float, alg_cost: float) -> InstanceMetrics:
    return InstanceMetrics(
        epsilon=prediction_error(ric, w, w_hat),
        w_bar=w_bar(ric, w_hat),
        mu_var_w=self_variation(w),
        mu_var_wh=self_variation(w_hat),
        opt_cost=float(opt_cost),
        alg_cost=float(alg_cost),
        cr=competitive_ratio(alg_cost, opt_cost),
    )
