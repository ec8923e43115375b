"""Control policies that use untrusted disturbance predictions to different degrees.

All of them act through one affine formula

    u_t = -K x_t - lam * G * sum_{tau >= t} (F')^(tau-t) P w_hat_tau

with lam = 0 for plain LQR, lam = 1 for the explicit MPC that trusts the
predictions fully, a fixed lam in between, a threshold switch between the two
extremes, or an online follow-the-leader choice of lam.

The stateless ``*_action`` / ``*_step`` functions implement one control step.
The policy classes wrap them for :func:`confident_lqc.simulation.rollout_linear`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadInput, DegenerateInstance
from .riccati import RiccatiSolution, SystemMatrices
from .simulation import PredictionWindow, Rollout, rollout_linear

DEFAULT_SIGMA = 1e-9
DEFAULT_LAMBDA0 = 0.3


def _state(ric: RiccatiSolution, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (ric.n,):
        raise BadInput(f"state must have shape ({ric.n},), got {x.shape}")
    return x


def _preview(ric: RiccatiSolution, t: int, w_hat) -> np.ndarray:
    T = ric.horizon
    if not 0 <= t < T:
        raise BadInput(f"step {t} outside [0, {T - 1}]")
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.shape != (T, ric.n):
        raise BadInput(f"predictions must have shape ({T}, {ric.n}), got {w_hat.shape}")
    return ric.preview(t, w_hat)


def zero_confident_action(ric: RiccatiSolution, x) -> np.ndarray:
    return -(ric.K @ _state(ric, x))


def one_confident_action(ric: RiccatiSolution, x, t: int, w_hat) -> np.ndarray:
    return lambda_confident_action(ric, x, t, w_hat, 1.0)


def lambda_confident_action(ric: RiccatiSolution, x, t: int, w_hat, lam: float) -> np.ndarray:
    """Action of the lam-confident policy at step ``t``.

    lam = 0 ignores the predictions and lam = 1 follows them. Values outside
    [0, 1] are accepted because the formula is defined for any real lam.
    """
    if not np.isfinite(lam):
        raise BadInput("trust parameter must be finite")
    x = _state(ric, x)
    return -(ric.K @ x) - lam * (ric.G @ _preview(ric, t, w_hat))


# --------------------------------------------------------------------------- threshold


@dataclass(frozen=True)
class ThresholdState:
    sigma: float = DEFAULT_SIGMA
    delta: float = 0.0
    tripped: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise BadInput("threshold sigma must be positive")


def threshold_step(
    state: ThresholdState,
    ric: RiccatiSolution,
    x,
    t: int,
    w_hat,
    last_error_norm: float,
) -> tuple[np.ndarray, ThresholdState]:
    """One step of the threshold policy.

    ``last_error_norm`` is ||w_hat_{t-1} - w_{t-1}|| (zero at t = 0). It is
    added to the running error first. The policy trusts the predictions while
    the total stays below sigma and falls back to u = -Kx for good once it
    reaches sigma.
    """
    if last_error_norm < 0:
        raise BadInput("error norm must be nonnegative")
    delta = state.delta + last_error_norm
    tripped = state.tripped or delta >= state.sigma
    new = replace(state, delta=delta, tripped=tripped)
    if tripped:
        return zero_confident_action(ric, x), new
    return one_confident_action(ric, x, t, w_hat), new


# --------------------------------------------------------------------------- self-tuning


@dataclass
class SelfTuningState:
    """Running sums for the online choice of the trust parameter.

    ``eta_w[s]`` holds eta(w; s, t-1) = sum_{tau=s}^{t-1} (F')^(tau-s) P w_tau
    for s < ``observed``; ``eta_wh`` is the same for the predictions.
    """

    horizon: int
    n: int
    lambda0: float = DEFAULT_LAMBDA0
    clamp: bool = False
    observed: int = 0
    lambda_t: float = DEFAULT_LAMBDA0
    numerator: float = 0.0
    denominator: float = 0.0
    eta_w: np.ndarray = field(default=None, repr=False)
    eta_wh: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.lambda0):
            raise BadInput("lambda0 must be finite")
        if self.eta_w is None:
            self.eta_w = np.zeros((self.horizon, self.n))
        if self.eta_wh is None:
            self.eta_wh = np.zeros((self.horizon, self.n))
        self.lambda_t = self.lambda0

    @classmethod
    def initial(cls, ric: RiccatiSolution, lambda0: float = DEFAULT_LAMBDA0, clamp: bool = False):
        return cls(horizon=ric.horizon, n=ric.n, lambda0=lambda0, clamp=clamp)

    def observe(self, ric: RiccatiSolution, w_new, w_hat_new) -> None:
        """Fold one more (w, w_hat) pair into every eta and refresh the two sums."""
        s = self.observed
        if s >= self.horizon:
            raise BadInput("all disturbances have already been observed")
        # (F')^(s-j) P for j = 0..s, i.e. the cache read backwards
        powers = ric.ft_powers_P[s::-1]
        self.eta_w[: s + 1] += powers @ np.asarray(w_new, dtype=float)
        self.eta_wh[: s + 1] += powers @ np.asarray(w_hat_new, dtype=float)
        self.observed = s + 1
        ew, eh = self.eta_w[: s + 1], self.eta_wh[: s + 1]
        eh_H = eh @ ric.H
        self.numerator = float(np.sum(ew * eh_H))
        self.denominator = float(np.sum(eh * eh_H))

    def ratio(self) -> float:
        """numerator / denominator, or 1 when every predicted eta vanishes."""
        if self.denominator > 0:
            return self.numerator / self.denominator
        return 1.0


def self_tuning_step(
    state: SelfTuningState,
    ric: RiccatiSolution,
    x,
    t: int,
    w_hat,
    w_observed_prev=None,
) -> tuple[float, np.ndarray, SelfTuningState]:
    """One step of the self-tuning policy. ``state`` is updated in place and returned.

    From t = 1 on, ``w_observed_prev`` must be w_{t-1}. Steps 0 and 1 act with
    lambda0. Later steps use the trust parameter that minimises the cost gap
    accumulated over the observed history.
    """
    if t >= 1:
        if w_observed_prev is None:
            raise BadInput(f"step {t} needs the previous disturbance w_{t - 1}")
        if state.observed != t - 1:
            raise BadInput(f"self-tuning state has seen {state.observed} disturbances, step {t} expects {t - 1}")
        state.observe(ric, w_observed_prev, np.asarray(w_hat)[t - 1])
    if t <= 1:
        lam = state.lambda0
    else:
        lam = state.ratio()
    if state.clamp:
        lam = min(max(lam, 0.0), 1.0)
    state.lambda_t = lam
    return lam, lambda_confident_action(ric, x, t, w_hat, lam), state


# --------------------------------------------------------------------------- policy objects


class Policy:
    """Interface consumed by the rollout functions."""

    label = "policy"

    def reset(self, ric: RiccatiSolution, w_hat: np.ndarray) -> None:
        self.ric = ric
        self.w_hat = w_hat

    def act(self, t: int, x: np.ndarray, w_prev: np.ndarray | None) -> np.ndarray:
        raise NotImplementedError

    def finish(self, w_last: np.ndarray) -> None:
        """Called once with w_{T-1} after a complete episode."""

    @property
    def lambda_trace(self) -> np.ndarray | None:
        return None

    @property
    def lambda_final(self) -> float | None:
        return None


class ZeroConfident(Policy):
    label = "zero"

    def act(self, t, x, w_prev):
        return zero_confident_action(self.ric, x)


class OneConfident(Policy):
    label = "one"

    def act(self, t, x, w_prev):
        return one_confident_action(self.ric, x, t, self.w_hat)


class LambdaConfident(Policy):
    def __init__(self, lam: float):
        if not np.isfinite(lam):
            raise BadInput("trust parameter must be finite")
        self.lam = float(lam)
        self.label = f"lambda({self.lam!r})"

    def act(self, t, x, w_prev):
        return lambda_confident_action(self.ric, x, t, self.w_hat, self.lam)


class Threshold(Policy):
    def __init__(self, sigma: float = DEFAULT_SIGMA):
        self.sigma = float(sigma)
        ThresholdState(self.sigma)
        self.label = f"threshold({self.sigma!r})"

    def reset(self, ric, w_hat):
        super().reset(ric, w_hat)
        self.state = ThresholdState(self.sigma)
        self.tripped_at: int | None = None

    def act(self, t, x, w_prev):
        err = 0.0 if t == 0 else float(np.linalg.norm(self.w_hat[t - 1] - w_prev))
        u, self.state = threshold_step(self.state, self.ric, x, t, self.w_hat, err)
        if self.state.tripped and self.tripped_at is None:
            self.tripped_at = t
        return u


class SelfTuning(Policy):
    def __init__(self, lambda0: float = DEFAULT_LAMBDA0, clamp: bool = False):
        self.lambda0 = float(lambda0)
        self.clamp = bool(clamp)
        self.label = f"self_tuning({self.lambda0!r}{', clamp' if self.clamp else ''})"

    def reset(self, ric, w_hat):
        super().reset(ric, w_hat)
        self.state = SelfTuningState.initial(ric, self.lambda0, self.clamp)
        self._lams: list[float] = []
        self._final: float | None = None

    def act(self, t, x, w_prev):
        lam, u, self.state = self_tuning_step(self.state, self.ric, x, t, self.w_hat, w_prev)
        self._lams.append(lam)
        return u

    def finish(self, w_last):
        # one more observation gives lambda_T, the minimiser over the whole episode
        self.state.observe(self.ric, w_last, self.w_hat[self.state.observed])
        self._final = self.state.ratio()

    @property
    def lambda_trace(self):
        return np.array(self._lams)

    @property
    def lambda_final(self):
        return self._final


def offline_optimal_rollout(ric: RiccatiSolution, sys: SystemMatrices, x0, w_true) -> Rollout:
    """Clairvoyant optimum: the explicit MPC fed with the true disturbances.

    Raises:
        DegenerateInstance: the optimal cost is not strictly positive.
    """
    w_true = np.asarray(w_true, dtype=float)
    ro = rollout_linear(sys, ric, OneConfident(), PredictionWindow(w_true, w_true), x0)
    if not ro.total_cost > 0:
        raise DegenerateInstance(f"offline optimal cost is {ro.total_cost}; ratios need OPT > 0")
    return replace(ro, label="offline")
