"""Closed-loop rollouts: linear dynamics and the nonlinear Cart-Pole plant."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadInput, CausalityError, Diverged, EpisodeFailed
from .riccati import RiccatiSolution, SystemMatrices


class PredictionWindow:
    """True disturbances and their predictions for one episode.

    Predictions are public from the start. True disturbances are handed to a
    controller only through :meth:`reveal`, which refuses any index at or
    beyond the rollout clock, and every such read is logged.
    """

    def __init__(self, w_true, w_hat, w_bound: float | None = None, w_hat_bound: float | None = None):
        w_true = np.array(w_true, dtype=float)
        w_hat = np.array(w_hat, dtype=float)
        if w_true.ndim != 2 or w_true.shape != w_hat.shape:
            raise BadInput(
                f"w_true and w_hat must be equal-shape (T, n) arrays, got {w_true.shape} and {w_hat.shape}"
            )
        if w_bound is not None and np.linalg.norm(w_true, axis=1).max(initial=0.0) > w_bound:
            raise BadInput(f"a disturbance exceeds the declared bound {w_bound}")
        if w_hat_bound is not None and np.linalg.norm(w_hat, axis=1).max(initial=0.0) > w_hat_bound:
            raise BadInput(f"a prediction exceeds the declared bound {w_hat_bound}")
        w_true.setflags(write=False)
        w_hat.setflags(write=False)
        self._w_true = w_true
        self.w_hat = w_hat
        self.clock = 0
        self.access_log: list[tuple[int, int]] = []

    @property
    def horizon(self) -> int:
        return self._w_true.shape[0]

    @property
    def n(self) -> int:
        return self._w_true.shape[1]

    def reveal(self, tau: int) -> np.ndarray:
        if tau >= self.clock or tau < 0:
            raise CausalityError(f"w[{tau}] is not observable at step {self.clock}")
        self.access_log.append((self.clock, tau))
        return self._w_true[tau]

    def disturbance(self, t: int) -> np.ndarray:
        # environment side of the loop; controllers never get this
        return self._w_true[t]

    def hindsight(self) -> np.ndarray:
        """The full true sequence, for offline quantities computed after the episode."""
        return self._w_true


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray
    actions: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float
    total_cost: float
    lambdas: np.ndarray | None = None
    lambda_final: float | None = None
    failed_step: int | None = None
    survival_steps: int = 0
    label: str = ""

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def failed(self) -> bool:
        return self.failed_step is not None


@dataclass(frozen=True)
class CartPoleParams:
    """Physical constants of the Cart-Pole plant (defaults from the case study)."""

    M: float = 10.0
    m: float = 1.0
    l: float = 10.0
    g: float = 9.8
    dt: float = 0.02
    fail_angle: float = math.pi / 15

    def __post_init__(self):
        for name in ("M", "m", "l", "g", "fail_angle"):
            if not getattr(self, name) > 0:
                raise BadInput(f"CartPoleParams.{name} must be positive")
        if not 0 < self.dt <= 0.1:
            raise BadInput("CartPoleParams.dt must lie in (0, 0.1]")

    @property
    def eta(self) -> float:
        return self.l * (4.0 / 3.0 - self.m / (self.m + self.M))


def cartpole_derivative(params: CartPoleParams, state, force: float) -> np.ndarray:
    """Time derivative of (y, y', theta, theta') under the frictionless equations."""
    _, y_dot, theta, theta_dot = state
    M, m, l, g = params.M, params.m, params.l, params.g
    s, c = math.sin(theta), math.cos(theta)
    total = m + M
    theta_acc = (g * s + c * (-force - m * l * theta_dot**2 * s) / total) / (
        l * (4.0 / 3.0 - m * c**2 / total)
    )
    y_acc = (force + m * l * (theta_dot**2 * s - theta_acc * c)) / total
    return np.array([y_dot, y_acc, theta_dot, theta_acc])


def _begin(ric: RiccatiSolution, controller, trace: PredictionWindow, x0, n: int):
    if trace.horizon != ric.horizon:
        raise BadInput(f"trace horizon {trace.horizon} differs from the Riccati cache length {ric.horizon}")
    x = np.array(x0, dtype=float)
    if x.shape != (n,):
        raise BadInput(f"x0 must have shape ({n},), got {x.shape}")
    trace.clock = 0
    controller.reset(ric, trace.w_hat)
    return x


def _observe(trace: PredictionWindow, t: int):
    trace.clock = t
    return trace.reveal(t - 1) if t > 0 else None


def rollout_linear(
    sys: SystemMatrices,
    ric: RiccatiSolution,
    controller,
    trace: PredictionWindow,
    x0,
) -> Rollout:
    """Run ``controller`` on x_{t+1} = A x_t + B u_t + w_t for the trace horizon.

    At step t the controller sees x_t and w_{t-1}; the full prediction
    sequence was handed over at reset.

    Raises:
        Diverged: the state stopped being finite.
    """
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    T = trace.horizon
    x = _begin(ric, controller, trace, x0, sys.n)
    states = np.empty((T + 1, sys.n))
    actions = np.empty((T, sys.m))
    stage = np.empty(T)
    states[0] = x
    # overflow is reported as Diverged below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            u = np.asarray(controller.act(t, x, _observe(trace, t)), dtype=float)
            actions[t] = u
            stage[t] = x @ Q @ x + u @ R @ u
            x = A @ x + B @ u + trace.disturbance(t)
            if not np.all(np.isfinite(x)):
                raise Diverged(t + 1)
            states[t + 1] = x
    trace.clock = T
    controller.finish(trace.reveal(T - 1))
    terminal = float(x @ ric.P @ x)
    return Rollout(
        states=states,
        actions=actions,
        stage_costs=stage,
        terminal_cost=terminal,
        total_cost=float(stage.sum()) + terminal,
        lambdas=controller.lambda_trace,
        lambda_final=controller.lambda_final,
        survival_steps=T,
        label=controller.label,
    )


def rollout_cartpole(
    params: CartPoleParams,
    sys_lin: SystemMatrices,
    ric: RiccatiSolution,
    controller,
    trace: PredictionWindow,
    x0,
    failure_penalty: float = 0.0,
    raise_on_failure: bool = False,
) -> Rollout:
    """Run a linear-model controller against the nonlinear Cart-Pole plant.

    The plant is integrated with one explicit Euler step of length ``params.dt``
    per control step and the disturbance vector w_t is added afterwards. When
    |theta| leaves ``params.fail_angle`` the episode stops. The returned Rollout
    has ``failed_step`` set and its cost is the sum so far plus ``failure_penalty``.
    """
    Q, R = sys_lin.Q, sys_lin.R
    T = trace.horizon
    x = _begin(ric, controller, trace, x0, 4)
    states = [x]
    actions: list[np.ndarray] = []
    stage: list[float] = []
    failed = None
    for t in range(T):
        u = np.asarray(controller.act(t, x, _observe(trace, t)), dtype=float)
        actions.append(u)
        stage.append(float(x @ Q @ x + u @ R @ u))
        x = x + params.dt * cartpole_derivative(params, x, float(u[0])) + trace.disturbance(t)
        if not np.all(np.isfinite(x)):
            raise Diverged(t + 1)
        states.append(x)
        if abs(x[2]) > params.fail_angle:
            failed = t + 1
            break
    if failed is None:
        trace.clock = T
        controller.finish(trace.reveal(T - 1))
        terminal = float(x @ ric.P @ x)
    else:
        if raise_on_failure:
            raise EpisodeFailed(failed)
        terminal = float(failure_penalty)
    stage_arr = np.array(stage)
    lambdas = controller.lambda_trace
    if lambdas is not None:
        lambdas = lambdas[: len(actions)]
    return Rollout(
        states=np.array(states),
        actions=np.array(actions).reshape(len(actions), sys_lin.m),
        stage_costs=stage_arr,
        terminal_cost=terminal,
        total_cost=float(stage_arr.sum()) + terminal,
        lambdas=lambdas,
        lambda_final=controller.lambda_final if failed is None else None,
        failed_step=failed,
        survival_steps=T if failed is None else failed,
        label=controller.label,
    )
