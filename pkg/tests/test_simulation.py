import math

import numpy as np
import pytest

from confident_lqc.controllers import LambdaConfident, OneConfident, Policy, SelfTuning, ZeroConfident, offline_optimal_rollout
from confident_lqc.errors import BadInput, CausalityError, Diverged, EpisodeFailed
from confident_lqc.metrics import gap_identity, lambda_confident_psi
from confident_lqc.riccati import SystemMatrices, solve_dare
from confident_lqc.scenarios import cartpole_continuous, cartpole_instance
from confident_lqc.simulation import (
    CartPoleParams,
    PredictionWindow,
    cartpole_derivative,
    rollout_cartpole,
    rollout_linear,
)

from conftest import random_instance, simulate_affine_policy


class Idle(Policy):
    label = "idle"

    def act(self, t, x, w_prev):
        return np.zeros(self.ric.K.shape[0])


class Peeking(Policy):
    """Tries to read the disturbance of the current step."""

    def __init__(self, trace):
        self.trace = trace

    def act(self, t, x, w_prev):
        self.trace.reveal(t)
        return np.zeros(self.ric.K.shape[0])


def test_zero_everything(rng):
    sys, ric, _, _, _ = random_instance(rng, n=2, T=6)
    w = np.zeros((6, 2))
    ro = rollout_linear(sys, ric, ZeroConfident(), PredictionWindow(w, w), np.zeros(2))
    assert not ro.states.any() and not ro.actions.any() and not ro.stage_costs.any()
    assert ro.total_cost == 0.0
    assert ro.states.shape == (7, 2) and ro.actions.shape == (6, sys.m) and ro.horizon == 6


def test_cost_accounting_matches_manual_loop(rng):
    sys, ric, w, w_hat, x0 = random_instance(rng, T=8)
    ro = rollout_linear(sys, ric, ZeroConfident(), PredictionWindow(w, w_hat), x0)
    manual = simulate_affine_policy(sys.A, sys.B, sys.Q, sys.R, ric.P, x0, w, lambda t, x: -ric.K @ x)
    assert ro.total_cost == pytest.approx(manual, rel=1e-12)
    assert ro.total_cost == pytest.approx(ro.stage_costs.sum() + ro.terminal_cost)
    assert ro.terminal_cost == pytest.approx(ro.states[-1] @ ric.P @ ro.states[-1])


def test_gap_identity_small_instance(rng):
    sys, ric, w, w_hat, x0 = random_instance(rng, n=2, m=1, T=5)
    opt = offline_optimal_rollout(ric, sys, x0, w).total_cost
    for lam in (0.0, 0.4, 1.0, 1.3):
        alg = rollout_linear(sys, ric, LambdaConfident(lam), PredictionWindow(w, w_hat), x0).total_cost
        gap = gap_identity(ric, lambda_confident_psi(ric, w, w_hat, lam))
        assert abs(alg - opt - gap) <= 1e-7 * max(1.0, opt)


def test_rollout_deterministic(rng):
    sys, ric, w, w_hat, x0 = random_instance(rng, T=10)
    a = rollout_linear(sys, ric, SelfTuning(), PredictionWindow(w, w_hat), x0)
    b = rollout_linear(sys, ric, SelfTuning(), PredictionWindow(w, w_hat), x0)
    for field in ("states", "actions", "stage_costs", "lambdas"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.total_cost == b.total_cost


@pytest.mark.parametrize("policy", [ZeroConfident(), OneConfident(), LambdaConfident(0.5), SelfTuning()])
def test_causal_access(rng, policy):
    sys, ric, w, w_hat, x0 = random_instance(rng, T=9)
    trace = PredictionWindow(w, w_hat)
    rollout_linear(sys, ric, policy, trace, x0)
    assert trace.access_log, "the rollout should reveal past disturbances"
    assert all(tau < clock for clock, tau in trace.access_log)


def test_peeking_controller_rejected(rng):
    sys, ric, w, w_hat, x0 = random_instance(rng, T=5)
    trace = PredictionWindow(w, w_hat)
    with pytest.raises(CausalityError):
        rollout_linear(sys, ric, Peeking(trace), trace, x0)


def test_window_validation():
    with pytest.raises(BadInput):
        PredictionWindow(np.zeros((3, 2)), np.zeros((3, 1)))
    with pytest.raises(BadInput):
        PredictionWindow(np.ones((3, 2)), np.ones((3, 2)), w_bound=1.0)
    with pytest.raises(BadInput):
        PredictionWindow(np.zeros((3, 2)), 5 * np.ones((3, 2)), w_hat_bound=1.0)
    trace = PredictionWindow(np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(CausalityError):
        trace.reveal(0)


def test_horizon_mismatch(rng):
    sys, ric, w, w_hat, x0 = random_instance(rng, T=5)
    with pytest.raises(BadInput):
        rollout_linear(sys, ric, ZeroConfident(), PredictionWindow(w[:4], w_hat[:4]), x0)
    with pytest.raises(BadInput):
        rollout_linear(sys, ric, ZeroConfident(), PredictionWindow(w, w_hat), np.zeros(sys.n + 1))


def test_diverged_reports_step():
    ric = solve_dare(SystemMatrices([[1.0]], [[1.0]], [[1.0]], [[1.0]]), 4)
    huge = SystemMatrices([[1e200]], [[1.0]], [[1.0]], [[1.0]])
    w = np.zeros((4, 1))
    with pytest.raises(Diverged) as info:
        rollout_linear(huge, ric, Idle(), PredictionWindow(w, w), [1.0])
    assert info.value.step == 2


# --------------------------------------------------------------------------- Cart-Pole


@pytest.fixture
def cartpole():
    sys, w, params = cartpole_instance(T=200)
    return sys, solve_dare(sys, 200), w, params


def test_upright_equilibrium(cartpole):
    sys, ric, _, params = cartpole
    w = np.zeros((200, 4))
    ro = rollout_cartpole(params, sys, ric, Idle(), PredictionWindow(w, w), np.zeros(4))
    assert not ro.failed
    assert np.all(ro.states[:, 2] == 0.0)


def test_linearisation_error_is_second_order():
    params = CartPoleParams()
    A_c, B_c = cartpole_continuous(params)
    errs = []
    for theta in (0.01, 0.005):
        x = np.array([0.0, 0.0, theta, 0.0])
        nonlinear = x + params.dt * cartpole_derivative(params, x, 0.0)
        linear = x + params.dt * (A_c @ x)
        err = np.linalg.norm(nonlinear - linear)
        assert err <= theta**2
        errs.append(err)
    assert errs[1] <= errs[0] / 4 * 1.01


def test_linearisation_small_states(rng):
    params = CartPoleParams()
    A_c, B_c = cartpole_continuous(params)
    for _ in range(100):
        x = rng.normal(size=4)
        x *= 1e-3 / np.linalg.norm(x)
        u = float(rng.uniform(-1e-3, 1e-3))
        nonlinear = x + params.dt * cartpole_derivative(params, x, u)
        linear = x + params.dt * (A_c @ x + B_c[:, 0] * u)
        assert np.linalg.norm(nonlinear - linear) <= 1e-5


def test_input_jacobian_matches_b():
    params = CartPoleParams()
    _, B_c = cartpole_continuous(params)
    h = 1e-6
    fd = (cartpole_derivative(params, np.zeros(4), h) - cartpole_derivative(params, np.zeros(4), -h)) / (2 * h)
    np.testing.assert_allclose(fd, B_c[:, 0], rtol=1e-6)


def test_self_tuning_balances_small_tilt(cartpole):
    sys, ric, w, params = cartpole
    ro = rollout_cartpole(params, sys, ric, SelfTuning(), PredictionWindow(w, w), np.array([0.0, 0.0, 0.05, 0.0]))
    assert not ro.failed
    assert ro.survival_steps == 200
    assert np.max(np.abs(ro.states[:, 2])) < params.fail_angle


def test_failure_flag_and_penalty(cartpole):
    sys, ric, _, params = cartpole
    w = np.zeros((200, 4))
    x0 = np.array([0.0, 0.0, 0.1, 0.0])
    ro = rollout_cartpole(params, sys, ric, Idle(), PredictionWindow(w, w), x0, failure_penalty=1e4)
    assert ro.failed
    assert ro.survival_steps == ro.failed_step < 200
    assert abs(ro.states[-1, 2]) > params.fail_angle
    assert ro.terminal_cost == 1e4
    assert ro.total_cost == pytest.approx(ro.stage_costs.sum() + 1e4)
    assert len(ro.actions) == ro.failed_step
    with pytest.raises(EpisodeFailed) as info:
        rollout_cartpole(params, sys, ric, Idle(), PredictionWindow(w, w), x0, raise_on_failure=True)
    assert info.value.step == ro.failed_step


@pytest.mark.parametrize("field,value", [("M", 0.0), ("l", -1.0), ("dt", 0.0), ("dt", 0.2), ("fail_angle", 0.0)])
def test_cartpole_params_validation(field, value):
    with pytest.raises(BadInput):
        CartPoleParams(**{field: value})


def test_cartpole_defaults():
    p = CartPoleParams()
    assert (p.M, p.m, p.l, p.g, p.dt) == (10.0, 1.0, 10.0, 9.8, 0.02)
    assert p.fail_angle == pytest.approx(math.pi / 15)
