import numpy as np
import pytest

from confident_lqc.riccati import SystemMatrices, solve_dare

_ACCEPTANCE_LINES = []


def random_system(rng, n, m, scale=1.0):
    """Random (A, B) with entries in [-scale, scale] and Q = R = I, redrawn until stabilizable."""
    while True:
        A = rng.uniform(-scale, scale, (n, n))
        B = rng.uniform(-scale, scale, (n, m))
        # Hautus test on the unstable eigenvalues
        ok = True
        for lam in np.linalg.eigvals(A):
            if abs(lam) >= 1 - 1e-9:
                M = np.hstack([lam * np.eye(n) - A, B])
                if np.linalg.matrix_rank(M, tol=1e-6) < n:
                    ok = False
        if ok:
            return SystemMatrices(A, B, np.eye(n), np.eye(m))


def random_instance(rng, n=None, m=None, T=None):
    """Random small system with its Riccati solution, disturbances, predictions and initial state."""
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    T = T or int(rng.integers(3, 13))
    sys = random_system(rng, n, m)
    ric = solve_dare(sys, T)
    w = rng.uniform(-1, 1, (T, n))
    w_hat = w + rng.normal(0, 0.5, (T, n))
    x0 = rng.uniform(-1, 1, n)
    return sys, ric, w, w_hat, x0


def batch_optimal_cost(A, B, Q, R, P_terminal, x0, w):
    """Offline optimum of sum x'Qx + u'Ru + x_T' P x_T by solving the stacked least-squares problem.

    Independent of the Riccati machinery: states are written explicitly as
    affine functions of the stacked action vector and the normal equations are solved.
    """
    T, n = w.shape
    m = B.shape[1]
    # X = Phi x0 + Gu U + Gw W, X stacks x_1..x_T
    Phi = np.zeros((T * n, n))
    Gu = np.zeros((T * n, T * m))
    Gw = np.zeros((T * n, T * n))
    Ak = [np.eye(n)]
    for _ in range(T):
        Ak.append(A @ Ak[-1])
    for t in range(1, T + 1):
        Phi[(t - 1) * n : t * n] = Ak[t]
        for k in range(t):
            Gu[(t - 1) * n : t * n, k * m : (k + 1) * m] = Ak[t - 1 - k] @ B
            Gw[(t - 1) * n : t * n, k * n : (k + 1) * n] = Ak[t - 1 - k]
    Qbar = np.kron(np.eye(T), Q)
    Qbar[-n:, -n:] = P_terminal
    Rbar = np.kron(np.eye(T), R)
    drift = Phi @ x0 + Gw @ w.reshape(-1)
    U = np.linalg.solve(Gu.T @ Qbar @ Gu + Rbar, -Gu.T @ Qbar @ drift)
    X = drift + Gu @ U
    return float(x0 @ Q @ x0 + X @ Qbar @ X + U @ Rbar @ U)


def simulate_affine_policy(A, B, Q, R, P_terminal, x0, w, policy):
    """Closed-loop cost of u_t = policy(t, x_t), written out without the package's rollout code."""
    x = np.array(x0, dtype=float)
    cost = 0.0
    for t in range(len(w)):
        u = policy(t, x)
        cost += x @ Q @ x + u @ R @ u
        x = A @ x + B @ u + w[t]
    return cost + x @ P_terminal @ x


@pytest.fixture
def rng():
    return np.random.default_rng(20221)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; printed again in the terminal summary."""

    def report(criterion, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
