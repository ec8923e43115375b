"""Case-study instances: robot tracking, battery-buffered EV charging, Cart-Pole.

Also the prediction-noise models and the EV session CSV reader.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadInput, MissingFile, ParseError, ValidationError
from .riccati import REGULARIZATION, SystemMatrices
from .simulation import CartPoleParams

NOISE_KINDS = ("binomial_scaled", "gaussian_iid", "gaussian_scaled_w")
EV_CSV_HEADER = ("arrival_slot", "charger_id", "energy_kwh")

TRACKING_A = np.array(
    [
        [1.0, 0.0, 0.2, 0.0],
        [0.0, 1.0, 0.0, 0.2],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
TRACKING_B = np.array([[0.0, 0.0], [0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
TRACKING_Q = np.diag([1.0, 1.0, 0.0, 0.0])
TRACKING_R_SCALE = 1e-2


@dataclass(frozen=True)
class NoiseModel:
    """Distribution of the prediction error e_t = w_hat_t - w_t.

    ``param`` is the scale c for ``binomial_scaled`` (e = c X, X ~ Bin(10, 1/2))
    and the variance for the two Gaussian kinds. With ``broadcast`` set, one
    draw per step is shared by all components instead of i.i.d. components.
    """

    kind: str
    param: float
    seed: int = 0
    broadcast: bool = False

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise BadInput(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not (np.isfinite(self.param) and self.param >= 0):
            raise BadInput("noise parameter must be finite and nonnegative")


def generate_predictions(w, noise: NoiseModel) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    rng = np.random.default_rng(noise.seed)
    T, n = w.shape
    shape = (T, 1) if noise.broadcast else (T, n)
    if noise.kind == "binomial_scaled":
        e = noise.param * rng.binomial(10, 0.5, size=shape)
    elif noise.kind == "gaussian_iid":
        e = rng.normal(0.0, math.sqrt(noise.param), size=shape)
    else:
        e = rng.normal(0.0, math.sqrt(noise.param), size=(T, 1)) * w
    return w + np.broadcast_to(e, w.shape)


# --------------------------------------------------------------------------- robot tracking


def tracking_trajectory(T: int) -> np.ndarray:
    """Reference points y_0..y_T of the cloud-shaped path."""
    t = np.arange(T + 1, dtype=float)
    return np.stack(
        [
            2 * np.cos(np.pi * t / 30) + np.cos(np.pi * t / 5),
            2 * np.sin(np.pi * t / 30) + np.sin(np.pi * t / 5),
        ],
        axis=1,
    )


def robot_tracking_instance(T: int, r_scale: float = TRACKING_R_SCALE):
    """Double-integrator robot following the cloud path, in tracking-error coordinates.

    The state is (p_t - y_t, v_t) and the disturbance w_t = (y_t - y_{t+1}, 0, 0)
    carries the motion of the reference. ``r_scale = 0`` reproduces the
    zero-action-cost variant, with R replaced by 1e-9 I to stay invertible.

    Returns:
        (SystemMatrices, w of shape (T, 4), y of shape (T + 1, 2))
    """
    if T < 2:
        raise BadInput("tracking horizon must be at least 2")
    if r_scale < 0:
        raise BadInput("r_scale must be nonnegative")
    R = max(r_scale, REGULARIZATION) * np.eye(2)
    sys = SystemMatrices(TRACKING_A, TRACKING_B, TRACKING_Q, R, allow_psd_q=True)
    y = tracking_trajectory(T)
    w = np.zeros((T, 4))
    w[:, :2] = y[:-1] - y[1:]
    return sys, w, y


# --------------------------------------------------------------------------- EV charging


@dataclass(frozen=True)
class EvSession:
    arrival_slot: int
    charger_id: int
    energy_kwh: float


def ev_charging_instance(N: int, T: int, sessions) -> tuple[SystemMatrices, np.ndarray]:
    """N battery-buffered chargers with A = B = Q = I and R = 0.1 I.

    Each arriving EV drains its demand from the battery of its charger, so the
    disturbance is -E on that charger's coordinate in the arrival slot.
    """
    if N < 1 or T < 1:
        raise BadInput("N and T must be positive")
    I = np.eye(N)
    sys = SystemMatrices(I, I, I, 0.1 * I)
    w = np.zeros((T, N))
    for s in sessions:
        if not 0 <= s.charger_id < N:
            raise BadInput(f"charger id {s.charger_id} outside [0, {N})")
        if not 0 <= s.arrival_slot < T:
            raise BadInput(f"arrival slot {s.arrival_slot} outside [0, {T})")
        if not s.energy_kwh > 0:
            raise BadInput("session energy must be positive")
        w[s.arrival_slot, s.charger_id] -= s.energy_kwh
    return sys, w


def synthetic_ev_sessions(N: int, T: int, rate: float = 0.2, energy_kwh: float = 5.0) -> list[EvSession]:
    """Constant-rate arrivals: one EV closes every window of 1/rate slots.

    With rate 0.2 the EVs arrive in slots 4, 9, 14, ... and take the chargers
    in round-robin order.
    """
    if not 0 < rate <= 1:
        raise BadInput("arrival rate must lie in (0, 1]")
    period = round(1.0 / rate)
    slots = range(period - 1, T, period)
    return [EvSession(slot, k % N, float(energy_kwh)) for k, slot in enumerate(slots)]


def ingest_ev_csv(path) -> list[EvSession]:
    """Read sessions from a CSV with header ``arrival_slot,charger_id,energy_kwh``.

    Rows are numbered as in a spreadsheet: the header is row 1.

    Raises:
        MissingFile: ``path`` does not exist.
        ParseError: bad header or a cell that is not a number of the right type.
        ValidationError: negative slot or charger id, or non-positive energy.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"EV session file not found: {path}")
    sessions = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EV_CSV_HEADER:
            raise ParseError(1, "header", f"expected {','.join(EV_CSV_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ParseError(row_no, "row", f"expected 3 fields, got {len(row)}")
            values = []
            for col, cell, conv in zip(EV_CSV_HEADER, row, (int, int, float)):
                try:
                    values.append(conv(cell.strip()))
                except ValueError:
                    raise ParseError(row_no, col, f"cannot parse {cell!r}") from None
            slot, charger, energy = values
            if slot < 0:
                raise ValidationError(row_no, "arrival_slot must be nonnegative")
            if charger < 0:
                raise ValidationError(row_no, "charger_id must be nonnegative")
            if not (math.isfinite(energy) and energy > 0):
                raise ValidationError(row_no, f"energy_kwh must be positive, got {energy}")
            sessions.append(EvSession(slot, charger, energy))
    return sessions


# --------------------------------------------------------------------------- Cart-Pole


def cartpole_continuous(params: CartPoleParams) -> tuple[np.ndarray, np.ndarray]:
    """Linearisation about the upright equilibrium, state (y, y', theta, theta')."""
    M, m, l, g = params.M, params.m, params.l, params.g
    eta = params.eta
    total = m + M
    A_c = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -m * l * g / (eta * total), 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, g / eta, 0.0],
        ]
    )
    B_c = np.array([[0.0], [(total * eta + m * l) / (total**2 * eta)], [0.0], [-1.0 / (total * eta)]])
    return A_c, B_c


def cartpole_instance(
    params: CartPoleParams | None = None,
    T: int = 200,
    force: float = 60.0,
    dt_scaled: bool = True,
) -> tuple[SystemMatrices, np.ndarray, CartPoleParams]:
    """Euler-discretised Cart-Pole with Q = I, R = 1e-3 and a constant pushing force.

    The disturbance is the state effect of ``force`` newtons, force * B_c.
    It enters the continuous-time model, so one control step adds
    dt * force * B_c. ``dt_scaled=False`` adds force * B_c per step instead.
    """
    params = params or CartPoleParams()
    A_c, B_c = cartpole_continuous(params)
    dt = params.dt
    sys = SystemMatrices(np.eye(4) + dt * A_c, dt * B_c, np.eye(4), np.array([[1e-3]]))
    per_step = force * B_c[:, 0] * (dt if dt_scaled else 1.0)
    w = np.tile(per_step, (T, 1))
    return sys, w, params
