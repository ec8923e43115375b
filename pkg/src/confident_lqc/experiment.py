"""Seeded Monte-Carlo sweeps over scenario x controller x prediction-noise level.

A configuration is a YAML document::

    schema_version: 1
    scenario:
      name: tracking            # tracking | ev_synthetic | ev_csv | cartpole
      horizon: 200
    noise:
      kind: binomial_scaled     # binomial_scaled | gaussian_iid | gaussian_scaled_w
      levels: [0.0, 0.1, 0.2]
    controllers: [zero, "lambda(0.5)", "self_tuning(0.3)"]
    monte_carlo:
      repetitions: 5
      base_seed: 2022
      selection: worst          # worst | mean
    output:
      path: results.csv

See README.md for the optional keys of every section.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .controllers import (
    DEFAULT_LAMBDA0,
    DEFAULT_SIGMA,
    LambdaConfident,
    OneConfident,
    SelfTuning,
    Threshold,
    ZeroConfident,
    offline_optimal_rollout,
)
from .errors import BadInput, ConfigError, Diverged, LQCError
from .metrics import prediction_error, self_variation
from .riccati import RiccatiSolution, SystemMatrices, solve_dare_regularized
from .scenarios import (
    NOISE_KINDS,
    NoiseModel,
    cartpole_instance,
    ev_charging_instance,
    generate_predictions,
    ingest_ev_csv,
    robot_tracking_instance,
    synthetic_ev_sessions,
)
from .simulation import CartPoleParams, PredictionWindow, Rollout, rollout_cartpole, rollout_linear

SCHEMA_VERSION = 1
SCENARIOS = ("tracking", "ev_synthetic", "ev_csv", "cartpole")
THREADS_ENV = "LQC_THREADS"

# --------------------------------------------------------------------------- controllers


@dataclass(frozen=True)
class ControllerSpec:
    kind: str
    value: float | None = None
    clamp: bool = False

    @property
    def label(self) -> str:
        if self.kind in ("offline", "zero", "one"):
            return self.kind
        if self.kind == "self_tuning":
            return f"self_tuning({self.value!r}{', clamp' if self.clamp else ''})"
        return f"{self.kind}({self.value!r})"

    def build(self):
        if self.kind == "zero":
            return ZeroConfident()
        if self.kind in ("one", "offline"):
            return OneConfident()
        if self.kind == "lambda":
            return LambdaConfident(self.value)
        if self.kind == "threshold":
            return Threshold(self.value)
        return SelfTuning(self.value, self.clamp)


_SPEC_RE = re.compile(r"^\s*(\w+)\s*(?:\(\s*([^,()]*?)\s*(?:,\s*(clamp)\s*)?\))?\s*$")


def parse_controller(text) -> ControllerSpec:
    """Parse ``zero``, ``lambda(0.4)``, ``threshold(1e-9)``, ``self_tuning(0.3, clamp)`` ..."""
    if isinstance(text, dict):
        if len(text) != 1:
            raise ConfigError(f"controller mapping must have exactly one key: {text}")
        (kind, arg), = text.items()
        text = f"{kind}({arg})" if arg is not None else str(kind)
    match = _SPEC_RE.match(str(text))
    if not match:
        raise ConfigError(f"cannot parse controller {text!r}")
    kind, arg, clamp = match.groups()
    if kind in ("offline", "zero", "one"):
        if arg or clamp:
            raise ConfigError(f"controller {kind!r} takes no argument")
        return ControllerSpec(kind)
    if kind not in ("lambda", "threshold", "self_tuning"):
        raise ConfigError(f"unknown controller {kind!r}")
    if clamp and kind != "self_tuning":
        raise ConfigError("only self_tuning accepts the clamp flag")
    if not arg:
        if kind == "lambda":
            raise ConfigError("lambda controller needs a trust parameter, e.g. lambda(0.5)")
        arg = DEFAULT_SIGMA if kind == "threshold" else DEFAULT_LAMBDA0
    try:
        value = float(arg)
    except ValueError:
        raise ConfigError(f"controller {text!r}: {arg!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"controller {text!r}: parameter must be finite")
    if kind == "threshold" and not value > 0:
        raise ConfigError("threshold sigma must be positive")
    return ControllerSpec(kind, value, bool(clamp))


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    scenario: str
    horizon: int
    controllers: list[ControllerSpec]
    noise_kind: str
    noise_levels: list[float]
    mc_repetitions: int = 5
    base_seed: int = 0
    output_path: str = "results.csv"
    selection: str = "worst"
    noise_broadcast: bool = False
    x0: list[float] | None = None
    chargers: int | None = None
    csv_path: str | None = None
    r_scale: float | None = None
    cartpole: CartPoleParams = field(default_factory=CartPoleParams)
    disturbance_dt_scaling: bool = True
    failure_penalty: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not isinstance(self.horizon, int) or self.horizon < 2:
            raise ConfigError("horizon must be an integer >= 2")
        if not self.controllers:
            raise ConfigError("at least one controller is required")
        labels = [c.label for c in self.controllers]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate controllers in {labels}")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}; expected one of {NOISE_KINDS}")
        if not self.noise_levels:
            raise ConfigError("noise.levels must list at least one level")
        for lv in self.noise_levels:
            if not (math.isfinite(lv) and lv >= 0):
                raise ConfigError(f"noise level {lv} must be finite and nonnegative")
        if not isinstance(self.mc_repetitions, int) or self.mc_repetitions < 1:
            raise ConfigError("monte_carlo.repetitions must be an integer >= 1")
        if self.selection not in ("worst", "mean"):
            raise ConfigError("monte_carlo.selection must be 'worst' or 'mean'")
        if self.scenario == "ev_csv" and not self.csv_path:
            raise ConfigError("scenario ev_csv needs scenario.csv_path")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; this build reads {SCHEMA_VERSION}")


def _num(section: dict, key: str, default, conv=float):
    raw = section.get(key, default)
    if raw is None:
        return None
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return sec


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    scen = _section(doc, "scenario")
    noise = _section(doc, "noise")
    mc = _section(doc, "monte_carlo")
    out = _section(doc, "output")
    ctrl = doc.get("controllers")
    if not isinstance(ctrl, list):
        raise ConfigError("controllers must be a list")
    if "name" not in scen or "horizon" not in scen:
        raise ConfigError("scenario.name and scenario.horizon are required")
    if "kind" not in noise or "levels" not in noise:
        raise ConfigError("noise.kind and noise.levels are required")
    levels = noise["levels"]
    if not isinstance(levels, list):
        raise ConfigError("noise.levels must be a list")
    try:
        levels = [float(v) for v in levels]
        cp = CartPoleParams(**{k: float(v) for k, v in (scen.get("cartpole") or {}).items()})
    except (TypeError, ValueError, BadInput) as exc:
        raise ConfigError(str(exc)) from None
    csv_path = scen.get("csv_path")
    if csv_path is not None and base_dir is not None and not Path(csv_path).is_absolute():
        csv_path = str(base_dir / csv_path)
    x0 = scen.get("x0")
    if x0 is not None:
        try:
            x0 = [float(v) for v in x0]
        except (TypeError, ValueError):
            raise ConfigError("scenario.x0 must be a list of numbers") from None
    return ExperimentConfig(
        scenario=str(scen["name"]),
        horizon=_num(scen, "horizon", None, int),
        controllers=[parse_controller(c) for c in ctrl],
        noise_kind=str(noise["kind"]),
        noise_levels=levels,
        mc_repetitions=_num(mc, "repetitions", 5, int),
        base_seed=_num(mc, "base_seed", 0, int),
        output_path=str(out.get("path", "results.csv")),
        selection=str(mc.get("selection", "worst")),
        noise_broadcast=bool(noise.get("broadcast", False)),
        x0=x0,
        chargers=_num(scen, "chargers", None, int),
        csv_path=csv_path,
        r_scale=_num(scen, "r_scale", None),
        cartpole=cp,
        disturbance_dt_scaling=bool(scen.get("disturbance_dt_scaling", True)),
        failure_penalty=_num(scen, "failure_penalty", 0.0),
        schema_version=_num(doc, "schema_version", None, int),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(doc, base_dir=path.parent)


# --------------------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Scenario:
    name: str
    sys: SystemMatrices
    ric: RiccatiSolution
    w: np.ndarray
    x0: np.ndarray
    cartpole: CartPoleParams | None = None


def build_scenario(config: ExperimentConfig) -> Scenario:
    T = config.horizon
    params = None
    if config.scenario == "tracking":
        kwargs = {} if config.r_scale is None else {"r_scale": config.r_scale}
        sys, w, _ = robot_tracking_instance(T, **kwargs)
    elif config.scenario == "ev_synthetic":
        N = config.chargers or 10
        sys, w = ev_charging_instance(N, T, synthetic_ev_sessions(N, T))
    elif config.scenario == "ev_csv":
        sys, w = ev_charging_instance(config.chargers or 52, T, ingest_ev_csv(config.csv_path))
    else:
        sys, w, params = cartpole_instance(config.cartpole, T, dt_scaled=config.disturbance_dt_scaling)
    ric, sys = solve_dare_regularized(sys, T)
    x0 = np.zeros(sys.n) if config.x0 is None else np.array(config.x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ConfigError(f"scenario.x0 must have {sys.n} entries")
    return Scenario(config.scenario, sys, ric, w, x0, params)


def cell_seed(base_seed: int, level_index: int, repetition: int) -> int:
    """64-bit seed of one (noise level, repetition) cell."""
    seq = np.random.SeedSequence([base_seed % 2**64, level_index, repetition])
    return int(seq.generate_state(1, np.uint64)[0])


def _predictions(scn: Scenario, config: ExperimentConfig, level_index: int, repetition: int) -> np.ndarray:
    noise = NoiseModel(
        config.noise_kind,
        config.noise_levels[level_index],
        cell_seed(config.base_seed, level_index, repetition),
        config.noise_broadcast,
    )
    return generate_predictions(scn.w, noise)


def run_controller(scn: Scenario, spec: ControllerSpec, w_hat: np.ndarray, failure_penalty: float = 0.0) -> Rollout:
    if spec.kind == "offline":
        w_hat = scn.w
    trace = PredictionWindow(scn.w, w_hat)
    policy = spec.build()
    if scn.cartpole is not None:
        ro = rollout_cartpole(scn.cartpole, scn.sys, scn.ric, policy, trace, scn.x0, failure_penalty)
    else:
        ro = rollout_linear(scn.sys, scn.ric, policy, trace, scn.x0)
    return ro


# --------------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    controller: str
    noise_level: float
    epsilon: float
    alg_cost: float
    opt_cost: float
    cr: float
    mu_var_w: float
    mu_var_wh: float
    repetition_index_selected: int
    lambda_final: float | None = None
    cr_std: float | None = None
    survival_steps: float | None = None


SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow))


@dataclass
class _Outcome:
    alg_cost: float
    lambda_final: float | None
    survival: int


@dataclass
class _Cell:
    level_index: int
    repetition: int
    epsilon: float
    mu_var_wh: float
    opt_cost: float
    outcomes: dict[str, _Outcome]


def _run_cell(scn: Scenario, config: ExperimentConfig, level_index: int, repetition: int) -> _Cell:
    w_hat = _predictions(scn, config, level_index, repetition)
    opt = offline_optimal_rollout(scn.ric, scn.sys, scn.x0, scn.w).total_cost
    outcomes = {}
    for spec in config.controllers:
        try:
            ro = run_controller(scn, spec, w_hat, config.failure_penalty)
            outcomes[spec.label] = _Outcome(ro.total_cost, ro.lambda_final, ro.survival_steps)
        except Diverged as exc:
            outcomes[spec.label] = _Outcome(math.inf, None, exc.step)
        except LQCError as exc:
            raise type(exc)(
                f"controller {spec.label}, level {config.noise_levels[level_index]}, repetition {repetition}: {exc}"
            ) from exc
    return _Cell(
        level_index,
        repetition,
        prediction_error(scn.ric, scn.w, w_hat),
        self_variation(w_hat),
        opt,
        outcomes,
    )


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return threads


def run_sweep(config: ExperimentConfig, threads: int | None = None) -> list[SweepRow]:
    """Execute every (noise level, repetition) cell and reduce each controller's repetitions to one row.

    With ``selection = worst`` the row reports the repetition with the largest
    algorithmic cost. With ``mean`` it reports mean cost and ratio plus the
    ratio's standard deviation. Rows are ordered by controller (config order)
    and then noise level, whatever the thread count.
    """
    scn = build_scenario(config)
    mu_w = self_variation(scn.w)
    jobs = [(li, rep) for li in range(len(config.noise_levels)) for rep in range(config.mc_repetitions)]
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        cells = [_run_cell(scn, config, li, rep) for li, rep in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            cells = list(pool.map(lambda job: _run_cell(scn, config, *job), jobs))
    cells.sort(key=lambda c: (c.level_index, c.repetition))

    rows = []
    for spec in config.controllers:
        label = spec.label
        for li, level in enumerate(config.noise_levels):
            group = [c for c in cells if c.level_index == li]
            if config.selection == "worst":
                pick = max(group, key=lambda c: c.outcomes[label].alg_cost)
                out = pick.outcomes[label]
                rows.append(
                    SweepRow(
                        scenario=config.scenario,
                        controller=label,
                        noise_level=level,
                        epsilon=pick.epsilon,
                        alg_cost=out.alg_cost,
                        opt_cost=pick.opt_cost,
                        cr=out.alg_cost / pick.opt_cost,
                        mu_var_w=mu_w,
                        mu_var_wh=pick.mu_var_wh,
                        repetition_index_selected=pick.repetition,
                        lambda_final=out.lambda_final,
                        survival_steps=out.survival,
                    )
                )
            else:
                costs = np.array([c.outcomes[label].alg_cost for c in group])
                ratios = costs / np.array([c.opt_cost for c in group])
                finals = [c.outcomes[label].lambda_final for c in group]
                rows.append(
                    SweepRow(
                        scenario=config.scenario,
                        controller=label,
                        noise_level=level,
                        epsilon=float(np.mean([c.epsilon for c in group])),
                        alg_cost=float(costs.mean()),
                        opt_cost=float(np.mean([c.opt_cost for c in group])),
                        cr=float(ratios.mean()),
                        mu_var_w=mu_w,
                        mu_var_wh=float(np.mean([c.mu_var_wh for c in group])),
                        repetition_index_selected=-1,
                        lambda_final=None if any(f is None for f in finals) else float(np.mean(finals)),
                        cr_std=float(ratios.std()),
                        survival_steps=float(np.mean([c.outcomes[label].survival for c in group])),
                    )
                )
    return rows


# --------------------------------------------------------------------------- output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write(path, header, lines) -> None:
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for line in lines:
        writer.writerow([_fmt(v) for v in line])
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(rows, path) -> None:
    """Write sweep rows with a fixed column order and 17 significant digits."""
    _write(path, SWEEP_COLUMNS, ([getattr(r, c) for c in SWEEP_COLUMNS] for r in rows))


def emit_trace(rollout: Rollout, path) -> None:
    """Per-step CSV of states, actions and (for self-tuning) the trust parameter.

    The last line holds the terminal state with empty action and lambda cells.
    """
    n = rollout.states.shape[1]
    m = rollout.actions.shape[1] if rollout.actions.ndim == 2 else 0
    header = ["t", *(f"x{i}" for i in range(n)), *(f"u{j}" for j in range(m)), "lambda"]
    lines = []
    steps = len(rollout.actions)
    for t, x in enumerate(rollout.states):
        if t < steps:
            u = list(rollout.actions[t])
            lam = None if rollout.lambdas is None else rollout.lambdas[t]
        else:
            u, lam = [None] * m, None
        lines.append([t, *x, *u, lam])
    _write(path, header, lines)


def trace_run(config: ExperimentConfig, controller_label: str, level: float, repetition: int = 0) -> Rollout:
    """Roll out a single controller at one noise level (repetition 0 seed) for trajectory plots."""
    spec = parse_controller(controller_label)
    scn = build_scenario(config)
    levels = list(config.noise_levels)
    li = levels.index(level) if level in levels else len(levels)
    cfg = config if li < len(levels) else _with_levels(config, levels + [level])
    w_hat = _predictions(scn, cfg, li, repetition)
    return run_controller(scn, spec, w_hat, config.failure_penalty)


def _with_levels(config: ExperimentConfig, levels: list[float]) -> ExperimentConfig:
    return replace(config, noise_levels=levels)
