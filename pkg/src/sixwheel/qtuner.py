"""Tabular Q-learning over the interior breakpoints of the controller's input sets.

Four parameters are tuned: the left and right edges (L1, L3) of the moderate
set on the lateral and heading universes. The centre L2 never moves. The
learner acts once per episode, so each reward reflects a whole run under
the adjusted parameters rather than the tick-to-tick drift of the error.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .fuzzy import ControllerConfig, MembershipTriple
from .geo import OffsetPair
from .scenario import TunerConfig
from .sim import Simulation, integrated_square_error

N_ACTIONS = 9
PARAM_NAMES = ("x_L1", "x_L3", "theta_L1", "theta_L3")
DELTA_MIN_X = 0.1
DELTA_MIN_THETA = 0.01
REWARD_DEADBAND = 1e-3
# outer reach of the tuned breakpoints, as multiples of the untuned universe half-width
REACH = 2.0


@dataclass
class QTable:
    values: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int = N_ACTIONS) -> "QTable":
        return cls(np.zeros((n_states, n_actions)))

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("Q-table must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Q-table entries must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class TunedParams:
    x_L1: float
    x_L3: float
    theta_L1: float
    theta_L3: float

    @classmethod
    def from_controller(cls, cfg: ControllerConfig) -> "TunedParams":
        return cls(cfg.x_params.L1, cfg.x_params.L3, cfg.theta_params.L1, cfg.theta_params.L3)

    def as_tuple(self) -> tuple:
        return (self.x_L1, self.x_L3, self.theta_L1, self.theta_L3)

    def to_controller(self, base: ControllerConfig) -> ControllerConfig:
        x, th = base.x_params, base.theta_params
        xp = MembershipTriple(min(x.L0, self.x_L1), self.x_L1, x.L2, self.x_L3, max(x.L4, self.x_L3))
        tp = MembershipTriple(min(th.L0, self.theta_L1), self.theta_L1, th.L2,
                              self.theta_L3, max(th.L4, self.theta_L3))
        return base.with_inputs(xp, tp)


@dataclass
class TunerState:
    params: TunedParams
    q: QTable
    rng: np.random.Generator
    epsilon: float
    prev_abs_err: Optional[float] = None  # RMS lateral error of the previous episode, m
    prev_state: Optional[int] = None
    episodes: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, controller: ControllerConfig, cfg: TunerConfig, seed: int) -> "TunerState":
        return cls(TunedParams.from_controller(controller), QTable.zeros(cfg.n_states),
                   np.random.default_rng(seed), cfg.epsilon)


def _bin(frac: float, n: int) -> int:
    return min(int(math.floor(min(max(frac, 0.0), 1.0) * n)), n - 1)


def discretize_state(offsets: OffsetPair, cfg: TunerConfig,
                     x_sat: float = 1.0, theta_sat: float = 45.0) -> int:
    lat_bin = _bin(abs(offsets.lateral) / x_sat, cfg.n_lat_bins)
    head_bin = _bin(abs(offsets.heading) / theta_sat, cfg.n_head_bins)
    return lat_bin * cfg.n_head_bins + head_bin


def select_action(state: int, q: QTable, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; the exploration draw is consumed only when epsilon > 0."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.shape[1]))
    return int(np.argmax(q.values[state]))  # first maximum wins ties


def apply_action(action: int, params: TunedParams, cfg: TunerConfig,
                 x_center: float = 0.0, theta_center: float = 0.0,
                 x_reach: float = 10.0 * REACH, theta_reach: float = 1.0 * REACH) -> TunedParams:
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action {action} outside 0..{N_ACTIONS - 1}")
    vals = list(params.as_tuple())
    if action:
        idx = (action - 1) // 2
        sign = 1.0 if action % 2 else -1.0
        step = cfg.delta_x if idx < 2 else cfg.delta_theta
        vals[idx] += sign * step
    vals[0] = min(max(vals[0], x_center - x_reach), x_center - DELTA_MIN_X)
    vals[1] = max(min(vals[1], x_center + x_reach), x_center + DELTA_MIN_X)
    vals[2] = min(max(vals[2], theta_center - theta_reach), theta_center - DELTA_MIN_THETA)
    vals[3] = max(min(vals[3], theta_center + theta_reach), theta_center + DELTA_MIN_THETA)
    return TunedParams(*vals)


def reward(prev_abs_err: float, cur_abs_err: float, gain: float = 1.0) -> float:
    if prev_abs_err < 0 or cur_abs_err < 0:
        raise ValueError("errors must be >= 0")
    if cur_abs_err < prev_abs_err - REWARD_DEADBAND:
        return gain
    if cur_abs_err > prev_abs_err + REWARD_DEADBAND:
        return -gain
    return 0.0


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float) -> QTable:
    v = q.values
    v[s, a] = v[s, a] + alpha * (r + gamma * v[s_next].max() - v[s, a])
    return q


def q_bound(cfg: TunerConfig) -> float:
    return abs(cfg.reward_gain) / (1.0 - cfg.gamma)


def episode_errors(log, dt: float) -> OffsetPair:
    """RMS lateral (m) and heading (deg) offsets seen by the controller over a run."""
    lat = log.column("lat_off")
    head = log.column("head_off")
    n = max(len(lat), 1)
    return OffsetPair(math.sqrt(float(np.sum(lat * lat)) / n), math.sqrt(float(np.sum(head * head)) / n))


def _run(sim, controller) -> OffsetPair:
    while not sim.done:
        sim.step(controller)
    return episode_errors(sim.log, sim.scenario.dt)


def train_episode(sim, tuner: TunerState, cfg: TunerConfig) -> tuple[TunerState, float]:
    """Run ``sim`` to completion under one tuning action and learn from the outcome.

    The state is the binned RMS error of the previous episode. One action
    adjusts the breakpoints, the whole episode runs on the adjusted
    controller, and the reward compares its RMS lateral error with the
    previous episode's. Without a previous episode a reference run of the
    current parameters on the same world provides it. A greedy pick from an
    all-zero table is the no-op, so such a run reproduces the untuned
    controller.
    """
    base = sim.controller
    x_c, th_c = base.x_params.L2, base.theta_params.L2
    x_reach = REACH * 0.5 * (base.x_params.L4 - base.x_params.L0)
    th_reach = REACH * 0.5 * (base.theta_params.L4 - base.theta_params.L0)
    xs, ts = base.x_sat, base.theta_sat
    if tuner.prev_abs_err is None or tuner.prev_state is None:
        ref = _run(Simulation(sim.scenario, seed=sim.seed), tuner.params.to_controller(base))
        tuner.prev_abs_err = ref.lateral
        tuner.prev_state = discretize_state(ref, cfg, xs, ts)
    s = tuner.prev_state
    a = select_action(s, tuner.q, tuner.epsilon, tuner.rng)
    params = apply_action(a, tuner.params, cfg, x_c, th_c, x_reach, th_reach)
    err = _run(sim, params.to_controller(base))
    s_next = discretize_state(err, cfg, xs, ts)
    q_update(tuner.q, s, a, reward(tuner.prev_abs_err, err.lateral, cfg.reward_gain), s_next,
             cfg.alpha, cfg.gamma)
    bound = q_bound(cfg)
    assert np.all(np.abs(tuner.q.values) <= bound + 1e-9), "Q-table left its reward bound"
    ise = integrated_square_error(sim.log, sim.scenario.dt)
    tuner.params = params
    tuner.prev_abs_err, tuner.prev_state = err.lateral, s_next
    tuner.episodes += 1
    tuner.history.append(ise)
    tuner.epsilon *= cfg.epsilon_decay
    return tuner, ise


def tuner_to_json(tuner: TunerState, cfg: TunerConfig) -> str:
    doc = {
        "params": dict(zip(PARAM_NAMES, tuner.params.as_tuple())),
        "q": tuner.q.values.tolist(),
        "config": asdict(cfg),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def tuner_from_json(text: str) -> tuple[TunedParams, QTable, TunerConfig]:
    doc = json.loads(text)
    try:
        params = TunedParams(**{k: float(doc["params"][k]) for k in PARAM_NAMES})
        cfg = TunerConfig(**doc["config"])
        q = QTable(doc["q"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tuner file: {exc}") from exc
    if q.shape != (cfg.n_states, N_ACTIONS):
        raise ValueError(f"Q-table shape {q.shape} does not match config")
    return params, q, cfg


def train(scenario, episodes: int, seed: Optional[int] = None,
          tuner: Optional[TunerState] = None, cfg: Optional[TunerConfig] = None,
          on_episode=None) -> tuple[TunerState, list]:
    """Train for ``episodes`` runs of ``scenario``, every run starting from the same world seed.

    ``on_episode(index, ise)`` is called after each episode.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seed = scenario.seed if seed is None else seed
    cfg = cfg or scenario.tuner
    tuner = tuner or TunerState.fresh(scenario.controller, cfg, seed)
    ises = []
    for ep in range(episodes):
        tuner, ise = train_episode(Simulation(scenario, seed=seed), tuner, cfg)
        ises.append(ise)
        if on_episode is not None:
            on_episode(ep + 1, ise)
    return tuner, ises
