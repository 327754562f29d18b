"""Linear Kalman filtering and the rocker-arm pitch balance loop."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


class SingularInnovationError(np.linalg.LinAlgError):
    pass


@dataclass
class KalmanModel:
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    G: Optional[np.ndarray] = None

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n = self.F.shape[0]
        if self.G is None:
            self.G = np.zeros((n, 1))
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if self.F.shape != (n, n) or self.Q.shape != (n, n):
            raise ValueError("F and Q must be n x n")
        if self.H.shape[1] != n or self.R.shape != (self.H.shape[0],) * 2:
            raise ValueError("H must be m x n and R m x m")
        if self.G.shape[0] != n:
            raise ValueError("G must have n rows")


@dataclass
class KalmanBelief:
    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))


def kf_predict(belief: KalmanBelief, model: KalmanModel, u=None) -> KalmanBelief:
    F = model.F
    if belief.x.shape[0] != F.shape[0]:
        raise ValueError("state dimension does not match the model")
    x = F @ belief.x
    if u is not None:
        x = x + model.G @ np.atleast_1d(np.asarray(u, dtype=float))
    P = F @ belief.P @ F.T + model.Q
    return KalmanBelief(x, P)


def kf_correct(belief: KalmanBelief, model: KalmanModel, z) -> KalmanBelief:
    H, R = model.H, model.R
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape[0] != H.shape[0]:
        raise ValueError("measurement dimension does not match H")
    P = belief.P
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S.T, (P @ H.T).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    innovation = z - H @ belief.x
    x = belief.x + K @ innovation
    P = (np.eye(P.shape[0]) - K @ H) @ P
    return KalmanBelief(x, 0.5 * (P + P.T))


def pitch_model(dt: float, q_pitch: float = 1e-4, q_rate: float = 1e-3, r: float = 0.25) -> KalmanModel:
    """Constant-rate pitch model; state is [pitch deg, pitch rate deg/s]."""
    return KalmanModel(F=[[1.0, dt], [0.0, 1.0]], H=[[1.0, 0.0]],
                       Q=np.diag([q_pitch, q_rate]), R=[[r]])


@dataclass(frozen=True)
class RockerState:
    arm_angle: float = 0.0
    max_rate: float = 15.0   # deg/s
    gain: float = 1.0
    deadband: float = 0.5    # deg
    limits: tuple = (-20.0, 20.0)

    def __post_init__(self):
        lo, hi = self.limits
        if not lo <= self.arm_angle <= hi:
            raise ValueError(f"arm angle {self.arm_angle} outside limits {self.limits}")


def balance_tick(pitch_meas: float, belief: KalmanBelief, rocker: RockerState, dt: float,
                 model: Optional[KalmanModel] = None) -> tuple[KalmanBelief, RockerState, float]:
    """Filter one pitch sample and drive the rocker arm toward level.

    Returns the new belief, the new rocker state and the arm command (deg).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    model = model or pitch_model(dt)
    belief = kf_correct(kf_predict(belief, model), model, [pitch_meas])
    est = float(belief.x[0])
    command = -rocker.gain * est if abs(est) > rocker.deadband else 0.0
    step = max(-rocker.max_rate * dt, min(rocker.max_rate * dt, command))
    lo, hi = rocker.limits
    arm = max(lo, min(hi, rocker.arm_angle + step))
    return belief, replace(rocker, arm_angle=arm), command


@dataclass
class ScalarKalman:
    """Random-walk filter for a single command stream (F = H = 1)."""

    q: float
    r: float
    x: Optional[float] = None
    P: float = 0.0

    def __post_init__(self):
        if self.q <= 0 or self.r < 0:
            raise ValueError("need q > 0 and r >= 0")

    def update(self, raw: float) -> float:
        if self.x is None:
            self.x, self.P = raw, self.r
            return raw
        p = self.P + self.q
        k = p / (p + self.r)
        self.x = self.x + k * (raw - self.x)
        self.P = (1.0 - k) * p
        return self.x

    def reset(self, value: Optional[float] = None) -> None:
        self.x, self.P = value, (self.r if value is not None else 0.0)


def smooth_command(raw: float, belief: ScalarKalman) -> float:
    return belief.update(raw)
