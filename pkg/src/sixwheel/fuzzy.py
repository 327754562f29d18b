"""Two-input, two-output Mamdani controller for differential wheel speeds.

Inputs are the lateral and heading offsets, each split into three sets
(left / moderate / right). Each wheel has its own 3x3 rule table mapping to
three speed sets (low / mid / high), combined by max-min inference and
reduced to a crisp speed with the clipped-triangle area method.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

LOW, MID, HIGH = 0, 1, 2


class ZeroMembershipError(ValueError):
    """No output set fired; the caller should hold its previous command."""


@dataclass(frozen=True)
class MembershipTriple:
    """Breakpoints L0..L4 of a left-shoulder / triangle / right-shoulder partition.

    L0 and L4 are the universe bounds; the three interior points define the
    sets: left falls from 1 at L1 to 0 at L2, moderate peaks at L2 over
    [L1, L3], right rises from 0 at L2 to 1 at L3.
    """

    L0: float
    L1: float
    L2: float
    L3: float
    L4: float

    def __post_init__(self):
        if not (self.L0 <= self.L1 < self.L2 < self.L3 <= self.L4):
            raise ValueError(f"breakpoints must satisfy L0 <= L1 < L2 < L3 <= L4, got {self}")

    def replace(self, **kw) -> "MembershipTriple":
        d = asdict(self)
        d.update(kw)
        return MembershipTriple(**d)


LATERAL_SETS = MembershipTriple(-10.0, -10.0, 0.0, 10.0, 10.0)
HEADING_SETS = MembershipTriple(-1.0, -1.0, 0.0, 1.0, 1.0)
SPEED_SETS = MembershipTriple(0.0, 0.0, 50.0, 100.0, 100.0)


class MembershipDegrees(NamedTuple):
    mu0: float
    mu1: float
    mu2: float


def fuzzify(value: float, p: MembershipTriple) -> MembershipDegrees:
    if value <= p.L1:
        return MembershipDegrees(1.0, 0.0, 0.0)
    if value >= p.L3:
        return MembershipDegrees(0.0, 0.0, 1.0)
    if value == p.L2:
        return MembershipDegrees(0.0, 1.0, 0.0)
    if value < p.L2:
        w = p.L2 - p.L1
        return MembershipDegrees((p.L2 - value) / w, (value - p.L1) / w, 0.0)
    w = p.L3 - p.L2
    return MembershipDegrees(0.0, (p.L3 - value) / w, (value - p.L2) / w)


# rows: heading set (left, moderate, right); columns: lateral set
LEFT_WHEEL_RULES = (
    (HIGH, HIGH, MID),
    (HIGH, MID, LOW),
    (MID, LOW, LOW),
)
RIGHT_WHEEL_RULES = (
    (LOW, LOW, MID),
    (LOW, MID, HIGH),
    (MID, HIGH, HIGH),
)


def infer(mux: MembershipDegrees, mutheta: MembershipDegrees, table) -> MembershipDegrees:
    """Max-min composition over the nine rules of ``table``."""
    out = [0.0, 0.0, 0.0]
    for i, row in enumerate(table):
        for j, speed in enumerate(row):
            strength = min(mutheta[i], mux[j])
            if strength > out[speed]:
                out[speed] = strength
    return MembershipDegrees(*out)


def _clipped_area(base: float, mu: float) -> float:
    # area of a triangle of base ``base`` and unit height clipped at ``mu``
    return base / 2.0 * (1.0 - (1.0 - mu) ** 2)


def defuzzify_area(mu: MembershipDegrees, v: MembershipTriple = SPEED_SETS) -> float:
    a = _clipped_area(v.L2 - v.L1, mu[0])
    b = _clipped_area(v.L3 - v.L1, mu[1])
    c = _clipped_area(v.L3 - v.L2, mu[2])
    total = a + b + c
    if total <= 0.0:
        raise ZeroMembershipError("all output memberships are zero")
    return (a * v.L1 + b * v.L2 + c * v.L3) / total


@dataclass(frozen=True)
class ControllerConfig:
    x_params: MembershipTriple = LATERAL_SETS
    theta_params: MembershipTriple = HEADING_SETS
    v_params: MembershipTriple = SPEED_SETS
    x_sat: float = 1.0        # metres of lateral offset mapped to the universe edge
    theta_sat: float = 45.0   # degrees of heading offset mapped to the universe edge
    v_max: float = 1.6        # m/s at crisp output 100

    def __post_init__(self):
        if self.x_sat <= 0 or self.theta_sat <= 0 or self.v_max <= 0:
            raise ValueError("x_sat, theta_sat and v_max must be > 0")

    def with_inputs(self, x_params: MembershipTriple, theta_params: MembershipTriple) -> "ControllerConfig":
        return ControllerConfig(x_params, theta_params, self.v_params,
                                self.x_sat, self.theta_sat, self.v_max)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ControllerConfig":
        kw = dict(data)
        for key in ("x_params", "theta_params", "v_params"):
            if key in kw:
                val = kw[key]
                kw[key] = MembershipTriple(*val) if isinstance(val, (list, tuple)) else MembershipTriple(**val)
        return cls(**kw)


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def control_step(offsets, cfg: ControllerConfig = ControllerConfig()) -> tuple[float, float]:
    """Wheel speeds (left, right) in m/s for an :class:`~sixwheel.geo.OffsetPair`."""
    x_n = _clamp(offsets.lateral / cfg.x_sat, -1.0, 1.0) * 10.0
    th_n = _clamp(offsets.heading / cfg.theta_sat, -1.0, 1.0)
    mux = fuzzify(x_n, cfg.x_params)
    muth = fuzzify(th_n, cfg.theta_params)
    left = defuzzify_area(infer(mux, muth, LEFT_WHEEL_RULES), cfg.v_params)
    right = defuzzify_area(infer(mux, muth, RIGHT_WHEEL_RULES), cfg.v_params)
    span = cfg.v_params.L3 - cfg.v_params.L1
    # clamp away the last-ulp excursions of the weighted average
    return (_clamp((left - cfg.v_params.L1) / span * cfg.v_max, 0.0, cfg.v_max),
            _clamp((right - cfg.v_params.L1) / span * cfg.v_max, 0.0, cfg.v_max))
