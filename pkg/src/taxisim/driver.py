"""Car-following kernel: accelerating factor, speed/position update, and
the lane-change rule.

All functions here are pure. Speeds are km/h, distances km, times s, and
accelerations km/s^2 throughout the public surface.

The accelerating factor combines three braking pressures against the
maximum acceleration:

    free road     (speed / lane limit)^4
    busy road     (safe following distance / gap to front car)^2
    intersection  (safe stopping distance / distance to stop line)^2,
                  applied only when the vehicle must stop at the line

and returns round(max_acceleration * (1 - sum of coefficients), 10). A zero
gap or zero stop-line distance makes the matching coefficient infinite: the
result is an unbounded deceleration, not an error.

Two unit conventions are supported for the braking terms. The formulas mix
km/h speeds with km/s^2 accelerations; evaluated verbatim ("literal" mode)
the speed-dependent braking distances come out absurdly large, so the
default "dimensional" mode converts speeds to km/s inside the interaction
gap and the kinetic stopping term. Literal mode is kept for fidelity
testing against the published arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

KMH_PER_KMS = 3600.0  # km/h in one km/s


class UnitMode(enum.Enum):
    DIMENSIONAL = "dimensional"
    LITERAL = "literal"


class LaneDecision(enum.Enum):
    STAY = "stay"
    SWITCH = "switch"


@dataclass(frozen=True)
class IdmParams:
    time_head_away: float = 1.5  # s
    dist_gap: float = 0.002  # km, desired standstill gap
    max_acceleration: float = 0.001  # km/s^2
    max_deceleration: float = 0.003  # km/s^2
    unit_mode: UnitMode = UnitMode.DIMENSIONAL


DEFAULT_PARAMS = IdmParams()

# lane-change rule constants
LANE_SPEED_ADVANTAGE = 1.05  # other lane must be >5% faster
LANE_SAFE_GAP_KM = 0.002  # required clearance ahead and behind on the target lane
LANE_CHANGE_COOLDOWN_S = 5.0
LANE_LOOKAHEAD_KM = 0.1  # window for the instantaneous lane average speed


@dataclass(frozen=True)
class DriverContext:
    speed: float  # km/h
    lane_speed_limit: float  # km/h
    front_gap: float = math.inf  # km; inf when no front car
    delta_speed: float = 0.0  # own minus front, km/h; 0 when no front car
    stop_line_distance: float | None = None  # km; None unless must_stop
    must_stop: bool = False


@dataclass(frozen=True)
class AdvanceResult:
    new_speed: float  # km/h, clamped to [0, lane limit]
    moving_distance: float  # km, never exceeds the front gap


def acceleration_factor(ctx: DriverContext, params: IdmParams = DEFAULT_PARAMS) -> float:
    """Acceleration (km/s^2) for one step; negative means braking."""
    speed_ratio = ctx.speed / ctx.lane_speed_limit
    free_road_coeff = speed_ratio**4

    time_gap = ctx.speed * params.time_head_away / 3600.0
    denom = 2.0 * math.sqrt(params.max_acceleration * params.max_deceleration)
    if params.unit_mode is UnitMode.DIMENSIONAL:
        break_gap = (ctx.speed / KMH_PER_KMS) * (ctx.delta_speed / KMH_PER_KMS) / denom
    else:
        break_gap = ctx.speed * ctx.delta_speed / denom
    safe_distance = params.dist_gap + time_gap + break_gap
    if ctx.front_gap > 0:
        busy_road_coeff = (safe_distance / ctx.front_gap) ** 2
    else:
        busy_road_coeff = math.inf

    intersection_coeff = 0.0
    if ctx.must_stop:
        if params.unit_mode is UnitMode.DIMENSIONAL:
            kinetic = (ctx.speed / KMH_PER_KMS) ** 2 / (2.0 * params.max_deceleration)
        else:
            kinetic = ctx.speed**2 / (2.0 * params.max_deceleration)
        safe_intersection_dist = 0.001 + time_gap + kinetic
        if ctx.stop_line_distance is not None and ctx.stop_line_distance > 0:
            intersection_coeff = (safe_intersection_dist / ctx.stop_line_distance) ** 2
        else:
            intersection_coeff = math.inf

    coeff = 1.0 - free_road_coeff - busy_road_coeff - intersection_coeff
    return round(params.max_acceleration * coeff, 10)


def advance(
    speed: float,
    accel: float,
    dt: float,
    lane_speed_limit: float,
    front_gap: float = math.inf,
) -> AdvanceResult:
    """Update speed and compute the distance moved in one dt-second step.

    The distance uses the pre-update speed (v*dt + a*dt^2/2) and is capped
    by the gap to the front car, so the kernel itself can never produce a
    collision.
    """
    new_speed = speed + accel * dt * KMH_PER_KMS
    new_speed = min(lane_speed_limit, max(0.0, new_speed))
    step = max(speed * dt / 3600.0 + 0.5 * accel * dt * dt, 0.0)
    return AdvanceResult(new_speed=new_speed, moving_distance=min(front_gap, step))


def lane_change_decision(
    own_lane_avg_speed: float,
    other_lane_avg_speed: float,
    has_front: bool,
    target_gap_ahead: float,
    target_gap_behind: float,
    cooldown_remaining: float,
) -> LaneDecision:
    """Switch only for a clearly faster lane with safe clearance.

    A driver with nothing ahead never switches; a recent switch (cooldown)
    blocks another; the target lane needs clearance both ways and a speed
    advantage above the 5% margin.
    """
    if not has_front:
        return LaneDecision.STAY
    if cooldown_remaining > 0:
        return LaneDecision.STAY
    if target_gap_ahead < LANE_SAFE_GAP_KM or target_gap_behind < LANE_SAFE_GAP_KM:
        return LaneDecision.STAY
    if other_lane_avg_speed <= LANE_SPEED_ADVANTAGE * own_lane_avg_speed:
        return LaneDecision.STAY
    return LaneDecision.SWITCH
