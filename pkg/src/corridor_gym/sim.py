"""Point-mass kinematics for corridor-following aircraft.

Every function here is pure: it takes an :class:`AircraftState` and returns a
new one. A simulator built on top of them is deterministic and owns no global
state, so one instance per rollout worker is safe.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Tuple

from .errors import ConfigError, ContractViolation

KT = 1852.0 / 3600.0  # m/s per knot
FT = 0.3048  # m per foot

Point = Tuple[float, float]


class SpeedCommand(enum.IntEnum):
    """In-trail speed advisory. Integer values are the wire encoding."""

    DECELERATE = 0
    HOLD = 1
    ACCELERATE = 2


@dataclass(frozen=True)
class PerformanceEnvelope:
    v_min: float = 0.0
    v_max: float = 150.0 * KT
    accel_mag: float = 1.5

    def __post_init__(self):
        if not self.v_min <= self.v_max:
            raise ConfigError(f"v_min ({self.v_min}) must not exceed v_max ({self.v_max})")
        if not self.accel_mag > 0:
            raise ConfigError(f"accel_mag must be positive, got {self.accel_mag}")
        if self.v_min < 0:
            raise ConfigError(f"v_min must be non-negative, got {self.v_min}")


@dataclass(slots=True)
class AircraftState:
    id: str
    x: float
    y: float
    z: float
    heading: float
    speed: float
    accel: float = 0.0
    route: Tuple[Point, ...] = field(default_factory=tuple)
    next_wpt_index: int = 1
    dest_dist: float = 0.0
    active: bool = True
    arrived: bool = False


@lru_cache(maxsize=4096)
def route_tail_length(route: Tuple[Point, ...], index: int) -> float:
    """Polyline length from waypoint ``index`` to the end of ``route``."""
    total = 0.0
    for (x0, y0), (x1, y1) in zip(route[index:], route[index + 1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def bearing_deg(dx: float, dy: float) -> float:
    """Heading in degrees clockwise from north for an east/north offset."""
    hdg = math.degrees(math.atan2(dx, dy)) % 360.0
    # -tiny % 360 rounds to exactly 360.0
    return 0.0 if hdg >= 360.0 else hdg


def remaining_distance(state: AircraftState) -> float:
    if state.next_wpt_index >= len(state.route):
        return 0.0
    wx, wy = state.route[state.next_wpt_index]
    return math.hypot(wx - state.x, wy - state.y) + route_tail_length(state.route, state.next_wpt_index)


def spawn(aircraft_id: str, route: Tuple[Point, ...], altitude: float, speed: float) -> AircraftState:
    """Place an aircraft at the first waypoint of ``route``, pointed at the second."""
    if len(route) < 2:
        raise ConfigError(f"route for {aircraft_id} needs at least two waypoints")
    (x0, y0), (x1, y1) = route[0], route[1]
    state = AircraftState(
        id=aircraft_id, x=float(x0), y=float(y0), z=float(altitude),
        heading=bearing_deg(x1 - x0, y1 - y0), speed=float(speed), accel=0.0,
        route=tuple(route), next_wpt_index=1,
    )
    state.dest_dist = remaining_distance(state)
    return state


def target_speed(state: AircraftState, cmd: SpeedCommand, env: PerformanceEnvelope) -> float:
    if cmd == SpeedCommand.DECELERATE:
        return env.v_min
    if cmd == SpeedCommand.ACCELERATE:
        return env.v_max
    return state.speed


def step_aircraft(state: AircraftState, cmd: SpeedCommand, env: PerformanceEnvelope,
                  dt: float) -> AircraftState:
    """Advance one aircraft by ``dt`` seconds under a speed command.

    Speed moves toward the command's target by at most ``accel_mag * dt`` and is
    clamped to the envelope. The aircraft then flies ``speed * dt`` straight at
    its current waypoint. Altitude is not touched.
    """
    if not state.active:
        raise ContractViolation(f"aircraft {state.id} is not active")
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    cmd = SpeedCommand(cmd)

    dv_max = env.accel_mag * dt
    dv = min(max(target_speed(state, cmd, env) - state.speed, -dv_max), dv_max)
    speed = min(max(state.speed + dv, env.v_min), env.v_max)
    accel = (speed - state.speed) / dt

    wx, wy = state.route[state.next_wpt_index]
    dx, dy = wx - state.x, wy - state.y
    dist = math.hypot(dx, dy)
    if dist > 0.0:
        heading = bearing_deg(dx, dy)
        ux, uy = dx / dist, dy / dist
    else:
        heading = state.heading
        ux, uy = math.sin(math.radians(heading)), math.cos(math.radians(heading))
    step = speed * dt
    new = replace(state, x=state.x + step * ux, y=state.y + step * uy,
                  heading=heading, speed=speed, accel=accel)
    new.dest_dist = remaining_distance(new)
    return new


def advance_waypoint(state: AircraftState, capture_radius: float) -> AircraftState:
    """Move to the next waypoint once inside ``capture_radius``; capturing the last one lands the aircraft."""
    if not state.active:
        raise ContractViolation(f"aircraft {state.id} is not active")
    wx, wy = state.route[state.next_wpt_index]
    if math.hypot(wx - state.x, wy - state.y) >= capture_radius:
        return state
    idx = state.next_wpt_index + 1
    if idx >= len(state.route):
        return replace(state, next_wpt_index=idx, dest_dist=0.0, active=False, arrived=True)
    new = replace(state, next_wpt_index=idx)
    new.dest_dist = remaining_distance(new)
    return new


def pairwise_distance(a: AircraftState, b: AircraftState) -> float:
    return math.hypot(a.x - b.x, a.y - b.y, a.z - b.z)
