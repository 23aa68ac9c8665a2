"""Multi-agent corridor separation environment.

Each controllable aircraft is an agent choosing a :class:`SpeedCommand` every
step. Observations are fixed length: an ownship block followed by the nearest
``n_intruders`` intruder blocks, zero padded. All positional features are
relative to the ownship, so the observation does not depend on where the
traffic is.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import metrics
from .errors import ConfigError, ContractViolation
from .scenario import Scenario, background_state
from .sim import KT, AircraftState, SpeedCommand, advance_waypoint, spawn, step_aircraft

OWN_BASE = 5
INTRUDER_BASE = 7
TRAJECTORY_COLUMNS = ("time_s", "ac_id", "x_m", "y_m", "z_m", "heading_deg", "speed_mps",
                      "accel_mps2", "action", "reward")


@dataclass
class UseCaseParams:
    d_nmac: float = 150.0
    d_lowc: float = 450.0
    d_max: float = 3000.0
    n_wpt: int = 2
    n_intruders: int = 30
    alpha: float = 1.0
    delta: float = 0.0003
    psi: float = 0.001
    omega: float = 0.001
    dt: float = 1.0
    capture_radius: float = 100.0
    hold_speed: float = metrics.HOLD_SPEED
    remove_on_nmac: bool = False
    overrun_s: float = 1800.0  # run-on after the last scheduled departure
    departure_jitter_s: float = 0.0
    speed_scale: float = 150.0 * KT
    altitude_scale: float = 1000.0

    def validate(self) -> "UseCaseParams":
        if not 0 < self.d_nmac < self.d_lowc < self.d_max:
            raise ConfigError("need 0 < d_nmac < d_lowc < d_max")
        for name in ("alpha", "delta", "psi", "omega"):
            if getattr(self, name) < 0:
                raise ConfigError(f"reward coefficient {name} must be non-negative")
        if self.n_wpt < 1:
            raise ConfigError("n_wpt must be at least 1")
        if self.n_intruders < 0:
            raise ConfigError("n_intruders must be non-negative")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.capture_radius <= 0 or self.overrun_s < 0 or self.departure_jitter_s < 0:
            raise ConfigError("capture_radius must be positive; overrun_s and departure_jitter_s non-negative")
        if self.speed_scale <= 0 or self.altitude_scale <= 0:
            raise ConfigError("feature scales must be positive")
        return self

    @property
    def own_len(self) -> int:
        return OWN_BASE + 2 * self.n_wpt

    @property
    def intruder_len(self) -> int:
        return INTRUDER_BASE + 2 * self.n_wpt

    @property
    def obs_len(self) -> int:
        return self.own_len + self.n_intruders * self.intruder_len

    @property
    def thresholds(self) -> Dict[str, float]:
        return {metrics.NMAC: self.d_nmac, metrics.LOWC: self.d_lowc}


@dataclass
class Observation:
    raw: np.ndarray
    scaled: np.ndarray
    valid_count: int
    intruder_ids: List[str]
    params: UseCaseParams = field(repr=False)

    @property
    def ownship(self) -> np.ndarray:
        return self.raw[: self.params.own_len]

    @property
    def intruders(self) -> np.ndarray:
        return self.raw[self.params.own_len:].reshape(self.params.n_intruders, self.params.intruder_len)

    def __len__(self):
        return self.raw.size


class TrafficSnapshot:
    """Column view of every aircraft present at one instant."""

    def __init__(self, states: Sequence[AircraftState], n_wpt: int):
        self.ids = [s.id for s in states]
        self.index = {aid: k for k, aid in enumerate(self.ids)}
        n = len(states)
        self.pos = np.array([(s.x, s.y, s.z) for s in states], dtype=float).reshape(n, 3)
        self.heading = np.array([s.heading for s in states], dtype=float)
        self.accel = np.array([s.accel for s in states], dtype=float)
        self.speed = np.array([s.speed for s in states], dtype=float)
        self.dest = np.array([s.dest_dist for s in states], dtype=float)
        self.wpts = np.array([upcoming_waypoints(s, n_wpt) for s in states], dtype=float).reshape(n, n_wpt, 2)

    def __len__(self):
        return len(self.ids)

    def distances_from(self, k: int) -> np.ndarray:
        d = self.pos - self.pos[k]
        return np.sqrt(np.einsum("ij,ij->i", d, d))


def upcoming_waypoints(s: AircraftState, n_wpt: int):
    """Next ``n_wpt`` route points; past the destination the last point repeats."""
    route = s.route
    if not route:
        return [(s.x, s.y)] * n_wpt
    last = len(route) - 1
    return [route[min(s.next_wpt_index + j, last)] for j in range(n_wpt)]


def _scale_vector(params: UseCaseParams) -> np.ndarray:
    dm, vs = params.d_max, params.speed_scale
    own = [1 / 360.0, 1 / params.altitude_scale, 1.0, 1 / vs, 1 / dm] + [1 / dm] * (2 * params.n_wpt)
    intr = [1 / dm, 1 / dm, 1 / dm, 1.0, 1 / vs, 1 / dm, 1 / dm] + [1 / dm] * (2 * params.n_wpt)
    return np.array(own + intr * params.n_intruders)


def observation_at(k: int, snap: TrafficSnapshot, params: UseCaseParams,
                   scale: Optional[np.ndarray] = None) -> Observation:
    """Observation for the aircraft in row ``k`` of ``snap``."""
    raw = np.zeros(params.obs_len)
    ox, oy, oz = snap.pos[k]
    own_wpt = (snap.wpts[k] - (ox, oy)).ravel()
    raw[:OWN_BASE] = (snap.heading[k], oz, snap.accel[k], snap.speed[k], snap.dest[k])
    raw[OWN_BASE:params.own_len] = own_wpt

    dist = snap.distances_from(k)
    others = np.array([j for j in range(len(snap)) if j != k], dtype=int)
    chosen = others[np.argsort(dist[others], kind="stable")][: params.n_intruders] if others.size else others
    n = chosen.size
    if n:
        block = np.empty((n, params.intruder_len))
        block[:, 0:3] = snap.pos[chosen] - snap.pos[k]
        block[:, 3] = snap.accel[chosen]
        block[:, 4] = snap.speed[chosen]
        block[:, 5] = snap.dest[chosen]
        block[:, 6] = dist[chosen]
        block[:, INTRUDER_BASE:] = (snap.wpts[chosen] - (ox, oy)).reshape(n, -1)
        raw[params.own_len: params.own_len + n * params.intruder_len] = block.ravel()
    if scale is None:
        scale = _scale_vector(params)
    return Observation(raw, raw * scale, int(n), [snap.ids[j] for j in chosen], params)


def build_observation(ownship: AircraftState, others: Sequence[AircraftState],
                      params: UseCaseParams) -> Observation:
    if not ownship.active:
        raise ContractViolation(f"aircraft {ownship.id} is not active")
    states = [ownship] + [o for o in others if o.id != ownship.id]
    return observation_at(0, TrafficSnapshot(states, params.n_wpt), params)


def reward_from_distance(d_closest: float, action: SpeedCommand, params: UseCaseParams) -> float:
    if d_closest < params.d_nmac:
        r_state = -1.0
    elif d_closest < params.d_max:
        r_state = -params.alpha + params.delta * d_closest
    else:
        r_state = 0.0
    r_action = 0.0 if SpeedCommand(action) == SpeedCommand.HOLD else -params.psi
    return r_state + r_action - params.omega


def reward(ownship: AircraftState, others: Sequence[AircraftState], action: SpeedCommand,
           params: UseCaseParams) -> float:
    if not ownship.active:
        raise ContractViolation(f"aircraft {ownship.id} is not active")
    d = min((math.hypot(ownship.x - o.x, ownship.y - o.y, ownship.z - o.z)
             for o in others if o.id != ownship.id), default=math.inf)
    return reward_from_distance(d, action, params)


@dataclass
class StepResult:
    time: float
    observations: Dict[str, Observation]
    rewards: Dict[str, float]
    dones: Dict[str, bool]
    done: bool
    truncated: bool = False
    info: dict = field(default_factory=dict)


class CorridorEnv:
    """Fast-time environment over one :class:`Scenario`.

    Not reentrant; run one instance per worker.
    """

    def __init__(self, scenario: Scenario, params: Optional[UseCaseParams] = None):
        self.params = (params or UseCaseParams()).validate()
        self._scale = _scale_vector(self.params)
        self.scenario = scenario
        self.time = 0.0
        self._started = False

    # ---- lifecycle

    def reset(self, seed: Optional[int] = None, scenario: Optional[Scenario] = None) -> StepResult:
        if scenario is not None:
            self.scenario = scenario
        self.scenario.validate()
        p = self.params
        rng = np.random.default_rng(seed)
        routes = self.scenario.route_map()
        plans = []
        for f in self.scenario.flights:
            dep = f.departure_time
            if p.departure_jitter_s > 0:
                dep = max(0.0, dep + float(rng.uniform(-p.departure_jitter_s, p.departure_jitter_s)))
            plans.append((dep, f.aircraft_id, f))
        plans.sort(key=lambda t: (t[0], t[1]))
        self._plans = plans
        self._routes = routes
        self._next_plan = 0
        self.seed = seed
        self.step_count = 0
        self.time = 0.0
        self.aircraft: Dict[str, AircraftState] = {}
        self.arrived: Dict[str, AircraftState] = {}
        self.removed: Dict[str, AircraftState] = {}
        last_dep = max((d for d, _, _ in plans), default=0.0)
        self.horizon = max(self.scenario.duration, last_dep) + p.overrun_s
        self.detector = metrics.EventDetector(p.thresholds)
        self.returns: Dict[str, float] = {}
        self.decisions = 0
        self.alerts = 0
        self.holding_time = 0.0
        self.states_generated = 0
        self._started = True

        spawned = self._spawn_due(0.0)
        present = spawned + self._background(0.0)
        snap = TrafficSnapshot(present, p.n_wpt)
        opened = self.detector.update(0.0, snap.ids, snap.pos)
        obs = {s.id: observation_at(snap.index[s.id], snap, p, self._scale) for s in spawned}
        done = not self.aircraft and self._next_plan >= len(self._plans)
        return StepResult(0.0, obs, {}, {aid: False for aid in obs}, done, False,
                          self._info(opened, {}, present))

    def step(self, actions: Mapping[str, int]) -> StepResult:
        if not self._started:
            raise ContractViolation("step() called before reset()")
        p = self.params
        for aid, a in actions.items():
            if aid not in self.aircraft:
                raise ContractViolation(f"action for unknown or inactive aircraft {aid!r}")
            try:
                SpeedCommand(int(a))
            except (ValueError, TypeError):
                raise ContractViolation(f"invalid action {a!r} for aircraft {aid!r}") from None
        acting = sorted(self.aircraft)
        cmds = {aid: SpeedCommand(int(actions.get(aid, SpeedCommand.HOLD))) for aid in acting}
        env = self.scenario.envelope
        moved = []
        for aid in acting:
            s = step_aircraft(self.aircraft[aid], cmds[aid], env, p.dt)
            moved.append(advance_waypoint(s, p.capture_radius))
        self.step_count += 1
        t = self.step_count * p.dt
        self.time = t

        spawned = self._spawn_due(t)
        present = moved + spawned + self._background(t)
        snap = TrafficSnapshot(present, p.n_wpt)
        opened = self.detector.update(t, snap.ids, snap.pos)

        rewards, obs, dones = {}, {}, {}
        for s in moved:
            k = snap.index[s.id]
            dist = snap.distances_from(k)
            dist[k] = math.inf
            d_c = float(dist.min())
            r = reward_from_distance(d_c, cmds[s.id], p)
            rewards[s.id] = r
            self.returns[s.id] = self.returns.get(s.id, 0.0) + r
            obs[s.id] = observation_at(k, snap, p, self._scale)
            if s.speed < p.hold_speed:
                self.holding_time += p.dt
            if s.active:
                self.aircraft[s.id] = s
            else:
                del self.aircraft[s.id]
                self.arrived[s.id] = s
        if p.remove_on_nmac:
            for kind, a, b, _ in opened:
                if kind == metrics.NMAC:
                    for aid in (a, b):
                        if aid in self.aircraft:
                            self.removed[aid] = self.aircraft.pop(aid)
        for s in moved:
            dones[s.id] = s.id not in self.aircraft
        for s in spawned:
            if s.id in self.aircraft:
                obs[s.id] = observation_at(snap.index[s.id], snap, p, self._scale)
                dones[s.id] = False
        self.decisions += len(acting)
        self.alerts += sum(1 for c in cmds.values() if c != SpeedCommand.HOLD)
        self.states_generated += len(acting)

        finished = not self.aircraft and self._next_plan >= len(self._plans)
        truncated = not finished and t >= self.horizon - 1e-9
        return StepResult(t, obs, rewards, dones, finished or truncated, truncated,
                          self._info(opened, {aid: int(c) for aid, c in cmds.items()}, present))

    # ---- helpers

    def _spawn_due(self, t: float) -> List[AircraftState]:
        out = []
        while self._next_plan < len(self._plans) and self._plans[self._next_plan][0] <= t + 1e-9:
            _, aid, f = self._plans[self._next_plan]
            route = self._routes[f.route]
            s = spawn(aid, route.waypoints, f.lane_altitude, f.cruise_speed)
            self.aircraft[aid] = s
            out.append(s)
            self._next_plan += 1
        return out

    def _background(self, t: float) -> List[AircraftState]:
        states = (background_state(tr, t) for tr in self.scenario.background)
        return [s for s in states if s is not None]

    def _info(self, opened, actions, present) -> dict:
        return {
            "events": [{"kind": k, "id_a": a, "id_b": b, "time_s": self.time, "distance_m": d}
                       for k, a, b, d in opened],
            "actions": actions,
            "states": [{"id": s.id, "x": s.x, "y": s.y, "z": s.z, "heading": s.heading,
                        "speed": s.speed, "accel": s.accel} for s in sorted(present, key=lambda s: s.id)],
        }

    @property
    def pending(self) -> int:
        return len(self._plans) - self._next_plan

    @property
    def n_flights(self) -> int:
        return len(self._plans)

    def safety_events(self) -> List[metrics.SafetyEvent]:
        return self.detector.events

    def episode_stats(self, wall_s: float = 0.0) -> metrics.EpisodeStats:
        n = len(self._plans)
        return metrics.EpisodeStats(
            n_aircraft=n,
            nmac=self.detector.count(metrics.NMAC),
            lowc=self.detector.count(metrics.LOWC),
            decisions=self.decisions, alerts=self.alerts,
            holding_time_s=self.holding_time, states=self.states_generated, wall_s=wall_s,
            mean_return=sum(self.returns.values()) / n if n else 0.0,
        )


# --------------------------------------------------------------------------
# trajectory log


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trajectory_rows(result: StepResult) -> List[list]:
    """Log rows for every aircraft present at ``result.time``."""
    acts, rews = result.info["actions"], result.rewards
    return [[result.time, s["id"], s["x"], s["y"], s["z"], s["heading"], s["speed"], s["accel"],
             acts.get(s["id"], ""), rews.get(s["id"], "")] for s in result.info["states"]]


class TrajectoryWriter:
    """CSV trajectory log; floats are written with ``repr`` so logs round-trip exactly."""

    def __init__(self, fh):
        self._fh = fh
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(TRAJECTORY_COLUMNS)

    def write_rows(self, rows):
        for row in rows:
            self._w.writerow([_fmt(v) for v in row])

    def write(self, result: StepResult):
        self.write_rows(trajectory_rows(result))


def read_trajectory(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def trajectory_text(results: Sequence[StepResult]) -> str:
    buf = io.StringIO()
    w = TrajectoryWriter(buf)
    for r in results:
        w.write(r)
    return buf.getvalue()
