"""Scenario generation and serialization.

A scenario is a vertiport network, a set of corridor routes with vertically
stacked lanes, and a schedule of flight plans. Everything is a pure function
of (parameters, seed).
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .errors import ConfigError, InputError, LaneExhaustionError, ParseError, ValidationError
from .sim import FT, KT, AircraftState, PerformanceEnvelope, Point, bearing_deg

FORMAT_NAME = "corridor-gym-scenario"
FORMAT_VERSION = "1"

CRUISE_MIN = 87.0 * KT
CRUISE_MAX = 150.0 * KT
ALT_NOISE = 100.0 * FT
EARTH_RADIUS = 6371000.0


@dataclass(frozen=True)
class Vertiport:
    id: str
    x: float
    y: float
    name: str = ""


@dataclass(frozen=True)
class Route:
    origin: str
    destination: str
    waypoints: Tuple[Point, ...]
    lane_altitudes: Tuple[float, ...]

    @property
    def id(self) -> str:
        return f"{self.origin}-{self.destination}"

    @property
    def od_pair(self) -> Tuple[str, str]:
        """Unordered pair; both directions share one lane pool."""
        return tuple(sorted((self.origin, self.destination)))

    @property
    def length(self) -> float:
        return sum(math.hypot(b[0] - a[0], b[1] - a[1])
                   for a, b in zip(self.waypoints, self.waypoints[1:]))


@dataclass(frozen=True)
class FlightPlan:
    aircraft_id: str
    route: str
    departure_time: float
    cruise_speed: float
    lane: int
    lane_altitude: float


@dataclass(frozen=True)
class BackgroundTrack:
    """Script-following traffic replayed from a recorded log. Samples are (t, x, y, z)."""

    track_id: str
    samples: Tuple[Tuple[float, float, float, float], ...]

    @property
    def start(self) -> float:
        return self.samples[0][0]

    @property
    def end(self) -> float:
        return self.samples[-1][0]


@dataclass(frozen=True)
class Scenario:
    vertiports: Tuple[Vertiport, ...]
    routes: Tuple[Route, ...]
    flights: Tuple[FlightPlan, ...]
    seed: Optional[int] = None
    duration: float = 1500.0
    envelope: PerformanceEnvelope = field(default_factory=PerformanceEnvelope)
    background: Tuple[BackgroundTrack, ...] = ()
    geo_origin: Optional[Tuple[float, float]] = None
    name: str = ""

    def route_map(self) -> Dict[str, Route]:
        return {r.id: r for r in self.routes}

    def validate(self) -> "Scenario":
        ids = [v.id for v in self.vertiports]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate vertiport id(s): {', '.join(dupes)}")
        ports = {v.id: v for v in self.vertiports}
        route_ids = set()
        for r in self.routes:
            for end in (r.origin, r.destination):
                if end not in ports:
                    raise ValidationError(f"route {r.id} references unknown vertiport id {end!r}")
            if r.id in route_ids:
                raise ValidationError(f"duplicate route {r.id}")
            route_ids.add(r.id)
            if len(r.waypoints) < 2:
                raise ValidationError(f"route {r.id} needs at least two waypoints")
            o, d = ports[r.origin], ports[r.destination]
            if (math.hypot(r.waypoints[0][0] - o.x, r.waypoints[0][1] - o.y) > 1e-6
                    or math.hypot(r.waypoints[-1][0] - d.x, r.waypoints[-1][1] - d.y) > 1e-6):
                raise ValidationError(f"route {r.id} must start at its origin and end at its destination")
            if not r.lane_altitudes:
                raise ValidationError(f"route {r.id} has no lanes")
            if any(b <= a for a, b in zip(r.lane_altitudes, r.lane_altitudes[1:])):
                raise ValidationError(f"route {r.id} lane altitudes must be strictly increasing")
        routes = self.route_map()
        seen = set()
        for f in self.flights:
            if f.aircraft_id in seen:
                raise ValidationError(f"duplicate aircraft id {f.aircraft_id!r}")
            seen.add(f.aircraft_id)
            if f.route not in routes:
                raise ValidationError(f"flight {f.aircraft_id} references unknown route {f.route!r}")
            if not 0 <= f.lane < len(routes[f.route].lane_altitudes):
                raise ValidationError(f"flight {f.aircraft_id} lane {f.lane} out of range")
            if f.departure_time < 0:
                raise ValidationError(f"flight {f.aircraft_id} departs before scenario start")
        for t in self.background:
            if t.track_id in seen:
                raise ValidationError(f"background track id {t.track_id!r} collides with an aircraft id")
            seen.add(t.track_id)
        return self


# --------------------------------------------------------------------------
# network


def project(lat: float, lon: float, origin: Tuple[float, float]) -> Point:
    """Equirectangular projection to local east/north meters about ``origin`` (lat, lon)."""
    lat0, lon0 = origin
    x = EARTH_RADIUS * math.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS * math.radians(lat - lat0)
    return x, y


def densify(a: Point, b: Point, spacing: float) -> Tuple[Point, ...]:
    n = max(1, math.ceil(math.hypot(b[0] - a[0], b[1] - a[1]) / spacing))
    pts = [(a[0] + (b[0] - a[0]) * k / n, a[1] + (b[1] - a[1]) * k / n) for k in range(n)]
    pts.append((float(b[0]), float(b[1])))
    return tuple((float(x), float(y)) for x, y in pts)


def lane_stack(n_lanes: int, base: float, spacing: float) -> Tuple[float, ...]:
    if n_lanes < 1:
        raise ConfigError("each route needs at least one lane")
    if spacing <= 0:
        raise ConfigError("lane spacing must be positive")
    return tuple(float(base + k * spacing) for k in range(n_lanes))


def _routes_for_pairs(ports: Sequence[Vertiport], pairs, lanes, waypoint_spacing) -> Tuple[Route, ...]:
    routes, seen = [], set()
    for i, j in pairs:
        for o, d in ((ports[i], ports[j]), (ports[j], ports[i])):
            if o.id == d.id or (o.id, d.id) in seen:
                continue
            seen.add((o.id, d.id))
            routes.append(Route(o.id, d.id, densify((o.x, o.y), (d.x, d.y), waypoint_spacing), lanes))
    return tuple(routes)


def generate_network(n_vertiports: int, layout: str = "ring", seed: Optional[int] = 0, *,
                     spacing: float = 5000.0, waypoint_spacing: float = 2000.0,
                     n_lanes: int = 3, lane_base: float = 300.0, lane_spacing: float = 100.0,
                     chord_skips: Sequence[int] = (5,), position_jitter: float = 0.0,
                     network_file: Optional[str] = None) -> Tuple[Tuple[Vertiport, ...], Tuple[Route, ...]]:
    """Build a connected vertiport network.

    ``ring`` places vertiports on a circle with ``spacing`` between neighbours and
    links neighbours plus every ``chord_skips`` offset. ``grid`` links 4-neighbours.
    ``file`` reads vertiports and routes from a YAML/JSON network file.
    Every route is created in both directions.
    """
    lanes = lane_stack(n_lanes, lane_base, lane_spacing)
    if layout == "file":
        if not network_file:
            raise ConfigError("layout 'file' needs network_file")
        return load_network(network_file, lanes, waypoint_spacing)
    if n_vertiports < 2:
        raise ConfigError(f"need at least 2 vertiports, got {n_vertiports}")
    rng = np.random.default_rng(seed)
    n = n_vertiports
    if layout == "ring":
        radius = spacing / (2.0 * math.sin(math.pi / n))
        xy = [(radius * math.sin(2 * math.pi * k / n), radius * math.cos(2 * math.pi * k / n)) for k in range(n)]
        pairs = [(k, (k + 1) % n) for k in range(n)]
        for s in chord_skips:
            if 1 < s < n - 1:
                pairs += [(k, (k + s) % n) for k in range(n)]
    elif layout == "grid":
        cols = math.ceil(math.sqrt(n))
        xy = [((k % cols) * spacing, (k // cols) * spacing) for k in range(n)]
        pairs = [(k, k + 1) for k in range(n - 1) if (k + 1) % cols]
        pairs += [(k, k + cols) for k in range(n - cols)]
    else:
        raise ConfigError(f"unknown layout {layout!r} (expected ring, grid or file)")
    if position_jitter > 0:
        offsets = rng.uniform(-position_jitter, position_jitter, size=(n, 2))
        xy = [(x + dx, y + dy) for (x, y), (dx, dy) in zip(xy, offsets)]
    ports = tuple(Vertiport(f"V{k:02d}", float(x), float(y), f"vertiport {k}") for k, (x, y) in enumerate(xy))
    return ports, _routes_for_pairs(ports, pairs, lanes, waypoint_spacing)


def load_network(path, lanes: Tuple[float, ...], waypoint_spacing: float = 2000.0):
    """Read a network file: ``vertiports`` (x/y or lat/lon) and ``routes`` (origin, destination, optional waypoints/lanes)."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read network file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "vertiports" not in doc:
        raise InputError(f"network file {path} has no 'vertiports' list")
    origin = tuple(doc["origin"]) if doc.get("origin") else None
    ports = []
    for k, v in enumerate(doc["vertiports"]):
        if "x" in v:
            x, y = float(v["x"]), float(v["y"])
        elif "lat" in v:
            if origin is None:
                raise InputError(f"{path}: vertiports[{k}] uses lat/lon but no 'origin' is given")
            x, y = project(float(v["lat"]), float(v["lon"]), origin)
        else:
            raise InputError(f"{path}: vertiports[{k}] needs x/y or lat/lon")
        ports.append(Vertiport(str(v["id"]), x, y, str(v.get("name", ""))))
    by_id = {p.id: p for p in ports}
    routes = []
    for k, r in enumerate(doc.get("routes", [])):
        try:
            o, d = str(r["origin"]), str(r["destination"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"{path}: routes[{k}] needs origin and destination") from exc
        for end in (o, d):
            if end not in by_id:
                raise ValidationError(f"{path}: routes[{k}] references unknown vertiport id {end!r}")
        r_lanes = tuple(float(a) for a in r["lane_altitudes"]) if r.get("lane_altitudes") else lanes
        if r.get("waypoints"):
            inner = [tuple(map(float, p)) for p in r["waypoints"]]
            wpts = ((by_id[o].x, by_id[o].y), *inner, (by_id[d].x, by_id[d].y))
        else:
            wpts = densify((by_id[o].x, by_id[o].y), (by_id[d].x, by_id[d].y), waypoint_spacing)
        routes.append(Route(o, d, tuple(wpts), r_lanes))
        if r.get("bidirectional", True):
            routes.append(Route(d, o, tuple(reversed(wpts)), r_lanes))
    return tuple(ports), tuple(routes)


# --------------------------------------------------------------------------
# flights


def _read_schedule(path) -> List[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read schedule file {path}: {exc}") from exc
    out = []
    for line, row in enumerate(rows, start=2):
        try:
            out.append({
                "departure_time": float(row["departure_s"]),
                "origin": row["origin"].strip(),
                "destination": row["destination"].strip(),
                "cruise_speed": float(row["cruise_speed_mps"]) if row.get("cruise_speed_mps") else None,
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{line}: bad schedule row ({exc})") from exc
    return sorted(out, key=lambda r: r["departure_time"])


def generate_flights(vertiports: Sequence[Vertiport], routes: Sequence[Route], n_aircraft: int,
                     duration: float, demand: str = "poisson", seed: Optional[int] = 0,
                     schedule_file: Optional[str] = None) -> Tuple[FlightPlan, ...]:
    """Sample flight plans.

    ``poisson`` demand draws a homogeneous Poisson process conditioned on
    ``n_aircraft`` departures in [0, duration), i.e. sorted uniform times.
    Origins rotate through the vertiports so the fleet is spread evenly and
    destinations are drawn uniformly from the origin's outbound routes.
    ``schedule`` demand reads departure_s, origin, destination[, cruise_speed_mps]
    rows from ``schedule_file``.

    Each flight gets the lowest lane of its OD pair not occupied at its
    departure time by another flight of that pair (either direction), where
    occupancy spans departure to departure + route length / cruise speed.
    """
    if n_aircraft < 1 and demand == "poisson":
        raise ConfigError("n_aircraft must be at least 1")
    if duration <= 0:
        raise ConfigError("duration must be positive")
    rng = np.random.default_rng(seed)
    outbound: Dict[str, List[Route]] = {}
    for r in routes:
        outbound.setdefault(r.origin, []).append(r)
    by_od = {(r.origin, r.destination): r for r in routes}
    origins = [v.id for v in vertiports if v.id in outbound]
    if not origins:
        raise ConfigError("network has no routes")

    if demand == "poisson":
        times = np.sort(rng.uniform(0.0, duration, size=n_aircraft))
        requests = [{"departure_time": float(t), "origin": origins[k % len(origins)],
                     "destination": None, "cruise_speed": None} for k, t in enumerate(times)]
    elif demand == "schedule":
        if not schedule_file:
            raise ConfigError("schedule demand needs schedule_file")
        requests = _read_schedule(schedule_file)
    else:
        raise ConfigError(f"unknown demand model {demand!r} (expected poisson or schedule)")

    occupancy: Dict[Tuple[str, str], List[Tuple[int, float, float]]] = {}
    flights = []
    for k, req in enumerate(requests):
        if req["destination"] is None:
            choices = outbound[req["origin"]]
            route = choices[int(rng.integers(len(choices)))]
        else:
            route = by_od.get((req["origin"], req["destination"]))
            if route is None:
                raise ValidationError(f"no route from {req['origin']} to {req['destination']}")
        speed = req["cruise_speed"] if req["cruise_speed"] is not None else float(rng.uniform(CRUISE_MIN, CRUISE_MAX))
        noise = float(rng.uniform(-ALT_NOISE, ALT_NOISE))
        t0 = req["departure_time"]
        held = occupancy.setdefault(route.od_pair, [])
        busy = {lane for lane, start, end in held if start <= t0 < end}
        free = [i for i in range(len(route.lane_altitudes)) if i not in busy]
        if not free:
            raise LaneExhaustionError(
                f"all {len(route.lane_altitudes)} lanes between {route.od_pair[0]} and {route.od_pair[1]} "
                f"are in use at t={t0:.1f}s (flight {k})")
        lane = free[0]
        held.append((lane, t0, t0 + route.length / speed))
        flights.append(FlightPlan(f"AC{k:04d}", route.id, t0, speed, lane,
                                  route.lane_altitudes[lane] + noise))
    return tuple(flights)


@dataclass
class ScenarioParams:
    """Knobs for :func:`generate_scenario`."""

    preset: str = "generated"  # generated | overtake | file
    scenario_file: Optional[str] = None
    n_vertiports: int = 29
    layout: str = "ring"
    network_file: Optional[str] = None
    spacing_m: float = 5000.0
    waypoint_spacing_m: float = 2000.0
    chord_skips: List[int] = field(default_factory=lambda: [5])
    position_jitter_m: float = 0.0
    n_lanes: int = 3
    lane_base_m: float = 300.0
    lane_spacing_m: float = 100.0
    n_aircraft: int = 100
    duration_s: float = 1500.0
    demand: str = "poisson"
    schedule_file: Optional[str] = None
    traffic_log: Optional[str] = None
    v_min: float = 0.0
    v_max: float = 150.0 * KT
    accel_mag: float = 1.5

    def validate(self) -> "ScenarioParams":
        if self.preset not in ("generated", "overtake", "file"):
            raise ConfigError(f"scenario.preset must be generated, overtake or file, got {self.preset!r}")
        if self.preset == "file" and not self.scenario_file:
            raise ConfigError("scenario.preset=file needs scenario.scenario_file")
        if self.n_vertiports < 2:
            raise ConfigError("scenario.n_vertiports must be at least 2")
        if self.n_aircraft < 1:
            raise ConfigError("scenario.n_aircraft must be at least 1")
        if self.duration_s <= 0:
            raise ConfigError("scenario.duration_s must be positive")
        PerformanceEnvelope(self.v_min, self.v_max, self.accel_mag)
        return self


def generate_scenario(params: ScenarioParams, seed: Optional[int] = 0) -> Scenario:
    params.validate()
    envelope = PerformanceEnvelope(params.v_min, params.v_max, params.accel_mag)
    if params.preset == "file":
        scenario = load_scenario(params.scenario_file)
    elif params.preset == "overtake":
        scenario = overtake_scenario(seed=seed, envelope=envelope)
    else:
        ports, routes = generate_network(
            params.n_vertiports, params.layout, seed, spacing=params.spacing_m,
            waypoint_spacing=params.waypoint_spacing_m, n_lanes=params.n_lanes,
            lane_base=params.lane_base_m, lane_spacing=params.lane_spacing_m,
            chord_skips=params.chord_skips, position_jitter=params.position_jitter_m,
            network_file=params.network_file)
        flights = generate_flights(ports, routes, params.n_aircraft, params.duration_s,
                                   params.demand, seed, params.schedule_file)
        scenario = Scenario(ports, routes, flights, seed=seed, duration=params.duration_s,
                            envelope=envelope, name=f"{params.layout}-{params.n_vertiports}")
    if params.traffic_log:
        scenario = overlay_traffic(scenario, params.traffic_log)
    return scenario.validate()


def overtake_scenario(seed: Optional[int] = 0, *, route_length: float = 15000.0,
                      leader_speed: float = 45.0, follower_speed: float = 77.0,
                      follower_delay: float = 90.0, lane_altitude: float = 300.0,
                      envelope: Optional[PerformanceEnvelope] = None) -> Scenario:
    """Two aircraft on one lane of one straight route: a slow leader and a faster follower that catches it."""
    rng = np.random.default_rng(seed)
    a, b = Vertiport("A", 0.0, 0.0, "origin"), Vertiport("B", 0.0, route_length, "destination")
    route = Route("A", "B", densify((0.0, 0.0), (0.0, route_length), 2000.0), (lane_altitude,))
    noise = rng.uniform(-ALT_NOISE, ALT_NOISE, size=2)
    flights = (
        FlightPlan("AC0000", route.id, 0.0, leader_speed, 0, lane_altitude + float(noise[0])),
        FlightPlan("AC0001", route.id, follower_delay, follower_speed, 0, lane_altitude + float(noise[1])),
    )
    return Scenario((a, b), (route,), flights, seed=seed, duration=follower_delay + 1.0,
                    envelope=envelope or PerformanceEnvelope(), name="overtake").validate()


# --------------------------------------------------------------------------
# file format


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "name": s.name,
        "seed": s.seed,
        "duration_s": s.duration,
        "geo_origin": list(s.geo_origin) if s.geo_origin else None,
        "envelope": {"v_min": s.envelope.v_min, "v_max": s.envelope.v_max, "accel_mag": s.envelope.accel_mag},
        "vertiports": [{"id": v.id, "name": v.name, "x": v.x, "y": v.y} for v in s.vertiports],
        "routes": [{"origin": r.origin, "destination": r.destination,
                    "waypoints": [list(p) for p in r.waypoints],
                    "lane_altitudes": list(r.lane_altitudes)} for r in s.routes],
        "flights": [{"aircraft_id": f.aircraft_id, "route": f.route, "departure_s": f.departure_time,
                     "cruise_speed_mps": f.cruise_speed, "lane": f.lane,
                     "lane_altitude_m": f.lane_altitude} for f in s.flights],
        "background": [{"track_id": t.track_id, "samples": [list(p) for p in t.samples]}
                       for t in s.background],
    }


class _Fields:
    """Field accessor that reports missing/ill-typed fields with their path."""

    def __init__(self, obj, where: str):
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected an object")
        self.obj, self.where = obj, where

    def get(self, key, cast, default=...):
        if key not in self.obj:
            if default is ...:
                raise ParseError(f"{self.where}: missing field {key!r}")
            return default
        try:
            return cast(self.obj[key])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{self.where}.{key}: {exc}") from exc


def _points(value) -> Tuple[Point, ...]:
    return tuple((float(p[0]), float(p[1])) for p in value)


def scenario_from_dict(doc: dict) -> Scenario:
    top = _Fields(doc, "scenario")
    if top.get("format", str) != FORMAT_NAME:
        raise ParseError(f"scenario.format: expected {FORMAT_NAME!r}")
    version = top.get("version", str)
    if version != FORMAT_VERSION:
        raise ParseError(f"scenario.version: unsupported version {version!r}")
    env = _Fields(top.get("envelope", dict, {}), "scenario.envelope")
    ports = []
    for k, v in enumerate(top.get("vertiports", list)):
        f = _Fields(v, f"vertiports[{k}]")
        ports.append(Vertiport(f.get("id", str), f.get("x", float), f.get("y", float), f.get("name", str, "")))
    routes = []
    for k, r in enumerate(top.get("routes", list)):
        f = _Fields(r, f"routes[{k}]")
        routes.append(Route(f.get("origin", str), f.get("destination", str), f.get("waypoints", _points),
                            f.get("lane_altitudes", lambda a: tuple(float(x) for x in a))))
    flights = []
    for k, fl in enumerate(top.get("flights", list)):
        f = _Fields(fl, f"flights[{k}]")
        flights.append(FlightPlan(f.get("aircraft_id", str), f.get("route", str), f.get("departure_s", float),
                                  f.get("cruise_speed_mps", float), f.get("lane", int),
                                  f.get("lane_altitude_m", float)))
    tracks = []
    for k, t in enumerate(top.get("background", list, [])):
        f = _Fields(t, f"background[{k}]")
        tracks.append(BackgroundTrack(f.get("track_id", str),
                                      f.get("samples", lambda s: tuple(tuple(float(x) for x in p) for p in s))))
    seed = doc.get("seed")
    geo = doc.get("geo_origin")
    return Scenario(
        tuple(ports), tuple(routes), tuple(flights),
        seed=None if seed is None else int(seed),
        duration=top.get("duration_s", float),
        envelope=PerformanceEnvelope(env.get("v_min", float, 0.0), env.get("v_max", float, 150.0 * KT),
                                     env.get("accel_mag", float, 1.5)),
        background=tuple(tracks),
        geo_origin=tuple(float(a) for a in geo) if geo else None,
        name=top.get("name", str, ""),
    ).validate()


def save_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario_to_dict(s), indent=1) + "\n")
    return path


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


# --------------------------------------------------------------------------
# background traffic


def read_traffic_log(path, geo_origin: Optional[Tuple[float, float]] = None) -> Tuple[BackgroundTrack, ...]:
    """Parse a recorded position log (time_s, track_id, x_m, y_m, z_m or lat, lon, alt_m)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            columns = set(reader.fieldnames or ())
    except OSError as exc:
        raise InputError(f"cannot read traffic log {path}: {exc}") from exc
    if not rows:
        return ()
    geographic = {"lat", "lon", "alt_m"} <= columns
    if not geographic and not {"x_m", "y_m", "z_m"} <= columns:
        raise InputError(f"{path}: need columns x_m,y_m,z_m or lat,lon,alt_m")
    if geographic and geo_origin is None:
        raise InputError(f"{path}: lat/lon rows need a scenario geo_origin for projection")
    tracks: Dict[str, List[Tuple[float, float, float, float]]] = {}
    last_t = -math.inf
    for line, row in enumerate(rows, start=2):
        try:
            t = float(row["time_s"])
            tid = row["track_id"].strip()
            if geographic:
                x, y = project(float(row["lat"]), float(row["lon"]), geo_origin)
                z = float(row["alt_m"])
            else:
                x, y, z = float(row["x_m"]), float(row["y_m"]), float(row["z_m"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise InputError(f"{path}:{line}: malformed row ({exc})") from exc
        if t < last_t:
            raise InputError(f"{path}:{line}: rows not sorted by time ({t} after {last_t})")
        last_t = t
        samples = tracks.setdefault(tid, [])
        if samples and samples[-1][0] == t:
            raise InputError(f"{path}:{line}: duplicate time {t} for track {tid}")
        samples.append((t, x, y, z))
    return tuple(BackgroundTrack(tid, tuple(s)) for tid, s in tracks.items())


def overlay_traffic(scenario: Scenario, traffic_log) -> Scenario:
    tracks = read_traffic_log(traffic_log, scenario.geo_origin)
    if not tracks:
        return scenario
    return replace(scenario, background=scenario.background + tracks).validate()


def background_state(track: BackgroundTrack, t: float) -> Optional[AircraftState]:
    """Interpolated state of a background track at time ``t``; None outside its span."""
    s = track.samples
    if t < s[0][0] or t > s[-1][0]:
        return None
    times = [p[0] for p in s]
    k = max(0, min(bisect.bisect_right(times, t) - 1, len(s) - 2))
    if len(s) == 1:
        _, x, y, z = s[0]
        return AircraftState(track.track_id, x, y, z, 0.0, 0.0, 0.0, ((x, y),), 0, 0.0)
    (t0, x0, y0, z0), (t1, x1, y1, z1) = s[k], s[k + 1]
    w = (t - t0) / (t1 - t0)
    x, y, z = x0 + w * (x1 - x0), y0 + w * (y1 - y0), z0 + w * (z1 - z0)
    seg = math.hypot(x1 - x0, y1 - y0)
    speed = seg / (t1 - t0)
    accel = 0.0
    if k > 0:
        tp, xp, yp, _ = s[k - 1]
        accel = (speed - math.hypot(x0 - xp, y0 - yp) / (t0 - tp)) / (t1 - t0)
    future = tuple((p[1], p[2]) for p in s[k + 1:])
    rest = (1.0 - w) * seg + sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(future, future[1:]))
    return AircraftState(track.track_id, x, y, z, bearing_deg(x1 - x0, y1 - y0), speed, accel,
                         ((x, y),) + future, 1, rest)
