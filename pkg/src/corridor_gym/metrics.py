"""Safety-event detection and evaluation metrics.

Events are distance-threshold violation intervals between aircraft pairs. An
interval opens at the first sample where the 3-D distance is below the
threshold and closes at the last consecutive violating sample; it also closes
when either aircraft stops being present. Re-arming happens at the same
threshold (no hysteresis band).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, UndefinedRatioError

NMAC = "NMAC"
LOWC = "LoWC"
DEFAULT_THRESHOLDS = {NMAC: 150.0, LOWC: 450.0}
HOLD_SPEED = 2.5  # m/s, about 5 kt
EVENT_COLUMNS = ("kind", "id_a", "id_b", "onset_s", "end_s", "min_dist_m")


@dataclass(frozen=True, order=True)
class SafetyEvent:
    onset_time: float
    kind: str
    id_a: str
    id_b: str
    end_time: float
    min_distance: float

    @property
    def pair(self) -> Tuple[str, str]:
        return self.id_a, self.id_b


@dataclass
class _Open:
    onset: float
    last: float
    min_d: float


class EventDetector:
    """Streaming pairwise threshold detector; feed it one time sample at a time."""

    def __init__(self, thresholds: Optional[Mapping[str, float]] = None):
        self.thresholds = dict(thresholds or DEFAULT_THRESHOLDS)
        self._open: Dict[Tuple[str, str, str], _Open] = {}
        self._closed: List[SafetyEvent] = []
        self._last_t = -math.inf

    def update(self, t: float, ids: Sequence[str], positions) -> List[Tuple[str, str, str, float]]:
        """Consume positions (n x 3) at time ``t``; return (kind, id_a, id_b, distance) for intervals opened now."""
        if t < self._last_t:
            raise InputError(f"samples out of time order ({t} after {self._last_t})")
        self._last_t = t
        violating: Dict[Tuple[str, str, str], float] = {}
        n = len(ids)
        if n > 1:
            p = np.asarray(positions, dtype=float).reshape(n, 3)
            diff = p[:, None, :] - p[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            iu, ju = np.triu_indices(n, k=1)
            d = dist[iu, ju]
            widest = max(self.thresholds.values())
            for k in np.flatnonzero(d < widest):
                a, b = ids[iu[k]], ids[ju[k]]
                if b < a:
                    a, b = b, a
                for kind, thr in self.thresholds.items():
                    if d[k] < thr:
                        violating[(kind, a, b)] = float(d[k])
        for key in [k for k in self._open if k not in violating]:
            self._close(key)
        opened = []
        for key, d in violating.items():
            cur = self._open.get(key)
            if cur is None:
                self._open[key] = _Open(t, t, d)
                opened.append((*key, d))
            else:
                cur.last = t
                cur.min_d = min(cur.min_d, d)
        return sorted(opened)

    def _close(self, key):
        o = self._open.pop(key)
        kind, a, b = key
        self._closed.append(SafetyEvent(o.onset, kind, a, b, o.last, o.min_d))

    @property
    def events(self) -> List[SafetyEvent]:
        """Closed events plus still-open intervals truncated at their last violating sample."""
        live = [SafetyEvent(o.onset, k, a, b, o.last, o.min_d) for (k, a, b), o in self._open.items()]
        return sorted(self._closed + live)

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)


def detect_events(rows: Iterable[Mapping], thresholds: Optional[Mapping[str, float]] = None) -> List[SafetyEvent]:
    """Run the detector over trajectory-log rows (dicts with time_s, ac_id, x_m, y_m, z_m)."""
    det = EventDetector(thresholds)
    for t, group in groupby(rows, key=lambda r: float(r["time_s"])):
        group = list(group)
        ids = [str(r["ac_id"]) for r in group]
        if len(set(ids)) != len(ids):
            raise InputError(f"duplicate aircraft rows at t={t}")
        pos = [(float(r["x_m"]), float(r["y_m"]), float(r["z_m"])) for r in group]
        det.update(t, ids, pos)
    return det.events


def count_kind(events: Iterable[SafetyEvent], kind: str) -> int:
    return sum(1 for e in events if e.kind == kind)


def _ratio(algo: int, unequipped: int, kind: str) -> float:
    if unequipped == 0:
        raise UndefinedRatioError(f"unequipped run has zero {kind} events; ratio undefined")
    return algo / unequipped


def risk_ratio(algo_events, unequipped_events) -> float:
    """Algorithm NMAC count over unequipped NMAC count. Accepts event lists or counts."""
    a = algo_events if isinstance(algo_events, int) else count_kind(algo_events, NMAC)
    u = unequipped_events if isinstance(unequipped_events, int) else count_kind(unequipped_events, NMAC)
    return _ratio(a, u, NMAC)


def lowc_ratio(algo_events, unequipped_events) -> float:
    a = algo_events if isinstance(algo_events, int) else count_kind(algo_events, LOWC)
    u = unequipped_events if isinstance(unequipped_events, int) else count_kind(unequipped_events, LOWC)
    return _ratio(a, u, LOWC)


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample (N-1) standard deviation; std is 0 for a single value."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("mean_std of an empty sequence")
    if v.size == 1 or np.all(v == v[0]):
        # the summed mean of identical values can be off by an ulp; keep "± 0.0" exact
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


@dataclass
class EpisodeStats:
    n_aircraft: int = 0
    nmac: int = 0
    lowc: int = 0
    decisions: int = 0
    alerts: int = 0
    holding_time_s: float = 0.0
    states: int = 0
    wall_s: float = 0.0
    mean_return: float = 0.0

    @property
    def normalized_nmac(self) -> float:
        return self.nmac / self.n_aircraft if self.n_aircraft else 0.0


@dataclass
class EvalIteration:
    algo: EpisodeStats
    unequipped: EpisodeStats


@dataclass
class EvalReport:
    n_iterations: int
    nmac_counts: List[int]
    lowc_counts: List[int]
    unequipped_nmac_counts: List[int]
    unequipped_lowc_counts: List[int]
    risk_ratio_mean: Optional[float]
    risk_ratio_std: Optional[float]
    lowc_ratio_mean: Optional[float]
    lowc_ratio_std: Optional[float]
    risk_ratio_undefined_iterations: int
    lowc_ratio_undefined_iterations: int
    alert_rate: float
    airborne_holding_time_s: float
    throughput_states_per_s: float
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def risk_ratio_defined(self) -> bool:
        return self.risk_ratio_mean is not None

    @property
    def lowc_ratio_defined(self) -> bool:
        return self.lowc_ratio_mean is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["risk_ratio_defined"] = self.risk_ratio_defined
        d["lowc_ratio_defined"] = self.lowc_ratio_defined
        return d


def _ratio_stats(algo: List[int], base: List[int]):
    vals = [a / b for a, b in zip(algo, base) if b > 0]
    undefined = sum(1 for b in base if b == 0)
    if not vals:
        return None, None, undefined
    m, s = mean_std(vals)
    return m, s, undefined


def aggregate(iterations: Sequence[EvalIteration], **extra) -> EvalReport:
    """Fold per-iteration algorithm/unequipped pairs into one report.

    Ratios are taken per iteration and then averaged. Iterations whose
    unequipped run has no events of the relevant kind are left out of the
    ratio and counted in ``*_undefined_iterations``.
    """
    nmac = [it.algo.nmac for it in iterations]
    lowc = [it.algo.lowc for it in iterations]
    u_nmac = [it.unequipped.nmac for it in iterations]
    u_lowc = [it.unequipped.lowc for it in iterations]
    rr_m, rr_s, rr_u = _ratio_stats(nmac, u_nmac)
    lr_m, lr_s, lr_u = _ratio_stats(lowc, u_lowc)
    decisions = sum(it.algo.decisions for it in iterations)
    alerts = sum(it.algo.alerts for it in iterations)
    wall = sum(it.algo.wall_s for it in iterations)
    states = sum(it.algo.states for it in iterations)
    return EvalReport(
        n_iterations=len(iterations),
        nmac_counts=nmac, lowc_counts=lowc,
        unequipped_nmac_counts=u_nmac, unequipped_lowc_counts=u_lowc,
        risk_ratio_mean=rr_m, risk_ratio_std=rr_s,
        lowc_ratio_mean=lr_m, lowc_ratio_std=lr_s,
        risk_ratio_undefined_iterations=rr_u, lowc_ratio_undefined_iterations=lr_u,
        alert_rate=alerts / decisions if decisions else 0.0,
        airborne_holding_time_s=float(sum(it.algo.holding_time_s for it in iterations)),
        throughput_states_per_s=states / wall if wall > 0 else 0.0,
        extra=dict(extra),
    )


# --------------------------------------------------------------------------
# files


def write_events(events: Iterable[SafetyEvent], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([e.kind, e.id_a, e.id_b, repr(e.onset_time), repr(e.end_time), repr(e.min_distance)])
    return path


def read_events(path) -> List[SafetyEvent]:
    with open(path, newline="") as fh:
        return [SafetyEvent(float(r["onset_s"]), r["kind"], r["id_a"], r["id_b"], float(r["end_s"]),
                            float(r["min_dist_m"])) for r in csv.DictReader(fh)]


def write_report(report, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def log_summary(rows: Sequence[Mapping], dt: Optional[float] = None,
                thresholds: Optional[Mapping[str, float]] = None,
                hold_speed: float = HOLD_SPEED) -> dict:
    """Events and operational metrics straight from trajectory-log rows."""
    rows = list(rows)
    events = detect_events(rows, thresholds)
    times = sorted({float(r["time_s"]) for r in rows})
    if dt is None:
        dt = times[1] - times[0] if len(times) > 1 else 0.0
    acted = [r for r in rows if str(r.get("action", "")) != ""]
    alerts = sum(1 for r in acted if int(r["action"]) != 1)
    holding = sum(dt for r in acted if float(r["speed_mps"]) < hold_speed)
    return {
        "events": events,
        "nmac": count_kind(events, NMAC),
        "lowc": count_kind(events, LOWC),
        "aircraft": len({r["ac_id"] for r in rows}),
        "decisions": len(acted),
        "alert_rate": alerts / len(acted) if acted else 0.0,
        "airborne_holding_time_s": holding,
    }
