"""Planar trajectory loading and kinematic feature extraction.

Velocities come from finite differences of positions over the sample times,
so every output is invariant under rigid motions of the whole scene.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ExtractionError, LoadError

AGENT_TYPES = ("vehicle", "pedestrian", "cyclist")
TRAJECTORY_COLUMNS = ("scenario_id", "agent_id", "agent_type", "t", "x", "y", "v")
AGGRESSIVE_FLAGS = ("hard_accel", "hard_brake", "aggressive_lane_change", "speed_violation", "red_light")


@dataclass(frozen=True, eq=False)
class AgentTrack:
    agent_id: str
    agent_type: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.agent_type not in AGENT_TYPES:
            raise LoadError(f"agent {self.agent_id}: unknown type {self.agent_type!r}")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise LoadError(f"agent {self.agent_id}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.t.shape[0]

    def velocity(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) < 2:
            return np.zeros_like(self.x), np.zeros_like(self.y)
        return np.gradient(self.x, self.t), np.gradient(self.y, self.t)


@dataclass(frozen=True)
class TrajectoryScenario:
    scenario_id: str
    agents: tuple[AgentTrack, ...]
    ego_id: str
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def ego(self) -> AgentTrack:
        for a in self.agents:
            if a.agent_id == self.ego_id:
                return a
        raise ExtractionError(f"scenario {self.scenario_id}: ego {self.ego_id!r} has no track")

    def others(self) -> list[AgentTrack]:
        return [a for a in self.agents if a.agent_id != self.ego_id]


@dataclass(frozen=True)
class KinematicConfig:
    collision_distance: float = 0.5  # m
    near_miss_distance: float = 2.0  # m
    ttc_threshold: float = 1.5  # s
    hard_accel: float = 3.0  # m/s^2, also used for braking
    lane_change_lat_accel: float = 3.0  # m/s^2
    speed_limit: float | None = None  # m/s; scenario meta "speed_limit_mps" overrides
    # closing speeds at or below this are float noise from finite differences, not an approach
    min_closing_speed: float = 1e-6  # m/s


@dataclass(frozen=True)
class KinematicFeatures:
    mean_speed: float
    max_speed: float
    min_inter_agent_distance: float
    min_ttc: float
    collision_flag: bool
    near_miss_flag: bool
    aggressive_flags: frozenset[str]
    n_pedestrians: int = 0
    n_cyclists: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_speed": self.mean_speed,
            "max_speed": self.max_speed,
            "min_inter_agent_distance": _json_num(self.min_inter_agent_distance),
            "min_ttc": _json_num(self.min_ttc),
            "collision_flag": self.collision_flag,
            "near_miss_flag": self.near_miss_flag,
            "aggressive_flags": sorted(self.aggressive_flags),
            "n_pedestrians": self.n_pedestrians,
            "n_cyclists": self.n_cyclists,
        }


def _json_num(v: float) -> float | str:
    return "inf" if math.isinf(v) else v


def _common_times(ta: np.ndarray, tb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ka = np.round(ta * 1e6).astype(np.int64)
    kb = np.round(tb * 1e6).astype(np.int64)
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return ia, ib


def extract_kinematics(scenario: TrajectoryScenario, cfg: KinematicConfig = KinematicConfig()) -> KinematicFeatures:
    ego = scenario.ego
    if len(ego) == 0:
        raise ExtractionError(f"scenario {scenario.scenario_id}: empty ego track")
    if len(ego) < 2:
        raise ExtractionError(f"scenario {scenario.scenario_id}: ego track needs >= 2 timesteps")

    speed = ego.v
    evx, evy = ego.velocity()
    flags: set[str] = set()
    accel = np.gradient(speed, ego.t)
    if np.any(accel > cfg.hard_accel):
        flags.add("hard_accel")
    if np.any(accel < -cfg.hard_accel):
        flags.add("hard_brake")
    ax, ay = np.gradient(evx, ego.t), np.gradient(evy, ego.t)
    vmag = np.hypot(evx, evy)
    moving = vmag > 0.5
    if moving.any():
        lat = np.abs(evx[moving] * ay[moving] - evy[moving] * ax[moving]) / vmag[moving]
        if np.any(lat > cfg.lane_change_lat_accel):
            flags.add("aggressive_lane_change")
    limit = scenario.meta.get("speed_limit_mps", cfg.speed_limit)
    if limit is not None and float(np.max(speed)) > float(limit):
        flags.add("speed_violation")
    # red_light needs signal state, which the trajectory format does not carry

    min_dist = math.inf
    min_ttc = math.inf
    for other in scenario.others():
        ie, io = _common_times(ego.t, other.t)
        if ie.size == 0:
            continue
        ovx, ovy = other.velocity()
        dx = other.x[io] - ego.x[ie]
        dy = other.y[io] - ego.y[ie]
        dvx = ovx[io] - evx[ie]
        dvy = ovy[io] - evy[ie]
        dist = np.hypot(dx, dy)
        min_dist = min(min_dist, float(dist.min()))
        pos = dist > 0
        closing = np.zeros_like(dist)
        closing[pos] = -(dx[pos] * dvx[pos] + dy[pos] * dvy[pos]) / dist[pos]
        ok = pos & (closing > cfg.min_closing_speed)
        if ok.any():
            min_ttc = min(min_ttc, float((dist[ok] / closing[ok]).min()))

    collision = min_dist < cfg.collision_distance
    near_miss = (not collision) and (min_dist < cfg.near_miss_distance or min_ttc < cfg.ttc_threshold)
    others = scenario.others()
    return KinematicFeatures(
        mean_speed=float(np.mean(speed)),
        max_speed=float(np.max(speed)),
        min_inter_agent_distance=min_dist,
        min_ttc=min_ttc,
        collision_flag=bool(collision),
        near_miss_flag=bool(near_miss),
        aggressive_flags=frozenset(flags),
        n_pedestrians=sum(a.agent_type == "pedestrian" for a in others),
        n_cyclists=sum(a.agent_type == "cyclist" for a in others),
    )


def load_trajectories(path: str | Path, meta_path: str | Path | None = None) -> list[TrajectoryScenario]:
    """Read long-format ``scenario_id,agent_id,agent_type,t,x,y,v`` rows.

    The ego is the agent named ``ego``, else the scenario's first agent, unless
    the optional metadata CSV (keyed by ``scenario_id``) names an ``ego_id``.
    """
    rows: dict[str, dict[str, list]] = defaultdict(dict)
    types: dict[tuple[str, str], str] = {}
    order: list[str] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TRAJECTORY_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise LoadError(f"{path}: missing trajectory columns {missing}")
        for line_no, r in enumerate(reader, start=2):
            sid, aid = r["scenario_id"], r["agent_id"]
            if sid not in rows:
                order.append(sid)
            track = rows[sid].setdefault(aid, [])
            types[(sid, aid)] = r["agent_type"].strip()
            try:
                track.append((float(r["t"]), float(r["x"]), float(r["y"]), float(r["v"])))
            except ValueError as exc:
                raise LoadError(f"{path}:{line_no}: {exc}") from exc

    meta = load_scenario_meta(meta_path) if meta_path else {}
    out = []
    for sid in order:
        agents = []
        for aid, pts in rows[sid].items():
            arr = np.array(sorted(pts), dtype=np.float64)
            agents.append(AgentTrack(aid, types[(sid, aid)], arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]))
        m = meta.get(sid, {})
        ego_id = m.get("ego_id") or ("ego" if "ego" in rows[sid] else agents[0].agent_id)
        out.append(TrajectoryScenario(sid, tuple(agents), str(ego_id), m))
    return out


def load_scenario_meta(path: str | Path) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            entry: dict[str, Any] = {}
            for k, v in r.items():
                if k == "scenario_id" or v is None or v == "":
                    continue
                try:
                    entry[k] = float(v)
                except ValueError:
                    entry[k] = v
            out[r["scenario_id"]] = entry
    return out


def write_trajectories(scenarios: list[TrajectoryScenario], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for sc in scenarios:
            for a in sc.agents:
                for t, x, y, v in zip(a.t, a.x, a.y, a.v):
                    w.writerow([sc.scenario_id, a.agent_id, a.agent_type, repr(float(t)), repr(float(x)), repr(float(y)), repr(float(v))])
