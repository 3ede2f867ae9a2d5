"""Seeded synthetic data generators.

These stand in for the national crash sample and naturalistic driving logs
at desk scale: planted-signal tabular data with a known Bayes rule, crash
records sampled at configurable contributing-factor rates, scripted
trajectory episodes, and planted-rate exposure data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .ingestion.kinematics import AgentTrack, TrajectoryScenario
from .ingestion.records import CrashRecord
from .types import FeatureSchema, FeatureSpec, LabeledDataset

# ---------------------------------------------------------------------------
# planted 2-feature signal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantedSignal:
    """``y = 1`` iff ``f0 + f1 > 1``; with probability ``noise`` the label is a fair coin."""

    n_rows: int = 20_000
    n_noise: int = 8
    noise: float = 0.1
    informative_groups: tuple[str, str] = ("Environmental", "Environmental")
    noise_groups: tuple[str, ...] = ("Temporal", "Metadata")

    def conditional_crash(self, X: np.ndarray) -> np.ndarray:
        """Generator's P(y=1 | x): the oracle the forest is measured against."""
        above = (X[:, 0] + X[:, 1]) > 1.0
        return np.where(above, 1.0 - self.noise / 2.0, self.noise / 2.0)

    def bayes_auc(self) -> float:
        # two score levels; positives sit high w.p. 1 - noise/2, negatives low likewise
        hi = 1.0 - self.noise / 2.0
        return hi * hi + 0.5 * 2.0 * hi * (1.0 - hi)

    def schema(self) -> FeatureSchema:
        feats = [FeatureSpec("f0", self.informative_groups[0]), FeatureSpec("f1", self.informative_groups[1])]
        for i in range(self.n_noise):
            feats.append(FeatureSpec(f"noise{i}", self.noise_groups[i % len(self.noise_groups)]))
        tag = "-".join(self.informative_groups)
        return FeatureSchema(f"planted_{tag}_{2 + self.n_noise}", tuple(feats))


def planted_signal_dataset(spec: PlantedSignal = PlantedSignal(), seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    X = rng.random((spec.n_rows, 2 + spec.n_noise))
    y = ((X[:, 0] + X[:, 1]) > 1.0).astype(np.int64)
    coin = rng.random(spec.n_rows) < spec.noise
    y[coin] = rng.integers(0, 2, int(coin.sum()))
    return LabeledDataset(X, y, spec.schema())


def single_feature_dataset(n_rows: int = 4000, n_noise: int = 9, seed: int = 0) -> LabeledDataset:
    """One informative feature (``y = 1`` iff ``f0 > 0.5``, 5% coin noise) plus uniform noise columns."""
    rng = np.random.default_rng(seed)
    X = rng.random((n_rows, 1 + n_noise))
    y = (X[:, 0] > 0.5).astype(np.int64)
    coin = rng.random(n_rows) < 0.05
    y[coin] = rng.integers(0, 2, int(coin.sum()))
    feats = (FeatureSpec("f0", "Environmental"),) + tuple(FeatureSpec(f"noise{i}", "Metadata") for i in range(n_noise))
    return LabeledDataset(X, y, FeatureSchema(f"single_{1 + n_noise}", feats))


# ---------------------------------------------------------------------------
# crash records at configurable contributing-factor rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrashFactorRates:
    """Marginal share of crashes showing each contributing factor."""

    rush_hour: float = 0.353
    poor_lighting: float = 0.292
    weekend: float = 0.251
    adverse_weather: float = 0.233
    night: float = 0.214
    vru: float = 0.087
    adverse_surface: float = 0.20
    # not part of the published factor list; sets how often speed and behaviour flags appear
    speeding: float = 0.30
    alcohol: float = 0.08
    aggressive_maneuver: float = 0.15

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"rate {name}={v} outside [0, 1]")
        if self.rush_hour + self.night > 1.0:
            raise ConfigError("rush-hour and night shares cannot exceed 1 together")


NIGHT_HOURS = (22, 23, 0, 1, 2, 3, 4)
RUSH_HOURS = (7, 8, 16, 17, 18)
OTHER_HOURS = (5, 6, 9, 10, 11, 12, 13, 14, 15, 19, 20, 21)


def _choice(rng, values, n, p=None):
    return np.asarray(values, dtype=np.float64)[rng.choice(len(values), size=n, p=p)]


def synthetic_crash_records(n: int, rates: CrashFactorRates = CrashFactorRates(), seed: int = 0, prefix: str = "C") -> list[CrashRecord]:
    """CRSS-style crash records with every raw field of the default schema."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    night = u < rates.night
    rush = (u >= rates.night) & (u < rates.night + rates.rush_hour)
    hour = _choice(rng, OTHER_HOURS, n)
    hour[night] = _choice(rng, NIGHT_HOURS, int(night.sum()))
    hour[rush] = _choice(rng, RUSH_HOURS, int(rush.sum()))

    # The four environmental dimensions (night, lighting, weather, surface) are drawn
    # independently so that every combination the scenario grid asks about has
    # training support; only their marginals are matched.
    poor = rng.random(n) < rates.poor_lighting
    lgt = np.ones(n)
    lgt[poor] = _choice(rng, (2, 3, 4, 5, 6), int(poor.sum()), p=(0.40, 0.30, 0.10, 0.15, 0.05))

    adverse_wx = rng.random(n) < rates.adverse_weather
    weather = np.where(rng.random(n) < 0.1, 10.0, 1.0)  # some cloudy, not adverse
    weather[adverse_wx] = _choice(rng, (2, 12, 4, 3, 11, 5, 6, 7, 8), int(adverse_wx.sum()),
                                  p=(0.55, 0.05, 0.15, 0.03, 0.02, 0.1, 0.04, 0.03, 0.03))

    bad_road = rng.random(n) < rates.adverse_surface
    surf = np.ones(n)
    surf[bad_road] = _choice(rng, (2, 3, 4, 10, 11), int(bad_road.sum()), p=(0.6, 0.12, 0.18, 0.05, 0.05))

    weekend = rng.random(n) < rates.weekend
    day_week = _choice(rng, (2, 3, 4, 5, 6), n)
    day_week[weekend] = _choice(rng, (1, 7), int(weekend.sum()))

    vru = rng.random(n) < rates.vru
    ped = rng.random(n) < 0.7
    ped_count = np.where(vru & ped, 1.0, 0.0) + np.where(vru & ped & (rng.random(n) < 0.1), 1.0, 0.0)
    cyc_count = np.where(vru & ~ped, 1.0, 0.0)
    injury = np.where(vru, _choice(rng, (0, 1, 2, 3, 4), n, p=(0.15, 0.3, 0.3, 0.15, 0.1)), 0.0)

    limit = _choice(rng, (25, 35, 45, 55, 65), n, p=(0.2, 0.3, 0.25, 0.15, 0.1))
    speeding = rng.random(n) < rates.speeding
    over = np.where(speeding, _choice(rng, (5, 7, 9, 12, 15, 18, 22, 27), n), -_choice(rng, (0, 2, 5, 8), n))
    trav = np.maximum(limit + over, 0.0)

    alcohol = np.where(rng.random(n) < rates.alcohol, 1.0, 2.0)
    aggressive = rng.random(n) < rates.aggressive_maneuver
    p_crash1 = np.where(aggressive, _choice(rng, (3, 14, 15, 16), n), _choice(rng, (1, 2, 6, 10, 11), n))

    mod_year = _choice(rng, tuple(range(2000, 2023)), n)
    year = _choice(rng, tuple(range(2016, 2024)), n)
    mod_year = np.minimum(mod_year, year)

    cols = {
        "HOUR": hour,
        "MINUTE": rng.integers(0, 60, n).astype(float),
        "MONTH": rng.integers(1, 13, n).astype(float),
        "DAY_WEEK": day_week,
        "YEAR": year,
        "WEATHER": weather,
        "LGT_COND": lgt,
        "TYP_INT": _choice(rng, (1, 2, 3, 4, 10), n, p=(0.5, 0.25, 0.15, 0.05, 0.05)),
        "REL_ROAD": _choice(rng, (1, 2, 4, 7), n, p=(0.8, 0.08, 0.08, 0.04)),
        "WRK_ZONE": np.where(rng.random(n) < 0.03, 1.0, 0.0),
        "INT_HWY": np.where(rng.random(n) < 0.1, 1.0, 0.0),
        "RELJCT1": np.where(rng.random(n) < 0.05, 1.0, 0.0),
        "RELJCT2": _choice(rng, (1, 2, 3, 8), n, p=(0.5, 0.3, 0.1, 0.1)),
        "VSURCOND": surf,
        "pedestrian_count": ped_count,
        "cyclist_count": cyc_count,
        "max_vru_injury": injury,
        "HARM_EV": _choice(rng, (8, 9, 12, 14), n, p=(0.4, 0.2, 0.3, 0.1)),
        "MAN_COLL": _choice(rng, (0, 1, 2, 6, 7), n),
        "ALCOHOL": alcohol,
        "MAX_SEV": _choice(rng, (0, 1, 2, 3, 4), n, p=(0.3, 0.25, 0.25, 0.15, 0.05)),
        "VE_TOTAL": _choice(rng, (1, 2, 3), n, p=(0.5, 0.4, 0.1)),
        "PEDS": ped_count,
        "VE_FORMS": _choice(rng, (1, 2, 3), n, p=(0.5, 0.4, 0.1)),
        "PVH_INVL": _choice(rng, (0, 1), n, p=(0.9, 0.1)),
        "PERMVIT": _choice(rng, (1, 2, 3, 4), n),
        "PERNOTMVIT": ped_count + cyc_count,
        "NUM_INJ": _choice(rng, (0, 1, 2, 3), n, p=(0.4, 0.35, 0.2, 0.05)),
        "BODY_TYP": _choice(rng, (4, 14, 34, 66), n),
        "MOD_YEAR": mod_year,
        "TRAV_SP": trav,
        "VSPD_LIM": limit,
        "DR_DRINK": np.where(alcohol == 1, 1.0, 0.0),
        "DRUGS": np.where(rng.random(n) < 0.04, 1.0, 0.0),
        "HIT_RUN": np.where(rng.random(n) < 0.06, 1.0, 0.0),
        "ROLLOVER": np.where(rng.random(n) < 0.03, 1.0, 0.0),
        "DEFORMED": _choice(rng, (0, 2, 4, 6), n),
        "P_CRASH1": p_crash1,
        "STRATUM": _choice(rng, tuple(range(2, 11)), n),
        "REGION": _choice(rng, (1, 2, 3, 4), n, p=(0.17, 0.21, 0.38, 0.24)),
        "URBANICITY": _choice(rng, (1, 2), n, p=(0.75, 0.25)),
        "PJ": _choice(rng, tuple(range(1, 200)), n),
        "PSU_VAR": _choice(rng, tuple(range(1, 60)), n),
        "PSU": _choice(rng, tuple(range(1, 60)), n),
        "PSUSTRAT": _choice(rng, tuple(range(1, 25)), n),
        "WEIGHT": np.round(rng.gamma(2.0, 50.0, n), 3),
    }
    names = list(cols)
    mat = np.column_stack([cols[c] for c in names])
    return [CrashRecord(f"{prefix}{i:07d}", dict(zip(names, map(float, mat[i])))) for i in range(n)]


CRASH_COLUMNS = (
    "HOUR", "MINUTE", "MONTH", "DAY_WEEK", "YEAR", "WEATHER", "LGT_COND", "TYP_INT", "REL_ROAD", "WRK_ZONE",
    "INT_HWY", "RELJCT1", "RELJCT2", "VSURCOND", "pedestrian_count", "cyclist_count", "max_vru_injury",
    "HARM_EV", "MAN_COLL", "ALCOHOL", "MAX_SEV", "VE_TOTAL", "PEDS", "VE_FORMS", "PVH_INVL", "PERMVIT",
    "PERNOTMVIT", "NUM_INJ", "BODY_TYP", "MOD_YEAR", "TRAV_SP", "VSPD_LIM", "DR_DRINK", "DRUGS", "HIT_RUN",
    "ROLLOVER", "DEFORMED", "P_CRASH1", "STRATUM", "REGION", "URBANICITY", "PJ", "PSU_VAR", "PSU", "PSUSTRAT",
    "WEIGHT",
)  # fmt: skip


# ---------------------------------------------------------------------------
# planted-rate exposure data
# ---------------------------------------------------------------------------


def planted_exposure(
    n: int = 20_000,
    factor_share: float = 0.2,
    factor_rate: float = 0.4,
    marginal_rate: float = 0.2,
    seed: int = 0,
    feature: str = "IS_NIGHT",
) -> LabeledDataset:
    """Rows carrying one binary factor with P(crash | factor) = ``factor_rate``.

    The other rows' crash rate is set so the overall rate is ``marginal_rate``;
    the expected multiplier is ``factor_rate / marginal_rate``.
    """
    other = (marginal_rate - factor_share * factor_rate) / (1.0 - factor_share)
    if not 0.0 <= other <= 1.0:
        raise ConfigError("planted rates are inconsistent")
    rng = np.random.default_rng(seed)
    has = rng.random(n) < factor_share
    y = np.where(has, rng.random(n) < factor_rate, rng.random(n) < other).astype(np.int64)
    aux = rng.random(n)
    X = np.column_stack([has.astype(float), (aux < 0.5).astype(float)])
    schema = FeatureSchema("exposure_2", (FeatureSpec(feature, "Temporal", "binary"), FeatureSpec("AUX", "Metadata", "binary")))
    return LabeledDataset(X, y, schema)


# ---------------------------------------------------------------------------
# clustering blobs
# ---------------------------------------------------------------------------

ARCHETYPE_CENTERS = ((0.0, 0.0), (0.07, 2.19), (0.43, 1.00), (1.00, 0.00))


def planted_blobs(n_per: int = 250, sigma: float = 0.05, centers: Sequence[tuple[float, float]] = ARCHETYPE_CENTERS, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(c, sigma, size=(n_per, 2)) for c in centers])
    labels = np.repeat(np.arange(len(centers)), n_per)
    return pts, labels


# ---------------------------------------------------------------------------
# scripted trajectory episodes
# ---------------------------------------------------------------------------

SCENARIO_TYPES = ("safe", "near-miss", "collision")
DT = 0.1
N_STEPS = 91


def _track(agent_id: str, agent_type: str, t: np.ndarray, x: np.ndarray, y: np.ndarray) -> AgentTrack:
    vx = np.gradient(x, t)
    vy = np.gradient(y, t)
    return AgentTrack(agent_id, agent_type, t, x, y, np.hypot(vx, vy))


def _episode(kind: str, rng: np.random.Generator, sid: str) -> TrajectoryScenario:
    t = np.round(np.arange(N_STEPS) * DT, 6)
    v_ego = rng.uniform(8.0, 14.0)
    ego_x = v_ego * t
    ego_y = np.zeros_like(t)
    # meeting time on the sample grid, so a collision course really reaches zero gap
    meet = round(float(rng.uniform(3.0, 6.0)), 1)
    agent_type = rng.choice(["pedestrian", "cyclist", "vehicle"], p=[0.5, 0.3, 0.2])
    v_other = {"pedestrian": 1.4, "cyclist": 4.0, "vehicle": 8.0}[agent_type]
    if kind == "safe":
        # keeps pace in a far lane: no closing speed, gap of at least 8 m
        ox = ego_x + rng.uniform(-20.0, 20.0)
        oy = np.full_like(t, rng.choice([-1.0, 1.0]) * rng.uniform(8.0, 15.0))
    else:
        # crosses the ego's path at right angles; closest approach is ``gap``
        gap = 0.0 if kind == "collision" else rng.uniform(1.0, 1.8)
        lead = gap * np.hypot(v_ego, v_other) / v_other
        ox = np.full_like(t, v_ego * meet + lead)
        oy = v_other * (t - meet)
    ego = _track("ego", "vehicle", t, ego_x, ego_y)
    other = _track("a1", str(agent_type), t, ox, oy)
    return TrajectoryScenario(sid, (ego, other), "ego")


# environments per episode type; collisions are planted in riskier conditions
_ENV = {
    "safe": dict(hour=(10, 11, 12, 13, 14), lgt=((1,), (1.0,)), weather=((1, 10), (0.9, 0.1)), surf=((1,), (1.0,))),
    "near-miss": dict(hour=(17, 18, 19, 20), lgt=((1, 5), (0.5, 0.5)), weather=((1, 2), (0.6, 0.4)), surf=((1, 2), (0.6, 0.4))),
    "collision": dict(hour=(22, 23, 0, 1, 2), lgt=((2, 3), (0.6, 0.4)), weather=((2, 4), (0.7, 0.3)), surf=((2, 4), (0.7, 0.3))),
}


def trajectory_episodes(n_per_type: int = 20, seed: int = 0) -> tuple[list[TrajectoryScenario], dict[str, dict[str, float | str]]]:
    """Scripted episodes plus per-scenario environment metadata."""
    rng = np.random.default_rng(seed)
    scenarios = []
    meta: dict[str, dict[str, float | str]] = {}
    for kind in SCENARIO_TYPES:
        env = _ENV[kind]
        for i in range(n_per_type):
            sid = f"{kind}-{i:03d}"
            sc = _episode(kind, rng, sid)
            lgt_codes, lgt_p = env["lgt"]
            wx_codes, wx_p = env["weather"]
            sf_codes, sf_p = env["surf"]
            meta[sid] = {
                "ego_id": "ego",
                "scenario_type": kind,
                "HOUR": float(rng.choice(env["hour"])),
                "LGT_COND": float(rng.choice(lgt_codes, p=lgt_p)),
                "WEATHER": float(rng.choice(wx_codes, p=wx_p)),
                "VSURCOND": float(rng.choice(sf_codes, p=sf_p)),
                "VSPD_LIM": 35.0,
            }
            scenarios.append(TrajectoryScenario(sc.scenario_id, sc.agents, sc.ego_id, meta[sid]))
    return scenarios, meta


def write_scenario_meta(meta: dict[str, dict[str, float | str]], path) -> None:
    from .io import write_csv

    cols = ("ego_id", "scenario_type", "HOUR", "LGT_COND", "WEATHER", "VSURCOND", "VSPD_LIM")
    write_csv(path, ("scenario_id",) + cols, [(sid, *(m[c] for c in cols)) for sid, m in sorted(meta.items())])


# ---------------------------------------------------------------------------
# the crash fixture the scoring tests and acceptance gates train on
# ---------------------------------------------------------------------------

FIXTURE_CRASHES = 10_000


def crash_fixture(n: int = FIXTURE_CRASHES, seed: int = 0, rates: CrashFactorRates = CrashFactorRates()):
    """Synthetic crash records and their balanced crash/safe-clone dataset."""
    from .ingestion.synthesis import build_balanced_dataset

    records = synthetic_crash_records(n, rates, seed)
    data = build_balanced_dataset(records, FeatureSchema.default(), seed=seed + 1)
    return records, data
