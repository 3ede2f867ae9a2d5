"""Driver archetypes: k-means on composite aggression and risk-taking scores."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import AnalysisError, ConfigError
from ..ingestion.codes import CodeMap
from ..ingestion.features import DEFAULT_FEATURE_CONFIG, FeatureConfig, is_night_hour
from ..ingestion.records import CrashRecord


@dataclass(frozen=True)
class CompositeWeights:
    aggression: Mapping[str, float]
    risk_taking: Mapping[str, float]
    archetypes: tuple[tuple[str, tuple[float, float]], ...]

    AGGRESSION_KEYS = ("speeding", "alcohol", "aggressive_maneuver")
    RISK_KEYS = ("night", "adverse_weather", "poor_lighting")

    def __post_init__(self):
        if set(self.aggression) != set(self.AGGRESSION_KEYS) or set(self.risk_taking) != set(self.RISK_KEYS):
            raise ConfigError("composite weights must name exactly the documented indicators")
        if any(w < 0 for w in (*self.aggression.values(), *self.risk_taking.values())):
            raise ConfigError("composite weights must be nonnegative")
        if sum(self.aggression.values()) <= 0:
            raise ConfigError("aggression weights must not all be zero")
        if not self.archetypes:
            raise ConfigError("at least one archetype is required")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CompositeWeights":
        try:
            arch = tuple((str(a["label"]), (float(a["center"][0]), float(a["center"][1]))) for a in doc["archetypes"])
            return cls(
                {k: float(v) for k, v in doc["aggression"].items()},
                {k: float(v) for k, v in doc["risk_taking"].items()},
                arch,
            )
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ConfigError(f"malformed composite weights: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "CompositeWeights":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read composite weights {path}: {exc}") from exc

    @classmethod
    def default(cls) -> "CompositeWeights":
        text = resources.files("crashscore").joinpath("config").joinpath("composites_default.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, Any]:
        return {
            "aggression": dict(sorted(self.aggression.items())),
            "risk_taking": dict(sorted(self.risk_taking.items())),
            "archetypes": [{"label": lbl, "center": list(c)} for lbl, c in self.archetypes],
        }


def composite_scores(
    crashes: Sequence[CrashRecord],
    weights: CompositeWeights | None = None,
    codes: CodeMap | None = None,
    cfg: FeatureConfig = DEFAULT_FEATURE_CONFIG,
) -> np.ndarray:
    """(records, 2) array of (aggression, risk_taking)."""
    weights = weights or CompositeWeights.default()
    codes = codes or CodeMap.default()

    def col(name: str, fill: float) -> np.ndarray:
        return np.array([r.raw.get(name, fill) for r in crashes], dtype=np.float64)

    def member(name: str, setname: str) -> np.ndarray:
        return np.isin(col(name, np.nan), np.fromiter(codes.codeset(name, setname), dtype=np.float64)).astype(np.float64)

    speed_over = col("TRAV_SP", 0.0) - col("VSPD_LIM", np.inf)
    ind = {
        "speeding": (speed_over >= cfg.speeding_over).astype(np.float64),
        "alcohol": member("ALCOHOL", "involved"),
        "aggressive_maneuver": member("P_CRASH1", "aggressive_maneuver"),
        "night": is_night_hour(col("HOUR", 12.0), cfg).astype(np.float64),
        "adverse_weather": member("WEATHER", "adverse"),
        "poor_lighting": member("LGT_COND", "poor"),
    }
    wa = weights.aggression
    aggression = sum(wa[k] * ind[k] for k in weights.AGGRESSION_KEYS) / sum(wa.values())
    risk = sum(weights.risk_taking[k] * ind[k] for k in weights.RISK_KEYS)
    return np.column_stack([np.asarray(aggression, dtype=np.float64).reshape(-1), np.asarray(risk, dtype=np.float64).reshape(-1)])


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia_history: tuple[float, ...]  # objective after each assignment step
    n_iter: int
    converged: bool

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # every point already coincides with a center: any choice is as good
        i = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[i])
        d2 = np.minimum(d2, ((points - points[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations from a seeded k-means++ start; stops once assignments repeat.

    A cluster that loses all its points keeps its previous center, which never
    raises the objective.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise AnalysisError("points must be a 2-D array")
    if k < 1:
        raise AnalysisError(f"k must be >= 1, got {k}")
    if pts.shape[0] < k:
        raise AnalysisError(f"{pts.shape[0]} rows cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centers = kmeans_plus_plus(pts, k, rng)
    labels = np.full(pts.shape[0], -1, dtype=np.int64)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(pts, centers)
        new = d2.argmin(axis=1)
        history.append(float(d2[np.arange(pts.shape[0]), new].sum()))
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = pts[members].mean(axis=0)
    return KMeansResult(centers, labels, tuple(history), it, converged)


# ---------------------------------------------------------------------------
# driver profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriverProfile:
    casenum: str
    aggression: float
    risk_taking: float
    cluster_id: int
    cluster_label: str


def nearest_archetype(center: np.ndarray, archetypes: Sequence[tuple[str, tuple[float, float]]]) -> str:
    d = [float(((center - np.asarray(c)) ** 2).sum()) for _, c in archetypes]
    return archetypes[int(np.argmin(d))][0]


@dataclass(frozen=True)
class ClusterReport:
    profiles: list[DriverProfile]
    result: KMeansResult
    center_labels: tuple[str, ...]

    def summary(self) -> list[dict[str, Any]]:
        n = len(self.profiles)
        sizes = np.bincount(self.result.labels, minlength=self.result.centers.shape[0])
        return [
            {
                "cluster_id": c,
                "label": self.center_labels[c],
                "aggression": float(self.result.centers[c, 0]),
                "risk_taking": float(self.result.centers[c, 1]),
                "size": int(sizes[c]),
                "share": float(sizes[c] / n) if n else 0.0,
            }
            for c in range(self.result.centers.shape[0])
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "clusters": self.summary(),
            "inertia_history": list(self.result.inertia_history),
            "n_iter": self.result.n_iter,
            "converged": self.result.converged,
        }


def cluster_points(
    points: np.ndarray, ids: Sequence[str], k: int = 4, seed: int = 0, weights: CompositeWeights | None = None, max_iter: int = 300
) -> ClusterReport:
    weights = weights or CompositeWeights.default()
    res = kmeans(points, k, seed, max_iter)
    labels = tuple(nearest_archetype(c, weights.archetypes) for c in res.centers)
    profiles = [
        DriverProfile(str(i), float(p[0]), float(p[1]), int(c), labels[c]) for i, p, c in zip(ids, points, res.labels)
    ]
    return ClusterReport(profiles, res, labels)


def cluster_drivers(
    crashes: Sequence[CrashRecord],
    k: int = 4,
    seed: int = 0,
    weights: CompositeWeights | None = None,
    codes: CodeMap | None = None,
    max_iter: int = 300,
) -> ClusterReport:
    if len(crashes) < k:
        raise AnalysisError(f"{len(crashes)} records cannot form {k} clusters")
    weights = weights or CompositeWeights.default()
    pts = composite_scores(crashes, weights, codes)
    return cluster_points(pts, [r.casenum for r in crashes], k, seed, weights, max_iter)
