"""Shared domain vocabulary: schema, contexts, labels, scores and risk levels."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .errors import SchemaError

GROUPS = ("Temporal", "Environmental", "Location", "VRU", "Interaction", "CrashVehicle", "Metadata")
KINDS = ("numeric", "binary", "categorical")

DEFAULT_SCHEMA_FILE = "crss_vru_64.json"


class Label(enum.IntEnum):
    SAFE = 0
    CRASH = 1


class RiskLevel(enum.IntEnum):
    """Operational risk level; the integer value is the ordinal rank."""

    CRITICAL = 0
    HIGH = 1
    MEDIUM = 2
    LOW = 3
    EXCELLENT = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "RiskLevel":
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    group: str
    kind: str = "numeric"
    derivation: str = "raw"
    default: float = 0.0

    @property
    def is_raw(self) -> bool:
        return self.derivation == "raw"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "group": self.group,
            "kind": self.kind,
            "derivation": self.derivation,
            "default": self.default,
        }


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, total feature layout. Position in ``features`` is the vector index."""

    schema_id: str
    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        seen = set()
        for spec in self.features:
            if spec.name in seen:
                raise SchemaError(f"duplicate feature name {spec.name!r}")
            if spec.group not in GROUPS:
                raise SchemaError(f"feature {spec.name!r} has unknown group {spec.group!r}")
            if spec.kind not in KINDS:
                raise SchemaError(f"feature {spec.name!r} has unknown kind {spec.kind!r}")
            seen.add(spec.name)

    def __len__(self) -> int:
        return len(self.features)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"feature {name!r} not in schema {self.schema_id!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def group_indices(self, group: str) -> list[int]:
        if group not in GROUPS:
            raise SchemaError(f"unknown feature group {group!r}")
        return [i for i, f in enumerate(self.features) if f.group == group]

    def group_counts(self) -> dict[str, int]:
        return {g: len(self.group_indices(g)) for g in GROUPS}

    @cached_property
    def binary_indices(self) -> np.ndarray:
        return np.array([i for i, f in enumerate(self.features) if f.kind == "binary"], dtype=np.int64)

    @cached_property
    def defaults(self) -> np.ndarray:
        return np.array([f.default for f in self.features], dtype=np.float64)

    def subset(self, keep: Sequence[int], schema_id: str | None = None) -> "FeatureSchema":
        feats = tuple(self.features[i] for i in keep)
        return FeatureSchema(schema_id or f"{self.schema_id}[{len(feats)}]", feats)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_id": self.schema_id, "features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "FeatureSchema":
        try:
            feats = tuple(
                FeatureSpec(
                    name=f["name"],
                    group=f["group"],
                    kind=f.get("kind", "numeric"),
                    derivation=f.get("derivation", "raw"),
                    default=float(f.get("default", 0.0)),
                )
                for f in doc["features"]
            )
            return cls(doc["schema_id"], feats)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "FeatureSchema":
        return _default_schema()


_DEFAULT_SCHEMA: FeatureSchema | None = None


def _default_schema() -> FeatureSchema:
    global _DEFAULT_SCHEMA
    if _DEFAULT_SCHEMA is None:
        text = resources.files("crashscore").joinpath("schemas").joinpath(DEFAULT_SCHEMA_FILE).read_text("utf-8")
        _DEFAULT_SCHEMA = FeatureSchema.from_dict(json.loads(text))
    return _DEFAULT_SCHEMA


def _frozen_vector(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DrivingContext:
    """One scenario's feature vector, laid out by a FeatureSchema."""

    values: np.ndarray
    schema_id: str

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DrivingContext):
            return NotImplemented
        return self.schema_id == other.schema_id and np.array_equal(self.values, other.values)

    def get(self, schema: FeatureSchema, name: str) -> float:
        return float(self.values[schema.index(name)])

    def replace(self, schema: FeatureSchema, **updates: float) -> "DrivingContext":
        vals = self.values.copy()
        for name, v in updates.items():
            vals[schema.index(name)] = v
        return DrivingContext(vals, self.schema_id)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_id": self.schema_id, "values": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DrivingContext":
        return cls(np.asarray(doc["values"], dtype=np.float64), doc["schema_id"])


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_context(context: DrivingContext, schema: FeatureSchema) -> ValidationResult:
    """Check a context against a schema; violations are returned, never raised."""
    problems: list[str] = []
    if context.schema_id != schema.schema_id:
        problems.append(f"schema mismatch: context {context.schema_id!r} vs schema {schema.schema_id!r}")
    if len(context) != len(schema):
        problems.append(f"length mismatch: {len(context)} values for {len(schema)} features")
        return ValidationResult(tuple(problems))
    vals = context.values
    for i in np.nonzero(~np.isfinite(vals))[0]:
        problems.append(f"non-finite value in {schema.features[i].name}")
    for i in schema.binary_indices:
        v = vals[i]
        if np.isfinite(v) and v not in (0.0, 1.0):
            problems.append(f"non-binary value {v!r} in binary feature {schema.features[i].name}")
    return ValidationResult(tuple(problems))


@dataclass(frozen=True)
class ClassProbabilities:
    p_safe: float
    p_crash: float

    @classmethod
    def from_crash(cls, p_crash: float) -> "ClassProbabilities":
        p = float(p_crash)
        return cls(p_safe=1.0 - p, p_crash=p)

    def to_dict(self) -> dict[str, float]:
        return {"p_safe": self.p_safe, "p_crash": self.p_crash}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ClassProbabilities":
        return cls(float(doc["p_safe"]), float(doc["p_crash"]))


@dataclass(frozen=True)
class SafetyAssessment:
    raw_score: float
    calibrated_score: float
    applied_penalties: tuple[tuple[str, float], ...]
    risk_level: RiskLevel

    @property
    def penalty_product(self) -> float:
        return math.prod(a for _, a in self.applied_penalties)

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw_score": self.raw_score,
            "calibrated_score": self.calibrated_score,
            "applied_penalties": [[rid, a] for rid, a in self.applied_penalties],
            "risk_level": self.risk_level.label,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SafetyAssessment":
        return cls(
            raw_score=float(doc["raw_score"]),
            calibrated_score=float(doc["calibrated_score"]),
            applied_penalties=tuple((str(r), float(a)) for r, a in doc["applied_penalties"]),
            risk_level=RiskLevel.parse(doc["risk_level"]),
        )


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus labels; row i of ``X`` is one DrivingContext."""

    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    provenance: np.ndarray = field(default=None)  # type: ignore[assignment]
    # rows sharing a group id must land on the same side of a split (a crash and its safe clone)
    groups: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise SchemaError(f"contexts/labels shape mismatch: X{X.shape} vs y{y.shape}")
        if X.shape[1] != len(self.schema):
            raise SchemaError(f"X has {X.shape[1]} columns, schema has {len(self.schema)}")
        prov = self.provenance
        prov = np.full(y.shape[0], "", dtype=object) if prov is None else np.asarray(prov, dtype=object)
        if prov.shape[0] != y.shape[0]:
            raise SchemaError("provenance length differs from labels")
        groups = np.arange(y.shape[0], dtype=np.int64) if self.groups is None else np.asarray(self.groups, dtype=np.int64)
        if groups.shape != y.shape:
            raise SchemaError("groups length differs from labels")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return self.y.shape[0]

    def context(self, i: int) -> DrivingContext:
        return DrivingContext(self.X[i], self.schema.schema_id)

    def contexts(self) -> list[DrivingContext]:
        return [self.context(i) for i in range(len(self))]

    def class_counts(self) -> dict[Label, int]:
        return {Label.SAFE: int((self.y == 0).sum()), Label.CRASH: int((self.y == 1).sum())}

    def take(self, rows: Sequence[int] | np.ndarray) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.X[rows], self.y[rows], self.schema, self.provenance[rows], self.groups[rows])

    def select_features(self, keep: Sequence[int]) -> "LabeledDataset":
        keep = list(keep)
        return LabeledDataset(self.X[:, keep], self.y, self.schema.subset(keep), self.provenance, self.groups)

    @classmethod
    def concat(cls, parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        """Stack datasets; group ids are offset so parts never share a group."""
        schema = parts[0].schema
        groups, offset = [], 0
        for p in parts:
            groups.append(p.groups - p.groups.min() + offset if len(p) else p.groups)
            offset = (groups[-1].max() + 1) if len(p) else offset
        return cls(
            np.vstack([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            schema,
            np.concatenate([p.provenance for p in parts]),
            np.concatenate(groups),
        )


class CrashClassifier(Protocol):
    """What scoring, explanation and metrics need from a model."""

    schema_id: str
    n_features: int

    def predict_crash(self, X: np.ndarray) -> np.ndarray:
        """Crash-class probability for each row of ``X``."""
        ...


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
