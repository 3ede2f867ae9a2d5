"""Risk multipliers: conditional crash rate of a factor combination over the marginal rate."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import AnalysisError, ConfigError
from ..ingestion.records import CrashRecord
from ..scoring import Condition
from ..types import LabeledDataset
from .prevalence import factor_prevalence


@dataclass(frozen=True)
class FactorPredicate:
    """Disjunction of conjunctions of feature conditions. No clauses at all matches nothing;
    a single empty clause matches everything."""

    name: str
    clauses: tuple[tuple[Condition, ...], ...]

    @classmethod
    def always(cls, name: str = "baseline") -> "FactorPredicate":
        return cls(name, ((),))

    @classmethod
    def all_of(cls, name: str, *conds: Condition) -> "FactorPredicate":
        return cls(name, (tuple(conds),))

    def evaluate(self, X: np.ndarray, names: Sequence[str]) -> np.ndarray:
        pos = {n: i for i, n in enumerate(names)}
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0], dtype=bool)
        for clause in self.clauses:
            m = np.ones(X.shape[0], dtype=bool)
            for c in clause:
                if c.feature not in pos:
                    raise AnalysisError(f"predicate {self.name!r} needs feature {c.feature!r}, absent from data")
                m &= c.evaluate(X[:, pos[c.feature]])
            out |= m
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "any_of": [[c.to_dict() for c in clause] for clause in self.clauses]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FactorPredicate":
        try:
            clauses = tuple(tuple(Condition(c["feature"], c["op"], c["value"]) for c in clause) for clause in doc["any_of"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed predicate: {exc}") from exc
        return cls(str(doc["name"]), clauses)


def _on(feature: str) -> Condition:
    return Condition(feature, "eq", 1)


_VRU = Condition("total_vru", "ge", 1)
_URBAN = Condition("URBANICITY", "in", [1])
_FAST = Condition("SPEED_OVER", "ge", 10)

DEFAULT_COMBOS: tuple[FactorPredicate, ...] = (
    FactorPredicate.always(),
    FactorPredicate.all_of("Rush hour", _on("IS_RUSH_HOUR")),
    FactorPredicate.all_of("Poor lighting", _on("POOR_LIGHTING")),
    FactorPredicate.all_of("Adverse weather", _on("ADVERSE_WEATHER")),
    FactorPredicate.all_of("Night", _on("IS_NIGHT")),
    FactorPredicate.all_of("VRU present", _VRU),
    FactorPredicate.all_of("Night + Adverse weather", _on("IS_NIGHT"), _on("ADVERSE_WEATHER")),
    FactorPredicate.all_of("Urban + Rush hour", _URBAN, _on("IS_RUSH_HOUR")),
    FactorPredicate.all_of("VRU + Urban + Night", _VRU, _URBAN, _on("IS_NIGHT")),
    FactorPredicate(
        "High speed + Poor conditions",
        ((_FAST, _on("ADVERSE_WEATHER")), (_FAST, _on("ADVERSE_SURFACE")), (_FAST, _on("POOR_LIGHTING"))),
    ),
)


@dataclass(frozen=True)
class MultiplierRow:
    name: str
    support: int
    crashes: int
    crash_rate: float | None
    multiplier: float | None  # None when no row matches

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "support": self.support, "crashes": self.crashes, "crash_rate": self.crash_rate, "multiplier": self.multiplier}


@dataclass(frozen=True)
class MultiplierReport:
    marginal_rate: float
    rows: list[MultiplierRow]
    multi_factor_share: float | None  # share of crash records with >= 2 contributing factors
    n_crash_records: int

    def row(self, name: str) -> MultiplierRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "marginal_rate": self.marginal_rate,
            "rows": [r.to_dict() for r in self.rows],
            "multi_factor_share": self.multi_factor_share,
            "n_crash_records": self.n_crash_records,
        }


def risk_multipliers(
    crashes: Sequence[CrashRecord],
    exposure: LabeledDataset,
    combos: Sequence[FactorPredicate] = DEFAULT_COMBOS,
) -> MultiplierReport:
    """Multiplier = P(crash | predicate) / P(crash) on the exposure rows."""
    y = exposure.y
    if np.unique(y).size < 2:
        raise AnalysisError("exposure set must contain both classes")
    marginal = float(y.mean())
    names = exposure.schema.names
    rows = []
    for combo in combos:
        m = combo.evaluate(exposure.X, names)
        support = int(m.sum())
        hits = int(y[m].sum())
        if support == 0:
            rows.append(MultiplierRow(combo.name, 0, 0, None, None))
            continue
        rate = hits / support
        rows.append(MultiplierRow(combo.name, support, hits, rate, rate / marginal))
    prev = factor_prevalence(crashes)
    return MultiplierReport(marginal, rows, prev.multi_factor_share, prev.total)
