"""Feature-group ablation: retrain without a group, compare held-out AUC."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from ..errors import AnalysisError, SchemaError
from ..forest import ForestParams, train_forest
from ..ingestion.split import stratified_split_indices
from ..metrics import roc_auc
from ..types import GROUPS, FeatureSchema, LabeledDataset

LIGHTING_FEATURES = ("POOR_LIGHTING", "LGT_COND", "LGTCON_IM", "IS_NIGHT")


@dataclass(frozen=True)
class AblationConfig:
    """Features removed: every feature of ``groups`` plus the named ``features``."""

    name: str
    groups: tuple[str, ...] = ()
    features: tuple[str, ...] = ()
    parts: tuple[str, ...] = ()  # names of the single configs a paired removal combines

    def removed(self, schema: FeatureSchema) -> list[int]:
        idx: set[int] = set()
        try:
            for g in self.groups:
                idx.update(schema.group_indices(g))
            for f in self.features:
                idx.add(schema.index(f))
        except SchemaError as exc:
            raise AnalysisError(f"ablation {self.name!r}: {exc}") from exc
        return sorted(idx)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "groups": list(self.groups), "features": list(self.features), "parts": list(self.parts)}


def pair(a: AblationConfig, b: AblationConfig) -> AblationConfig:
    return AblationConfig(f"{a.name}+{b.name}", a.groups + b.groups, a.features + b.features, (a.name, b.name))


def default_ablation_configs(
    schema: FeatureSchema, pairs: Sequence[tuple[str, str]] = (("Lighting", "Environmental"), ("Lighting", "Temporal"), ("Environmental", "Temporal"))
) -> list[AblationConfig]:
    """Baseline, one removal per non-empty group, the lighting subset if present, and paired removals."""
    singles = [AblationConfig(g, groups=(g,)) for g in GROUPS if schema.group_indices(g)]
    light = tuple(f for f in LIGHTING_FEATURES if f in schema)
    if light:
        singles.append(AblationConfig("Lighting", features=light))
    by_name = {c.name: c for c in singles}
    configs = [AblationConfig("baseline")] + singles
    for a, b in pairs:
        if a in by_name and b in by_name:
            configs.append(pair(by_name[a], by_name[b]))
    return configs


@dataclass(frozen=True)
class AblationRow:
    config: AblationConfig
    n_features: int
    auc: float
    delta_auc_pct: float

    def to_dict(self) -> dict[str, Any]:
        return {**self.config.to_dict(), "n_features": self.n_features, "auc": self.auc, "delta_auc_pct": self.delta_auc_pct}


@dataclass(frozen=True)
class AblationReport:
    rows: list[AblationRow]

    def row(self, name: str) -> AblationRow:
        for r in self.rows:
            if r.config.name == name:
                return r
        raise KeyError(name)

    def interactions(self) -> list[dict[str, Any]]:
        """For each paired removal: its AUC drop against the parts' drops."""
        base = self.rows[0].auc
        out = []
        for r in self.rows:
            if len(r.config.parts) != 2:
                continue
            drops = [base - self.row(p).auc for p in r.config.parts]
            pair_drop = base - r.auc
            out.append(
                {
                    "name": r.config.name,
                    "pair_drop": pair_drop,
                    "part_drops": drops,
                    "max_part_drop": max(drops),
                    "sum_part_drops": sum(drops),
                    "at_least_max": pair_drop >= max(drops),
                    "super_additive": pair_drop > sum(drops),
                }
            )
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.rows], "interactions": self.interactions()}


def ablate(
    data: LabeledDataset,
    configs: Sequence[AblationConfig] | None = None,
    params: ForestParams = ForestParams(),
    test_fraction: float = 0.2,
    split_seed: int = 0,
    n_jobs: int = 1,
) -> AblationReport:
    """One shared split; each configuration retrains on the remaining features.

    The first configuration is the reference for percentage changes; it
    should remove nothing.
    """
    configs = list(configs) if configs is not None else default_ablation_configs(data.schema)
    if not configs:
        raise AnalysisError("no ablation configurations")
    tr, te = stratified_split_indices(data.y, test_fraction, split_seed, data.groups)
    train, test = data.take(tr), data.take(te)
    rows: list[AblationRow] = []
    for cfg in configs:
        drop = set(cfg.removed(data.schema))
        keep = [i for i in range(len(data.schema)) if i not in drop]
        if not keep:
            raise AnalysisError(f"ablation {cfg.name!r} removes every feature")
        model = train_forest(train.select_features(keep), params, n_jobs=n_jobs)
        auc = roc_auc(model.predict_crash(test.X[:, keep]), test.y)
        base = rows[0].auc if rows else auc
        rows.append(AblationRow(cfg, len(keep), auc, 100.0 * (auc - base) / base))
    return AblationReport(rows)

