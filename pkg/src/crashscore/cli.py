"""Command-line entry point: ``crashscore <command> --out DIR [--config FILE] [--seed N] [--key value ...]``.

Every command resolves a flat configuration (command defaults, then flags,
then the config file, which wins), validates it, runs, and publishes its
reports atomically together with a manifest. Exit status: 0 ok, 2 config or
usage error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import AnalysisError, ConfigError, CrashScoreError, DataError, SplitError
from .types import FeatureSchema, Label, LabeledDataset, RiskLevel

LOG_ENV = "CRASHSCORE_LOG_LEVEL"
log = logging.getLogger("crashscore")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

# keys naming input files; each must exist when set
PATH_KEYS = ("data", "model", "trajectories", "trajectory_meta", "schema", "calibration", "bands", "composites", "grid_spec")

_COMMON = {"schema": None, "calibration": None, "bands": None}
_FOREST = {"n_estimators": 100, "max_depth": None, "min_samples_leaf": 5, "features_per_split": "sqrt"}
_SPLIT = {"test_fraction": 0.2}


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    defaults: dict[str, Any]
    required: tuple[str, ...]
    stochastic: bool
    run: Callable[["RunContext"], None]


# ---------------------------------------------------------------------------
# run context: resolved config plus lazily loaded inputs
# ---------------------------------------------------------------------------


class RunContext:
    def __init__(self, command: Command, config: dict[str, Any], seed: int | None, stage):
        self.command = command
        self.config = config
        self.seed = seed
        self.stage = stage
        self.inputs: dict[str, str] = {k: config[k] for k in PATH_KEYS if config.get(k) is not None}

    def __getitem__(self, key: str) -> Any:
        return self.config[key]

    def schema(self) -> FeatureSchema:
        return FeatureSchema.load(self["schema"]) if self.config.get("schema") else FeatureSchema.default()

    def table(self):
        from .scoring import CalibrationTable

        return CalibrationTable.load(self["calibration"]) if self.config.get("calibration") else CalibrationTable.default()

    def bands(self):
        from .scoring import DEFAULT_BANDS, RiskBands

        return RiskBands.load(self["bands"]) if self.config.get("bands") else DEFAULT_BANDS

    def model(self):
        from .forest import load_model

        model = load_model(self["model"])
        schema = self.schema()
        if model.schema_id != schema.schema_id:
            raise ConfigError(f"model schema {model.schema_id!r} does not match schema {schema.schema_id!r}")
        return model

    def records(self):
        from .ingestion import IngestionReport, load_crash_records

        report = IngestionReport()
        recs = load_crash_records(self["data"], report)
        if not recs:
            raise DataError(f"{self['data']}: no usable records")
        return recs, report

    def flip_rates(self):
        from .ingestion import FlipRates

        try:
            return FlipRates(**self.config.get("flip_rates", {}))
        except TypeError as exc:
            raise ConfigError(f"flip_rates: {exc}") from exc

    def labeled(self) -> tuple[list, LabeledDataset, Any]:
        from .ingestion import build_balanced_dataset

        recs, report = self.records()
        data = build_balanced_dataset(recs, self.schema(), self.flip_rates(), seed=self.seed, report=report)
        return recs, data, report

    def split(self, data: LabeledDataset):
        from .ingestion import stratified_split

        return stratified_split(data, self["test_fraction"], self.seed)

    def forest_params(self):
        from .forest import ForestParams

        try:
            return ForestParams(
                n_estimators=int(self["n_estimators"]),
                max_depth=None if self["max_depth"] is None else int(self["max_depth"]),
                min_samples_leaf=int(self["min_samples_leaf"]),
                features_per_split=self["features_per_split"],
                seed=int(self.seed),
            )
        except (TypeError, ValueError, CrashScoreError) as exc:
            raise ConfigError(f"forest parameters: {exc}") from exc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _fixture(ctx: RunContext) -> None:
    from .fixtures import CRASH_COLUMNS, CrashFactorRates, synthetic_crash_records, trajectory_episodes, write_scenario_meta
    from .ingestion import write_crash_records, write_trajectories

    try:
        rates = CrashFactorRates(**ctx["rates"])
    except TypeError as exc:
        raise ConfigError(f"rates: {exc}") from exc
    recs = synthetic_crash_records(int(ctx["n_crashes"]), rates, ctx.seed)
    write_crash_records(recs, ctx.stage.path("crashes.csv"), list(CRASH_COLUMNS))
    scenarios, meta = trajectory_episodes(int(ctx["n_per_type"]), ctx.seed)
    write_trajectories(scenarios, ctx.stage.path("trajectories.csv"))
    write_scenario_meta(meta, ctx.stage.path("trajectory_meta.csv"))
    ctx.stage.json("fixture.json", {"n_crashes": len(recs), "n_scenarios": len(scenarios), "rates": {f.name: getattr(rates, f.name) for f in fields(rates)}})


def _ingest(ctx: RunContext) -> None:
    from .ingestion import engineer_matrix, write_crash_records

    recs, report = ctx.records()
    schema = ctx.schema()
    X = engineer_matrix(recs, schema, report=report)
    write_crash_records(recs, ctx.stage.path("records.csv"))
    ctx.stage.csv("features.csv", ["CASENUM", *schema.names], ([r.casenum, *map(float, row)] for r, row in zip(recs, X)))
    ctx.stage.json("ingest.json", {"schema_id": schema.schema_id, "n_features": len(schema), "report": report.to_dict()})


def _synth(ctx: RunContext) -> None:
    from .ingestion import synthesize_safe_samples

    recs, report = ctx.records()
    safe = synthesize_safe_samples(recs, ctx.flip_rates(), ctx.seed)
    columns = sorted({c for r in recs for c in r.raw})
    flipped = {c: sum(r.raw.get(c) != s.raw.get(c) for r, s in zip(recs, safe)) for c in ("HOUR", "LGT_COND", "VSURCOND", "WEATHER")}
    rows = ([r.casenum, int(r.label), prov, *(float(r.raw[c]) for c in columns)] for r, prov in _with_provenance(recs, safe))
    ctx.stage.csv("balanced.csv", ["CASENUM", "label", "provenance", *columns], rows)
    ctx.stage.json("synth.json", {"n_crash": len(recs), "n_safe": len(safe), "flipped": flipped, "ingest": report.to_dict()})


def _with_provenance(crashes, safe):
    from .ingestion import PROVENANCE_CRASH, PROVENANCE_SAFE

    for r in crashes:
        yield r, PROVENANCE_CRASH
    for r in safe:
        yield r, PROVENANCE_SAFE


def _train(ctx: RunContext) -> None:
    from .forest import save_model, train_forest
    from .metrics import evaluate_scores

    _, data, report = ctx.labeled()
    train, test = ctx.split(data)
    model = train_forest(train, ctx.forest_params())
    save_model(model, ctx.stage.path("model.json"))
    tr = evaluate_scores(model.predict_crash(train.X), train.y)
    te = evaluate_scores(model.predict_crash(test.X), test.y)
    ctx.stage.json(
        "train.json",
        {
            "params": model.params.to_dict(),
            "n_train": len(train),
            "n_test": len(test),
            "train": tr,
            "test": te,
            "accuracy_gap": tr["accuracy"] - te["accuracy"],
            "ingest": report.to_dict(),
        },
    )


def _evaluate(ctx: RunContext) -> None:
    from .metrics import cross_validate, evaluate_scores, pr_metrics, roc_curve

    model = ctx.model()
    _, data, _ = ctx.labeled()
    _, test = ctx.split(data)
    p = model.predict_crash(test.X)
    thr = float(ctx["threshold"])
    doc: dict[str, Any] = {"n_test": len(test), "threshold": thr, **evaluate_scores(p, test.y, thr)}
    pr = pr_metrics(p, test.y, thr)
    ctx.stage.csv("pr_curve.csv", ["threshold", "precision", "recall"], pr.curve_rows())
    fpr, tpr, th = roc_curve(p, test.y)
    ctx.stage.csv("roc_curve.csv", ["threshold", "fpr", "tpr"], zip(map(float, th), map(float, fpr), map(float, tpr)))
    if int(ctx["cv_folds"]) > 0:
        seeds = [int(s) for s in ctx["cv_seeds"]]
        cv = cross_validate(data, int(ctx["cv_folds"]), seeds, ctx.forest_params())
        doc["cross_validation"] = cv.to_dict()
    ctx.stage.json("metrics.json", doc)


def _score(ctx: RunContext) -> None:
    from .ingestion import engineer_matrix
    from .scoring import assess_many

    model = ctx.model()
    recs, _ = ctx.records()
    X = engineer_matrix(recs, ctx.schema())
    p = model.predict_crash(X)
    out = assess_many(model, ctx.table(), ctx.bands(), X)
    rows = (
        [r.casenum, float(pc), a.raw_score, a.calibrated_score, a.risk_level.label, ";".join(rid for rid, _ in a.applied_penalties)]
        for r, pc, a in zip(recs, p, out)
    )
    ctx.stage.csv("scores.csv", ["CASENUM", "p_crash", "raw_score", "calibrated_score", "risk_level", "penalties"], rows)
    cal = np.array([a.calibrated_score for a in out])
    counts = {lvl.label: sum(a.risk_level == lvl for a in out) for lvl in RiskLevel}
    ctx.stage.json("score.json", {"n": len(out), "calibrated_mean": float(cal.mean()), "level_counts": counts})


def _explain(ctx: RunContext) -> None:
    from .explain import background_sample, consensus_rank, impurity_importance, permutation_importance, recommend, shap_importance, tree_shap_many

    model = ctx.model()
    schema, table, bands = ctx.schema(), ctx.table(), ctx.bands()
    _, data, _ = ctx.labeled()
    train, test = ctx.split(data)
    background = background_sample(train, int(ctx["background_size"]), ctx.seed)
    k = min(int(ctx["n_explain"]), len(test))
    batch = tree_shap_many(model, test.X[:k], background)
    explanations = []
    for i in range(k):
        e = batch[i]
        recs = recommend(model, table, test.context(i), e, bands, schema)
        explanations.append({"row": i, "label": int(test.y[i]), **e.to_dict(), "top": e.top(5), "recommendations": [r.to_dict() for r in recs]})
    perm_rows = background_sample(test, int(ctx["permutation_rows"]), ctx.seed)
    rankings = [
        impurity_importance(model),
        permutation_importance(model, perm_rows, "auc", int(ctx["permutation_repeats"]), ctx.seed),
        shap_importance(model, perm_rows.X[: int(ctx["shap_rows"])], background),
    ]
    consensus = consensus_rank(rankings)
    ctx.stage.csv("rankings.csv", ["feature", "method", "score", "rank"], (row for r in rankings for row in r.rows()))
    rows = consensus.rows()
    ctx.stage.csv("consensus.csv", list(rows[0]), (list(r.values()) for r in rows))
    ctx.stage.json("explanations.json", {"explanations": explanations, "background_rows": len(background)})


def _grid_scores(ctx: RunContext, model):
    from .analysis import ScenarioGridSpec, build_scenario_grid, score_distribution

    try:
        spec = ScenarioGridSpec.from_dict(_read_json(ctx["grid_spec"])) if ctx.config.get("grid_spec") else ScenarioGridSpec()
        grid = build_scenario_grid(spec, ctx.schema())
    except AnalysisError as exc:
        raise ConfigError(f"grid spec: {exc}") from exc
    return score_distribution(grid, model, ctx.table(), ctx.bands())


def _grid(ctx: RunContext) -> None:
    from .analysis import ExpectedLevelRules, expected_levels
    from .metrics import ordinal_confusion

    gs = _grid_scores(ctx, ctx.model())
    rules = ExpectedLevelRules()
    oc = ordinal_confusion(gs.level, expected_levels(gs.grid, ctx.schema(), rules))
    ctx.stage.csv("grid.csv", gs.header(), gs.rows())
    ctx.stage.json("grid.json", {"spec": gs.grid.spec.to_dict(), "summary": gs.summary(), "expected_level_rules": rules.to_dict(), "ordinal": oc.to_dict()})


def _sensitivity(ctx: RunContext) -> None:
    from .analysis import baseline_context, sensitivity

    model = ctx.model()
    schema = ctx.schema()
    sigma = _grid_scores(ctx, model).sigma
    res = sensitivity(model, ctx.table(), baseline_context(schema), sigma=sigma, bands=ctx.bands(), schema=schema)
    rows = [r.to_dict() for r in res]
    ctx.stage.csv(
        "sensitivity.csv",
        ["transition", "baseline_score", "changed_score", "delta", "effect_size"],
        ([r["name"], r["baseline_score"], r["changed_score"], r["delta"], r["effect_size"]] for r in rows),
    )
    ctx.stage.json("sensitivity.json", {"grid_sigma": sigma, "transitions": rows})


def _ablate(ctx: RunContext) -> None:
    from .analysis import ablate

    _, data, _ = ctx.labeled()
    rep = ablate(data, None, ctx.forest_params(), float(ctx["test_fraction"]), ctx.seed)
    ctx.stage.csv("ablation.csv", ["config", "n_features", "auc", "delta_auc_pct"], ([r.config.name, r.n_features, r.auc, r.delta_auc_pct] for r in rep.rows))
    ctx.stage.json("ablation.json", rep.to_dict())


def _cluster(ctx: RunContext) -> None:
    from .analysis import CompositeWeights, cluster_drivers

    weights = CompositeWeights.load(ctx["composites"]) if ctx.config.get("composites") else CompositeWeights.default()
    recs, _ = ctx.records()
    rep = cluster_drivers(recs, int(ctx["k"]), ctx.seed, weights)
    ctx.stage.csv(
        "profiles.csv",
        ["CASENUM", "aggression", "risk_taking", "cluster_id", "cluster_label"],
        ([p.casenum, p.aggression, p.risk_taking, p.cluster_id, p.cluster_label] for p in rep.profiles),
    )
    ctx.stage.json("clusters.json", {"weights": weights.to_dict(), **rep.to_dict()})


def _multipliers(ctx: RunContext) -> None:
    from .analysis import factor_prevalence, risk_multipliers

    recs, data, _ = ctx.labeled()
    rep = risk_multipliers(recs, data)
    ctx.stage.csv(
        "multipliers.csv", ["combination", "support", "crashes", "crash_rate", "multiplier"], ([r.name, r.support, r.crashes, r.crash_rate, r.multiplier] for r in rep.rows)
    )
    ctx.stage.json("multipliers.json", {**rep.to_dict(), "prevalence": factor_prevalence(recs).to_dict()})


def _impact(ctx: RunContext) -> None:
    from .analysis import simulate_impact

    gs = _grid_scores(ctx, ctx.model())
    try:
        rows = simulate_impact(gs.calibrated, gs.p_crash, [float(t) for t in ctx["thresholds"]], float(ctx["compliance"]))
    except CrashScoreError as exc:
        raise ConfigError(str(exc)) from exc
    ctx.stage.csv("impact.csv", ["threshold", "flagged_pct", "reduction_pct"], ([r.threshold, r.flagged_pct, r.reduction_pct] for r in rows))
    ctx.stage.json("impact.json", {"compliance": float(ctx["compliance"]), "rows": [r.to_dict() for r in rows]})


def _validate(ctx: RunContext) -> None:
    from .analysis import kinematic_context, scenario_type, validate_by_scenario_type
    from .ingestion import extract_kinematics, load_trajectories

    model = ctx.model()
    schema = ctx.schema()
    scenarios = load_trajectories(ctx["trajectories"], ctx.config.get("trajectory_meta"))
    pairs, rows = [], []
    for sc in scenarios:
        kf = extract_kinematics(sc)
        c = kinematic_context(kf, sc.meta, schema)
        typ = scenario_type(kf)
        pairs.append((c, typ))
        p = float(model.predict_crash(c.values.reshape(1, -1))[0])
        rows.append([sc.scenario_id, typ, kf.max_speed, kf.to_dict()["min_inter_agent_distance"], kf.to_dict()["min_ttc"], p])
    res = validate_by_scenario_type(model, pairs)
    ctx.stage.csv("episodes.csv", ["scenario_id", "scenario_type", "max_speed", "min_distance", "min_ttc", "p_crash"], rows)
    ctx.stage.json("validation.json", res.to_dict())


COMMANDS: dict[str, Command] = {
    c.name: c
    for c in (
        Command("fixture", "generate synthetic crash records and trajectory episodes", {"n_crashes": 10_000, "n_per_type": 20, "rates": {}}, (), True, _fixture),
        Command("ingest", "clean crash records and engineer the feature matrix", {**_COMMON, "data": None}, ("data",), False, _ingest),
        Command("synth", "synthesize one safe clone per crash record", {**_COMMON, "data": None, "flip_rates": {}}, ("data",), True, _synth),
        Command("train", "train the forest on crashes plus safe clones", {**_COMMON, **_FOREST, **_SPLIT, "data": None, "flip_rates": {}}, ("data",), True, _train),
        Command(
            "evaluate",
            "held-out metrics and optional cross-validation",
            {**_COMMON, **_FOREST, **_SPLIT, "data": None, "model": None, "flip_rates": {}, "threshold": 0.5, "cv_folds": 0, "cv_seeds": [0, 1, 2]},
            ("data", "model"),
            True,
            _evaluate,
        ),
        Command("score", "assess every crash record", {**_COMMON, "data": None, "model": None}, ("data", "model"), False, _score),
        Command(
            "explain",
            "TreeSHAP explanations, importance rankings and recommendations",
            {
                **_COMMON,
                **_SPLIT,
                "data": None,
                "model": None,
                "flip_rates": {},
                "n_explain": 20,
                "background_size": 500,
                "permutation_rows": 2000,
                "permutation_repeats": 3,
                "shap_rows": 200,
            },
            ("data", "model"),
            True,
            _explain,
        ),
        Command("grid", "score the factorial scenario grid", {**_COMMON, "model": None, "grid_spec": None}, ("model",), False, _grid),
        Command("sensitivity", "single-factor transitions from the baseline", {**_COMMON, "model": None, "grid_spec": None}, ("model",), False, _sensitivity),
        Command("ablate", "retrain with feature groups removed", {**_COMMON, **_FOREST, **_SPLIT, "data": None, "flip_rates": {}}, ("data",), True, _ablate),
        Command("cluster", "k-means driver archetypes", {"data": None, "composites": None, "k": 4}, ("data",), True, _cluster),
        Command("multipliers", "conditional crash-rate multipliers", {**_COMMON, "data": None, "flip_rates": {}}, ("data",), True, _multipliers),
        Command(
            "impact",
            "threshold alert impact over the grid",
            {**_COMMON, "model": None, "grid_spec": None, "thresholds": [20, 40, 50, 60, 70, 80], "compliance": 0.5},
            ("model",),
            False,
            _impact,
        ),
        Command(
            "validate",
            "mean crash probability by trajectory scenario type",
            {**_COMMON, "model": None, "trajectories": None, "trajectory_meta": None},
            ("model", "trajectories"),
            False,
            _validate,
        ),
    )
}


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _flag_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command: Command, flags: dict[str, Any], config_path: str | None) -> tuple[dict[str, Any], int | None, str]:
    """Merge defaults, flags and the config file (highest precedence); return (config, seed, out)."""
    cfg = dict(command.defaults)
    cfg.update({k: v for k, v in flags.items() if v is not None and k not in ("seed", "out")})
    seed, out = flags.get("seed"), flags.get("out")
    if config_path:
        doc = _read_json(config_path)
        if not isinstance(doc, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        for k, v in doc.items():
            if k == "seed":
                seed = v
            elif k == "out":
                out = v
            elif k in command.defaults:
                cfg[k] = v
            else:
                raise ConfigError(f"{config_path}: unknown key {k!r} for command {command.name!r}")
    if out is None:
        raise ConfigError("an output directory is required (--out)")
    if seed is not None:
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    if command.stochastic and seed is None:
        raise ConfigError(f"command {command.name!r} is stochastic and needs --seed")
    for k in command.required:
        if cfg.get(k) is None:
            raise ConfigError(f"command {command.name!r} needs {k!r}")
    for k in PATH_KEYS:
        if cfg.get(k) is not None and not Path(cfg[k]).is_file():
            raise ConfigError(f"{k}: no such file {cfg[k]!r}")
    return cfg, seed, str(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashscore", description="Calibrated crash-risk driving safety scores.")
    parser.add_argument("--version", action="version", version=f"crashscore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, help=cmd.help, description=cmd.help)
        p.add_argument("--config", help="JSON config file; its values override flags")
        p.add_argument("--seed", type=int, help="random seed (required for stochastic commands)")
        p.add_argument("--out", help="output directory")
        for key in cmd.defaults:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=_flag_value, default=None, metavar="VALUE", help=f"default: {json.dumps(cmd.defaults[key])}")
    return parser


def _configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(command: str, flags: dict[str, Any], config_path: str | None = None) -> int:
    """Run one command; returns the exit status."""
    from .reports import ReportStage

    cmd = COMMANDS[command]
    stage = None
    try:
        cfg, seed, out = resolve_config(cmd, flags, config_path)
        stage = ReportStage(out, cmd.name)
        ctx = RunContext(cmd, cfg, seed, stage)
        cmd.run(ctx)
        stage.commit(cfg, ctx.inputs, seed)
        log.info("%s: reports written to %s", cmd.name, out)
        return EXIT_OK
    except ConfigError as exc:
        return _fail(stage, EXIT_CONFIG, "config error", exc)
    except (DataError, SplitError) as exc:
        return _fail(stage, EXIT_DATA, "data error", exc)
    except CrashScoreError as exc:
        return _fail(stage, EXIT_RUNTIME, "runtime error", exc)
    except OSError as exc:
        return _fail(stage, EXIT_RUNTIME, "I/O error", exc)


def _fail(stage, status: int, kind: str, exc: Exception) -> int:
    if stage is not None:
        stage.discard()
    print(f"crashscore: {kind}: {exc}", file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    return run(command, args, config_path)


if __name__ == "__main__":
    sys.exit(main())
