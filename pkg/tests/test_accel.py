"""The compiled and pure-numpy backends must produce the same models and numbers."""
from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from trees import forest_of, random_tree, shapes

from crashscore import _accel, _kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")

SCRIPT = """
import json, sys
import numpy as np
from crashscore import _accel
from crashscore.explain import tree_shap_many
from crashscore.fixtures import PlantedSignal, planted_signal_dataset
from crashscore.forest import ForestParams, train_forest
ds = planted_signal_dataset(PlantedSignal(n_rows=1500, n_noise=3), seed=11)
model = train_forest(ds, ForestParams(n_estimators=8, seed=11))
shap = tree_shap_many(model, ds.X[:25], ds.X[:300])
json.dump({"backend": _accel.backend_name(), "model": model.to_dict(),
           "p": model.predict_crash(ds.X).tolist(), "phi": shap.contributions.tolist()}, sys.stdout)
"""


def _run_backend(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop(_accel.DISABLE_ENV, None)
    if disable:
        env[_accel.DISABLE_ENV] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


@needs_numba
def test_backends_train_identical_models():
    fast, slow = _run_backend(False), _run_backend(True)
    assert (fast["backend"], slow["backend"]) == ("numba", "numpy")
    assert fast["model"] == slow["model"]
    assert fast["p"] == slow["p"]
    np.testing.assert_allclose(fast["phi"], slow["phi"], rtol=0, atol=1e-12)


@needs_numba
@given(st.integers(0, 10_000))
def test_predict_and_cover_agree_on_random_trees(seed):
    rng = np.random.default_rng(seed)
    trees = [random_tree(rng, shapes(3)[rng.integers(len(shapes(3)))], 4) for _ in range(3)]
    pk = forest_of(trees, 4).packed
    X = np.ascontiguousarray(rng.random((40, 4)))
    args = (pk.feature, pk.threshold, pk.left, pk.right)
    assert np.array_equal(_kernels.predict_numba(*args, pk.value, X), _kernels.predict_numpy(*args, pk.value, X))
    assert np.array_equal(_kernels.cover_numba(*args, X), _kernels.cover_numpy(*args, X))
    frac = rng.random(pk.feature.shape)
    a = _kernels.shap_forest_numba(*args, pk.value, frac, pk.depth, X[:5], 4)
    b = _kernels.shap_forest_numpy(*args, pk.value, frac, pk.depth, X[:5], 4)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@pytest.mark.parametrize("use_numba", [True, False])
def test_dispatch_follows_flag(monkeypatch, use_numba):
    calls = []
    monkeypatch.setattr(_accel, "USE_NUMBA", use_numba)
    monkeypatch.setattr(_kernels, "predict_numba", lambda *a: calls.append("numba"))
    monkeypatch.setattr(_kernels, "predict_numpy", lambda *a: calls.append("numpy"))
    _kernels.predict(None, None, None, None, None, None)
    assert calls == ["numba" if use_numba else "numpy"]
    assert _accel.backend_name() == calls[0]


@pytest.mark.parametrize("value,disabled", [("1", True), ("true", True), ("0", False), ("", False)])
def test_env_parsing(monkeypatch, value, disabled):
    monkeypatch.setenv(_accel.DISABLE_ENV, value)
    assert _accel.numba_disabled_by_env() is disabled


@needs_numba
def test_benchmark_script_runs(monkeypatch):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    monkeypatch.setattr(_accel, "USE_NUMBA", _accel.USE_NUMBA)
    rows = bench.run(rows=400, trees=2, shap_rows=2, repeat=1)
    assert [r[0] for r in rows] == ["grow", "predict", "shap"]
    assert all(fast > 0 and slow > 0 for _, fast, slow in rows)
