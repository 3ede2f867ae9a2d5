"""Time the compiled (numba) kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--rows 4000] [--trees 10] [--shap-rows 5]

Both backends run in the same process; dispatch reads ``_accel.USE_NUMBA`` at
call time, so the flag is flipped between runs. Each kernel is called once
before timing so JIT compilation is excluded. The script also checks that both
backends return the same numbers.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from crashscore import _accel
from crashscore.explain import tree_shap_many
from crashscore.fixtures import PlantedSignal, planted_signal_dataset
from crashscore.forest import ForestParams, train_forest


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run(rows: int, trees: int, shap_rows: int, repeat: int) -> list[tuple[str, float, float]]:
    data = planted_signal_dataset(PlantedSignal(n_rows=rows), seed=0)
    params = ForestParams(n_estimators=trees, seed=0)
    X = data.X
    bg = X[:200]
    results = {}
    outputs = {}
    for backend in ("numba", "numpy"):
        _accel.USE_NUMBA = backend == "numba"
        model = train_forest(data, params)  # also warms the grow kernel
        model.predict_crash(X[:2])
        tree_shap_many(model, X[:1], bg)
        results[backend] = {
            "grow": _best_of(lambda: train_forest(data, params), repeat),
            "predict": _best_of(lambda: model.predict_crash(X), repeat),
            "shap": _best_of(lambda: tree_shap_many(model, X[:shap_rows], bg), repeat),
        }
        outputs[backend] = (model.to_dict(), model.predict_crash(X), tree_shap_many(model, X[:shap_rows], bg).contributions)
    _accel.USE_NUMBA = _accel.HAVE_NUMBA and not _accel.numba_disabled_by_env()

    a, b = outputs["numba"], outputs["numpy"]
    assert a[0] == b[0], "backends grew different forests"
    assert np.array_equal(a[1], b[1]), "backends disagree on predictions"
    assert np.max(np.abs(a[2] - b[2])) <= 1e-12, "backends disagree on attributions"
    return [(k, results["numba"][k], results["numpy"][k]) for k in ("grow", "predict", "shap")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--shap-rows", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"rows={args.rows} trees={args.trees} shap_rows={args.shap_rows} (best of {args.repeat})")
    print(f"{'kernel':<10}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fast, slow in run(args.rows, args.trees, args.shap_rows, args.repeat):
        print(f"{name:<10}{fast:>12.4f}{slow:>12.4f}{slow / fast:>9.1f}x")
    print("outputs identical across backends")


if __name__ == "__main__":
    main()
