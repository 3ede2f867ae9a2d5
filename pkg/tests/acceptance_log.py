"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
from __future__ import annotations

import contextlib
import time

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    start = time.perf_counter()
    status, note = "FAIL", ""
    try:
        yield
        status = "PASS"
    except BaseException as exc:
        note = f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        raise
    finally:
        RESULTS[number] = f"[{status}] criterion {number:2d}: {title} [{time.perf_counter() - start:.2f} s]{note}"
