"""CRSS-style categorical code maps."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

from ..errors import SchemaError

DEFAULT_CODES_FILE = "crss_codes.json"


@dataclass(frozen=True)
class CodeMap:
    columns: dict[str, dict[str, Any]]

    def has(self, column: str) -> bool:
        return column in self.columns

    def known(self, column: str) -> frozenset[int]:
        return frozenset(int(c) for c in self.columns[column]["codes"])

    def unknown(self, column: str) -> int:
        return int(self.columns[column]["unknown"])

    def safe(self, column: str) -> int:
        try:
            return int(self.columns[column]["safe"])
        except KeyError:
            raise SchemaError(f"code map has no safe code for {column}") from None

    def codeset(self, column: str, name: str) -> frozenset[int]:
        try:
            return frozenset(int(c) for c in self.columns[column]["sets"][name])
        except KeyError:
            raise SchemaError(f"code map has no set {name!r} for {column}") from None

    def describe(self, column: str, code: int) -> str:
        return self.columns[column]["codes"].get(str(code), "unknown")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "CodeMap":
        return cls(dict(doc["columns"]))

    @classmethod
    def load(cls, path: str | Path) -> "CodeMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "CodeMap":
        return _default_codes()


@lru_cache(maxsize=1)
def _default_codes() -> CodeMap:
    text = resources.files("crashscore").joinpath("schemas").joinpath(DEFAULT_CODES_FILE).read_text("utf-8")
    return CodeMap.from_dict(json.loads(text))
