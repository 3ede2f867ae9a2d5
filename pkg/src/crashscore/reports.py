"""Report staging and run manifests.

A command writes every output into a private staging directory. Only when
the command succeeds are the files moved into the output directory, followed
by a manifest recording inputs, seeds, the resolved configuration and the
content hash of every file produced. A failed command leaves nothing behind.
"""
from __future__ import annotations

import hashlib
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__
from .io import atomic_write_bytes, atomic_write_text, sha256_file, write_csv, write_json
from .types import canonical_json

MANIFEST_FORMAT = "crashscore-manifest"


def config_hash(config: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


class ReportStage:
    """Collects outputs in a temp directory beside ``out_dir``; ``commit`` publishes them."""

    def __init__(self, out_dir: str | Path, command: str):
        self.out_dir = Path(out_dir)
        self.command = command
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=f".staging-{command}-", dir=self.out_dir))
        self._names: list[str] = []

    def path(self, name: str) -> Path:
        if name not in self._names:
            self._names.append(name)
        return self.dir / name

    def json(self, name: str, obj: Any) -> None:
        write_json(self.path(name), obj)

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        write_csv(self.path(name), header, rows)

    def text(self, name: str, text: str) -> None:
        atomic_write_text(self.path(name), text)

    def commit(self, config: dict[str, Any], inputs: dict[str, str | Path], seed: int | None) -> dict[str, Any]:
        outputs = {}
        for name in sorted(self._names):
            src = self.dir / name
            if not src.exists():
                continue
            outputs[name] = sha256_file(src)
        manifest = {
            "format": MANIFEST_FORMAT,
            "command": self.command,
            "version": __version__,
            "seed": seed,
            "config": config,
            "config_hash": config_hash(config),
            "inputs": {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in sorted(inputs.items())},
            "outputs": outputs,
        }
        for name in outputs:
            os.replace(self.dir / name, self.out_dir / name)
        atomic_write_bytes(self.out_dir / f"{self.command}.manifest.json", (canonical_json(manifest) + "\n").encode("utf-8"))
        self.discard()
        return manifest

    def discard(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)
