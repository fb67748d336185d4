"""Artifact emission: canonical JSON, matrix dumps, and run manifests."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

__all__ = [
    "canonical_json",
    "write_json",
    "sha256_file",
    "dump_matrix",
    "load_matrix",
    "RunManifest",
]


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, round-trip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj), encoding="utf-8")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def dump_matrix(path, M: np.ndarray, header: dict) -> Path:
    """Plain-text dump: one JSON header line, then one row of entries per line."""
    M = np.asarray(M, dtype=float)
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for row in np.atleast_2d(M):
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def load_matrix(path) -> tuple[np.ndarray, dict]:
    """Round-trip reader for :func:`dump_matrix`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    M = np.array([[float(v) for v in line.split()] for line in lines[1:] if line.strip()])
    return M, header


class RunManifest:
    """Records what a command produced: inputs, digests of outputs, duration."""

    def __init__(self, command: str, config_path, seed: int, out_dir):
        self.command = command
        self.config_path = str(config_path)
        self.seed = int(seed)
        self.out_dir = Path(out_dir)
        self.artifacts: dict[str, str] = {}
        self._t0 = time.perf_counter()

    def add(self, path) -> None:
        path = Path(path)
        self.artifacts[path.name] = sha256_file(path)

    def write(self) -> Path:
        from . import __version__

        doc = {
            "schema": "aimdalloc.manifest.v1",
            "command": self.command,
            "config": self.config_path,
            "seed": self.seed,
            "version": __version__,
            "duration_s": time.perf_counter() - self._t0,
            "artifacts": self.artifacts,
        }
        return write_json(self.out_dir / "manifest.json", doc)
