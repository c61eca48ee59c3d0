"""Artifact files: headers, CSV tables and the overwrite guard."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DependencyError

HEADER_TAG = "atriafit artifact"


def header_lines(config_hash: str, seed, stage: str) -> list[str]:
    return [HEADER_TAG, f"config_hash: {config_hash}", f"seed: {seed}", f"stage: {stage}"]


def read_header(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                out[k.strip()] = v.strip()
    if not out and str(path).endswith(".json"):
        try:
            out = json.loads(Path(path).read_text()).get("header", {})
        except (json.JSONDecodeError, AttributeError):
            out = {}
    return out


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, columns: Sequence[str], rows, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def read_numeric(path, columns: Sequence[str]) -> np.ndarray:
    cols, rows = read_table(path)
    idx = [cols.index(c) for c in columns]
    return np.array([[float(r[i]) for i in idx] for r in rows]).reshape(len(rows), len(idx))


def write_json(path, data: dict, header: Sequence[str] = ()) -> None:
    payload = {"header": {k.strip(): v.strip() for k, v in (h.split(":", 1) for h in header if ":" in h)}}
    payload.update(data)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=False) + "\n")


class Workspace:
    """Output directory bound to one config hash."""

    def __init__(self, out_dir, config_hash: str, force: bool = False):
        self.root = Path(out_dir)
        self.hash = config_hash
        self.force = force
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def current(self, name: str) -> bool:
        """Artifact exists and was written under this config."""
        p = self.root / name
        return p.exists() and read_header(p).get("config_hash") == self.hash

    def require(self, name: str, stage: str) -> Path:
        p = self.root / name
        if not p.exists():
            raise DependencyError(f"stage {stage!r} needs {name}, which is missing; run its producing stage first",
                                  stage=stage)
        h = read_header(p).get("config_hash")
        if h != self.hash and not self.force:
            raise DependencyError(f"{name} was produced under config {h}, not {self.hash}", stage=stage)
        return p

    def guard(self, name: str) -> Path:
        """Path to write, refusing to replace an artifact from another config unless forced."""
        p = self.path(name)
        if p.exists() and not self.force:
            h = read_header(p).get("config_hash")
            if h is not None and h != self.hash:
                raise ConfigError(f"{p} belongs to config {h}; rerun with --force to overwrite")
        return p
