"""CSV and JSON emission with an embedded run-manifest hash."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ValidationError
from .grid import GridFunction

SCHEMA_VERSION = 1
MANIFEST_PREFIX = "# manifest_sha256="


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def canonical(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    import hashlib

    return hashlib.sha256(canonical(obj).encode()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int = 0
    version: str = ""
    outputs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "subcommand": self.subcommand, "config": _jsonable(self.config),
                "seed": self.seed, "version": self.version, "outputs": list(self.outputs)}

    @property
    def sha256(self) -> str:
        return content_hash(self.to_dict())


def _write_rows(path, header, rows, manifest: Optional[RunManifest]):
    with open(path, "w", newline="") as fh:
        if manifest is not None:
            fh.write(f"{MANIFEST_PREFIX}{manifest.sha256}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ValidationError(f"{path}: empty CSV")
    return header, list(reader)


def manifest_of(path) -> Optional[str]:
    with open(path) as fh:
        first = fh.readline()
    return first[len(MANIFEST_PREFIX):].strip() if first.startswith(MANIFEST_PREFIX) else None


def write_grid_csv(path, f: GridFunction, manifest: Optional[RunManifest] = None):
    n = f.n
    vals = np.asarray(f.values)
    rows = ([*map(int, p), float(np.real(v)), float(np.imag(v))] for p, v in zip(f.points, vals))
    _write_rows(path, [f"x{i + 1}" for i in range(n)] + ["re", "im"], rows, manifest)


def read_grid_csv(path) -> GridFunction:
    header, rows = _read_rows(path)
    if header[-2:] != ["re", "im"] or not all(h == f"x{i + 1}" for i, h in enumerate(header[:-2])):
        raise ValidationError(f"{path}: expected columns x1..xn, re, im")
    n = len(header) - 2
    if not rows:
        return GridFunction.zero(n)
    pts = np.array([[int(v) for v in r[:n]] for r in rows], dtype=np.int64)
    re = np.array([float(r[n]) for r in rows])
    im = np.array([float(r[n + 1]) for r in rows])
    vals = re + 1j * im if np.any(im) else re
    return GridFunction.from_arrays(pts, vals, n=n)


def write_points_csv(path, points: np.ndarray, manifest: Optional[RunManifest] = None):
    n = points.shape[1]
    _write_rows(path, [f"x{i + 1}" for i in range(n)], ([int(v) for v in p] for p in points), manifest)


def write_sequence_csv(path, lambdas, values, manifest: Optional[RunManifest] = None):
    vals = np.asarray(values)
    rows = ([lam, float(np.real(v)), float(np.imag(v))] for lam, v in zip(lambdas, vals))
    _write_rows(path, ["lambda", "value_re", "value_im"], rows, manifest)


def read_sequence_csv(path):
    header, rows = _read_rows(path)
    if header != ["lambda", "value_re", "value_im"]:
        raise ValidationError(f"{path}: expected columns lambda, value_re, value_im")
    lams = [float(r[0]) for r in rows]
    re = np.array([float(r[1]) for r in rows])
    im = np.array([float(r[2]) for r in rows])
    return lams, (re + 1j * im if np.any(im) else re)


def report_document(manifest: RunManifest, metrics, references=None, passed=None) -> dict:
    return {"manifest": dict(manifest.to_dict(), sha256=manifest.sha256), "metrics": _jsonable(metrics),
            "references": _jsonable(references or {}), "pass": passed}


def write_json(path, doc: dict):
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonable(doc), sort_keys=True, indent=1))
        fh.write("\n")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("lacvar").joinpath("schemas", name).read_text())
