"""Headerless numeric CSV for matrices/vectors, tidy report CSVs, run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


class CsvParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = Path(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


def fmt(value) -> str:
    """17 significant digits, enough for an exact float round trip."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise CsvParseError(path, 0, "missing file")
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise CsvParseError(path, lineno, f"non-numeric entry in {row!r}") from None
            if not all(np.isfinite(vals)):
                raise CsvParseError(path, lineno, "non-finite entry")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise CsvParseError(path, lineno, f"expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise CsvParseError(path, 0, "empty file")
    return np.array(rows, dtype=float)


def read_vector_csv(path) -> np.ndarray:
    m = read_matrix_csv(path)
    if m.shape[1] != 1:
        raise CsvParseError(path, 1, f"expected a single column, got {m.shape[1]}")
    return m[:, 0]


def write_matrix_csv(path, matrix) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([fmt(v) for v in row])


def write_vector_csv(path, vector) -> None:
    write_matrix_csv(path, np.asarray(vector, dtype=float).reshape(-1, 1))


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, seed, outputs) -> Path:
    """One manifest per run: resolved config, seed, output paths and their checksums."""
    out_dir = Path(out_dir)
    outputs = sorted(Path(p) for p in outputs)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "outputs": {p.name: sha256(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
