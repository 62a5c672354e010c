"""On-disk formats: binary field snapshots, CSV time series, run summaries.

Fields are written as raw little-endian float64 in row-major axis order
next to a JSON sidecar header carrying (kind, n, N, shape). Every series
file starts with a comment line holding the configuration hash, then the
fixed column header. All artifacts are deterministic: no timestamps.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .flow import CSV_COLUMNS


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def config_hash(config_dict):
    """Stable hash of a configuration mapping."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"),
                       default=_jsonable)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_field(path, array, kind, extra=None):
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f8")
    path.with_suffix(".bin").write_bytes(arr.tobytes(order="C"))
    header = {
        "kind": kind,
        "shape": list(arr.shape),
        "dtype": "<f8",
        "order": "C",
    }
    if extra:
        header.update(extra)
    path.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")


def read_field(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("dtype") != "<f8" or header.get("order") != "C":
        raise ValidationError(f"unsupported field encoding in {path}")
    raw = path.with_suffix(".bin").read_bytes()
    arr = np.frombuffer(raw, dtype="<f8").reshape(header["shape"]).copy()
    return arr, header


def write_series(path, series, cfg_hash):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in series.csv_rows():
            writer.writerow([repr(v) for v in row])


def read_series(path):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
        if not first.startswith("# config_hash="):
            raise ValidationError(f"{path} is missing the config hash header")
        cfg_hash = first.split("=", 1)[1]
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValidationError(f"{path} has unexpected columns {header}")
        rows = [[float(v) for v in row] for row in reader]
    data = {name: np.array([r[i] for r in rows]) for i, name in enumerate(CSV_COLUMNS)}
    return data, cfg_hash


def write_summary(path, summary):
    Path(path).write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
