"""File formats: key JSON, glimpse CSV with JSON sidecar, watermark CSV.

Every write goes to a temporary file in the target directory and is renamed
into place, so readers never observe a partial file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .simworld import GlimpseSequence
from .watermark import SecretKey, WatermarkSequence

__all__ = [
    "atomic_write_text",
    "dump_json",
    "key_to_dict",
    "key_id",
    "save_key",
    "load_key",
    "sidecar_path",
    "write_glimpses",
    "read_glimpses",
    "write_watermark",
    "read_watermark",
]


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj) -> str:
    """Deterministic JSON text (sorted keys, trailing newline)."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# Keys
# --------------------------------------------------------------------------

def key_to_dict(key: SecretKey) -> dict:
    return {"seed": int(key.seed), "band_hz": [float(key.band[0]), float(key.band[1])]}


def key_id(key: SecretKey) -> str:
    """Short fingerprint that identifies a key without revealing the seed."""
    text = f"{key.seed}:{key.band[0]!r}:{key.band[1]!r}".encode()
    return hashlib.sha256(text).hexdigest()[:16]


def save_key(path, key: SecretKey) -> Path:
    return atomic_write_text(path, dump_json(key_to_dict(key)))


def load_key(path) -> SecretKey:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from exc
    if not isinstance(raw, dict) or set(raw) != {"seed", "band_hz"}:
        raise DataFormatError(f"{path}: key file needs exactly the fields seed and band_hz")
    seed, band = raw["seed"], raw["band_hz"]
    if not isinstance(seed, int) or seed < 0:
        raise DataFormatError(f"{path}: seed must be a non-negative integer")
    if not (isinstance(band, list) and len(band) == 2
            and all(isinstance(v, (int, float)) for v in band)):
        raise DataFormatError(f"{path}: band_hz must be a list of two numbers")
    return SecretKey(seed, (float(band[0]), float(band[1])))


# --------------------------------------------------------------------------
# Glimpses
# --------------------------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_glimpses(path, glimpses: GlimpseSequence, sidecar: dict) -> Path:
    """CSV ``t,g_1..g_D`` at 17 significant digits plus a JSON sidecar.

    The sidecar always carries ``rate_hz``; the caller supplies the rest
    (scenario, watermarked, key_id, sensor and provenance).
    """
    d = glimpses.dims
    lines = [",".join(["t"] + [f"g_{j + 1}" for j in range(d)])]
    for t, row in zip(glimpses.timestamps, glimpses.samples):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(sidecar_path(path), dump_json({**sidecar, "rate_hz": glimpses.rate}))
    return Path(path)


def _read_matrix(path, first: str, prefix: str):
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file", 1) from None
        width = len(header)
        expected = ([first] if first else []) + \
            [f"{prefix}{j + 1}" for j in range(width - (1 if first else 0))]
        if header != expected or width < (2 if first else 1):
            raise DataFormatError(f"{path}: header must be {','.join(expected[:3])},...", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(f"expected {width} fields, found {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataFormatError(f"non-numeric field in {row!r}", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError("non-finite value", lineno)
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows", 2)
    return np.asarray(rows)


def read_glimpses(path, rate: float | None = None) -> GlimpseSequence:
    """Load a glimpse CSV; the rate comes from ``rate``, the sidecar, or timestamps."""
    m = _read_matrix(path, "t", "g_")
    t = m[:, 0]
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise DataFormatError("timestamps must be strictly increasing", int(bad[0]) + 3)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{side}: invalid JSON ({exc.msg})", exc.lineno) from exc
    if rate is None:
        rate = meta.get("rate_hz")
    if rate is None:
        if t.shape[0] < 2:
            raise DataFormatError(f"{path}: cannot infer the glimpse rate from one row")
        rate = 1.0 / float(np.median(np.diff(t)))
    return GlimpseSequence(m[:, 1:], float(rate), t, {"source": str(path)})


def write_watermark(path, seq: WatermarkSequence) -> Path:
    """CSV with header ``dim_1..dim_D`` and one row per policy step."""
    lines = [",".join(f"dim_{j + 1}" for j in range(seq.dims))]
    lines += [",".join(_fmt(v) for v in row) for row in seq.samples]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_watermark(path) -> np.ndarray:
    return _read_matrix(path, "", "dim_")
