"""Atomic file output, JSON reports, PPM images and CSV orbit dumps."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

INTERIOR_COLOR = (0, 0, 0)
# fixed 16-entry lookup for escape counts (count mod 16)
PALETTE = np.array([
    (66, 30, 15), (25, 7, 26), (9, 1, 47), (4, 4, 73),
    (0, 7, 100), (12, 44, 138), (24, 82, 177), (57, 125, 209),
    (134, 181, 229), (211, 236, 248), (241, 233, 191), (248, 201, 95),
    (255, 170, 0), (204, 128, 0), (153, 87, 0), (106, 52, 3),
], dtype=np.uint8)


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_json"):
        return o.to_json()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sanitize(obj):
    """Recursively convert to plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, (complex, np.complexfloating)):
        return [sanitize(obj.real), sanitize(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    return sanitize(_default(obj))


def dumps(obj) -> str:
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    atomic_write_bytes(path, dumps(obj).encode())


def colorize(field: np.ndarray, palette=PALETTE, interior=INTERIOR_COLOR) -> np.ndarray:
    field = np.asarray(field)
    if not np.all(np.isfinite(field)):
        raise ValueError("field must be finite")
    counts = field.astype(np.int64)
    rgb = palette[np.mod(counts, len(palette))]
    rgb[counts < 0] = interior
    return rgb.astype(np.uint8)


def ppm_bytes(field, palette=PALETTE) -> bytes:
    rgb = colorize(field, palette)
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def write_image(field, path, palette=PALETTE) -> str:
    """Binary PPM, rows top to bottom; returns the SHA-256 of the file."""
    data = ppm_bytes(field, palette)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def read_ppm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def orbit_csv(points) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step", "re", "im", "abs"])
    for k, z in enumerate(points):
        z = complex(z)
        wr.writerow([k, repr(z.real), repr(z.imag), repr(abs(z))])
    return buf.getvalue()


def write_orbit_csv(path, points):
    atomic_write_bytes(path, orbit_csv(points).encode())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
