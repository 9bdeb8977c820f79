"""Versioned on-disk formats for images, label fields, key-value files and renders.

Every quantitative file starts with a magic line naming its format and
version; readers reject anything else.

* raw images (``.f64``): magic line, ``"W H"`` line, then ``W*H`` little-endian
  float64 values in row-major order — bit-exact round trip;
* label fields (``.labels``): magic line, ``"W H"`` line, then one text row of
  integers per image row;
* key-value text (params, manifest): magic line, then ``key = value`` lines;
* 8-bit binary PGM for human inspection only.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

IMAGE_MAGIC = "PPULA-F64 v1"
LABELS_MAGIC = "PPULA-LABELS v1"
KV_MAGIC = "# PPULA-KV v1"


class FormatError(ValueError):
    """A file is malformed or carries an unknown format/version header."""


def _check_magic(path, line, magic):
    if line != magic:
        raise FormatError(f"{path}: expected header {magic!r}, found {line!r}")


def _parse_dims(path, line):
    parts = line.split()
    if len(parts) != 2:
        raise FormatError(f"{path}: bad dimension line {line!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"{path}: bad dimension line {line!r}") from None
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: non-positive dimensions {w}x{h}")
    return w, h


def write_image(path, img):
    """Write a 2-D float image in the raw float64 format."""
    img = np.asarray(img, dtype="<f8")
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"{IMAGE_MAGIC}\n{w} {h}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_image(path):
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii", "replace").rstrip("\n")
        _check_magic(path, magic, IMAGE_MAGIC)
        w, h = _parse_dims(path, fh.readline().decode("ascii", "replace"))
        data = fh.read()
    if len(data) != 8 * w * h:
        raise FormatError(f"{path}: expected {8 * w * h} data bytes, found {len(data)}")
    img = np.frombuffer(data, dtype="<f8").reshape(h, w).astype(float)
    if not np.all(np.isfinite(img)):
        raise FormatError(f"{path}: image contains non-finite values")
    return img


def write_labels(path, z):
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError("label field must be 2-D")
    h, w = z.shape
    with open(path, "w") as fh:
        fh.write(f"{LABELS_MAGIC}\n{w} {h}\n")
        for row in z:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def read_labels(path):
    with open(path) as fh:
        _check_magic(path, fh.readline().rstrip("\n"), LABELS_MAGIC)
        w, h = _parse_dims(path, fh.readline())
        rows = [line.split() for line in fh if line.strip()]
    try:
        z = np.array(rows, dtype=np.int64)
    except ValueError:
        raise FormatError(f"{path}: ragged or non-integer label rows") from None
    if z.shape != (h, w):
        raise FormatError(f"{path}: header says {w}x{h}, data is {z.shape[1:]}x{z.shape[:1]}")
    if z.min() < 1:
        raise FormatError(f"{path}: labels must be >= 1")
    return z


def _format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_format_value(e) for e in v)
    return str(v)


def write_kv(path, items):
    """Write ``key = value`` lines (insertion order) under the key-value magic."""
    with open(path, "w") as fh:
        fh.write(KV_MAGIC + "\n")
        for key, value in items.items():
            if "=" in key or "\n" in key:
                raise ValueError(f"invalid key {key!r}")
            fh.write(f"{key} = {_format_value(value)}\n")


def read_kv(path):
    """Return the key-value pairs as strings."""
    out = {}
    with open(path) as fh:
        _check_magic(path, fh.readline().rstrip("\n"), KV_MAGIC)
        for n, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{n}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_format_value(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV file")
    return rows[0], rows[1:]


def write_pgm(path, img, lo=None, hi=None):
    """8-bit binary PGM, linearly mapping ``[lo, hi]`` (default min/max) to ``0..255``."""
    img = np.asarray(img, dtype=float)
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.clip(np.rint((img - lo) * scale), 0, 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise FormatError(f"{path}: not an 8-bit binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    pix = np.frombuffer(data[m.end():m.end() + w * h], dtype=np.uint8)
    if pix.size != w * h:
        raise FormatError(f"{path}: truncated PGM")
    return pix.reshape(h, w)


def ensure_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
