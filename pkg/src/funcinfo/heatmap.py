"""Grayscale PGM (P5) heatmaps."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Layout


def to_gray(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255 (uint8); a constant map becomes all zeros."""
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.rint(255.0 * (v - lo) / (hi - lo)).astype(np.uint8)


def image_scores(scores, layout: Layout) -> np.ndarray:
    """Per-pixel map ``(H, W)``: channel scores summed."""
    if layout.kind != "image":
        raise ValueError("heatmaps need an image layout")
    h, w, c = layout.shape
    return np.asarray(scores, dtype=float).reshape(c, h, w).sum(axis=0)


def encode_pgm(gray: np.ndarray, comment: str = "") -> bytes:
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("PGM needs a 2-d array")
    h, w = gray.shape
    head = "P5\n"
    for line in comment.splitlines():
        head += f"# {line}\n"
    head += f"{w} {h}\n255\n"
    return head.encode("ascii") + gray.tobytes()


def write_pgm(path, gray: np.ndarray, comment: str = "") -> None:
    Path(path).write_bytes(encode_pgm(gray, comment))


def read_pgm(path) -> np.ndarray:
    """Read back a P5 file written by :func:`write_pgm`."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            continue
        fields.extend(line.split())
    if fields[0] != "P5" or fields[3] != "255":
        raise ValueError(f"{path}: not an 8-bit P5 image")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
