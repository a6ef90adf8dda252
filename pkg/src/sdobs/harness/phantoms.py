"""Synthetic head-like phantoms, lesion signals and the binary phantom format."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..linops import HaarTransform, as_object_vector

__all__ = [
    "PhantomFormatError",
    "generate_sparse_phantom",
    "load_phantom",
    "make_signal",
    "save_phantom",
    "wavelet_sparsity",
]

MAGIC = b"SDOP"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


def _ellipse(n, cx, cy, a, b, theta):
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    xx = (xx - cx) / n
    yy = (yy - cy) / n
    c, s = np.cos(theta), np.sin(theta)
    u = (c * xx + s * yy) / a
    v = (-s * xx + c * yy) / b
    return u * u + v * v <= 1.0


def generate_sparse_phantom(n: int, seed, detail_level: float = 1.0) -> np.ndarray:
    """Random piecewise-smooth head phantom on an ``n x n`` grid, values in [0, 1].

    A skull ring encloses a brain region with a few random interior
    ellipses; the brain carries a faint smooth texture whose amplitude scales
    with ``detail_level``. Returned flattened (row-major).
    """
    if n < 2 or n & (n - 1):
        raise ValueError(f"grid side must be a power of two, got {n}")
    rng = np.random.default_rng(seed)
    c = n / 2.0
    img = np.zeros((n, n))
    a = rng.uniform(0.36, 0.42)
    b = rng.uniform(0.30, 0.36)
    tilt = rng.uniform(-0.15, 0.15)
    cx = c + rng.uniform(-0.02, 0.02) * n
    cy = c + rng.uniform(-0.02, 0.02) * n
    head = _ellipse(n, cx, cy, a, b, tilt)
    brain = _ellipse(n, cx, cy, a - 0.05, b - 0.05, tilt)
    img[head] = rng.uniform(0.8, 1.0)
    img[brain] = rng.uniform(0.35, 0.5)
    for _ in range(rng.integers(2, 5)):
        r = np.sqrt(rng.uniform(0, 1)) * 0.55
        phi = rng.uniform(0, 2 * np.pi)
        ex = cx + r * (a - 0.1) * n * np.cos(phi)
        ey = cy + r * (b - 0.1) * n * np.sin(phi)
        region = _ellipse(n, ex, ey, rng.uniform(0.04, 0.14), rng.uniform(0.03, 0.10),
                          rng.uniform(0, np.pi)) & brain
        img[region] = rng.uniform(0.1, 0.75)
    if detail_level > 0:
        tex = gaussian_filter(rng.standard_normal((n, n)), sigma=max(n / 16.0, 1.0))
        tex /= max(np.abs(tex).max(), 1e-12)
        img[brain] += 0.01 * detail_level * tex[brain]
    return np.clip(img, 0.0, 1.0).ravel()


def wavelet_sparsity(f, levels: int = 4, rel: float = 0.01) -> float:
    """Fraction of Haar coefficients with magnitude below ``rel * max``."""
    f = as_object_vector(f)
    n = int(round(np.sqrt(f.size)))
    w = np.abs(HaarTransform(n, levels).apply(f))
    return float(np.mean(w < rel * w.max()))


def make_signal(n: int, shape: str = "disk", center=None, radius: float = 2.0,
                contrast: float = 0.1) -> np.ndarray:
    """Known lesion signal: a hard-edged disk or a Gaussian blob (sd = radius)."""
    if center is None:
        center = (0.5 * n + 0.15 * n, 0.5 * n - 0.1 * n)
    cy, cx = center
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    if shape == "disk":
        s = (d2 <= radius ** 2).astype(float)
    elif shape == "blob":
        s = np.exp(-0.5 * d2 / radius ** 2)
    else:
        raise ValueError(f"unknown signal shape {shape!r}")
    return (contrast * s).ravel()


# -- file format ------------------------------------------------------------------

class PhantomFormatError(ValueError):
    pass


def save_phantom(path, f, shape=None) -> None:
    """Write ``SDOP`` | u16 version | u32 rows | u32 cols | float64 LE payload."""
    arr = np.asarray(f, dtype=float)
    if shape is None:
        shape = arr.shape if arr.ndim == 2 else (int(round(np.sqrt(arr.size))),) * 2
    rows, cols = shape
    if rows * cols != arr.size:
        raise ValueError(f"cannot store {arr.size} values as {rows}x{cols}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("phantom contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_phantom(path) -> np.ndarray:
    """Read a phantom file written by :func:`save_phantom`; returns a flat vector."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise PhantomFormatError(f"{path}: file too short for header ({len(data)} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PhantomFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise PhantomFormatError(f"{path}: unsupported version {version}")
    expected = rows * cols * 8
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise PhantomFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for {rows}x{cols}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    if not np.all(np.isfinite(values)):
        raise PhantomFormatError(f"{path}: non-finite values in payload")
    return values
