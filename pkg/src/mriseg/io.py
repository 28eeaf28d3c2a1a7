"""Image, label-map and k-space file formats.

K-space files are little-endian: ``uint32 width``, ``uint32 height``, then
``width * height`` complex samples in row-major order, each stored as two
``float64`` values (real, imaginary).
"""

from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np

from .core import LabelMap, as_image


class FormatError(ValueError):
    """File exists but cannot be parsed."""


_PGM_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def _format_for(path, fmt):
    if fmt is not None:
        return fmt.lower()
    ext = Path(path).suffix.lower().lstrip(".")
    return "png" if ext == "png" else "pgm"


def read_pgm_raw(path) -> tuple[np.ndarray, int]:
    """Integer pixel array and maxval of a binary (P5) PGM."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    data = path.read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError(f"malformed PGM header in {path}")
    width, height, maxval = map(int, m.groups())
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"malformed PGM header in {path}")
    depth = 1 if maxval < 256 else 2
    payload = data[m.end():]
    if len(payload) != width * height * depth:
        raise FormatError(
            f"malformed PGM {path}: expected {width * height * depth} payload bytes, got {len(payload)}"
        )
    dtype = np.uint8 if depth == 1 else np.dtype(">u2")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.int64), maxval


def write_pgm_raw(path, pixels: np.ndarray, maxval: int) -> None:
    h, w = pixels.shape
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(pixels).astype(dtype).tobytes())


def load_image(path, fmt: str | None = None) -> np.ndarray:
    """Grayscale image rescaled linearly from ``[0, maxval]`` to ``[0, 1]``."""
    fmt = _format_for(path, fmt)
    if fmt == "pgm":
        px, maxval = read_pgm_raw(path)
        return px / float(maxval)
    if fmt == "png":
        from PIL import Image

        if not Path(path).is_file():
            raise FileNotFoundError(f"missing file: {path}")
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.int64)
                return arr / 65535.0
            if im.mode not in ("L", "1"):
                raise FormatError(f"unsupported PNG mode {im.mode!r}; expected 8/16-bit grayscale")
            return np.asarray(im.convert("L"), dtype=float) / 255.0
    raise FormatError(f"unsupported format {fmt!r}")


def quantize(img, maxval: int = 255) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)


def save_image(img, path, fmt: str | None = None, bits: int = 8) -> None:
    """Write ``img`` clamped to [0, 1] and rounded to ``bits``-bit integers."""
    img = as_image(img)
    fmt = _format_for(path, fmt)
    maxval = 255 if bits == 8 else 65535
    px = quantize(img, maxval)
    parent = Path(path).parent
    if not os.access(parent if str(parent) else ".", os.W_OK):
        raise PermissionError(f"cannot write to {parent}")
    if fmt == "pgm":
        write_pgm_raw(path, px, maxval)
    elif fmt == "png":
        from PIL import Image

        if bits == 8:
            Image.fromarray(px.astype(np.uint8), mode="L").save(path)
        else:
            Image.fromarray(px.astype(np.uint16)).save(path)
    else:
        raise FormatError(f"unsupported format {fmt!r}")


def label_gray_levels(k: int) -> np.ndarray:
    """Gray value of each label: label i -> round(i * 255 / (k - 1))."""
    if k == 1:
        return np.zeros(1, dtype=np.int64)
    return np.rint(np.arange(k) * 255.0 / (k - 1)).astype(np.int64)


def save_labels(labels: LabelMap, path) -> None:
    write_pgm_raw(path, label_gray_levels(labels.k)[labels.labels], 255)


def load_labels(path, k: int | None = None) -> np.ndarray:
    """Label indices from an indexed PGM written by :func:`save_labels`.

    When ``k`` is not given it is inferred from the distinct gray levels.
    """
    px, _ = read_pgm_raw(path)
    levels = np.unique(px)
    if k is None:
        k = len(levels)
    lut = label_gray_levels(k)
    out = np.searchsorted(lut, px)
    if np.any(out >= k) or np.any(lut[np.minimum(out, k - 1)] != px):
        raise FormatError(f"{path}: gray levels do not match a {k}-label mapping")
    return out


def save_kspace(k, path) -> None:
    k = np.asarray(k, dtype=complex)
    h, w = k.shape
    inter = np.empty((h, w, 2), dtype="<f8")
    inter[..., 0] = k.real
    inter[..., 1] = k.imag
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(inter.tobytes())


def load_kspace(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    data = path.read_bytes()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated k-space header")
    w, h = struct.unpack("<II", data[:8])
    expected = 8 + 16 * w * h
    if len(data) != expected or w < 2 or h < 2:
        raise FormatError(f"{path}: expected {expected} bytes for {w}x{h} k-space, got {len(data)}")
    arr = np.frombuffer(data[8:], dtype="<f8").reshape(h, w, 2)
    k = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(k)):
        raise FormatError(f"{path}: non-finite k-space samples")
    return k
