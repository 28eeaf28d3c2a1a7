"""Image data model and the synthetic degradation protocol.

Images are plain 2-D ``float64`` numpy arrays (row-major, shape
``(height, width)``); :func:`as_image` validates them. K-space data is a
complex 2-D array of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

EPS = np.finfo(float).eps


class ImageError(ValueError):
    """Invalid image, degradation spec or phantom."""


def as_image(data, name: str = "image") -> np.ndarray:
    """Return ``data`` as a validated float image."""
    img = np.asarray(data, dtype=float)
    if img.ndim != 2:
        raise ImageError(f"{name}: expected a 2-D array, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ImageError(f"{name}: width and height must be >= 2, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageError(f"{name}: contains non-finite values")
    return img


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel cluster labels with the thresholds that produced them."""

    labels: np.ndarray
    breaks: tuple[float, ...] = ()
    means: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return len(self.breaks) + 1

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground(self) -> np.ndarray:
        """Mask of the brightest cluster."""
        return self.labels == self.k - 1

    def mean_image(self) -> np.ndarray:
        """Each pixel replaced by the mean intensity of its cluster."""
        return np.asarray(self.means, dtype=float)[self.labels]


# --------------------------------------------------------------------------
# Phantoms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Shape:
    """One foreground primitive of a phantom, in pixel coordinates.

    kind is ``disk`` (params: cx, cy, r), ``rect`` (x0, y0, x1, y1 inclusive),
    ``polygon`` (flat list x0, y0, x1, y1, ...) or ``halfplane`` (column split:
    pixels with x >= params[0] are foreground).
    """

    kind: str
    params: tuple[float, ...]


def default_shapes(width: int, height: int) -> list[Shape]:
    """The default two-class test scene: a disk, a rectangle and a triangle."""
    w, h = width, height
    return [
        Shape("disk", (0.33 * w, 0.36 * h, 0.17 * min(w, h))),
        Shape("rect", (0.60 * w, 0.18 * h, 0.84 * w, 0.50 * h)),
        Shape("polygon", (0.20 * w, 0.86 * h, 0.50 * w, 0.60 * h, 0.80 * w, 0.86 * h)),
    ]


def _points_in_polygon(xs: np.ndarray, ys: np.ndarray, verts: np.ndarray) -> np.ndarray:
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < xint)
    return inside


def rasterize(shape: Shape, width: int, height: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    p = shape.params
    if shape.kind == "disk":
        cx, cy, r = p
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r ** 2
    if shape.kind == "rect":
        x0, y0, x1, y1 = p
        return (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
    if shape.kind == "polygon":
        if len(p) < 6 or len(p) % 2:
            raise ImageError("polygon needs at least three (x, y) vertices")
        return _points_in_polygon(xs, ys, np.reshape(p, (-1, 2)))
    if shape.kind == "halfplane":
        return xs >= p[0]
    raise ImageError(f"unknown shape kind {shape.kind!r}")


def make_phantom(width: int = 512, height: int = 512, shapes=None) -> tuple[np.ndarray, LabelMap]:
    """Piecewise-constant two-region image (foreground 1, background 0) and its truth labels."""
    if width < 64 or height < 64:
        raise ImageError("phantom dimensions must be >= 64")
    if shapes is None:
        shapes = default_shapes(width, height)
    mask = np.zeros((height, width), dtype=bool)
    for s in shapes:
        mask |= rasterize(s, width, height)
    if not mask.any() or mask.all():
        raise ImageError("degenerate phantom: foreground covers 0% or 100% of pixels")
    img = mask.astype(float)
    truth = LabelMap(labels=mask.astype(np.int64), breaks=(0.5,), means=(0.0, 1.0))
    return img, truth


# --------------------------------------------------------------------------
# Degradations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    variance: float
    mean: float = 0.0
    seed: int = 0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ImageError(f"unsupported noise kind {self.kind!r}")
        if self.variance < 0:
            raise ImageError("noise variance must be non-negative")


@dataclass(frozen=True)
class BlurSpec:
    """Blur kernel description; defaults are the gaussian/average/motion test kernels."""

    kind: str
    size: tuple[int, int] = field(default=None)
    sigma: float = 12.0
    length: int = 15
    angle: float = 45.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "average", "motion"):
            raise ImageError(f"unsupported blur kind {self.kind!r}")
        if self.size is None:
            object.__setattr__(self, "size", (12, 12) if self.kind == "gaussian" else (15, 15))
        if min(self.size) < 1 or self.length < 1:
            raise ImageError("blur kernel sizes must be >= 1")

    def kernel(self) -> np.ndarray:
        if self.kind == "gaussian":
            return gaussian_kernel(self.size, self.sigma)
        if self.kind == "average":
            return average_kernel(self.size)
        return motion_kernel(self.length, self.angle)


def add_gaussian_noise(img, spec: NoiseSpec) -> np.ndarray:
    """``img`` plus i.i.d. Gaussian noise; deterministic in ``spec.seed``, never clamped."""
    img = as_image(img)
    if spec.variance == 0 and spec.mean == 0:
        return img.copy()
    rng = np.random.default_rng(spec.seed)
    return img + rng.normal(spec.mean, np.sqrt(spec.variance), size=img.shape)


def gaussian_kernel(size=(12, 12), sigma: float = 12.0) -> np.ndarray:
    """Sampled, normalized Gaussian on a ``size`` grid centred between samples for even sizes."""
    rows, cols = size
    y = np.arange(rows) - (rows - 1) / 2.0
    x = np.arange(cols) - (cols - 1) / 2.0
    xx, yy = np.meshgrid(x, y)
    k = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    k[k < EPS * k.max()] = 0.0
    return k / k.sum()


def average_kernel(size=(15, 15)) -> np.ndarray:
    if np.isscalar(size):
        size = (int(size), int(size))
    return np.full(size, 1.0 / (size[0] * size[1]))


def motion_kernel(length: int = 15, angle: float = 45.0) -> np.ndarray:
    """Anti-aliased line of ``length`` pixels at ``angle`` degrees (counter-clockwise).

    Each pixel weight is ``max(0, 1 - d)`` where ``d`` is its distance to the
    segment, with the distance past the end points measured to the end point.
    Built on one half-plane quadrant and unfolded by point symmetry.
    """
    length = max(1, int(length))
    half = (length - 1) / 2.0
    phi = np.deg2rad(np.mod(angle, 180.0))
    cosphi, sinphi = np.cos(phi), np.sin(phi)
    xsign = 1.0 if cosphi >= 0 else -1.0
    linewdt = 1.0

    sx = np.fix(half * cosphi + linewdt * xsign - length * EPS)
    sy = np.fix(half * sinphi + linewdt - length * EPS)
    xs = np.arange(0.0, sx + xsign * 0.5, xsign) if sx * xsign >= 0 else np.array([0.0])
    ys = np.arange(0.0, sy + 0.5, 1.0)
    x, y = np.meshgrid(xs, ys)

    dist2line = y * cosphi - x * sinphi
    rad = np.hypot(x, y)
    last = (rad >= half) & (np.abs(dist2line) <= linewdt)
    if abs(cosphi) > EPS:
        x2last = half - np.abs((x[last] + dist2line[last] * sinphi) / cosphi)
    else:
        x2last = half - np.abs(y[last])
    dist2line[last] = np.sqrt(dist2line[last] ** 2 + x2last ** 2)
    dist2line = linewdt + EPS - np.abs(dist2line)
    dist2line[dist2line < 0] = 0.0

    r, c = dist2line.shape
    h = np.zeros((2 * r - 1, 2 * c - 1))
    h[:r, :c] = np.rot90(dist2line, 2)
    h[r - 1:, c - 1:] = dist2line
    h /= h.sum()
    if cosphi > 0:
        h = np.flipud(h)
    return h


def filter2(img, kernel: np.ndarray) -> np.ndarray:
    """Correlate with ``kernel`` using symmetric boundary padding.

    The kernel anchor is element ``(size - 1) // 2`` on each axis, so even
    sized kernels sit up-left of the geometric centre.
    """
    img = as_image(img)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape[0] > img.shape[0] or kernel.shape[1] > img.shape[1]:
        raise ImageError("blur kernel larger than image")
    origin = [-1 if s % 2 == 0 else 0 for s in kernel.shape]
    return ndimage.correlate(img, kernel, mode="reflect", origin=origin)


def apply_blur(img, spec: BlurSpec) -> np.ndarray:
    return filter2(img, spec.kernel())
