"""Jenks natural-breaks segmentation and the enhancement chain around it."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .core import LabelMap, as_image

QUANTIZE_MIN_PIXELS = 100_000
QUANTIZE_BINS = 4096


# --------------------------------------------------------------------------
# Jenks natural breaks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class JenksSettings:
    n_cl: int = 2
    tau: float = 0.999

    def __post_init__(self):
        if self.n_cl < 1:
            raise ValueError("n_cl must be >= 1")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")


class JenksResult(NamedTuple):
    breaks: tuple[float, ...]
    k: int
    gvf: float
    sdcm: float


class _Groups:
    """Sorted weighted atoms: distinct values or histogram bins.

    Each atom carries its weight, value sum, squared-value sum and the
    min/max of the raw values it holds, so SDCM over runs of atoms is exact.
    """

    def __init__(self, values, quantize: bool):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if quantize:
            lo, hi = v[0], v[-1]
            if hi > lo:
                idx = np.minimum(((v - lo) / (hi - lo) * QUANTIZE_BINS).astype(np.int64), QUANTIZE_BINS - 1)
            else:
                idx = np.zeros(len(v), dtype=np.int64)
        else:
            idx = np.concatenate([[0], np.cumsum(v[1:] != v[:-1])])
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        ends = np.r_[starts[1:], len(v)]
        self.w = (ends - starts).astype(float)
        self.vmin = v[starts]
        self.vmax = v[ends - 1]
        self.m = len(starts)
        self.mean = np.add.reduceat(v, starts) / self.w
        # within-atom squared deviations, two-pass (zero for distinct values)
        self.q = np.add.reduceat((v - np.repeat(self.mean, ends - starts)) ** 2, starts)
        # prefix sums of centred data keep the one-pass cost well scaled
        x = v - v.mean()
        s1 = np.add.reduceat(x, starts)
        s2 = np.add.reduceat(x * x, starts)
        self.cw = np.r_[0.0, np.cumsum(self.w)]
        self.c1 = np.r_[0.0, np.cumsum(s1)]
        self.c2 = np.r_[0.0, np.cumsum(s2)]

    def cost(self, i, j):
        """SDCM of atoms ``[i, j)``; vectorized over ``i``."""
        w = self.cw[j] - self.cw[i]
        s1 = self.c1[j] - self.c1[i]
        s2 = self.c2[j] - self.c2[i]
        with np.errstate(invalid="ignore", divide="ignore"):
            c = s2 - s1 * s1 / w
        return np.maximum(np.where(w > 0, c, 0.0), 0.0)

    def exact_cost(self, i: int, j: int) -> float:
        """Two-pass SDCM of atoms ``[i, j)``, free of prefix-sum cancellation."""
        w, mu = self.w[i:j], self.mean[i:j]
        centre = np.dot(w, mu) / w.sum()
        return float(self.q[i:j].sum() + np.dot(w, (mu - centre) ** 2))

    def sdam(self) -> float:
        return self.exact_cost(0, self.m)

    def partition_cost(self, splits) -> float:
        edges = [0, *splits, self.m]
        return sum(self.exact_cost(a, b) for a, b in zip(edges, edges[1:]))


def _dp_layer(g: _Groups, prev: np.ndarray, k: int):
    """Optimal cost of splitting atoms ``[0, j)`` into ``k`` groups, for all ``j``.

    Divide and conquer over ``j``: the optimal last-split is monotone in
    ``j`` for squared-deviation costs on sorted data.
    """
    m = g.m
    cur = np.full(m + 1, np.inf)
    arg = np.zeros(m + 1, dtype=np.int64)
    # j must leave at least one atom per group
    stack = [(k, m, k - 1, m - 1)]
    while stack:
        lo, hi, olo, ohi = stack.pop()
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        cand = np.arange(olo, min(ohi, mid - 1) + 1)
        vals = prev[cand] + g.cost(cand, mid)
        best = int(np.argmin(vals))
        cur[mid] = vals[best]
        arg[mid] = cand[best]
        stack.append((lo, mid - 1, olo, arg[mid]))
        stack.append((mid + 1, hi, arg[mid], ohi))
    return cur, arg


def _optimal_partition(g: _Groups, k: int):
    """(SDCM, split indices) of the best ``k``-group partition of the atoms."""
    prev = np.full(g.m + 1, np.inf)
    prev[1:] = g.cost(0, np.arange(1, g.m + 1))
    args = []
    for kk in range(2, k + 1):
        prev, arg = _dp_layer(g, prev, kk)
        args.append(arg)
    splits = []
    j = g.m
    for arg in reversed(args):
        j = int(arg[j])
        splits.append(j)
    splits = sorted(splits)
    return g.partition_cost(splits), splits


def optimal_sdcm(values, k: int, quantize: bool = False) -> float:
    g = _Groups(values, quantize)
    if k > g.m:
        raise ValueError(f"cannot form {k} classes from {g.m} distinct values")
    return _optimal_partition(g, k)[0]


def jenks_classify(values, settings: JenksSettings, quantize: bool | None = None) -> JenksResult:
    """Natural breaks with the goodness-of-variance-fit stopping rule.

    Starts from one class and adds classes while ``k < n_cl`` and
    ``GVF < tau``. Each ``k`` uses the exact optimal partition. Breaks are
    midpoints between the top of one class and the bottom of the next.
    Large inputs (``quantize=None`` and at least 1e5 values) are binned to
    4096 intensity bins first. Values whose spread is at floating-point
    resolution count as constant (one class, GVF 1).
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("jenks_classify needs at least one value")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if quantize is None:
        quantize = values.size >= QUANTIZE_MIN_PIXELS
    # data that is constant up to round-off is a single class
    lo, hi = values.min(), values.max()
    if hi - lo <= 16 * np.finfo(float).eps * max(abs(lo), abs(hi)):
        return JenksResult((), 1, 1.0, 0.0)
    g = _Groups(values, quantize)
    sdam = g.sdam()
    if sdam <= 0 or g.m == 1:
        return JenksResult((), 1, 1.0, 0.0)
    k, sdcm, splits, gvf = 1, sdam, [], 0.0
    while k < min(settings.n_cl, g.m) and gvf < settings.tau:
        k += 1
        sdcm, splits = _optimal_partition(g, k)
        gvf = (sdam - sdcm) / sdam
    breaks = tuple(float(0.5 * (g.vmax[s - 1] + g.vmin[s])) for s in splits)
    return JenksResult(breaks, k, float(min(max(gvf, 0.0), 1.0)), sdcm)


def label_by_breaks(img, breaks) -> np.ndarray:
    return np.searchsorted(np.asarray(breaks, dtype=float), img, side="right")


def segment_image(img, settings: JenksSettings) -> LabelMap:
    img = as_image(img)
    res = jenks_classify(img.ravel(), settings)
    labels = label_by_breaks(img, res.breaks)
    sums = np.bincount(labels.ravel(), weights=img.ravel(), minlength=res.k)
    counts = np.bincount(labels.ravel(), minlength=res.k)
    means = tuple(float(s / c) if c else 0.0 for s, c in zip(sums, counts))
    return LabelMap(labels=labels, breaks=res.breaks, means=means)


# --------------------------------------------------------------------------
# Enhancement
# --------------------------------------------------------------------------

def corner_seeds(shape) -> list[tuple[int, int]]:
    h, w = shape
    return [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)]


def region_grow_background(img, seeds=None, threshold: float = 0.1) -> np.ndarray:
    """Seeded region growing of a single region from all ``seeds``.

    A 4-neighbour of the region joins it when its intensity is within
    ``threshold`` of the current region mean. Candidates are processed
    closest-first, as in seeded region growing; a rejected candidate can be
    queued again when another of its neighbours joins. Returns the region
    mask (``(row, col)`` seeds; default: the four corners).
    """
    img = as_image(img)
    h, w = img.shape
    if seeds is None:
        seeds = corner_seeds(img.shape)
    mask = np.zeros((h, w), dtype=bool)
    queued = np.zeros((h, w), dtype=bool)
    seeds = [(int(r), int(c)) for r, c in seeds]
    for r, c in seeds:
        if not (0 <= r < h and 0 <= c < w):
            raise IndexError(f"seed {(r, c)} outside image of shape {img.shape}")
    if not seeds:
        return mask

    flat = img.ravel()
    total, count = 0.0, 0
    for r, c in seeds:
        if not mask[r, c]:
            mask[r, c] = True
            total += flat[r * w + c]
            count += 1

    heap = []
    counter = 0

    def push_neighbours(r, c, mean):
        nonlocal counter
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and not mask[rr, cc] and not queued[rr, cc]:
                queued[rr, cc] = True
                heapq.heappush(heap, (abs(flat[rr * w + cc] - mean), counter, rr, cc))
                counter += 1

    mean = total / count
    for r, c in seeds:
        push_neighbours(r, c, mean)
    while heap:
        _, _, r, c = heapq.heappop(heap)
        queued[r, c] = False
        v = flat[r * w + c]
        if abs(v - mean) > threshold:
            continue
        mask[r, c] = True
        total += v
        count += 1
        mean = total / count
        push_neighbours(r, c, mean)
    return mask


def remove_background(img, seeds=None, threshold: float = 0.1):
    """Zero the grown background region. Returns ``(image, mask)``."""
    img = as_image(img)
    mask = region_grow_background(img, seeds, threshold)
    out = img.copy()
    out[mask] = 0.0
    return out, mask


@dataclass(frozen=True)
class StructuringElement:
    """Square element of side ``2 n_b + 1``."""

    n_b: int = 1

    def __post_init__(self):
        if self.n_b < 0:
            raise ValueError("n_b must be >= 0")

    @property
    def size(self) -> int:
        return 2 * self.n_b + 1


def morphological_close(img, se: StructuringElement):
    """Grayscale closing: max filter then min filter over the square element."""
    a = np.asarray(img)
    if se.n_b == 0:
        return a.copy()
    size = (se.size, se.size)
    dilated = ndimage.maximum_filter(a, size=size, mode="nearest")
    return ndimage.minimum_filter(dilated, size=size, mode="nearest")


HIST_BINS = 256


def _bin_index(img, bins=HIST_BINS):
    return np.clip((np.asarray(img) * bins).astype(np.int64), 0, bins - 1)


def _equalize_global(img):
    b = _bin_index(img)
    cdf = np.cumsum(np.bincount(b.ravel(), minlength=HIST_BINS)) / b.size
    return cdf[b]


def _clipped_lut(hist, clip_limit):
    """Clip a tile histogram, spread the excess uniformly, return its CDF."""
    n = hist.sum()
    min_clip = int(np.ceil(n / HIST_BINS))
    limit = min_clip + round(clip_limit * (n - min_clip))
    h = hist.astype(float)
    excess = np.maximum(h - limit, 0).sum()
    h = np.minimum(h, limit) + excess / HIST_BINS
    return np.cumsum(h) / h.sum()


def _equalize_adaptive(img, tiles=(8, 8), clip_limit=0.01):
    img = np.asarray(img, dtype=float)
    hgt, wid = img.shape
    ty, tx = min(tiles[0], hgt), min(tiles[1], wid)
    b = _bin_index(img)
    ry = np.linspace(0, hgt, ty + 1).astype(int)
    rx = np.linspace(0, wid, tx + 1).astype(int)
    luts = np.empty((ty, tx, HIST_BINS))
    for i in range(ty):
        for j in range(tx):
            tile = b[ry[i]:ry[i + 1], rx[j]:rx[j + 1]]
            luts[i, j] = _clipped_lut(np.bincount(tile.ravel(), minlength=HIST_BINS), clip_limit)
    cy = 0.5 * (ry[:-1] + ry[1:]) - 0.5
    cx = 0.5 * (rx[:-1] + rx[1:]) - 0.5
    yy = np.arange(hgt)
    xx = np.arange(wid)
    # tile-centre bracket and interpolation weight per row and column
    iy = np.clip(np.searchsorted(cy, yy, side="right") - 1, 0, ty - 1)
    jx = np.clip(np.searchsorted(cx, xx, side="right") - 1, 0, tx - 1)
    iy1 = np.minimum(iy + 1, ty - 1)
    jx1 = np.minimum(jx + 1, tx - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        fy = np.where(iy1 > iy, (yy - cy[iy]) / (cy[iy1] - cy[iy]), 0.0)
        fx = np.where(jx1 > jx, (xx - cx[jx]) / (cx[jx1] - cx[jx]), 0.0)
    fy = np.clip(fy, 0, 1)[:, None]
    fx = np.clip(fx, 0, 1)[None, :]
    I0, I1 = iy[:, None], iy1[:, None]
    J0, J1 = jx[None, :], jx1[None, :]
    v00 = luts[I0, J0, b]
    v01 = luts[I0, J1, b]
    v10 = luts[I1, J0, b]
    v11 = luts[I1, J1, b]
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)


def equalize_histogram(img, mode: str = "global", tiles=(8, 8), clip_limit: float = 0.01):
    """Histogram equalization over 256 bins of [0, 1].

    ``global`` maps each pixel to the CDF of its bin. ``adaptive`` builds a
    clipped CDF per tile and interpolates bilinearly between tile centres.
    """
    img = as_image(img)
    if mode == "global":
        return _equalize_global(img)
    if mode == "adaptive":
        return _equalize_adaptive(img, tiles, clip_limit)
    raise ValueError(f"unknown equalization mode {mode!r}")


def gaussian_taps(sigma_f: float) -> np.ndarray:
    if sigma_f <= 0:
        raise ValueError("sigma_f must be positive")
    r = int(np.ceil(3 * sigma_f))
    d = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-d * d / (2 * sigma_f ** 2))
    return k / k.sum()


def gaussian_smooth(img, sigma_f: float = 1.0):
    """Separable Gaussian smoothing with reflective borders."""
    img = as_image(img)
    k = gaussian_taps(sigma_f)
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")
