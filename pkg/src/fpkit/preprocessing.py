"""Shared front half of both matching pipelines.

Segmentation, gradient structure-tensor orientation estimation with
coherence, ridge-frequency estimation, and binarization plus Zhang-Suen
thinning. All functions are pure; per-block results are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks

from .errors import EmptyForegroundError
from .image import BlockGrid, GrayImage

DEFAULT_BLOCK_SIZE = 16
DEFAULT_VAR_THRESHOLD = 50.0


@dataclass(frozen=True)
class ForegroundMask:
    """Block-wise foreground segmentation (True = fingerprint area)."""

    grid: BlockGrid

    @property
    def block_size(self) -> int:
        return self.grid.block_size

    @property
    def blocks(self) -> np.ndarray:
        return self.grid.values

    def any_foreground(self) -> bool:
        return bool(self.blocks.any())

    def pixel_mask(self, height: int, width: int) -> np.ndarray:
        """Expand the block mask to a (height, width) boolean raster."""
        bs = self.block_size
        rows, cols = self.blocks.shape
        expanded = np.repeat(np.repeat(self.blocks, bs, axis=0), bs, axis=1)
        return expanded[:height, :width]

    def block_centers(self) -> np.ndarray:
        """(rows*cols, 2) array of (x, y) pixel centers of every block."""
        bs = self.block_size
        rows, cols = self.blocks.shape
        ys = (np.arange(rows) + 0.5) * bs
        xs = (np.arange(cols) + 0.5) * bs
        cx, cy = np.meshgrid(xs, ys)
        return np.stack([cx.ravel(), cy.ravel()], axis=1)


@dataclass(frozen=True)
class OrientationField:
    """Block-wise ridge orientation in [0, pi) with gradient coherence in [0, 1]."""

    block_size: int
    theta: np.ndarray
    coherence: np.ndarray

    def __post_init__(self):
        if self.theta.shape != self.coherence.shape:
            raise ValueError("theta and coherence grids must share shape")
        for name in ("theta", "coherence"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Skeleton:
    """One-pixel-wide ridge raster (True = ridge pixel)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


def _block_reduce_sum(arr: np.ndarray, block_size: int) -> np.ndarray:
    """Per-block sums over a ceil-division tiling (edge blocks partial)."""
    h, w = arr.shape
    rows = np.add.reduceat(arr, np.arange(0, h, block_size), axis=0)
    return np.add.reduceat(rows, np.arange(0, w, block_size), axis=1)


def _block_pixel_counts(height: int, width: int, block_size: int) -> np.ndarray:
    r = np.minimum(np.arange(0, height, block_size) + block_size, height) \
        - np.arange(0, height, block_size)
    c = np.minimum(np.arange(0, width, block_size) + block_size, width) \
        - np.arange(0, width, block_size)
    return np.outer(r, c)


def segment(img: GrayImage, block_size: int = DEFAULT_BLOCK_SIZE,
            var_threshold: float = DEFAULT_VAR_THRESHOLD) -> ForegroundMask:
    """Variance-based block segmentation.

    A block is foreground iff its intensity variance reaches var_threshold;
    partial blocks at the right/bottom edges are always background.
    """
    if block_size < 4:
        raise ValueError("block_size must be at least 4")
    px = img.as_float()
    n = _block_pixel_counts(img.height, img.width, block_size)
    s = _block_reduce_sum(px, block_size)
    q = _block_reduce_sum(px * px, block_size)
    var = q / n - (s / n) ** 2
    full = n == block_size * block_size
    fg = (var >= var_threshold) & full
    return ForegroundMask(BlockGrid(block_size, fg))


def estimate_orientation(img: GrayImage,
                         block_size: int = DEFAULT_BLOCK_SIZE) -> OrientationField:
    """Block orientation and coherence from the gradient structure tensor.

    With Sobel gradients summed per block (Gxx, Gyy, Gxy), ridge flow is
    0.5*atan2(2*Gxy, Gxx - Gyy) + pi/2 folded into [0, pi), and coherence is
    sqrt((Gxx - Gyy)^2 + 4*Gxy^2) / (Gxx + Gyy), zero for a flat block.
    """
    px = img.as_float()
    gx = ndimage.sobel(px, axis=1, mode="reflect")
    gy = ndimage.sobel(px, axis=0, mode="reflect")
    gxx = _block_reduce_sum(gx * gx, block_size)
    gyy = _block_reduce_sum(gy * gy, block_size)
    gxy = _block_reduce_sum(gx * gy, block_size)

    theta = np.mod(0.5 * np.arctan2(2.0 * gxy, gxx - gyy) + np.pi / 2.0, np.pi)
    denom = gxx + gyy
    num = np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        coherence = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    coherence = np.clip(coherence, 0.0, 1.0)
    return OrientationField(block_size, theta, coherence)


def _block_signature(px: np.ndarray, cx: float, cy: float, theta: float,
                     length: int, width: int) -> np.ndarray:
    """Mean intensity profile across the ridges through (cx, cy).

    Samples a length x width oriented window; the profile axis runs along
    theta + pi/2 (perpendicular to ridge flow). NaN where outside the image.
    """
    across = theta + np.pi / 2.0
    ux, uy = np.cos(across), np.sin(across)
    vx, vy = np.cos(theta), np.sin(theta)
    t = np.arange(length) - (length - 1) / 2.0
    w = np.arange(width) - (width - 1) / 2.0
    tt, ww = np.meshgrid(t, w, indexing="ij")
    xs = cx + tt * ux + ww * vx
    ys = cy + tt * uy + ww * vy
    samples = ndimage.map_coordinates(px, [ys.ravel(), xs.ravel()], order=1,
                                      mode="constant", cval=np.nan)
    samples = samples.reshape(length, width)
    valid = ~np.isnan(samples)
    counts = valid.sum(axis=1)
    sums = np.where(valid, samples, 0.0).sum(axis=1)
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _signature_frequency(sig: np.ndarray, min_period: float = 4.0,
                         max_period: float = 32.0) -> float:
    """Ridge frequency from sub-sample peak spacing; NaN when unreliable."""
    valid = ~np.isnan(sig)
    if valid.sum() < min_period * 2:
        return np.nan
    first, last = np.flatnonzero(valid)[[0, -1]]
    s = sig[first:last + 1]
    if np.isnan(s).any() or s.size < 8:
        return np.nan
    peaks, _ = find_peaks(s)
    if len(peaks) < 2:
        return np.nan
    refined = []
    for p in peaks:
        if 0 < p < s.size - 1:
            a, b, c = s[p - 1], s[p], s[p + 1]
            denom = a - 2 * b + c
            delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
            refined.append(p + np.clip(delta, -0.5, 0.5))
        else:
            refined.append(float(p))
    period = float(np.mean(np.diff(refined)))
    if not (min_period <= period <= max_period):
        return np.nan
    return 1.0 / period


def estimate_ridge_frequency(img: GrayImage, field: OrientationField,
                             mask: ForegroundMask) -> BlockGrid:
    """Per-block ridge frequency (cycles/pixel).

    Foreground blocks with no reliable peak spacing inherit the foreground
    median; background blocks carry 0.
    """
    if not mask.any_foreground():
        raise EmptyForegroundError()
    if field.block_size != mask.block_size:
        raise ValueError("orientation field and mask use different block sizes")
    bs = mask.block_size
    px = img.as_float()
    rows, cols = mask.blocks.shape
    freq = np.zeros((rows, cols))
    length, width = 3 * bs + 1, bs + 1
    for bi in range(rows):
        for bj in range(cols):
            if not mask.blocks[bi, bj]:
                continue
            cx = min((bj + 0.5) * bs, img.width - 1.0)
            cy = min((bi + 0.5) * bs, img.height - 1.0)
            sig = _block_signature(px, cx, cy, field.theta[bi, bj], length, width)
            freq[bi, bj] = _signature_frequency(sig)
    fg = mask.blocks
    reliable = fg & ~np.isnan(freq) & (freq > 0)
    fallback = float(np.median(freq[reliable])) if reliable.any() else 0.1
    freq[fg & ~reliable] = fallback
    freq[~fg] = 0.0
    return BlockGrid(bs, freq)


# Zhang-Suen neighbour order: p2..p9 clockwise from north.
_NEIGHBOR_SLICES = [
    (slice(0, -2), slice(1, -1)),   # p2 N
    (slice(0, -2), slice(2, None)),  # p3 NE
    (slice(1, -1), slice(2, None)),  # p4 E
    (slice(2, None), slice(2, None)),  # p5 SE
    (slice(2, None), slice(1, -1)),  # p6 S
    (slice(2, None), slice(0, -2)),  # p7 SW
    (slice(1, -1), slice(0, -2)),   # p8 W
    (slice(0, -2), slice(0, -2)),   # p9 NW
]


def _neighbors(binary: np.ndarray) -> list[np.ndarray]:
    padded = np.pad(binary, 1, mode="constant", constant_values=False)
    return [padded[sl] for sl in _NEIGHBOR_SLICES]


def _thin_pass(binary: np.ndarray, second: bool) -> np.ndarray:
    nb = _neighbors(binary)
    b = np.zeros(binary.shape, dtype=np.int8)
    for n in nb:
        b += n
    a = np.zeros(binary.shape, dtype=np.int8)
    for k in range(8):
        a += (~nb[k] & nb[(k + 1) % 8]).astype(np.int8)
    p2, p4, p6, p8 = nb[0], nb[2], nb[4], nb[6]
    if not second:
        c1 = ~(p2 & p4 & p6)
        c2 = ~(p4 & p6 & p8)
    else:
        c1 = ~(p2 & p4 & p8)
        c2 = ~(p2 & p6 & p8)
    remove = binary & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2
    return binary & ~remove


def thin(binary: np.ndarray) -> np.ndarray:
    """Zhang-Suen two-subiteration thinning to a one-pixel-wide skeleton."""
    cur = np.asarray(binary, dtype=bool).copy()
    while True:
        nxt = _thin_pass(cur, second=False)
        nxt = _thin_pass(nxt, second=True)
        if np.array_equal(nxt, cur):
            return nxt
        cur = nxt


def binarize(img: GrayImage, mask: ForegroundMask) -> np.ndarray:
    """Ridge map by local adaptive threshold: darker than the block mean."""
    bs = mask.block_size
    px = img.as_float()
    n = _block_pixel_counts(img.height, img.width, bs)
    means = _block_reduce_sum(px, bs) / n
    thresh = np.repeat(np.repeat(means, bs, axis=0), bs, axis=1)[:img.height, :img.width]
    return (px < thresh) & mask.pixel_mask(img.height, img.width)


def binarize_and_thin(img: GrayImage, field: OrientationField,
                      mask: ForegroundMask) -> Skeleton:
    """Adaptive binarization followed by Zhang-Suen thinning.

    The background region carries no ridge pixels; thinning is idempotent.
    """
    if not mask.any_foreground():
        raise EmptyForegroundError()
    return Skeleton(thin(binarize(img, mask)))
