"""Gabor-energy ridge features on a square grid plus correlation alignment.

The matcher filters the image with a bank of oriented Gabor kernels, takes
the standard deviation of each filter response over every grid cell, finds
the integer displacement maximizing normalized cross-correlation between
the template map and probe maps re-anchored over a search window, recomputes
the probe features at the winning displacement, and scores the pair by a
per-cell-averaged Euclidean distance, normalized to [0, 1] via exp(-s/c).
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptyForegroundError, InsufficientOverlapError
from .image import GrayImage, normalize_intensity
from .preprocessing import ForegroundMask, segment

log = logging.getLogger(__name__)

_FEATURE_MAGIC = b"FPRF"
_FEATURE_VERSION = 1


@dataclass(frozen=True)
class GaborBank:
    """Bank of zero-mean, unit-energy Gabor kernels at evenly spaced orientations."""

    orientations: int = 8
    frequency: float = 0.1
    sigma_x: float = 4.0
    sigma_y: float = 4.0
    kernel_size: int = 33

    def __post_init__(self):
        if self.orientations < 4:
            raise ValueError("need at least 4 orientations")
        if not 0.0 < self.frequency <= 0.5:
            raise ValueError("frequency must be in (0, 0.5] cycles/pixel")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 3")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.orientations) * np.pi / self.orientations

    def kernels(self) -> np.ndarray:
        """(K, size, size) float64 kernels; DC-corrected then L2-normalized."""
        half = self.kernel_size // 2
        y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(float)
        out = np.empty((self.orientations, self.kernel_size, self.kernel_size))
        for k, phi in enumerate(self.angles):
            # u runs across the ridges (so the carrier oscillates across them)
            u = -x * np.sin(phi) + y * np.cos(phi)
            v = x * np.cos(phi) + y * np.sin(phi)
            env = np.exp(-0.5 * (u ** 2 / self.sigma_x ** 2 + v ** 2 / self.sigma_y ** 2))
            kern = env * np.cos(2.0 * np.pi * self.frequency * u)
            kern -= kern.mean()
            kern /= np.linalg.norm(kern)
            out[k] = kern
        return out


@dataclass(frozen=True)
class RidgeFeatureMap:
    """Per-cell Gabor energies over a square tessellation.

    energies is (rows, cols, K) with zeros in invalid cells; a cell is valid
    when it lies fully inside the image and is at least half foreground.
    """

    cell_size: int
    energies: np.ndarray
    valid: np.ndarray
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        v = np.asarray(self.valid, dtype=bool)
        if e.ndim != 3 or v.shape != e.shape[:2]:
            raise ValueError("energies must be (rows, cols, K) with matching valid grid")
        e = e.copy()
        e[~v] = 0.0
        e.setflags(write=False)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "valid", v)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.energies.shape[:2]

    @property
    def band_count(self) -> int:
        return self.energies.shape[2]

    def same_geometry(self, other: "RidgeFeatureMap") -> bool:
        return (self.cell_size == other.cell_size
                and self.grid_shape == other.grid_shape
                and self.band_count == other.band_count)


# cell energies below this are numerically zero (flat input); snapping them
# keeps the "all correlations equal" tie rule exact for degenerate probes
_ENERGY_EPS = 1e-9


def compute_responses(img: GrayImage, bank: GaborBank) -> np.ndarray:
    """(K, H, W) filter responses; DC-free kernels make them zero on flats.

    The image is reflect-padded before filtering so borders see mirrored
    texture instead of an artificial dark frame.
    """
    half = bank.kernel_size // 2
    px = np.pad(img.as_float(), half, mode="reflect")
    kernels = bank.kernels()
    return np.stack([fftconvolve(px, k, mode="valid") for k in kernels])


def _cell_span(extent: int, offset: int, cell_size: int, count: int) -> tuple[int, int]:
    """Range [i0, i1) of grid indices whose cells lie fully inside the image."""
    i0 = max(0, -(offset // cell_size))  # ceil(-offset / cell_size) for ints
    i1 = min(count, (extent - offset) // cell_size)
    return i0, max(i0, i1)


def features_from_responses(responses: np.ndarray, fg_pixels: np.ndarray,
                            cell_size: int, origin: tuple[int, int] = (0, 0)
                            ) -> RidgeFeatureMap:
    """Per-cell response standard deviations on the grid anchored at origin.

    The grid geometry (rows, cols) is fixed by the image size at origin
    (0, 0), so maps extracted at different origins stay comparable; cells
    pushed (partly) outside the image are invalid.
    """
    k, h, w = responses.shape
    rows, cols = h // cell_size, w // cell_size
    dx, dy = int(origin[0]), int(origin[1])
    energies = np.zeros((rows, cols, k))
    valid = np.zeros((rows, cols), dtype=bool)

    i0, i1 = _cell_span(h, dy, cell_size, rows)
    j0, j1 = _cell_span(w, dx, cell_size, cols)
    if i1 > i0 and j1 > j0:
        r0, r1 = dy + i0 * cell_size, dy + i1 * cell_size
        c0, c1 = dx + j0 * cell_size, dx + j1 * cell_size
        sub = responses[:, r0:r1, c0:c1]
        sub = sub.reshape(k, i1 - i0, cell_size, j1 - j0, cell_size)
        stds = sub.std(axis=(2, 4))  # (K, ni, nj)
        stds[stds < _ENERGY_EPS] = 0.0
        energies[i0:i1, j0:j1, :] = np.moveaxis(stds, 0, -1)
        msub = fg_pixels[r0:r1, c0:c1].reshape(i1 - i0, cell_size, j1 - j0, cell_size)
        frac = msub.mean(axis=(1, 3))
        valid[i0:i1, j0:j1] = frac >= 0.5
    energies[~valid] = 0.0
    return RidgeFeatureMap(cell_size, energies, valid, origin=(dx, dy))


def extract_ridge_features(img: GrayImage, mask: ForegroundMask, bank: GaborBank,
                           cell_size: int = 16,
                           origin: tuple[int, int] = (0, 0)) -> RidgeFeatureMap:
    """Filter the image with the bank and aggregate per-cell energies."""
    if cell_size < 8:
        raise ValueError("cell_size must be at least 8")
    if not mask.any_foreground():
        raise EmptyForegroundError()
    responses = compute_responses(img, bank)
    fg = mask.pixel_mask(img.height, img.width)
    return features_from_responses(responses, fg, cell_size, origin)


class ProbeAssets:
    """Cached per-probe state for the displacement search and re-extraction.

    Holds the raw responses plus zero-padded prefix-sum tables so the search
    can evaluate any grid origin in O(cells) instead of O(pixels).
    """

    def __init__(self, responses: np.ndarray, fg_pixels: np.ndarray, cell_size: int):
        self.responses = responses
        self.fg_pixels = np.asarray(fg_pixels, dtype=bool)
        self.cell_size = int(cell_size)
        k, h, w = responses.shape
        self.shape = (h, w)
        self.sum_i = np.zeros((k, h + 1, w + 1))
        self.sumsq_i = np.zeros((k, h + 1, w + 1))
        self.sum_i[:, 1:, 1:] = responses.cumsum(axis=1).cumsum(axis=2)
        self.sumsq_i[:, 1:, 1:] = (responses ** 2).cumsum(axis=1).cumsum(axis=2)
        self.mask_i = np.zeros((h + 1, w + 1))
        self.mask_i[1:, 1:] = self.fg_pixels.astype(float).cumsum(axis=0).cumsum(axis=1)

    @classmethod
    def from_image(cls, img: GrayImage, mask: ForegroundMask, bank: GaborBank,
                   cell_size: int) -> "ProbeAssets":
        if not mask.any_foreground():
            raise EmptyForegroundError()
        responses = compute_responses(img, bank)
        return cls(responses, mask.pixel_mask(img.height, img.width), cell_size)

    def _rect_sums(self, table: np.ndarray, r0, r1, c0, c1):
        return table[..., r1, c1] - table[..., r0, c1] - table[..., r1, c0] + table[..., r0, c0]

    def cell_stats(self, origin: tuple[int, int], rows: int, cols: int
                   ) -> tuple[np.ndarray, np.ndarray]:
        """(energies, valid) for the grid at origin, via the prefix tables."""
        cs = self.cell_size
        h, w = self.shape
        dx, dy = origin
        energies = np.zeros((rows, cols, self.responses.shape[0]))
        valid = np.zeros((rows, cols), dtype=bool)
        i0, i1 = _cell_span(h, dy, cs, rows)
        j0, j1 = _cell_span(w, dx, cs, cols)
        if i1 <= i0 or j1 <= j0:
            return energies, valid
        r0 = (dy + np.arange(i0, i1) * cs)[:, None]
        c0 = (dx + np.arange(j0, j1) * cs)[None, :]
        r1, c1 = r0 + cs, c0 + cs
        n = float(cs * cs)
        s = self._rect_sums(self.sum_i, r0, r1, c0, c1)
        q = self._rect_sums(self.sumsq_i, r0, r1, c0, c1)
        var = np.maximum(q / n - (s / n) ** 2, 0.0)
        stds = np.sqrt(var)
        stds[stds < _ENERGY_EPS] = 0.0
        energies[i0:i1, j0:j1, :] = np.moveaxis(stds, 0, -1)
        m = self._rect_sums(self.mask_i, r0, r1, c0, c1)
        valid[i0:i1, j0:j1] = m >= 0.5 * n
        energies[~valid] = 0.0
        return energies, valid

    def extract(self, origin: tuple[int, int] = (0, 0)) -> RidgeFeatureMap:
        """Exact (non-prefix-sum) feature map, shared code path with templates."""
        return features_from_responses(self.responses, self.fg_pixels,
                                       self.cell_size, origin)


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation of two flat vectors; 0 when degenerate."""
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def scan_displacements(f_template: RidgeFeatureMap, assets: ProbeAssets,
                       search_radius: int = 56, step: int = 8,
                       min_overlap: int = 6) -> tuple[int, int]:
    """Displacement of the probe grid maximizing feature correlation.

    Ties break toward the smallest |(dx, dy)|, then smallest dx, then dy.
    Raises InsufficientOverlapError when no displacement reaches min_overlap
    mutually valid cells.
    """
    if search_radius < 0 or step < 1:
        raise ValueError("search_radius must be >= 0 and step >= 1")
    rows, cols = f_template.grid_shape
    offsets = range(-search_radius, search_radius + 1, step)
    best = None
    for dy in offsets:
        for dx in offsets:
            energies, valid = assets.cell_stats((dx, dy), rows, cols)
            mutual = valid & f_template.valid
            v = int(mutual.sum())
            if v < min_overlap:
                continue
            score = _ncc(f_template.energies[mutual].ravel(),
                         energies[mutual].ravel())
            key = (-score, dx * dx + dy * dy, dx, dy)
            if best is None or key < best[0]:
                best = (key, (dx, dy))
    if best is None:
        raise InsufficientOverlapError()
    return best[1]


def align_by_correlation(f_template: RidgeFeatureMap, img_probe: GrayImage,
                         mask_probe: ForegroundMask, bank: GaborBank,
                         search_radius: int = 56, step: int = 8,
                         min_overlap: int = 6) -> tuple[int, int]:
    """Convenience wrapper building probe assets and scanning displacements."""
    assets = ProbeAssets.from_image(img_probe, mask_probe, bank, f_template.cell_size)
    return scan_displacements(f_template, assets, search_radius, step, min_overlap)


def match_ridge(f_template: RidgeFeatureMap, f_probe: RidgeFeatureMap) -> float:
    """Dissimilarity: Euclidean distance over mutually valid cells / cell count."""
    if not f_template.same_geometry(f_probe):
        raise ValueError("feature maps do not share grid geometry")
    mutual = f_template.valid & f_probe.valid
    v = int(mutual.sum())
    if v == 0:
        raise InsufficientOverlapError()
    diff = f_template.energies[mutual] - f_probe.energies[mutual]
    return float(np.sqrt((diff * diff).sum()) / v)


def normalize_ridge_score(s_r: float, c_r: float = 1.0) -> float:
    """exp(-s/c) similarity in (0, 1]; strictly decreasing in s."""
    if c_r <= 0:
        raise ValueError("normalization parameter c_r must be positive")
    if s_r < 0:
        raise ValueError("ridge dissimilarity must be non-negative")
    return math.exp(-s_r / c_r)


@dataclass(frozen=True)
class RidgeParams:
    cell_size: int = 16
    search_radius: int = 56
    step: int = 8
    min_overlap: int = 6
    c_r: float = 1.0


def verify_ridge(img_template: GrayImage, img_probe: GrayImage,
                 bank: GaborBank | None = None,
                 params: RidgeParams = RidgeParams(),
                 mask_template: ForegroundMask | None = None,
                 mask_probe: ForegroundMask | None = None,
                 block_size: int = 16, var_threshold: float = 50.0,
                 target_mean: float = 100.0, target_var: float = 100.0) -> float:
    """Full ridge pipeline: extract, align, recompute, match, normalize.

    A pair with insufficient overlap is an authentication rejection, not a
    crash: it scores 0.0 and logs a warning.
    """
    bank = bank or GaborBank()
    imgs = []
    masks = []
    for img, mask in ((img_template, mask_template), (img_probe, mask_probe)):
        norm = normalize_intensity(img, target_mean, target_var)
        imgs.append(norm)
        masks.append(mask if mask is not None else segment(norm, block_size, var_threshold))
    try:
        assets_t = ProbeAssets.from_image(imgs[0], masks[0], bank, params.cell_size)
        f_template = assets_t.extract()
        assets_p = ProbeAssets.from_image(imgs[1], masks[1], bank, params.cell_size)
        shift = scan_displacements(f_template, assets_p, params.search_radius,
                                   params.step, params.min_overlap)
        f_probe = assets_p.extract(origin=shift)
        s_r = match_ridge(f_template, f_probe)
    except (EmptyForegroundError, InsufficientOverlapError) as exc:
        log.warning("ridge verification rejected: %s", exc)
        return 0.0
    return normalize_ridge_score(s_r, params.c_r)


def save_feature_map(fmap: RidgeFeatureMap, path: str | Path) -> None:
    """Versioned little-endian binary: header then row-major cells."""
    rows, cols = fmap.grid_shape
    k = fmap.band_count
    header = _FEATURE_MAGIC + struct.pack("<5I", _FEATURE_VERSION, cols, rows, k,
                                          fmap.cell_size)
    body = bytearray()
    for i in range(rows):
        for j in range(cols):
            body += struct.pack("<B", int(fmap.valid[i, j]))
            body += struct.pack(f"<{k}d", *fmap.energies[i, j])
    Path(path).write_bytes(header + bytes(body))


def load_feature_map(path: str | Path) -> RidgeFeatureMap:
    data = Path(path).read_bytes()
    if data[:4] != _FEATURE_MAGIC:
        raise ValueError(f"{path}: not a ridge feature map file")
    version, cols, rows, k, cell_size = struct.unpack_from("<5I", data, 4)
    if version != _FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported feature map version {version}")
    energies = np.zeros((rows, cols, k))
    valid = np.zeros((rows, cols), dtype=bool)
    pos = 4 + 20
    cell_bytes = 1 + 8 * k
    for i in range(rows):
        for j in range(cols):
            valid[i, j] = bool(data[pos])
            energies[i, j] = struct.unpack_from(f"<{k}d", data, pos + 1)
            pos += cell_bytes
    return RidgeFeatureMap(cell_size, energies, valid)


def feature_map_debug_dump(fmap: RidgeFeatureMap) -> str:
    """JSON debug view of a feature map (null energies in invalid cells)."""
    rows, cols = fmap.grid_shape
    cells = [[list(fmap.energies[i, j]) if fmap.valid[i, j] else None
              for j in range(cols)] for i in range(rows)]
    return json.dumps({
        "version": _FEATURE_VERSION,
        "cols": cols,
        "rows": rows,
        "orientations": fmap.band_count,
        "cell_size": fmap.cell_size,
        "origin": list(fmap.origin),
        "cells": cells,
    }, indent=2)
