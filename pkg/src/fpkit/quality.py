"""Image quality measures: local gradient coherence and global ring entropy.

Also handles externally supplied per-image scores (manual labels, NIST-style
levels) and the geometric-mean quality of a matching pair.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyForegroundError
from .image import GrayImage
from .preprocessing import ForegroundMask, OrientationField

log = logging.getLogger(__name__)

DEFAULT_RING_COUNT = 15
DEFAULT_F_MIN = 0.02
DEFAULT_F_MAX = 0.25


@dataclass(frozen=True)
class QualityScore:
    """Quality in [0, 1]; source is "local", "global", or "external:<name>"."""

    value: float
    source: str
    flag: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"quality value {self.value} outside [0, 1]")


def _foreground_bbox_diag(mask: ForegroundMask) -> float:
    bs = mask.block_size
    rows_idx, cols_idx = np.nonzero(mask.blocks)
    h = (rows_idx.max() - rows_idx.min() + 1) * bs
    w = (cols_idx.max() - cols_idx.min() + 1) * bs
    return math.hypot(w, h)


def local_quality(img: GrayImage, mask: ForegroundMask, field: OrientationField,
                  q_width: float | None = None) -> QualityScore:
    """Centroid-weighted mean block coherence over the foreground.

    Weights fall off as exp(-d^2 / (2*q_width^2)) with distance d from the
    foreground centroid; q_width defaults to a quarter of the foreground
    bounding-box diagonal.
    """
    if not mask.any_foreground():
        raise EmptyForegroundError()
    if field.block_size != mask.block_size:
        raise ValueError("orientation field and mask use different block sizes")
    fg = mask.blocks.ravel()
    centers = mask.block_centers()[fg]
    centroid = centers.mean(axis=0)
    if q_width is None:
        q_width = _foreground_bbox_diag(mask) / 4.0
    if q_width <= 0:
        raise ValueError("q_width must be positive")
    d2 = ((centers - centroid) ** 2).sum(axis=1)
    weights = np.exp(-d2 / (2.0 * q_width ** 2))
    coh = field.coherence.ravel()[fg]
    value = float((weights * coh).sum() / weights.sum())
    return QualityScore(min(max(value, 0.0), 1.0), "local")


def ring_band_energies(power: np.ndarray, ring_count: int = DEFAULT_RING_COUNT,
                       f_min: float = DEFAULT_F_MIN,
                       f_max: float = DEFAULT_F_MAX) -> np.ndarray:
    """Total spectral power in each of ring_count annular frequency bands.

    The bands equally partition [f_min, f_max] by radius (cycles/pixel);
    band edges are half-open with f_max folded into the last band.
    """
    if ring_count < 2:
        raise ValueError("ring_count must be at least 2")
    if not 0.0 < f_min < f_max <= 0.5:
        raise ValueError("need 0 < f_min < f_max <= 0.5")
    h, w = power.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    width = (f_max - f_min) / ring_count
    idx = np.floor((radius - f_min) / width).astype(int)
    idx[radius == f_max] = ring_count - 1
    in_band = (radius >= f_min) & (radius <= f_max) & (idx >= 0) & (idx < ring_count)
    return np.bincount(idx[in_band], weights=power[in_band], minlength=ring_count)


def energy_concentration_score(band_energies: np.ndarray) -> float:
    """1 - E/ln(R) with E the Shannon entropy of the band distribution.

    All energy in one band scores 1; energy uniform across bands scores 0.
    Returns 0.0 when the total in-band energy is zero.
    """
    e = np.asarray(band_energies, dtype=float)
    total = e.sum()
    if total <= 0.0:
        return 0.0
    p = e / total
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    score = 1.0 - entropy / math.log(len(e))
    return min(max(score, 0.0), 1.0)


def global_quality(img: GrayImage, mask: ForegroundMask,
                   ring_count: int = DEFAULT_RING_COUNT,
                   f_min: float = DEFAULT_F_MIN,
                   f_max: float = DEFAULT_F_MAX) -> QualityScore:
    """Spectral energy concentration in ring-shaped bands.

    The foreground bounding box is mean-subtracted and tapered with a
    raised-cosine window before the power spectrum is taken, so boundary
    leakage does not smear the ring energies.
    """
    if not mask.any_foreground():
        raise EmptyForegroundError()
    bs = mask.block_size
    rows_idx, cols_idx = np.nonzero(mask.blocks)
    r0, r1 = rows_idx.min() * bs, min((rows_idx.max() + 1) * bs, img.height)
    c0, c1 = cols_idx.min() * bs, min((cols_idx.max() + 1) * bs, img.width)
    crop = img.as_float()[r0:r1, c0:c1]
    crop = crop - crop.mean()
    win = np.outer(np.hanning(crop.shape[0]), np.hanning(crop.shape[1]))
    power = np.abs(np.fft.fft2(crop * win)) ** 2
    bands = ring_band_energies(power, ring_count, f_min, f_max)
    if bands.sum() <= 0.0:
        log.warning("global quality: zero in-band spectral energy, scoring 0")
        return QualityScore(0.0, "global", flag="zero-energy")
    return QualityScore(energy_concentration_score(bands), "global")


_META_RE = re.compile(r"(\w+)\s*=\s*([^\s,]+)")


def ingest_external_quality(manifest_path: str | Path, name: str,
                            expected_ids: set[str] | None = None
                            ) -> dict[str, QualityScore]:
    """Load an externally produced per-image quality file.

    Format: optional ``# key=value`` metadata lines (``range=LO:HI``,
    ``direction=ascending|descending``), then a CSV ``image_id,score``
    header and rows. Scores are linearly rescaled to [0, 1]; descending
    means smaller numbers are better (e.g. 5-level files where 1 is best).
    """
    lo, hi, direction = 0.0, 1.0, "ascending"
    rows = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for key, val in _META_RE.findall(line[1:]):
                    if key == "range":
                        lo_s, hi_s = val.split(":")
                        lo, hi = float(lo_s), float(hi_s)
                    elif key == "direction":
                        if val not in ("ascending", "descending"):
                            raise ValueError(f"unknown quality direction {val!r}")
                        direction = val
                continue
            rows.append(line)
    if lo >= hi:
        raise ValueError(f"declared range {lo}:{hi} is empty")
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or [c.strip() for c in header[:2]] != ["image_id", "score"]:
        raise ValueError(f"{manifest_path}: expected an 'image_id,score' header")
    out: dict[str, QualityScore] = {}
    for row in reader:
        if not row:
            continue
        image_id, raw = row[0].strip(), float(row[1])
        if image_id in out:
            raise ValueError(f"duplicate image id {image_id!r}")
        if not lo <= raw <= hi:
            raise ValueError(f"score {raw} for {image_id!r} outside declared range "
                             f"[{lo}, {hi}]")
        value = (raw - lo) / (hi - lo)
        if direction == "descending":
            value = 1.0 - value
        out[image_id] = QualityScore(value, f"external:{name}")
    if expected_ids is not None:
        missing = sorted(expected_ids - out.keys())
        if missing:
            raise ValueError(f"missing quality scores for {len(missing)} image(s): "
                             + ", ".join(missing[:10]))
    return out


def pair_quality(q_enrolled: QualityScore, q_input: QualityScore) -> float:
    """Geometric mean sqrt(Q_enrolled * Q_input) of a matching pair."""
    if q_enrolled.source != q_input.source:
        raise ValueError(f"cannot mix quality sources {q_enrolled.source!r} "
                         f"and {q_input.source!r}")
    return math.sqrt(q_enrolled.value * q_input.value)
