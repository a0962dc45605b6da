"""Seeded synthetic fingerprint generation and parameterized degradation.

Ridges are grown by iteratively filtering seeded noise with anisotropic
orientation-tuned kernels over a smooth synthetic orientation field, so
endings and bifurcations arise naturally. Every draw comes from numpy PCG64
streams: the base pattern uses SeedSequence([seed, 0]) and impression k's
jitter uses SeedSequence([seed, k]), making each (seed, impression) image
fully reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .image import GrayImage, save_image

WHORL = "whorl"
ARCH = "arch"

# background sits near the foreground mean so block variance, not the
# print/background contrast, dominates the image statistics
_BACKGROUND = 170.0
_FG_MEAN = 150.0
_RIDGE_AMPLITUDE = 90.0
_ORIENT_BINS = 16


@dataclass(frozen=True)
class SynthParams:
    seed: int
    width: int = 256
    height: int = 320
    ridge_period: float = 10.0
    orientation_model: str = WHORL
    jitter_translation: float = 12.0
    jitter_rotation_deg: float = 3.0
    dpi: int = 500

    def __post_init__(self):
        if self.ridge_period < 4:
            raise ValueError("ridge_period must be at least 4 pixels")
        if self.jitter_translation < 0 or self.jitter_rotation_deg < 0:
            raise ValueError("jitter bounds must be non-negative")
        if self.orientation_model not in (WHORL, ARCH):
            raise ValueError(f"unknown orientation model {self.orientation_model!r}")


@dataclass(frozen=True)
class DegradeSpec:
    """One degradation level; operators apply blur -> contrast -> blobs -> noise."""

    level: int
    blur_radius: float = 0.0
    contrast: float = 1.0
    blob_density: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError("contrast scale must be in (0, 1]")
        if self.level == 0 and (self.blur_radius or self.contrast != 1.0
                                or self.blob_density or self.noise_sigma):
            raise ValueError("level 0 must be the identity")


def degrade_ladder(levels: int = 5) -> list[DegradeSpec]:
    """Default per-level magnitudes; level 0 is the identity."""
    specs = []
    for lv in range(levels):
        specs.append(DegradeSpec(
            level=lv,
            blur_radius=0.35 * lv,
            contrast=1.0 - 0.08 * lv,
            blob_density=0.010 * lv,
            noise_sigma=8.0 * lv,
        ))
    return specs


def _synthesis_kernels(period: float) -> np.ndarray:
    """Anisotropic orientation-tuned kernels for ridge growth, one per bin."""
    sigma_u = 0.4 * period   # across the ridges
    sigma_v = 0.8 * period   # along the ridges
    half = int(math.ceil(2.0 * sigma_v))
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(float)
    out = np.empty((_ORIENT_BINS, 2 * half + 1, 2 * half + 1))
    for q in range(_ORIENT_BINS):
        phi = q * np.pi / _ORIENT_BINS
        u = -x * np.sin(phi) + y * np.cos(phi)
        v = x * np.cos(phi) + y * np.sin(phi)
        env = np.exp(-0.5 * (u ** 2 / sigma_u ** 2 + v ** 2 / sigma_v ** 2))
        kern = env * np.cos(2.0 * np.pi * u / period)
        kern -= kern.mean()
        out[q] = kern
    return out


def _orientation_field(params: SynthParams, shape: tuple[int, int],
                       rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(float)
    cx = w / 2.0 + rng.uniform(-0.15, 0.15) * params.width
    cy = h / 2.0 + rng.uniform(-0.15, 0.15) * params.height
    if params.orientation_model == WHORL:
        theta = np.arctan2(y - cy, x - cx) + np.pi / 2.0
    else:
        curvature = rng.uniform(2.0, 3.0) / params.width
        theta = np.arctan(curvature * (x - cx))
    wobble = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=24.0)
    wobble *= 0.35 / max(wobble.std(), 1e-12)
    return np.mod(theta + wobble, np.pi)


def _grow_ridges(theta: np.ndarray, rng: np.random.Generator,
                 period: float, iterations: int = 3) -> np.ndarray:
    """Iterated oriented filtering of seeded noise; returns values in [-1, 1]."""
    kernels = _synthesis_kernels(period)
    img = rng.standard_normal(theta.shape)
    pos = theta / (np.pi / _ORIENT_BINS)
    lo = np.floor(pos).astype(int) % _ORIENT_BINS
    hi = (lo + 1) % _ORIENT_BINS
    frac = pos - np.floor(pos)
    iy, ix = np.indices(theta.shape)
    for _ in range(iterations):
        resp = np.stack([fftconvolve(img, k, mode="same") for k in kernels])
        img = (1.0 - frac) * resp[lo, iy, ix] + frac * resp[hi, iy, ix]
        img /= max(img.std(), 1e-12)
    return np.tanh(2.5 * img)


def _vignette(params: SynthParams, shape: tuple[int, int]) -> np.ndarray:
    """Soft elliptical foreground weight in [0, 1], centered on the pattern."""
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(float)
    rx = 0.46 * params.width
    ry = 0.48 * params.height
    rho = np.sqrt(((x - w / 2.0) / rx) ** 2 + ((y - h / 2.0) / ry) ** 2)
    return np.clip((1.1 - rho) / 0.2, 0.0, 1.0)


def _pattern_margin(params: SynthParams) -> int:
    return int(math.ceil(params.jitter_translation)) + 16


@lru_cache(maxsize=16)
def _base_pattern(params: SynthParams) -> np.ndarray:
    """Float base raster (padded by the jitter margin), shared by impressions."""
    margin = _pattern_margin(params)
    shape = (params.height + 2 * margin, params.width + 2 * margin)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([params.seed, 0])))
    theta = _orientation_field(params, shape, rng)
    ridges = _grow_ridges(theta, rng, params.ridge_period)
    fg = _vignette(params, shape)
    base = _BACKGROUND - fg * (_BACKGROUND - _FG_MEAN + _RIDGE_AMPLITUDE * ridges)
    base.setflags(write=False)
    return base


def generate_fingerprint(params: SynthParams, impression: int) -> GrayImage:
    """Deterministic impression of a synthetic finger.

    Impressions of one seed share the ridge pattern and differ by a seeded
    rigid jitter (translation plus small rotation), mimicking repeated
    placements on a sensor.
    """
    if impression < 1:
        raise ValueError("impression indices start at 1")
    base = _base_pattern(params)
    margin = _pattern_margin(params)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([params.seed, impression])))
    tx, ty = rng.uniform(-params.jitter_translation, params.jitter_translation, 2)
    angle = math.radians(rng.uniform(-params.jitter_rotation_deg,
                                     params.jitter_rotation_deg))

    # out(q) = base(Rinv @ (q - c - t) + c), all in (row, col) coordinates
    c = np.array([base.shape[0] / 2.0, base.shape[1] / 2.0])
    t = np.array([ty, tx])
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    rinv = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    offset = c - rinv @ (c + t)
    warped = ndimage.affine_transform(base, rinv, offset=offset, order=1,
                                      mode="constant", cval=_BACKGROUND)
    crop = warped[margin:margin + params.height, margin:margin + params.width]
    px = np.clip(np.rint(crop), 0, 255).astype(np.uint8)
    return GrayImage(px, dpi=params.dpi)


def degrade(img: GrayImage, spec: DegradeSpec, seed: int) -> GrayImage:
    """Apply one degradation level; deterministic for (img, spec, seed)."""
    if spec.level == 0:
        return img
    px = img.as_float()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    if spec.blur_radius > 0:
        px = ndimage.gaussian_filter(px, sigma=spec.blur_radius)
    if spec.contrast < 1.0:
        mean = px.mean()
        px = mean + spec.contrast * (px - mean)
    if spec.blob_density > 0:
        h, w = px.shape
        mean_area = math.pi * 6.0 ** 2
        count = int(round(spec.blob_density * h * w / mean_area))
        for _ in range(count):
            by = rng.uniform(0, h)
            bx = rng.uniform(0, w)
            radius = rng.uniform(3.0, 9.0)
            y0, y1 = max(0, int(by - radius) - 1), min(h, int(by + radius) + 2)
            x0, x1 = max(0, int(bx - radius) - 1), min(w, int(bx + radius) + 2)
            yy, xx = np.mgrid[y0:y1, x0:x1]
            disk = (yy - by) ** 2 + (xx - bx) ** 2 <= radius ** 2
            patch = px[y0:y1, x0:x1]
            patch[disk] = 0.15 * patch[disk] + 0.85 * _BACKGROUND
    if spec.noise_sigma > 0:
        px = px + rng.normal(0.0, spec.noise_sigma, px.shape)
    out = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    return GrayImage(out, dpi=img.dpi)


@dataclass(frozen=True)
class CorpusImage:
    image_id: str
    finger_id: str
    impression: int
    level: int
    image: GrayImage


def finger_seed(corpus_seed: int, finger_index: int) -> int:
    """Well-mixed per-finger seed derived from the corpus seed."""
    ss = np.random.SeedSequence([corpus_seed, finger_index])
    return int(ss.generate_state(1)[0])


def make_corpus(n_fingers: int, impressions: int, seed: int,
                levels: int = 5, params: SynthParams | None = None,
                ladder: list[DegradeSpec] | None = None) -> list[CorpusImage]:
    """Generate a degradation-graded corpus.

    Finger f (0-based) receives degradation level (f * levels) // n_fingers,
    giving equal-size level bands; every impression of a finger is degraded
    at that finger's level with its own derived seed.
    """
    if n_fingers < 2 or impressions < 2:
        raise ValueError("need at least 2 fingers and 2 impressions")
    ladder = ladder if ladder is not None else degrade_ladder(levels)
    if len(ladder) < levels:
        raise ValueError("degradation ladder shorter than requested levels")
    out = []
    for f in range(n_fingers):
        level = (f * levels) // n_fingers
        base = params or SynthParams(seed=0)
        fparams = SynthParams(seed=finger_seed(seed, f), width=base.width,
                              height=base.height, ridge_period=base.ridge_period,
                              orientation_model=base.orientation_model,
                              jitter_translation=base.jitter_translation,
                              jitter_rotation_deg=base.jitter_rotation_deg,
                              dpi=base.dpi)
        finger_id = f"f{f:03d}"
        for imp in range(1, impressions + 1):
            img = generate_fingerprint(fparams, imp)
            dseed = int(np.random.SeedSequence([seed, f, imp, 7]).generate_state(1)[0])
            img = degrade(img, ladder[level], dseed)
            out.append(CorpusImage(f"{finger_id}_i{imp}", finger_id, imp, level, img))
    return out


def write_corpus(corpus: list[CorpusImage], out_dir: str | Path) -> Path:
    """Write PGMs plus a manifest CSV; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "path", "finger_id", "impression"])
        for item in corpus:
            filename = f"{item.image_id}.pgm"
            save_image(item.image, out / filename)
            writer.writerow([item.image_id, filename, item.finger_id, item.impression])
    return manifest
