"""Per-image processing chains shared by the CLI and the evaluation driver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .config import RunConfig
from .errors import EmptyForegroundError
from .image import GrayImage, normalize_intensity
from .minutiae import MatchParams, MinutiaeTemplate, extract_minutiae
from .preprocessing import (ForegroundMask, OrientationField, binarize_and_thin,
                            estimate_orientation, estimate_ridge_frequency, segment)
from .quality import QualityScore, global_quality, local_quality
from .ridge import (GaborBank, ProbeAssets, RidgeFeatureMap, RidgeParams,
                    extract_ridge_features)


def make_bank(cfg: RunConfig, frequency: float | None = None) -> GaborBank:
    return GaborBank(orientations=cfg.gabor_orientations,
                     frequency=frequency or cfg.gabor_frequency,
                     sigma_x=cfg.gabor_sigma_x, sigma_y=cfg.gabor_sigma_y,
                     kernel_size=cfg.gabor_kernel_size)


def make_match_params(cfg: RunConfig) -> MatchParams:
    return MatchParams(
        min_distance=cfg.minutiae_min_distance,
        trace_length=cfg.minutiae_trace_length,
        ref_angle_tolerance_deg=cfg.ref_angle_tolerance_deg,
        tol_radius=cfg.match_tol_radius,
        tol_azimuth_deg=cfg.match_tol_azimuth_deg,
        tol_direction_deg=cfg.match_tol_direction_deg,
        weight_radius=cfg.match_weight_radius,
        weight_azimuth=cfg.match_weight_azimuth,
        weight_direction=cfg.match_weight_direction,
        skip_penalty=cfg.match_skip_penalty,
        ref_pair_cap=cfg.ref_pair_cap or None,
        c_m=cfg.c_m,
    )


def make_ridge_params(cfg: RunConfig) -> RidgeParams:
    return RidgeParams(cell_size=cfg.cell_size, search_radius=cfg.search_radius,
                       step=cfg.search_step, min_overlap=cfg.min_overlap, c_r=cfg.c_r)


@dataclass(frozen=True)
class Preprocessed:
    image: GrayImage            # intensity-normalized
    mask: ForegroundMask
    field: OrientationField


def preprocess(img: GrayImage, cfg: RunConfig = RunConfig()) -> Preprocessed:
    """Normalization, segmentation, and orientation estimation."""
    norm = normalize_intensity(img, cfg.target_mean, cfg.target_var)
    mask = segment(norm, cfg.block_size, cfg.var_threshold)
    field = estimate_orientation(norm, cfg.block_size)
    return Preprocessed(norm, mask, field)


def _oriented_smooth(img: GrayImage, field: OrientationField) -> GrayImage:
    """Anisotropic smoothing along the local ridge orientation (enhancement)."""
    bins = 8
    px = img.as_float()
    half = 6
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(float)
    responses = []
    for q in range(bins):
        phi = q * np.pi / bins
        u = -x * np.sin(phi) + y * np.cos(phi)
        v = x * np.cos(phi) + y * np.sin(phi)
        kern = np.exp(-0.5 * (u ** 2 / 1.0 ** 2 + v ** 2 / 4.0 ** 2))
        kern /= kern.sum()
        responses.append(fftconvolve(px, kern, mode="same"))
    resp = np.stack(responses)
    bs = field.block_size
    theta = np.repeat(np.repeat(field.theta, bs, axis=0), bs, axis=1)
    theta = theta[:img.height, :img.width]
    pos = theta / (np.pi / bins)
    lo = np.floor(pos).astype(int) % bins
    hi = (lo + 1) % bins
    frac = pos - np.floor(pos)
    iy, ix = np.indices(px.shape)
    out = (1.0 - frac) * resp[lo, iy, ix] + frac * resp[hi, iy, ix]
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8), dpi=img.dpi)


def minutiae_from_image(img: GrayImage, cfg: RunConfig = RunConfig(),
                        pre: Preprocessed | None = None) -> MinutiaeTemplate:
    """Minutiae pipeline: normalize, segment, orient, binarize, thin, extract."""
    pre = pre or preprocess(img, cfg)
    if not pre.mask.any_foreground():
        raise EmptyForegroundError()
    work = pre.image
    if cfg.enhance:
        work = _oriented_smooth(work, pre.field)
    skel = binarize_and_thin(work, pre.field, pre.mask)
    return extract_minutiae(skel, pre.mask, make_match_params(cfg))


def bank_for_image(img: GrayImage, cfg: RunConfig,
                   pre: Preprocessed | None = None) -> GaborBank:
    """Bank at the configured frequency, or the image's estimated median."""
    if not cfg.use_estimated_frequency:
        return make_bank(cfg)
    pre = pre or preprocess(img, cfg)
    if not pre.mask.any_foreground():
        raise EmptyForegroundError()
    freq = estimate_ridge_frequency(pre.image, pre.field, pre.mask)
    fg = pre.mask.blocks
    median = float(np.median(freq.values[fg]))
    return make_bank(cfg, frequency=min(max(median, 0.02), 0.5))


def ridge_map_from_image(img: GrayImage, cfg: RunConfig = RunConfig(),
                         bank: GaborBank | None = None,
                         pre: Preprocessed | None = None) -> RidgeFeatureMap:
    pre = pre or preprocess(img, cfg)
    bank = bank or make_bank(cfg)
    return extract_ridge_features(pre.image, pre.mask, bank, cfg.cell_size)


def probe_assets_from_image(img: GrayImage, cfg: RunConfig = RunConfig(),
                            bank: GaborBank | None = None,
                            pre: Preprocessed | None = None) -> ProbeAssets:
    pre = pre or preprocess(img, cfg)
    bank = bank or make_bank(cfg)
    return ProbeAssets.from_image(pre.image, pre.mask, bank, cfg.cell_size)


def quality_of_image(img: GrayImage, measure: str, cfg: RunConfig = RunConfig(),
                     pre: Preprocessed | None = None) -> QualityScore:
    """Compute the "local" or "global" quality of one image."""
    pre = pre or preprocess(img, cfg)
    if measure == "local":
        return local_quality(pre.image, pre.mask, pre.field,
                             q_width=cfg.q_width or None)
    if measure == "global":
        return global_quality(pre.image, pre.mask, cfg.ring_count,
                              cfg.f_min, cfg.f_max)
    raise ValueError(f"unknown computed quality measure {measure!r}")
