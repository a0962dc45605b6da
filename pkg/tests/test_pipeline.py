import numpy as np
import pytest

from fpkit.config import RunConfig, apply_overrides
from fpkit.errors import EmptyForegroundError
from fpkit.pipeline import (bank_for_image, minutiae_from_image, preprocess,
                            quality_of_image)
from fpkit.synth import SynthParams, finger_seed, generate_fingerprint

from conftest import vertical_grating

CFG = RunConfig()


def test_preprocess_produces_consistent_shapes():
    img = generate_fingerprint(SynthParams(seed=finger_seed(700, 0)), 1)
    pre = preprocess(img, CFG)
    assert pre.image.pixels.shape == img.pixels.shape
    assert pre.mask.blocks.shape == pre.field.theta.shape


def test_estimated_frequency_bank_tracks_ridge_period():
    cfg = apply_overrides(CFG, {"use_estimated_frequency": "true"})
    img = vertical_grating(192, 192, period=8, amplitude=80)
    bank = bank_for_image(img, cfg)
    assert abs(bank.frequency - 0.125) <= 0.01
    # flag off: the configured frequency wins
    assert bank_for_image(img, CFG).frequency == CFG.gabor_frequency


def test_estimated_frequency_requires_foreground():
    cfg = apply_overrides(CFG, {"use_estimated_frequency": "true"})
    flat = generate_fingerprint(SynthParams(seed=1), 1)
    from fpkit.image import GrayImage
    with pytest.raises(EmptyForegroundError):
        bank_for_image(GrayImage(np.full((96, 96), 7, dtype=np.uint8)), cfg)


def test_oriented_enhancement_is_off_by_default_and_usable():
    assert CFG.enhance is False
    img = generate_fingerprint(SynthParams(seed=finger_seed(700, 1)), 1)
    plain = minutiae_from_image(img, CFG)
    enhanced_cfg = apply_overrides(CFG, {"enhance": "true"})
    enhanced = minutiae_from_image(img, enhanced_cfg)
    assert len(plain) > 0
    assert len(enhanced) > 0
    # smoothing must not explode the minutiae count with spurious points
    assert len(enhanced) <= 2 * len(plain) + 10


def test_quality_of_image_dispatch():
    img = vertical_grating(160, 160, period=10, amplitude=80)
    local = quality_of_image(img, "local", CFG)
    glob = quality_of_image(img, "global", CFG)
    assert local.source == "local" and 0 <= local.value <= 1
    assert glob.source == "global" and glob.value >= 0.7
    with pytest.raises(ValueError):
        quality_of_image(img, "nist", CFG)
