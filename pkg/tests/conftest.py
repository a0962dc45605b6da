"""Shared synthetic inputs for the test suite."""

import numpy as np
import pytest
from hypothesis import settings

from fpkit.image import BlockGrid, GrayImage
from fpkit.preprocessing import ForegroundMask

# keep property-based runs reproducible across machines and reruns
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


def make_grating(width=160, height=160, period=10.0, angle=0.0,
                 amplitude=80.0, mean=128.0, phase=0.0, dpi=500):
    """Sinusoidal grating; angle is the ridge orientation (0 = horizontal flow).

    Intensity varies along the normal of `angle`, so angle=pi/2 gives
    vertical ridges (intensity varying along x).
    """
    y, x = np.mgrid[0:height, 0:width].astype(float)
    u = -x * np.sin(angle) + y * np.cos(angle)  # coordinate across the ridges
    px = mean + amplitude * np.sin(2.0 * np.pi * u / period + phase)
    return GrayImage(np.clip(np.rint(px), 0, 255).astype(np.uint8), dpi=dpi)


def vertical_grating(width=160, height=160, period=10.0, amplitude=80.0,
                     mean=128.0):
    """Grating with vertical ridge flow: I = mean + A*sin(2*pi*x/period)."""
    return make_grating(width, height, period, angle=np.pi / 2.0,
                        amplitude=amplitude, mean=mean)


def full_mask(img: GrayImage, block_size=16) -> ForegroundMask:
    rows, cols = BlockGrid.shape_for(img.width, img.height, block_size)
    return ForegroundMask(BlockGrid(block_size, np.ones((rows, cols), dtype=bool)))


@pytest.fixture(scope="session")
def clean_finger_images():
    """Two impressions of one synthetic finger plus one unrelated finger."""
    from fpkit.synth import SynthParams, generate_fingerprint, finger_seed

    pa = SynthParams(seed=finger_seed(100, 0))
    pb = SynthParams(seed=finger_seed(100, 1))
    return (generate_fingerprint(pa, 1), generate_fingerprint(pa, 2),
            generate_fingerprint(pb, 1))
