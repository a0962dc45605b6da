"""Grayscale raster type, intensity normalization, and PGM/PNG file I/O.

The canonical on-disk format is binary PGM (P5); 8-bit grayscale PNG is
accepted on input. PGM carries no resolution field, so dpi is stored in a
``# dpi N`` header comment and recovered on load (500 assumed otherwise).
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ImageFormatError

DEFAULT_DPI = 500

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster with dpi metadata.

    Pixels are a read-only ``(height, width)`` uint8 array in row-major
    order. Instances are immutable and safe to share across workers.
    """

    pixels: np.ndarray
    dpi: int = DEFAULT_DPI

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ImageFormatError(f"expected a 2-D raster, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ImageFormatError("zero dimensions")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.number):
                raise ImageFormatError(f"unsupported pixel dtype {px.dtype}")
            if px.min() < 0 or px.max() > 255:
                raise ImageFormatError("intensities outside [0, 255]")
            px = px.astype(np.uint8)
        else:
            px = px.copy()
        if int(self.dpi) <= 0:
            raise ValueError("dpi must be positive")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "dpi", int(self.dpi))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def as_float(self) -> np.ndarray:
        """Pixels as a writable float64 array."""
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class BlockGrid:
    """Row-major per-block payload over an image tiled by square blocks.

    ``values`` has shape (rows, cols) or (rows, cols, ...); rows/cols cover
    the source image with ceil division, so edge blocks may be partial.
    """

    block_size: int
    values: np.ndarray

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        v = np.asarray(self.values).copy()
        if v.ndim < 2:
            raise ValueError("values must be at least 2-D (rows, cols)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @staticmethod
    def shape_for(width: int, height: int, block_size: int) -> tuple[int, int]:
        """(rows, cols) of the grid covering a width x height image."""
        return (-(-height // block_size), -(-width // block_size))


def normalize_intensity(img: GrayImage, target_mean: float = 100.0,
                        target_var: float = 100.0) -> GrayImage:
    """Rescale intensities to a target mean and variance, clamped to [0, 255].

    Each pixel's deviation from the sample mean is scaled by
    sqrt(target_var / sample_var). A constant image maps to a constant
    raster at target_mean.
    """
    px = img.as_float()
    mean = px.mean()
    var = px.var()
    if var == 0.0:
        out = np.full_like(px, target_mean)
    else:
        out = target_mean + (px - mean) * np.sqrt(target_var / var)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return GrayImage(out, dpi=img.dpi)


def _read_pgm(data: bytes) -> GrayImage:
    pos = 2  # past "P5"
    fields: list[int] = []
    dpi = DEFAULT_DPI

    def skip_ws(p: int) -> int:
        nonlocal dpi
        while p < len(data):
            c = data[p:p + 1]
            if c == b"#":
                end = data.find(b"\n", p)
                if end < 0:
                    end = len(data)
                m = re.match(rb"#\s*dpi\s+(\d+)", data[p:end])
                if m:
                    dpi = int(m.group(1))
                p = end + 1
            elif c.isspace():
                p += 1
            else:
                break
        return p

    while len(fields) < 3:
        pos = skip_ws(pos)
        m = re.match(rb"\d+", data[pos:])
        if not m:
            raise ImageFormatError("malformed PGM header")
        fields.append(int(m.group(0)))
        pos += m.end()
    width, height, maxval = fields
    if width == 0 or height == 0:
        raise ImageFormatError("zero dimensions")
    if maxval != 255:
        raise ImageFormatError(f"unsupported bit depth (maxval {maxval})")
    pos += 1  # single whitespace byte before the raster
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise ImageFormatError("truncated PGM raster")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(px, dpi=dpi)


def _read_png(data: bytes) -> GrayImage:
    try:
        im = PILImage.open(io.BytesIO(data))
        im.load()
    except Exception as exc:
        raise ImageFormatError(f"unreadable PNG: {exc}") from exc
    if im.mode != "L":
        raise ImageFormatError(f"unsupported format: PNG mode {im.mode}, need 8-bit grayscale")
    if im.width == 0 or im.height == 0:
        raise ImageFormatError("zero dimensions")
    dpi_info = im.info.get("dpi")
    dpi = int(round(dpi_info[0])) if dpi_info and dpi_info[0] else DEFAULT_DPI
    return GrayImage(np.asarray(im, dtype=np.uint8), dpi=dpi)


def load_image(path: str | Path) -> GrayImage:
    """Load a PGM (P5) or 8-bit grayscale PNG file."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"unreadable file {p}: {exc}") from exc
    if data[:2] == b"P5":
        return _read_pgm(data)
    if data[:8] == _PNG_MAGIC:
        return _read_png(data)
    raise ImageFormatError(f"unsupported format: {p} is neither binary PGM nor PNG")


def save_image(img: GrayImage, path: str | Path) -> None:
    """Write a binary PGM (P5) with the dpi recorded as a header comment."""
    header = f"P5\n# dpi {img.dpi}\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())
