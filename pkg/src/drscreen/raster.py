"""Image containers and intensity primitives.

Color images are 8-bit RGB rasters; the working channel used by the
detection stages is a single float plane normalized to [0, 1]. All
functions here are pure: inputs are never modified.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidInputError

_ACCEPTED_FORMATS = {"PNG", "JPEG"}


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster, shape (height, width, 3)."""

    rgb: np.ndarray

    def __post_init__(self):
        a = self.rgb
        if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
            raise InvalidInputError("RasterImage requires a (H, W, 3) uint8 array")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise InvalidInputError("image dimensions must be positive")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def red(self) -> np.ndarray:
        return self.rgb[:, :, 0]

    @property
    def green(self) -> np.ndarray:
        return self.rgb[:, :, 1]

    @property
    def blue(self) -> np.ndarray:
        return self.rgb[:, :, 2]


@dataclass(frozen=True)
class ChannelWeights:
    """Per-channel fusion weights; all >= 0 and not all zero."""

    w_red: float = 0.0
    w_green: float = 1.0
    w_blue: float = 0.4

    def validate(self):
        ws = (self.w_red, self.w_green, self.w_blue)
        if any(w < 0 for w in ws):
            raise InvalidInputError("channel weights must be non-negative")
        if sum(ws) == 0:
            raise InvalidInputError("channel weights must not all be zero")


def decode_image(data: bytes) -> RasterImage:
    """Decode a PNG or JPEG payload into an RGB raster."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            fmt = im.format
            if fmt not in _ACCEPTED_FORMATS:
                raise DecodeError(f"unsupported image format: {fmt}")
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(f"malformed image payload: {exc}") from exc
    if rgb.ndim != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
        raise InvalidInputError("decoded image has zero dimension")
    return RasterImage(rgb)


def encode_png(img: RasterImage) -> bytes:
    """Encode a raster losslessly as PNG."""
    buf = io.BytesIO()
    Image.fromarray(img.rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def gray_to_png16(gray: np.ndarray) -> bytes:
    """Dump a [0,1] float plane as 16-bit grayscale PNG (scaled by 65535)."""
    scaled = np.clip(np.rint(gray * 65535.0), 0, 65535).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(scaled).save(buf, format="PNG")
    return buf.getvalue()


def fuse_channels(img: RasterImage, weights: ChannelWeights | None = None) -> np.ndarray:
    """Collapse RGB to one [0,1] plane as a normalized weighted sum.

    gray = (w_r*R + w_g*G + w_b*B) / (255 * (w_r + w_g + w_b))
    """
    w = weights if weights is not None else ChannelWeights()
    w.validate()
    total = w.w_red + w.w_green + w.w_blue
    rgb = img.rgb.astype(np.float64)
    gray = (w.w_red * rgb[:, :, 0] + w.w_green * rgb[:, :, 1] + w.w_blue * rgb[:, :, 2])
    return gray / (255.0 * total)


def smooth(gray: np.ndarray, radius: int) -> np.ndarray:
    """Separable mean filter of window (2*radius+1), edge-replicated borders.

    radius 0 returns a copy of the input.
    """
    if radius < 0:
        raise InvalidInputError("blur radius must be >= 0")
    if radius == 0:
        return gray.copy()
    h, w = gray.shape
    r = int(radius)
    padded = np.pad(gray.astype(np.float64), r, mode="edge")
    # Integral image with a leading zero row/column so window sums are
    # pure subtractions.
    integ = np.zeros((h + 2 * r + 1, w + 2 * r + 1), dtype=np.float64)
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=integ[1:, 1:])
    k = 2 * r + 1
    win = (
        integ[k:, k:]
        - integ[:-k, k:]
        - integ[k:, :-k]
        + integ[:-k, :-k]
    )
    return win / (k * k)


def subtract_background(gray: np.ndarray, radius: int) -> np.ndarray:
    """Remove the local mean so mid-gray marks zero local contrast.

    out = clamp(img - smooth(img, radius) + 0.5, 0, 1)
    """
    if radius < 1:
        raise InvalidInputError("background radius must be >= 1")
    return np.clip(gray - smooth(gray, radius) + 0.5, 0.0, 1.0)


def equalize_histogram(
    gray: np.ndarray, bins: int = 256, field_mask: np.ndarray | None = None
) -> np.ndarray:
    """Remap intensities by their CDF, computed over ``field_mask`` pixels.

    When a mask is given, only masked pixels are remapped; the rest keep
    their original value (the black surround stays black). Rank order of
    distinct values is never inverted.
    """
    if bins < 2:
        raise InvalidInputError("need at least 2 histogram bins")
    if field_mask is None:
        sel = gray
    else:
        sel = gray[field_mask]
        if sel.size == 0:
            raise InvalidInputError("field mask selects no pixels")
    idx = np.minimum((sel * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx.ravel(), minlength=bins)
    cdf = np.cumsum(counts) / sel.size
    all_idx = np.minimum((gray * bins).astype(np.int64), bins - 1)
    mapped = cdf[all_idx]
    if field_mask is None:
        return mapped
    out = gray.copy()
    out[field_mask] = mapped[field_mask]
    return out


def adjust_levels(
    img: RasterImage, saturation_gain: float = 1.0, contrast_gain: float = 1.0
) -> RasterImage:
    """Scale chroma about per-pixel luma and contrast about mid-gray 128."""
    if saturation_gain <= 0 or contrast_gain <= 0:
        raise InvalidInputError("gains must be positive")
    if saturation_gain == 1.0 and contrast_gain == 1.0:
        return RasterImage(img.rgb.copy())
    rgb = img.rgb.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    out = luma[:, :, None] + (rgb - luma[:, :, None]) * saturation_gain
    out = 128.0 + (out - 128.0) * contrast_gain
    return RasterImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def luma(img: RasterImage) -> np.ndarray:
    """Rec.601 luma normalized to [0,1]."""
    rgb = img.rgb.astype(np.float64)
    return (0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]) / 255.0
