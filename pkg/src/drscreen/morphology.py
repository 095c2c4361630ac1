"""Flat grayscale/binary morphology, thresholding, and region measurement.

Dilation and erosion are neighborhood max/min with edge-replicated
borders. Disc kernels are decomposed into per-row horizontal segments so
every pass is a 1-D sliding extremum; square kernels are fully separable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class StructuringElement:
    """Flat kernel: a square or a rasterized disc of the given radius."""

    shape: str = "disc"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("square", "disc"):
            raise InvalidInputError(f"unknown kernel shape: {self.shape}")
        if self.radius < 0:
            raise InvalidInputError("kernel radius must be >= 0")

    def offsets(self) -> list[tuple[int, int]]:
        """All (dy, dx) contained in the kernel; used by oracles."""
        r = self.radius
        out = []
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if self.shape == "square" or dx * dx + dy * dy <= r * r:
                    out.append((dy, dx))
        return out


def _row_half_widths(se: StructuringElement) -> list[tuple[int, int]]:
    """(dy, half-width) pairs of the kernel's horizontal runs."""
    r = se.radius
    if se.shape == "square":
        return [(dy, r) for dy in range(-r, r + 1)]
    return [(dy, int(np.floor(np.sqrt(r * r - dy * dy)))) for dy in range(-r, r + 1)]


def _extremum(img: np.ndarray, se: StructuringElement, maximum: bool) -> np.ndarray:
    was_bool = img.dtype == bool
    work = img.astype(np.uint8) if was_bool else np.asarray(img, dtype=np.float64)
    if se.radius == 0:
        return work.astype(bool) if was_bool else work.copy()
    filt = ndimage.maximum_filter1d if maximum else ndimage.minimum_filter1d
    if se.shape == "square":
        size = 2 * se.radius + 1
        out = filt(filt(work, size=size, axis=0, mode="nearest"), size=size, axis=1, mode="nearest")
    else:
        r = se.radius
        h = work.shape[0]
        padded = np.pad(work, ((r, r), (0, 0)), mode="edge")
        out = None
        for dy, wx in _row_half_widths(se):
            rows = padded[r + dy : r + dy + h]
            band = filt(rows, size=2 * wx + 1, axis=1, mode="nearest") if wx > 0 else rows
            if out is None:
                out = band.copy()
            elif maximum:
                np.maximum(out, band, out=out)
            else:
                np.minimum(out, band, out=out)
    return out.astype(bool) if was_bool else out


def dilate(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Neighborhood maximum (boolean OR on masks)."""
    return _extremum(img, se, maximum=True)


def erode(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Neighborhood minimum (boolean AND on masks)."""
    return _extremum(img, se, maximum=False)


def close(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Fill dark structures narrower than the kernel: erode(dilate(img))."""
    return erode(dilate(img, se), se)


def open_(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Remove bright structures narrower than the kernel: dilate(erode(img))."""
    return dilate(erode(img, se), se)


def threshold(img: np.ndarray, t: float, polarity: str = "above") -> np.ndarray:
    """Strict comparison mask: sample > t ("above") or sample < t ("below")."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("threshold must lie in [0, 1]")
    if polarity == "above":
        return img > t
    if polarity == "below":
        return img < t
    raise InvalidInputError(f"unknown polarity: {polarity}")


@dataclass
class Region:
    """A connected pixel set with optional measured shape properties.

    ``pixels`` is an (N, 2) array of (y, x) coordinates. ``centroid`` and
    ``bbox`` use (x, y) order; ``bbox`` is inclusive (x0, y0, x1, y1).
    """

    pixels: np.ndarray
    area: int = field(init=False)
    centroid: tuple[float, float] = field(init=False)
    bbox: tuple[int, int, int, int] = field(init=False)
    ovalness: float | None = None
    mean_width: float | None = None
    mean_intensity: float | None = None

    def __post_init__(self):
        if self.pixels.size == 0:
            raise InvalidInputError("region must contain at least one pixel")
        self.area = int(self.pixels.shape[0])
        ys = self.pixels[:, 0]
        xs = self.pixels[:, 1]
        self.centroid = (float(xs.mean()), float(ys.mean()))
        self.bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))

    @property
    def equivalent_diameter(self) -> float:
        return 2.0 * float(np.sqrt(self.area / np.pi))

    def to_mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.pixels[:, 0], self.pixels[:, 1]] = True
        return m

    def patch(self) -> tuple[np.ndarray, int, int]:
        """Local boolean patch with a 1-px background margin, plus its origin."""
        x0, y0, x1, y1 = self.bbox
        p = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
        p[self.pixels[:, 0] - y0 + 1, self.pixels[:, 1] - x0 + 1] = True
        return p, x0 - 1, y0 - 1


def connected_components(mask: np.ndarray) -> list[Region]:
    """8-connected partition of the set bits, in raster-scan order."""
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    regions = []
    objs = ndimage.find_objects(labels)
    for lab, sl in enumerate(objs, start=1):
        ys, xs = np.nonzero(labels[sl] == lab)
        pts = np.column_stack([ys + sl[0].start, xs + sl[1].start])
        regions.append(Region(pixels=pts))
    return regions


def threshold_scan(
    img: np.ndarray, levels: list[float], polarity: str, roi: np.ndarray
) -> list[tuple[float, list[Region]]]:
    """Components of ``threshold(img, level) & roi`` for each level.

    Levels must be strictly monotone; successive levels then nest, so a
    region found at a stricter level is contained in exactly one region
    at the next looser level.
    """
    if len(levels) == 0:
        return []
    diffs = np.diff(levels)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise InvalidInputError("threshold levels must be strictly monotone")
    if not roi.any():
        raise InvalidInputError("roi selects no pixels")
    out = []
    for t in levels:
        mask = threshold(img, t, polarity) & roi
        out.append((float(t), connected_components(mask)))
    return out


def _exposed_edges(patch: np.ndarray) -> int:
    """Count of region-pixel faces touching background (4-neighborhood)."""
    e = 0
    e += int((patch[1:, :] & ~patch[:-1, :]).sum() + (patch[:-1, :] & ~patch[1:, :]).sum())
    e += int((patch[:, 1:] & ~patch[:, :-1]).sum() + (patch[:, :-1] & ~patch[:, 1:]).sum())
    return e


def region_props(region: Region, img: np.ndarray | None = None) -> Region:
    """Measure shape: isoperimetric ovalness, mean width, mean intensity.

    Perimeter is estimated as pi/4 times the exposed-edge count (Crofton
    two-direction correction), which is asymptotically exact for discs.
    Width is twice the mean Euclidean distance to background over the
    region's pixels.
    """
    patch, ox, oy = region.patch()
    edges = _exposed_edges(patch)
    perimeter = edges * np.pi / 4.0
    ovalness = min(1.0, 4.0 * np.pi * region.area / (perimeter * perimeter))
    dist = ndimage.distance_transform_edt(patch)
    mean_width = 2.0 * float(dist[patch].mean())
    mean_intensity = None
    if img is not None:
        mean_intensity = float(img[region.pixels[:, 0], region.pixels[:, 1]].mean())
    return replace(
        region, ovalness=float(ovalness), mean_width=mean_width, mean_intensity=mean_intensity
    )
