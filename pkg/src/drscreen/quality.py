"""Information-field detection, cropping, and acquisition-defect gating.

An ophthalmoscope frame is a bright circular field on a black surround.
This module finds that circle, trims it to 90% of its radius to drop rim
artifacts, scans for exposure/blur/occlusion defects, crops defective
top/bottom bands, and rejects frames that lose more than 30% of their
field area or carry a global defect.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .errors import FieldDetectionError
from .morphology import connected_components, region_props
from .raster import RasterImage, luma

OVEREXPOSURE = "overexposure"
UNDEREXPOSURE = "underexposure"
RAINBOW = "rainbow-artifact"
EYELASH = "eyelash-occlusion"
BLUR = "blur"
BAD_GEOMETRY = "bad-geometry"

_CROPPABLE = {OVEREXPOSURE, UNDEREXPOSURE, EYELASH, RAINBOW}


@dataclass(frozen=True)
class FieldGeometry:
    """Circle bounding the imaged area: center (cx, cy) and radius, in pixels."""

    cx: float
    cy: float
    radius: float

    def distance_sq(self, shape: tuple[int, int]) -> np.ndarray:
        yy, xx = np.ogrid[0 : shape[0], 0 : shape[1]]
        return (xx - self.cx) ** 2 + (yy - self.cy) ** 2

    def mask(self, shape: tuple[int, int], scale: float = 1.0) -> np.ndarray:
        return self.distance_sq(shape) <= (scale * self.radius) ** 2


@dataclass
class Defect:
    kind: str
    location: str  # top | bottom | global
    severity: float
    rows: tuple[int, int] | None = None  # inclusive row band, for croppable kinds

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "location": self.location, "severity": self.severity}
        if self.rows is not None:
            d["rows"] = list(self.rows)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Defect":
        rows = tuple(d["rows"]) if d.get("rows") is not None else None
        return cls(d["kind"], d["location"], d["severity"], rows)


@dataclass
class QualityReport:
    defects: list[Defect] = dc_field(default_factory=list)
    crop_top: int = 0
    crop_bottom: int = 0
    retained_fraction: float = 1.0
    accepted: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "defects": [d.to_dict() for d in self.defects],
            "crop_top": self.crop_top,
            "crop_bottom": self.crop_bottom,
            "retained_fraction": self.retained_fraction,
            "accepted": self.accepted,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        return cls(
            defects=[Defect.from_dict(x) for x in d.get("defects", [])],
            crop_top=d["crop_top"],
            crop_bottom=d["crop_bottom"],
            retained_fraction=d["retained_fraction"],
            accepted=d["accepted"],
            reason=d["reason"],
        )


def _min_enclosing_circle(points: np.ndarray) -> tuple[float, float, float]:
    """Smallest circle covering all points, by shuffled incremental insertion."""

    def circle_two(a, b):
        c = (a + b) / 2.0
        return c[0], c[1], float(np.hypot(*(a - b)) / 2.0)

    def circle_three(a, b, c):
        ax, ay = a
        bx, by = b
        cx, cy = c
        d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(d) < 1e-12:
            return None
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
        return ux, uy, float(np.hypot(ax - ux, ay - uy))

    def inside(circ, p, eps=1e-7):
        return np.hypot(p[0] - circ[0], p[1] - circ[1]) <= circ[2] + eps

    pts = points[np.random.default_rng(0).permutation(len(points))]
    circ = (pts[0][0], pts[0][1], 0.0)
    for i in range(1, len(pts)):
        if inside(circ, pts[i]):
            continue
        circ = (pts[i][0], pts[i][1], 0.0)
        for j in range(i):
            if inside(circ, pts[j]):
                continue
            circ = circle_two(pts[i], pts[j])
            for k in range(j):
                if inside(circ, pts[k]):
                    continue
                c3 = circle_three(pts[i], pts[j], pts[k])
                if c3 is not None:
                    circ = c3
    return circ


def detect_field(
    img: RasterImage, luma_floor: float = 0.04, full_frame_fraction: float = 0.95
) -> FieldGeometry:
    """Find the circle separating the imaged area from the black surround.

    Thresholds luma at ``luma_floor``, takes the largest bright component,
    and fits its minimal enclosing circle. A frame that is almost entirely
    bright has no detectable surround and falls back to the inscribed
    circle of the raster.
    """
    lum = luma(img)
    bright = lum > luma_floor
    if not bright.any():
        raise FieldDetectionError("no bright pixels above the luma floor")
    h, w = lum.shape
    if bright.mean() >= full_frame_fraction:
        return FieldGeometry((w - 1) / 2.0, (h - 1) / 2.0, min(w, h) / 2.0)
    labels, n = ndimage.label(bright, structure=np.ones((3, 3), dtype=bool))
    sizes = ndimage.sum_labels(bright, labels, index=np.arange(1, n + 1))
    comp = labels == (int(np.argmax(sizes)) + 1)
    interior = ndimage.binary_erosion(
        comp, structure=ndimage.generate_binary_structure(2, 1), border_value=1
    )
    ys, xs = np.nonzero(comp & ~interior)
    pts = np.column_stack([xs, ys]).astype(np.float64)
    if len(pts) > 1500:
        pts = pts[:: len(pts) // 1500 + 1]
    cx, cy, r = _min_enclosing_circle(pts)
    if r <= 0:
        raise FieldDetectionError("bright region degenerate, no circle fit")
    return FieldGeometry(cx, cy, r)


def crop_field(
    img: RasterImage, field: FieldGeometry, scale: float = 0.9
) -> tuple[RasterImage, FieldGeometry]:
    """Zero every pixel farther than scale*radius from the field center."""
    if not 0.0 < scale <= 1.0:
        raise ValueError("crop scale must be in (0, 1]")
    keep = field.mask(img.rgb.shape[:2], scale)
    out = img.rgb * keep[:, :, None]
    return RasterImage(out), FieldGeometry(field.cx, field.cy, field.radius * scale)


def _strata_rows(field: FieldGeometry, height: int, n: int) -> list[tuple[int, int]]:
    y0 = max(0, int(np.ceil(field.cy - field.radius)))
    y1 = min(height - 1, int(np.floor(field.cy + field.radius)))
    edges = np.linspace(y0, y1 + 1, n + 1)
    return [(int(edges[i]), int(edges[i + 1]) - 1) for i in range(n)]


def _runs(flags: list[bool]) -> list[tuple[int, int]]:
    runs, start = [], None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(flags) - 1))
    return runs


def scan_defects(
    img: RasterImage,
    field: FieldGeometry,
    over_luma: float = 0.95,
    under_luma: float = 0.05,
    strata: int = 16,
    stratum_fraction: float = 0.60,
    global_strata: int = 14,
    blur_floor: float = 0.015,
    eyelash_luma: float = 0.08,
) -> list[Defect]:
    """Report exposure bands, global exposure clipping, blur, and eyelash streaks.

    The field is cut into horizontal strata; a stratum is defective when
    more than ``stratum_fraction`` of its in-field pixels clip bright or
    dark. Contiguous defective strata become one band defect located at
    the nearer image edge. Blur is a floor on the mean in-field gradient
    magnitude.
    """
    lum = luma(img)
    infield = field.mask(lum.shape)
    total_area = int(infield.sum())
    if total_area == 0:
        return []
    defects: list[Defect] = []
    bands = _strata_rows(field, lum.shape[0], strata)

    flags = {OVEREXPOSURE: [], UNDEREXPOSURE: []}
    areas = []
    for r0, r1 in bands:
        sel = infield[r0 : r1 + 1]
        count = int(sel.sum())
        areas.append(count)
        if count == 0:
            flags[OVEREXPOSURE].append(False)
            flags[UNDEREXPOSURE].append(False)
            continue
        vals = lum[r0 : r1 + 1][sel]
        flags[OVEREXPOSURE].append((vals > over_luma).mean() > stratum_fraction)
        flags[UNDEREXPOSURE].append((vals < under_luma).mean() > stratum_fraction)

    for kind in (OVEREXPOSURE, UNDEREXPOSURE):
        marked = flags[kind]
        if sum(marked) >= global_strata:
            severity = sum(a for a, m in zip(areas, marked) if m) / total_area
            defects.append(Defect(kind, "global", float(severity)))
            continue
        for s0, s1 in _runs(marked):
            severity = sum(areas[s0 : s1 + 1]) / total_area
            location = "top" if (s0 + s1) / 2 < strata / 2 else "bottom"
            rows = (bands[s0][0], bands[s1][1])
            defects.append(Defect(kind, location, float(severity), rows))

    gy, gx = np.gradient(lum)
    mean_grad = float(np.hypot(gx, gy)[infield].mean())
    if mean_grad < blur_floor:
        defects.append(Defect(BLUR, "global", float(min(1.0, 1.0 - mean_grad / blur_floor))))

    # Dark elongated region entering from the top-half rim -> eyelash shadow.
    dark = (lum < eyelash_luma) & infield
    rim = field.distance_sq(lum.shape) >= (0.88 * field.radius) ** 2
    top_half = np.zeros_like(dark)
    top_half[: int(field.cy)] = True
    for region in connected_components(dark):
        frac = region.area / total_area
        if not 0.003 <= frac <= 0.25:
            continue
        on_rim = rim[region.pixels[:, 0], region.pixels[:, 1]]
        in_top = top_half[region.pixels[:, 0], region.pixels[:, 1]]
        if not (on_rim & in_top).any():
            continue
        measured = region_props(region)
        if measured.ovalness < 0.40:
            rows = (region.bbox[1], region.bbox[3])
            defects.append(Defect(EYELASH, "top", float(frac), rows))
    return defects


@dataclass
class CropResult:
    image: RasterImage
    retained_fraction: float
    crop_top: int
    crop_bottom: int


def crop_defects(img: RasterImage, field: FieldGeometry, defects: list[Defect]) -> CropResult:
    """Zero top/bottom bands covering croppable defects.

    A top defect removes everything from the image top through its band;
    a bottom defect removes from its band through the image bottom. The
    retained fraction is the surviving share of in-field area.
    """
    h = img.rgb.shape[0]
    crop_top, crop_bottom = 0, 0
    for d in defects:
        if d.kind not in _CROPPABLE or d.rows is None:
            continue
        if d.location == "top":
            crop_top = max(crop_top, d.rows[1] + 1)
        elif d.location == "bottom":
            crop_bottom = max(crop_bottom, h - d.rows[0])
    infield = field.mask(img.rgb.shape[:2])
    total = int(infield.sum())
    if crop_top == 0 and crop_bottom == 0:
        return CropResult(img, 1.0, 0, 0)
    out = img.rgb.copy()
    out[:crop_top] = 0
    if crop_bottom > 0:
        out[h - crop_bottom :] = 0
    kept = infield.copy()
    kept[:crop_top] = False
    if crop_bottom > 0:
        kept[h - crop_bottom :] = False
    retained = int(kept.sum()) / total if total else 0.0
    return CropResult(RasterImage(out), float(retained), crop_top, crop_bottom)


def rejects_by_crop(retained_fraction: float, reject_fraction: float = 0.30) -> bool:
    """Strict-less boundary: exactly (1 - reject_fraction) retained is kept."""
    return retained_fraction < 1.0 - reject_fraction


@dataclass
class GateResult:
    report: QualityReport
    image: RasterImage | None
    field: FieldGeometry | None


def gate(
    img: RasterImage,
    crop_scale: float = 0.9,
    reject_fraction: float = 0.30,
    luma_floor: float = 0.04,
    scan_params: dict | None = None,
) -> GateResult:
    """Run field detection, 0.9 crop, defect scan, and the accept/reject rules.

    Rejects when the defect crop removes more than ``reject_fraction`` of
    the field area (strict: exactly 70% retained is still accepted) or a
    global exposure/blur defect reaches severity 0.5.
    """
    try:
        raw_field = detect_field(img, luma_floor=luma_floor)
    except FieldDetectionError as exc:
        report = QualityReport(
            retained_fraction=0.0, accepted=False, reason=f"field not found: {exc}"
        )
        return GateResult(report, None, None)
    cropped, field = crop_field(img, raw_field, crop_scale)
    defects = scan_defects(cropped, field, **(scan_params or {}))
    result = crop_defects(cropped, field, defects)

    accepted, reason = True, "ok"
    globals_ = {d.kind: d for d in defects if d.location == "global" and d.severity >= 0.5}
    if rejects_by_crop(result.retained_fraction, reject_fraction):
        accepted, reason = False, "crop exceeded 30%"
    elif OVEREXPOSURE in globals_:
        accepted, reason = False, "global overexposure"
    elif UNDEREXPOSURE in globals_:
        accepted, reason = False, "global underexposure"
    elif BLUR in globals_:
        accepted, reason = False, "blurred image"
    report = QualityReport(
        defects=defects,
        crop_top=result.crop_top,
        crop_bottom=result.crop_bottom,
        retained_fraction=result.retained_fraction,
        accepted=accepted,
        reason=reason,
    )
    return GateResult(report, result.image if accepted else None, field)
