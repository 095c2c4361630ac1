"""Deterministic synthetic fundus images with exact ground truth.

Every image is rendered from a seed: an orange circular field on black,
a bright disc, a dark macula at 2.5 disc diameters toward the field
center, a recursive vessel tree rooted at the disc, and seeded lesions
and acquisition defects. The generator records exactly what it drew, so
detector scores have a pixel-level oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .errors import PhantomSpecError
from .quality import FieldGeometry
from .raster import RasterImage, smooth

HEMORRHAGE = "hemorrhage"
MICROANEURYSM = "microaneurysm"
EXUDATE = "exudate"


@dataclass(frozen=True)
class LesionCounts:
    hemorrhages: int = 0
    microaneurysms: int = 0
    exudates: int = 0


@dataclass(frozen=True)
class BandSpec:
    kind: str  # overexposure | underexposure
    location: str  # top | bottom
    fraction: float  # share of full-field area to cover


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    width: int = 768
    height: int = 576
    geometry: str = "normal"  # normal | disc-centered | disc-absent
    disc: tuple[float, float, float] | None = None  # explicit (cx, cy, radius)
    macula_contrast: float = 0.12
    vessel_depth: int = 5
    vessel_contrast: float = 0.16
    lesions: LesionCounts = dc_field(default_factory=LesionCounts)
    bands: tuple[BandSpec, ...] = ()
    blur_radius: int = 0
    grade_target: int | None = None

    def validate(self):
        if self.width < 64 or self.height < 64:
            raise PhantomSpecError("phantom too small to carry a field")
        if self.geometry not in ("normal", "disc-centered", "disc-absent"):
            raise PhantomSpecError(f"unknown geometry: {self.geometry}")
        if self.vessel_depth < 0:
            raise PhantomSpecError("vessel depth must be >= 0")


@dataclass
class Placement:
    kind: str
    x: float
    y: float
    radius: float
    axis_ratio: float = 1.0
    angle: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x": self.x,
            "y": self.y,
            "radius": self.radius,
            "axis_ratio": self.axis_ratio,
            "angle": self.angle,
        }


@dataclass
class GroundTruth:
    field: FieldGeometry
    disc_center: tuple[float, float] | None
    disc_radius: float | None
    macula_center: tuple[float, float] | None
    vessel_mask: np.ndarray
    hemorrhage_mask: np.ndarray
    microaneurysm_mask: np.ndarray
    exudate_mask: np.ndarray
    placements: list[Placement]
    grade: int
    bands: tuple[BandSpec, ...]

    def lesion_masks(self) -> dict[str, np.ndarray]:
        return {
            HEMORRHAGE: self.hemorrhage_mask,
            MICROANEURYSM: self.microaneurysm_mask,
            EXUDATE: self.exudate_mask,
        }

    def to_dict(self) -> dict:
        return {
            "field": {"cx": self.field.cx, "cy": self.field.cy, "radius": self.field.radius},
            "disc_center": list(self.disc_center) if self.disc_center else None,
            "disc_radius": self.disc_radius,
            "macula_center": list(self.macula_center) if self.macula_center else None,
            "grade": self.grade,
            "placements": [p.to_dict() for p in self.placements],
            "bands": [
                {"kind": b.kind, "location": b.location, "fraction": b.fraction}
                for b in self.bands
            ],
        }


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _textured_background(rng, shape, field_r):
    """Low-frequency basins plus mid-frequency grain plus pixel noise."""
    h, w = shape
    coarse = smooth(rng.standard_normal((h, w)), max(2, int(0.22 * field_r)))
    coarse *= 0.048 / max(coarse.std(), 1e-9)
    grain = smooth(rng.standard_normal((h, w)), 2)
    grain *= 0.013 / max(grain.std(), 1e-9)
    noise = rng.normal(0.0, 0.008, size=(h, w))
    return coarse + grain + noise


def _stamp_ellipse(canvas_list, mask, cx, cy, radius, amounts, axis_ratio=1.0, angle=0.0):
    """Add per-channel amounts inside an ellipse; mark its pixels in ``mask``."""
    h, w = mask.shape
    rr = radius
    x0, x1 = max(0, int(cx - rr - 2)), min(w, int(cx + rr + 3))
    y0, y1 = max(0, int(cy - rr - 2)), min(h, int(cy + rr + 3))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(angle), np.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    inside = (u / radius) ** 2 + (v / (radius * axis_ratio)) ** 2 <= 1.0
    for canvas, amount in zip(canvas_list, amounts):
        canvas[y0:y1, x0:x1][inside] += amount
    mask[y0:y1, x0:x1] |= inside


def _stamp_segment(ink, p0, p1, width):
    """Mark pixels within width/2 of the segment p0-p1."""
    h, w = ink.shape
    half = width / 2.0
    x0 = max(0, int(min(p0[0], p1[0]) - half - 2))
    x1 = min(w, int(max(p0[0], p1[0]) + half + 3))
    y0 = max(0, int(min(p0[1], p1[1]) - half - 2))
    y1 = min(h, int(max(p0[1], p1[1]) + half + 3))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = p1 - p0
    len2 = float(d @ d)
    if len2 < 1e-12:
        dist = np.hypot(xx - p0[0], yy - p0[1])
    else:
        t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / len2, 0.0, 1.0)
        dist = np.hypot(xx - (p0[0] + t * d[0]), yy - (p0[1] + t * d[1]))
    ink[y0:y1, x0:x1] |= dist <= half


def _grow_vessels(rng, ink, root, axis, field, macula, disc_r, depth, root_width):
    """Recursive bifurcating tree; branches bend around the macula."""
    limit_r = 0.93 * field.radius
    mac = np.asarray(macula, dtype=float)
    stack = [(np.asarray(root, float), d, root_width, 0, 0.95 * disc_r * 2.2)
             for d in axis]
    while stack:
        p, direction, width, level, seg_len = stack.pop()
        if level >= depth or width < 0.9:
            continue
        d = direction / max(np.hypot(*direction), 1e-9)
        steps = 3
        alive = True
        for _ in range(steps):
            d = _rot(d, rng.uniform(-0.16, 0.16))
            q = p + d * (seg_len / steps)
            # steer away from the avascular macula zone
            to_mac = q - mac
            if np.hypot(*to_mac) < 1.7 * disc_r:
                cross = d[0] * to_mac[1] - d[1] * to_mac[0]
                d = _rot(d, 0.6 if cross < 0 else -0.6)
                q = p + d * (seg_len / steps)
                if np.hypot(*(q - mac)) < 1.4 * disc_r:
                    alive = False
                    break
            if np.hypot(q[0] - field.cx, q[1] - field.cy) > limit_r:
                alive = False
                break
            _stamp_segment(ink, p, q, width)
            p = q
        if not alive:
            continue
        spread = rng.uniform(0.30, 0.55)
        stack.append((p, _rot(d, spread), width * 0.7, level + 1, seg_len * 0.85))
        stack.append((p, _rot(d, -spread), width * 0.7, level + 1, seg_len * 0.85))


def _band_rows(field, shape, location, fraction):
    """Row band covering the requested share of field area from one edge."""
    infield = field.mask(shape)
    per_row = infield.sum(axis=1).astype(float)
    total = per_row.sum()
    if location == "bottom":
        cum = np.cumsum(per_row[::-1])[::-1] / total
        rows = np.nonzero(cum <= fraction)[0]
        return (int(rows[0]), shape[0] - 1) if len(rows) else (shape[0] - 1, shape[0] - 1)
    cum = np.cumsum(per_row) / total
    rows = np.nonzero(cum >= fraction)[0]
    return (0, int(rows[0])) if len(rows) else (0, 0)


def _grade_from_lesions(n_hem, n_ma, n_ex, quadrants):
    if n_hem >= 10 and quadrants >= 3:
        return 3
    if n_hem >= 1 or n_ex >= 3:
        return 2
    if n_ma >= 1:
        return 1
    return 0


def generate(spec: PhantomSpec) -> tuple[RasterImage, GroundTruth]:
    """Render the phantom and its exact ground truth. Pure in the spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height

    cx = w / 2.0 + rng.uniform(-0.005, 0.005) * w
    cy = h / 2.0 + rng.uniform(-0.005, 0.005) * h
    R = 0.46 * min(w, h)
    field = FieldGeometry(cx, cy, R)

    # Disc, macula, and the axis the vessel arcades hang on.
    disc_r = 0.125 * R * rng.uniform(0.92, 1.08)
    side = 1.0 if rng.random() < 0.5 else -1.0
    angle = rng.uniform(-0.30, 0.30)
    if spec.disc is not None:
        dx, dy, disc_r = spec.disc
        disc_c = np.array([dx, dy])
    elif spec.geometry == "disc-centered":
        dist = rng.uniform(0.0, 0.12) * R
        disc_c = np.array([cx + side * dist * np.cos(angle), cy + dist * np.sin(angle)])
    elif spec.geometry == "disc-absent":
        disc_c = np.array([cx + side * 1.04 * R * np.cos(angle), cy + 1.04 * R * np.sin(angle)])
    else:
        dist = rng.uniform(0.52, 0.66) * R
        disc_c = np.array([cx + side * dist * np.cos(angle), cy + dist * np.sin(angle)])

    toward_center = np.array([cx, cy]) - disc_c
    toward_center /= max(np.hypot(*toward_center), 1e-9)
    macula_c = disc_c + toward_center * (5.0 * disc_r)
    macula_c = macula_c + rng.uniform(-0.1, 0.1, size=2) * disc_r
    macula_r = 1.0 * disc_r

    # Background: orange field with vignette and seeded texture.
    yy, xx = np.mgrid[0:h, 0:w]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    infield = d2 <= R * R
    vignette = -0.10 * d2 / (R * R)
    texture = _textured_background(rng, (h, w), R)
    g = 0.52 + vignette + texture
    r = 0.80 + vignette + 0.8 * texture
    b = 0.16 + 0.6 * vignette + 0.45 * texture
    channels = [r, g, b]

    scratch = np.zeros((h, w), dtype=bool)

    # Disc: bright plateau with a cosine rim.
    if spec.geometry != "disc-absent":
        dd = np.sqrt((xx - disc_c[0]) ** 2 + (yy - disc_c[1]) ** 2)
        prof = np.clip((1.1 * disc_r - dd) / (0.3 * disc_r), 0.0, 1.0)
        prof = np.sin(prof * np.pi / 2.0) ** 2
        r += 0.16 * prof
        g += 0.30 * prof
        b += 0.30 * prof

    # Macula: smooth dark pit.
    md = np.sqrt((xx - macula_c[0]) ** 2 + (yy - macula_c[1]) ** 2)
    mprof = np.clip((1.35 * macula_r - md) / (0.85 * macula_r), 0.0, 1.0)
    mprof = np.sin(mprof * np.pi / 2.0) ** 2
    mc = spec.macula_contrast
    r -= 0.5 * mc * mprof
    g -= mc * mprof
    b -= 0.25 * mc * mprof

    # Vessels: hard-edged strokes darkening all channels.
    vessel_ink = np.zeros((h, w), dtype=bool)
    if spec.vessel_depth > 0:
        if spec.geometry == "disc-absent":
            root = disc_c + toward_center * (0.12 * R)
        else:
            root = disc_c
        axis_dirs = [
            _rot(toward_center, 1.15),
            _rot(toward_center, -1.15),
            _rot(toward_center, 2.45),
            _rot(toward_center, -2.45),
        ]
        _grow_vessels(
            rng, vessel_ink, root, axis_dirs, field, macula_c, disc_r,
            spec.vessel_depth, root_width=0.13 * disc_r,
        )
        vc = spec.vessel_contrast
        r -= 0.55 * vc * vessel_ink
        g -= vc * vessel_ink
        b -= 0.30 * vc * vessel_ink

    # Lesions: rejection-sampled placements honoring anatomy clearances.
    vessel_clear = ndimage.distance_transform_edt(~vessel_ink) if vessel_ink.any() else None
    hem_mask = np.zeros((h, w), dtype=bool)
    ma_mask = np.zeros((h, w), dtype=bool)
    ex_mask = np.zeros((h, w), dtype=bool)
    placements: list[Placement] = []
    band_rows = [_band_rows(field, (h, w), bs.location, bs.fraction) for bs in spec.bands]

    def _clear_of_bands(y, radius):
        return all(not (r0 - radius <= y <= r1 + radius) for r0, r1 in band_rows)

    def _clear_of_others(x, y, radius, gap):
        return all(
            np.hypot(x - p.x, y - p.y) >= radius + p.radius + gap for p in placements
        )

    def _try_place(kind, radius, constraints, tries=300):
        for _ in range(tries):
            rho = np.sqrt(rng.uniform(0.0, 1.0)) * (0.78 * R - radius)
            phi = rng.uniform(0.0, 2 * np.pi)
            x = cx + rho * np.cos(phi)
            y = cy + rho * np.sin(phi)
            if not _clear_of_bands(y, radius):
                continue
            if not constraints(x, y, radius):
                continue
            return x, y
        return None

    def _dark_ok(x, y, radius):
        if np.hypot(x - disc_c[0], y - disc_c[1]) < 2.6 * disc_r + radius:
            return False
        if np.hypot(x - macula_c[0], y - macula_c[1]) < 1.9 * disc_r + radius:
            return False
        if vessel_clear is not None and vessel_clear[int(y), int(x)] < 0.12 * disc_r + radius:
            return False
        return _clear_of_others(x, y, radius, 0.3 * disc_r)

    def _exudate_ok(x, y, radius):
        dm = np.hypot(x - macula_c[0], y - macula_c[1])
        if not (2.0 * disc_r <= dm <= 3.3 * disc_r):
            return False
        if np.hypot(x - disc_c[0], y - disc_c[1]) < 2.6 * disc_r + radius:
            return False
        if vessel_clear is not None and vessel_clear[int(y), int(x)] < 0.5 * disc_r + radius:
            return False
        return _clear_of_others(x, y, radius, 0.45 * disc_r)

    quadrant_targets = list(rng.permutation(4))
    for i in range(spec.lesions.hemorrhages):
        radius = rng.uniform(0.18, 0.38) * disc_r
        axis_ratio = rng.uniform(0.78, 1.0)
        ang = rng.uniform(0, np.pi)

        def _hem_ok(x, y, rad, _i=i):
            if _i < min(4, spec.lesions.hemorrhages) and spec.lesions.hemorrhages >= 10:
                quad = (1 if x > cx else 0) + (2 if y > cy else 0)
                if quad != quadrant_targets[_i]:
                    return False
            return _dark_ok(x, y, rad)

        spot = _try_place(HEMORRHAGE, radius, _hem_ok)
        if spot is None:
            continue
        _stamp_ellipse(channels, hem_mask, spot[0], spot[1], radius,
                       (-0.12, -0.22, -0.05), axis_ratio, ang)
        placements.append(Placement(HEMORRHAGE, spot[0], spot[1], radius, axis_ratio, ang))

    for _ in range(spec.lesions.microaneurysms):
        radius = max(1.0, rng.uniform(0.030, 0.045) * disc_r)
        spot = _try_place(MICROANEURYSM, radius, _dark_ok)
        if spot is None:
            continue
        _stamp_ellipse(channels, ma_mask, spot[0], spot[1], radius, (-0.10, -0.20, -0.04))
        placements.append(Placement(MICROANEURYSM, spot[0], spot[1], radius))

    for _ in range(spec.lesions.exudates):
        radius = rng.uniform(0.07, 0.115) * disc_r
        spot = _try_place(EXUDATE, radius, _exudate_ok)
        if spot is None:
            continue
        _stamp_ellipse(channels, ex_mask, spot[0], spot[1], radius, (0.15, 0.22, 0.05))
        placements.append(Placement(EXUDATE, spot[0], spot[1], radius))

    # Seeded exposure bands override the rendered content.
    for bs, (r0, r1) in zip(spec.bands, band_rows):
        sel = infield[r0 : r1 + 1]
        level = 0.99 if bs.kind == "overexposure" else 0.015
        for canvas in channels:
            canvas[r0 : r1 + 1][sel] = level

    out = []
    for canvas in channels:
        plane = np.where(infield, canvas, 0.0)
        if spec.blur_radius > 0:
            plane = np.where(infield, smooth(plane, spec.blur_radius), 0.0)
        out.append(np.clip(np.rint(plane * 255.0), 0, 255).astype(np.uint8))
    rgb = np.stack(out, axis=-1)

    n_hem = sum(1 for p in placements if p.kind == HEMORRHAGE)
    n_ma = sum(1 for p in placements if p.kind == MICROANEURYSM)
    n_ex = sum(1 for p in placements if p.kind == EXUDATE)
    quads = {
        (1 if p.x > cx else 0) + (2 if p.y > cy else 0)
        for p in placements
        if p.kind == HEMORRHAGE
    }
    truth = GroundTruth(
        field=field,
        disc_center=None if spec.geometry == "disc-absent" else (disc_c[0], disc_c[1]),
        disc_radius=None if spec.geometry == "disc-absent" else float(disc_r),
        macula_center=(macula_c[0], macula_c[1]),
        vessel_mask=vessel_ink,
        hemorrhage_mask=hem_mask,
        microaneurysm_mask=ma_mask,
        exudate_mask=ex_mask,
        placements=placements,
        grade=_grade_from_lesions(n_hem, n_ma, n_ex, len(quads)),
        bands=spec.bands,
    )
    return RasterImage(rgb), truth


def spec_for_grade(grade: int, seed: int, **kwargs) -> PhantomSpec:
    """Draw lesion counts appropriate for a target grade."""
    rng = np.random.default_rng(seed)
    if grade == 0:
        lesions = LesionCounts()
    elif grade == 1:
        lesions = LesionCounts(microaneurysms=int(rng.integers(2, 7)))
    elif grade == 2:
        with_ex = rng.random() < 0.5
        lesions = LesionCounts(
            hemorrhages=int(rng.integers(1, 5)),
            microaneurysms=int(rng.integers(0, 5)),
            exudates=int(rng.integers(8, 15)) if with_ex else 0,
        )
    elif grade == 3:
        lesions = LesionCounts(
            hemorrhages=int(rng.integers(12, 19)),
            microaneurysms=int(rng.integers(3, 9)),
            exudates=int(rng.integers(8, 15)) if rng.random() < 0.4 else 0,
        )
    else:
        raise PhantomSpecError(f"grade {grade} phantoms are not generatable")
    return PhantomSpec(seed=seed, lesions=lesions, grade_target=grade, **kwargs)


def corpus(
    seed: int, n: int, grade_mix: tuple[float, float, float, float], **kwargs
) -> list[tuple[RasterImage, GroundTruth]]:
    """n phantoms with a stratified grade mix, reproducible from the seed."""
    if n == 0:
        return []
    mix = np.asarray(grade_mix, dtype=float)
    if mix.min() < 0 or abs(mix.sum() - 1.0) > 1e-9:
        raise PhantomSpecError("grade mix must be non-negative and sum to 1")
    counts = np.floor(mix * n).astype(int)
    while counts.sum() < n:
        counts[int(np.argmax(mix * n - counts))] += 1
    grades = np.repeat(np.arange(4), counts)
    rng = np.random.default_rng(seed)
    grades = grades[rng.permutation(n)]
    seeds = rng.integers(0, 2**62, size=n)
    return [
        generate(spec_for_grade(int(g), int(s), **kwargs)) for g, s in zip(grades, seeds)
    ]


def write_corpus(out_dir, seed: int, n: int, grade_mix) -> dict:
    """Emit PNGs, per-image truth JSON, and a manifest; returns the manifest."""
    from pathlib import Path

    from .raster import encode_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (img, truth) in enumerate(corpus(seed, n, grade_mix)):
        name = f"phantom_{i:04d}"
        (out / f"{name}.png").write_bytes(encode_png(img))
        (out / f"{name}.truth.json").write_text(json.dumps(truth.to_dict(), indent=2))
        entries.append({"image": f"{name}.png", "truth": f"{name}.truth.json", "grade": truth.grade})
    manifest = {"seed": seed, "n": n, "grade_mix": list(grade_mix), "images": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
