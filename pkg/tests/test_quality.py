import numpy as np
import pytest

from drscreen.errors import FieldDetectionError
from drscreen.quality import (
    BLUR,
    EYELASH,
    OVEREXPOSURE,
    UNDEREXPOSURE,
    FieldGeometry,
    QualityReport,
    crop_defects,
    crop_field,
    detect_field,
    gate,
    rejects_by_crop,
    scan_defects,
)
from drscreen.raster import RasterImage


def disc_image(w=512, h=384, cx=None, cy=None, r=None, level=140, noise=14, seed=0):
    """Gray disc on black with enough pixel noise to register as sharp."""
    cx = w / 2 if cx is None else cx
    cy = h / 2 if cy is None else cy
    r = 0.45 * min(w, h) if r is None else r
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    base = np.clip(level + rng.normal(0, noise, size=(h, w)), min(level, 30), 240)
    img = np.where(inside, base, 0.0)
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    return RasterImage(np.clip(np.rint(rgb), 0, 255).astype(np.uint8)), FieldGeometry(cx, cy, r)


def rows_covering_bottom_fraction(field, shape, fraction):
    """Topmost row of the bottom band holding the given share of field area."""
    infield = field.mask(shape)
    per_row = infield.sum(axis=1).astype(float)
    total = per_row.sum()
    cum_from_bottom = np.cumsum(per_row[::-1])[::-1] / total
    candidates = np.nonzero(cum_from_bottom <= fraction)[0]
    return int(candidates[0])


def test_detect_field_synthetic_disc():
    img, truth = disc_image(w=1536, h=1152, cx=768, cy=576, r=500)
    got = detect_field(img)
    assert abs(got.cx - 768) <= 2 and abs(got.cy - 576) <= 2
    assert abs(got.radius - 500) <= 2


@pytest.mark.parametrize("r", [100, 180, 333])
def test_detect_field_accuracy_across_radii(r):
    img, truth = disc_image(w=800, h=800, cx=391.0, cy=404.5, r=r, seed=r)
    got = detect_field(img)
    assert np.hypot(got.cx - truth.cx, got.cy - truth.cy) <= 2.0
    assert abs(got.radius - r) <= 0.01 * r


def test_detect_field_full_frame_fallback():
    rgb = np.full((240, 320, 3), 150, dtype=np.uint8)
    got = detect_field(RasterImage(rgb))
    assert (got.cx, got.cy) == (319 / 2, 239 / 2)
    assert got.radius == 120


def test_detect_field_black_frame_errors():
    with pytest.raises(FieldDetectionError):
        detect_field(RasterImage(np.zeros((64, 64, 3), dtype=np.uint8)))


def test_crop_field_exhaustive_pixel_oracle():
    img, field = disc_image(w=300, h=260, cx=150, cy=130, r=110, seed=5)
    out, new_field = crop_field(img, field, 0.9)
    assert new_field.radius == pytest.approx(99.0)
    yy, xx = np.mgrid[0:260, 0:300]
    dist = np.hypot(xx - 150, yy - 130)
    outside = dist > 99.0
    assert np.all(out.rgb[outside] == 0)
    assert np.array_equal(out.rgb[~outside], img.rgb[~outside])
    # zeroed-pixel count matches the brute-force census
    zeroed = (out.rgb.sum(axis=2) == 0) & (img.rgb.sum(axis=2) > 0)
    assert zeroed.sum() == (outside & (img.rgb.sum(axis=2) > 0)).sum()


def test_crop_field_scale_one_keeps_field():
    img, field = disc_image(seed=6)
    out, _ = crop_field(img, field, 1.0)
    inside = field.mask(img.rgb.shape[:2])
    assert np.array_equal(out.rgb[inside], img.rgb[inside])


def test_crop_field_idempotent():
    img, field = disc_image(seed=7)
    once, _ = crop_field(img, field, 0.9)
    twice, _ = crop_field(once, field, 0.9)
    assert np.array_equal(once.rgb, twice.rgb)


def test_scan_defects_clean_disc_is_clean():
    img, field = disc_image(seed=8)
    assert scan_defects(img, field) == []


def test_scan_defects_bottom_overexposure_band():
    img, field = disc_image(seed=9)
    h, w = img.rgb.shape[:2]
    row0 = rows_covering_bottom_fraction(field, (h, w), 0.20)
    rgb = img.rgb.copy()
    infield = field.mask((h, w))
    band = np.zeros((h, w), dtype=bool)
    band[row0:] = True
    rgb[band & infield] = 253
    defects = scan_defects(RasterImage(rgb), field)
    over = [d for d in defects if d.kind == OVEREXPOSURE]
    assert len(over) == 1
    assert over[0].location == "bottom"
    assert over[0].severity == pytest.approx(0.20, abs=0.05)


def test_scan_defects_global_underexposure():
    img, field = disc_image(level=6, noise=1.2, seed=10)
    defects = scan_defects(img, field)
    under = [d for d in defects if d.kind == UNDEREXPOSURE and d.location == "global"]
    assert len(under) == 1
    assert under[0].severity == pytest.approx(1.0, abs=0.05)


def test_scan_defects_blur_floor():
    img, field = disc_image(noise=0.0, seed=11)  # perfectly flat disc has no gradient
    defects = scan_defects(img, field)
    assert any(d.kind == BLUR and d.severity >= 0.5 for d in defects)


def test_scan_defects_eyelash_streak():
    img, field = disc_image(seed=12)
    rgb = img.rgb.copy()
    h, w = rgb.shape[:2]
    # dark streak entering from the top rim, ~6 px wide, slanting down
    yy, xx = np.mgrid[0:h, 0:w]
    y_top = int(field.cy - field.radius)
    streak = (np.abs((xx - field.cx) - 0.35 * (yy - y_top)) < 6) & (yy < field.cy - 0.2 * field.radius)
    streak &= field.mask((h, w))
    rgb[streak] = 8
    defects = scan_defects(RasterImage(rgb), field)
    assert any(d.kind == EYELASH and d.location == "top" for d in defects)


def test_crop_defects_no_defects_is_identity():
    img, field = disc_image(seed=13)
    res = crop_defects(img, field, [])
    assert res.retained_fraction == 1.0
    assert np.array_equal(res.image.rgb, img.rgb)


def test_crop_defects_bottom_band_area_oracle():
    img, field = disc_image(seed=14)
    h, w = img.rgb.shape[:2]
    row0 = rows_covering_bottom_fraction(field, (h, w), 0.20)
    from drscreen.quality import Defect

    res = crop_defects(img, field, [Defect(OVEREXPOSURE, "bottom", 0.2, rows=(row0, h - 1))])
    infield = field.mask((h, w))
    expect = infield[:row0].sum() / infield.sum()
    assert res.retained_fraction == pytest.approx(expect, abs=1e-9)
    assert res.retained_fraction == pytest.approx(0.80, abs=0.01)
    assert np.all(res.image.rgb[row0:] == 0)


def test_crop_defects_top_and_bottom_total():
    img, field = disc_image(seed=15)
    h, w = img.rgb.shape[:2]
    from drscreen.quality import Defect

    row_b = rows_covering_bottom_fraction(field, (h, w), 0.20)
    infield = field.mask((h, w))
    per_row = infield.sum(axis=1).astype(float)
    cum_top = np.cumsum(per_row) / per_row.sum()
    row_t = int(np.nonzero(cum_top >= 0.15)[0][0])
    res = crop_defects(
        img,
        field,
        [
            Defect(UNDEREXPOSURE, "top", 0.15, rows=(0, row_t)),
            Defect(OVEREXPOSURE, "bottom", 0.20, rows=(row_b, h - 1)),
        ],
    )
    assert res.retained_fraction == pytest.approx(0.65, abs=0.02)


def test_crop_boundary_is_strict_less():
    assert not rejects_by_crop(0.70)
    assert rejects_by_crop(np.nextafter(0.70, 0.0))
    assert not rejects_by_crop(0.75)
    assert rejects_by_crop(0.65)


def test_gate_clean_phantom_accepted():
    img, _ = disc_image(seed=16)
    res = gate(img)
    assert res.report.accepted
    assert res.report.retained_fraction == 1.0
    assert res.report.reason == "ok"
    assert res.image is not None and res.field is not None


def test_gate_rejects_heavy_crop():
    img, field = disc_image(seed=17)
    rgb = img.rgb.copy()
    h, w = rgb.shape[:2]
    # overexpose the bottom ~40% of field area (measured after 0.9 crop)
    inner = FieldGeometry(field.cx, field.cy, field.radius * 0.9)
    row0 = rows_covering_bottom_fraction(inner, (h, w), 0.40)
    band = np.zeros((h, w), dtype=bool)
    band[row0:] = True
    rgb[band & field.mask((h, w))] = 254
    res = gate(RasterImage(rgb))
    assert not res.report.accepted
    assert res.report.reason == "crop exceeded 30%"
    assert res.report.retained_fraction < 0.70
    assert res.image is None


def test_gate_crop_sweep_matches_boundary_rule():
    img, field = disc_image(seed=18)
    h, w = img.rgb.shape[:2]
    inner = FieldGeometry(field.cx, field.cy, field.radius * 0.9)
    for frac in (0.05, 0.15, 0.25, 0.295, 0.33, 0.45):
        rgb = img.rgb.copy()
        row0 = rows_covering_bottom_fraction(inner, (h, w), frac)
        band = np.zeros((h, w), dtype=bool)
        band[row0:] = True
        rgb[band & field.mask((h, w))] = 254
        res = gate(RasterImage(rgb))
        retained = res.report.retained_fraction
        assert res.report.accepted == (retained >= 0.70), f"frac={frac}"


def test_gate_field_not_found():
    res = gate(RasterImage(np.zeros((64, 64, 3), dtype=np.uint8)))
    assert not res.report.accepted
    assert "field not found" in res.report.reason


def test_quality_report_json_roundtrip():
    img, field = disc_image(seed=19)
    res = gate(img)
    d = res.report.to_dict()
    back = QualityReport.from_dict(d)
    assert back == res.report
    assert set(d) == {"defects", "crop_top", "crop_bottom", "retained_fraction", "accepted", "reason"}
