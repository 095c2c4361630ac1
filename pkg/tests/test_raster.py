import io

import numpy as np
import pytest
from PIL import Image

from drscreen.errors import DecodeError, InvalidInputError
from drscreen.raster import (
    ChannelWeights,
    RasterImage,
    adjust_levels,
    decode_image,
    encode_png,
    equalize_histogram,
    fuse_channels,
    gray_to_png16,
    smooth,
    subtract_background,
)


def _png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def test_decode_preserves_dimensions():
    rgb = np.zeros((1152, 1536, 3), dtype=np.uint8)
    rgb[:, :, 1] = 90
    img = decode_image(_png_bytes(rgb))
    assert (img.width, img.height) == (1536, 1152)


def test_decode_1x1_white():
    img = decode_image(_png_bytes(np.full((1, 1, 3), 255, dtype=np.uint8)))
    assert img.rgb.tolist() == [[[255, 255, 255]]]


def test_decode_truncated_payload_fails():
    data = _png_bytes(np.zeros((64, 64, 3), dtype=np.uint8))
    with pytest.raises(DecodeError):
        decode_image(data[: len(data) // 2])


def test_decode_rejects_non_image():
    with pytest.raises(DecodeError):
        decode_image(b"definitely not an image")


def test_decode_roundtrip_bit_exact():
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(40, 56, 3), dtype=np.uint8)
    img = decode_image(_png_bytes(rgb))
    again = decode_image(encode_png(img))
    assert np.array_equal(img.rgb, again.rgb)


def test_fuse_single_pixel_arithmetic():
    # (0.0*180 + 1.0*140 + 0.4*70) / (255 * 1.4) = 168/357
    img = RasterImage(np.array([[[180, 140, 70]]], dtype=np.uint8))
    gray = fuse_channels(img, ChannelWeights(0.0, 1.0, 0.4))
    assert gray[0, 0] == pytest.approx(168.0 / 357.0, abs=1e-12)
    assert gray[0, 0] == pytest.approx(0.4706, abs=1e-4)


def test_fuse_black_and_white_extremes():
    black = RasterImage(np.zeros((1, 1, 3), dtype=np.uint8))
    white = RasterImage(np.full((1, 1, 3), 255, dtype=np.uint8))
    for w in (ChannelWeights(), ChannelWeights(1, 1, 1), ChannelWeights(0.2, 0.9, 0.1)):
        assert fuse_channels(black, w)[0, 0] == 0.0
        assert fuse_channels(white, w)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_fuse_range_exhaustive_over_8bit_triples():
    # All 256 values per channel on a grid covering the full cube diagonal-wise.
    vals = np.arange(256, dtype=np.uint8)
    r, g, b = np.meshgrid(vals[::5], vals[::5], vals[::5], indexing="ij")
    rgb = np.stack([r, g, b], axis=-1).reshape(1, -1, 3)
    gray = fuse_channels(RasterImage(rgb))
    assert gray.min() >= 0.0 and gray.max() <= 1.0


def test_fuse_all_zero_weights_rejected():
    img = RasterImage(np.zeros((1, 1, 3), dtype=np.uint8))
    with pytest.raises(InvalidInputError):
        fuse_channels(img, ChannelWeights(0.0, 0.0, 0.0))


def test_smooth_constant_is_fixed_point():
    img = np.full((31, 19), 0.5)
    out = smooth(img, 10)
    assert np.allclose(out, 0.5, atol=1e-12)


def test_smooth_radius_zero_identity():
    rng = np.random.default_rng(1)
    img = rng.random((17, 23))
    out = smooth(img, 0)
    assert np.array_equal(out, img)
    assert out is not img


def test_smooth_impulse_row_oracle():
    # 5x1 row [0,0,1,0,0], radius 1, edge replication -> [0, 1/3, 1/3, 1/3, 0]
    img = np.array([[0.0, 0.0, 1.0, 0.0, 0.0]])
    out = smooth(img, 1)
    assert np.allclose(out[0], [0.0, 1 / 3, 1 / 3, 1 / 3, 0.0], atol=1e-12)


def _brute_smooth(img, radius):
    h, w = img.shape
    out = np.empty_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += img[yy, xx]
            out[y, x] = acc / (2 * radius + 1) ** 2
    return out


def test_smooth_matches_windowed_mean_oracle():
    rng = np.random.default_rng(7)
    for radius in (1, 2, 4):
        img = rng.random((13, 17))
        assert np.allclose(smooth(img, radius), _brute_smooth(img, radius), atol=1e-10)


def test_subtract_background_constant_becomes_mid_gray():
    for c in (0.0, 0.37, 1.0):
        out = subtract_background(np.full((12, 12), c), 5)
        assert np.allclose(out, 0.5, atol=1e-12)


def test_subtract_background_bright_dot_oracle():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = subtract_background(img, 9)
    # Dot stays near full brightness (clamped); background sits near 0.5.
    assert out[10, 10] > 0.95
    assert abs(out[0, 0] - 0.5) < 0.02
    brute = np.clip(img - _brute_smooth(img, 9) + 0.5, 0, 1)
    assert np.allclose(out, brute, atol=1e-10)


def test_equalize_constant_stays_constant():
    out = equalize_histogram(np.full((9, 9), 0.42))
    assert np.all(out == out[0, 0])


def test_equalize_two_level_cdf_oracle():
    img = np.zeros((10, 10))
    img[:5] = 0.2
    img[5:] = 0.8
    out = equalize_histogram(img, bins=256)
    assert np.allclose(out[:5], 0.5, atol=1e-9)
    assert np.allclose(out[5:], 1.0, atol=1e-9)


def test_equalize_preserves_rank_order():
    rng = np.random.default_rng(11)
    img = rng.random((24, 24))
    out = equalize_histogram(img)
    flat_in = img.ravel()
    flat_out = out.ravel()
    order = np.argsort(flat_in, kind="stable")
    assert np.all(np.diff(flat_out[order]) >= -1e-12)


def test_equalize_is_positionwise():
    rng = np.random.default_rng(12)
    img = rng.random((8, 8))
    perm = rng.permutation(64)
    shuffled = img.ravel()[perm].reshape(8, 8)
    assert np.allclose(
        equalize_histogram(img).ravel()[perm], equalize_histogram(shuffled).ravel()
    )


def test_equalize_field_mask_limits_histogram():
    img = np.zeros((10, 10))
    img[2:8, 2:8] = 0.5
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:8, 2:8] = True
    out = equalize_histogram(img, field_mask=mask)
    assert np.all(out[~mask] == 0.0)
    assert np.all(out[mask] == 1.0)


def test_adjust_levels_identity_gains_bit_exact():
    rng = np.random.default_rng(2)
    img = RasterImage(rng.integers(0, 256, size=(14, 14, 3), dtype=np.uint8))
    out = adjust_levels(img, 1.0, 1.0)
    assert np.array_equal(out.rgb, img.rgb)


def test_adjust_levels_gray_pixel_saturation_fixed_point():
    img = RasterImage(np.full((1, 1, 3), 100, dtype=np.uint8))
    out = adjust_levels(img, saturation_gain=2.0)
    assert out.rgb.tolist() == [[[100, 100, 100]]]


def test_adjust_levels_mid_gray_contrast_fixed_point():
    img = RasterImage(np.full((1, 1, 3), 128, dtype=np.uint8))
    for gain in (0.5, 1.7, 3.0):
        assert adjust_levels(img, contrast_gain=gain).rgb.tolist() == [[[128, 128, 128]]]


def test_gray_png16_roundtrip():
    gray = np.linspace(0, 1, 64).reshape(8, 8)
    data = gray_to_png16(gray)
    arr = np.asarray(Image.open(io.BytesIO(data)))
    assert arr.dtype == np.uint16
    assert np.allclose(arr / 65535.0, gray, atol=1.0 / 65535.0)
