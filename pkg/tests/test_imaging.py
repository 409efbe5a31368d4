import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from histolime.errors import DecodeError, InvalidAugmentSpec, UnsupportedFormat
from histolime.imaging import (
    AugmentSpec, Raster, augment, augment_chain, decode_image, encode_image, random_augmentations, resize_to_input,
)
from oracles import bilinear_resize_scalar


def _png(arr, mode="RGB"):
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


rasters = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(np.uint8, (hw[0], hw[1], 3))
).map(Raster)


class TestRaster:
    def test_length_invariant(self):
        r = Raster.from_bytes(2, 1, [255, 0, 0, 0, 0, 255])
        assert (r.width, r.height, r.channels) == (2, 1, 3)
        assert len(r.data) == r.width * r.height * r.channels

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Raster(np.zeros((0, 3, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            Raster(np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            Raster.from_bytes(2, 2, b"\x00" * 11)

    def test_immutable_and_decoupled_from_source(self):
        src = np.zeros((2, 2, 3), dtype=np.uint8)
        r = Raster(src)
        src[0, 0, 0] = 9
        assert r.pixels[0, 0, 0] == 0
        with pytest.raises(ValueError):
            r.pixels[0, 0, 0] = 1


class TestDecode:
    def test_white_pixel(self):
        r = decode_image(_png([[[255, 255, 255]]]))
        assert (r.width, r.height, r.channels) == (1, 1, 3)
        assert r.data == bytes([255, 255, 255])

    def test_row_major_rgb(self):
        r = decode_image(_png([[[255, 0, 0], [0, 0, 255]]]))
        assert r.data == bytes([255, 0, 0, 0, 0, 255])

    def test_grayscale_replicated(self):
        r = decode_image(_png(np.array([[10, 200]], dtype=np.uint8), mode="L"))
        assert r.data == bytes([10, 10, 10, 200, 200, 200])

    def test_rgba_drops_alpha(self):
        r = decode_image(_png(np.array([[[1, 2, 3, 4]]], dtype=np.uint8), mode="RGBA"))
        assert r.data == bytes([1, 2, 3])

    def test_malformed_png(self):
        blob = _png([[[1, 2, 3]] * 4] * 4)
        with pytest.raises(DecodeError):
            decode_image(blob[:30])

    def test_other_container(self):
        buf = io.BytesIO()
        Image.new("RGB", (2, 2)).save(buf, format="BMP")
        with pytest.raises(UnsupportedFormat):
            decode_image(buf.getvalue())
        with pytest.raises(UnsupportedFormat):
            decode_image(b"GIF89a")


class TestEncode:
    def test_png_round_trip(self, rng):
        img = Raster(rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
        assert decode_image(encode_image(img, "png")) == img

    def test_one_pixel_both_formats(self):
        img = Raster(np.array([[[4, 5, 6]]], dtype=np.uint8))
        assert decode_image(encode_image(img, "png")) == img
        assert decode_image(encode_image(img, "jpeg")).width == 1

    def test_png_encoding_deterministic(self, rng):
        img = Raster(rng.integers(0, 256, (9, 9, 3), dtype=np.uint8))
        assert encode_image(img, "png") == encode_image(img, "png")

    def test_seeded_corpus_round_trip(self):
        # seeded generator oracle: 10 random rasters, PNG exact, JPEG decodable with same size
        gen = np.random.default_rng(2024)
        for _ in range(10):
            h, w = (int(v) for v in gen.integers(1, 40, size=2))
            img = Raster(gen.integers(0, 256, (h, w, 3), dtype=np.uint8))
            assert decode_image(encode_image(img, "png")) == img
            again = decode_image(encode_image(decode_image(encode_image(img, "jpeg")), "jpeg"))
            assert (again.width, again.height) == (w, h)

    def test_jpeg_quality_is_95(self, rng):
        img = Raster(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        buf = io.BytesIO()
        Image.fromarray(img.pixels).save(buf, format="JPEG", quality=95)
        assert encode_image(img, "jpeg") == buf.getvalue()


class TestResize:
    def test_identity_at_input_size(self, rng):
        img = Raster(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8))
        assert resize_to_input(img, 224) == img

    def test_uniform_gray_stays_uniform(self):
        img = Raster(np.full((448, 448, 3), 128, dtype=np.uint8))
        out = resize_to_input(img, 224)
        assert (out.width, out.height) == (224, 224)
        assert np.all(out.pixels == 128)

    def test_two_tone_matches_scalar_oracle(self):
        px = np.zeros((200, 300, 3), dtype=np.uint8)
        px[:, :150] = (200, 40, 90)
        px[:, 150:] = (30, 160, 220)
        px[120:, :] //= 2
        out = resize_to_input(Raster(px), 224).pixels.astype(np.int64)
        ref = bilinear_resize_scalar(px.tolist(), 224)
        assert np.abs(out - ref).max() <= 1

    def test_random_downscale_matches_oracle(self, rng):
        px = rng.integers(0, 256, (23, 31, 3), dtype=np.uint8)
        out = resize_to_input(Raster(px), 9).pixels.astype(np.int64)
        assert np.abs(out - bilinear_resize_scalar(px.tolist(), 9)).max() <= 1

    def test_upscale_matches_oracle(self, rng):
        px = rng.integers(0, 256, (5, 6, 3), dtype=np.uint8)
        out = resize_to_input(Raster(px), 13).pixels.astype(np.int64)
        assert np.abs(out - bilinear_resize_scalar(px.tolist(), 13)).max() <= 1

    def test_deterministic(self, rng):
        img = Raster(rng.integers(0, 256, (50, 70, 3), dtype=np.uint8))
        assert resize_to_input(img, 32).data == resize_to_input(img, 32).data

    @given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 20), st.tuples(*[st.integers(0, 255)] * 3))
    def test_constant_fixed_point(self, h, w, side, color):
        img = Raster(np.full((h, w, 3), color, dtype=np.uint8))
        out = resize_to_input(img, side)
        assert out.pixels.shape == (side, side, 3)
        assert np.all(out.pixels == np.array(color, dtype=np.uint8))


class TestAugment:
    def test_flip_reverses_columns(self):
        px = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        out = augment(Raster(px), AugmentSpec("flip_horizontal"))
        assert np.array_equal(out.pixels, px[:, ::-1])

    def test_zero_shift_identity(self, rng):
        img = Raster(rng.integers(0, 256, (6, 5, 3), dtype=np.uint8))
        assert augment(img, AugmentSpec("shift", dx=0.0, dy=0.0)) == img

    def test_shift_one_column_right(self):
        px = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3) + 1
        out = augment(Raster(px), AugmentSpec("shift", dx=0.25, fill=(0, 0, 0))).pixels
        for c in range(1, 4):
            assert np.array_equal(out[:, c], px[:, c - 1])
        assert np.all(out[:, 0] == 0)

    def test_shift_down_and_left(self):
        px = np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3) + 1
        out = augment(Raster(px), AugmentSpec("shift", dx=-0.25, dy=0.5, fill=(9, 9, 9))).pixels
        assert np.all(out[:2] == 9)
        assert np.all(out[:, 3] == 9)
        assert np.array_equal(out[2:, :3], px[:2, 1:])

    def test_zoom_identity_and_constant(self):
        img = Raster(np.full((10, 8, 3), (7, 80, 200), dtype=np.uint8))
        for factor in (0.6, 0.9, 1.0, 1.3, 2.0):
            assert augment(img, AugmentSpec("zoom", factor=factor, fill=(7, 80, 200))) == img

    def test_zoom_out_pads_with_fill(self, rng):
        img = Raster(rng.integers(1, 256, (20, 20, 3), dtype=np.uint8))
        out = augment(img, AugmentSpec("zoom", factor=0.6, fill=(0, 0, 0))).pixels
        assert np.all(out[0] == 0) and np.all(out[:, -1] == 0)
        assert np.any(out[10, 10] != 0)

    def test_zoom_in_center_preserved(self):
        px = np.zeros((9, 9, 3), dtype=np.uint8)
        px[4, 4] = 255
        out = augment(Raster(px), AugmentSpec("zoom", factor=2.0)).pixels
        assert out.shape == (9, 9, 3)
        assert np.all(out[4, 4] > 0)

    @pytest.mark.parametrize("spec", [
        AugmentSpec("rotate"),
        AugmentSpec("shift", dx=0.6),
        AugmentSpec("shift", dy=-0.51),
        AugmentSpec("zoom", factor=0.5),
        AugmentSpec("zoom", factor=2.01),
        AugmentSpec("zoom", factor=1.2, fill=(0, 0, 256)),
    ])
    def test_invalid_specs(self, spec):
        with pytest.raises(InvalidAugmentSpec):
            augment(Raster(np.zeros((2, 2, 3), dtype=np.uint8)), spec)

    def test_random_augmentations_seeded(self):
        a = random_augmentations(np.random.default_rng(3))
        b = random_augmentations(np.random.default_rng(3))
        assert a == b
        for spec in a:
            spec.validate()
            if spec.op == "zoom":
                assert 0.9 <= spec.factor <= 1.1
            if spec.op == "shift":
                assert -0.1 <= spec.dx <= 0.1 and -0.1 <= spec.dy <= 0.1

    @settings(max_examples=300)
    @given(rasters)
    def test_flip_involution(self, img):
        spec = AugmentSpec("flip_horizontal")
        assert augment(augment(img, spec), spec) == img

    @settings(max_examples=300)
    @given(rasters, st.sampled_from(["flip_horizontal", "shift", "zoom"]),
           st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.501, 2.0))
    def test_fuzz_length_invariant_and_purity(self, img, op, dx, dy, factor):
        spec = AugmentSpec(op, dx=dx, dy=dy, factor=factor)
        out = augment(img, spec)
        assert (out.width, out.height) == (img.width, img.height)
        assert len(out.data) == out.width * out.height * 3
        assert augment(img, spec) == out

    def test_chain(self, rng):
        img = Raster(rng.integers(0, 256, (12, 12, 3), dtype=np.uint8))
        specs = random_augmentations(np.random.default_rng(0))
        assert augment_chain(img, specs) == augment_chain(img, specs)
