import numpy as np
import pytest

from imgcred.core.errors import DataError, DecodeError, ShapeError
from imgcred.services.dedup_service import dedup, lsh_signature
from imgcred.services.image_service import (
    FlipAxis,
    ImageTensor,
    augment_flips,
    decode_image,
    encode_image,
    filter_images,
    flip,
    passes_size_filter,
    resize_bilinear,
    to_batch,
)


def _random_image(seed: int, shape=(24, 24, 1)) -> ImageTensor:
    return ImageTensor(np.random.default_rng(seed).random(shape))


class TestImageTensor:
    def test_two_dimensional_input_gets_a_channel(self):
        assert ImageTensor(np.zeros((3, 4))).shape == (3, 4, 1)

    @pytest.mark.parametrize("values", [np.full((2, 2, 1), 1.5), np.full((2, 2, 1), np.nan), np.zeros((0, 2, 1))])
    def test_rejects_bad_values(self, values):
        with pytest.raises(ShapeError):
            ImageTensor(values)

    def test_values_are_frozen(self):
        img = ImageTensor(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            img.values[0, 0, 0] = 1.0


class TestCodec:
    @pytest.mark.parametrize("channels", [1, 3])
    def test_encode_then_decode(self, channels):
        levels = np.random.default_rng(0).integers(0, 256, (5, 7, channels))
        img = ImageTensor(levels / 255.0)
        assert decode_image(encode_image(img)) == img

    def test_header(self):
        assert encode_image(ImageTensor(np.zeros((2, 3, 1)))).startswith(b"P5")
        assert encode_image(ImageTensor(np.zeros((2, 3, 3)))).startswith(b"P6")

    def test_unsupported_data(self):
        with pytest.raises(DecodeError, match="magic"):
            decode_image(b"\x89PNG\r\n")
        with pytest.raises(DecodeError):
            decode_image(b"P2\n1 1\n255\n0\n")
        with pytest.raises(DecodeError):
            decode_image(b"P5\n4 4\n255\n\x00")

    @pytest.mark.parametrize("maxval", [1, 15, 254, 1023])
    def test_maxval_other_than_255_is_rejected(self, maxval):
        pixels = bytes(4) if maxval < 256 else bytes(8)
        with pytest.raises(DataError, match=f"maxval {maxval}"):
            decode_image(b"P5\n2 2\n%d\n" % maxval + pixels)

    def test_header_comments_are_skipped(self):
        img = decode_image(b"P5\n# made by hand\n2 1\n# levels\n255\n\x00\xff")
        np.testing.assert_array_equal(img.values[:, :, 0], [[0.0, 1.0]])

    def test_two_channels_cannot_be_encoded(self):
        with pytest.raises(ShapeError):
            encode_image(ImageTensor(np.zeros((2, 2, 2))))


class TestResize:
    def test_constant_stays_constant(self):
        out = resize_bilinear(ImageTensor(np.full((5, 9, 3), 0.25)), 13, 4)
        assert out.shape == (13, 4, 3)
        np.testing.assert_allclose(out.values, 0.25)

    def test_identity(self):
        img = _random_image(1, (6, 5, 1))
        np.testing.assert_allclose(resize_bilinear(img, 6, 5).values, img.values, rtol=0, atol=1e-15)

    def test_checkerboard_averages(self):
        out = resize_bilinear(ImageTensor(np.array([[0.0, 1.0], [1.0, 0.0]])), 1, 1)
        assert out.values[0, 0, 0] == pytest.approx(0.5)

    def test_bad_size(self):
        with pytest.raises(ShapeError):
            resize_bilinear(_random_image(0), 0, 3)


class TestFlips:
    def test_flip_axes(self):
        values = np.arange(6, dtype=np.float64).reshape(2, 3, 1) / 5.0
        img = ImageTensor(values)
        np.testing.assert_array_equal(flip(img, FlipAxis.HORIZONTAL).values[:, :, 0], values[:, ::-1, 0])
        np.testing.assert_array_equal(flip(img, "vertical").values[:, :, 0], values[::-1, :, 0])
        assert flip(flip(img, FlipAxis.HORIZONTAL), FlipAxis.HORIZONTAL) == img

    def test_augment_order(self):
        images = [_random_image(0), _random_image(1)]
        augmented = augment_flips(images)
        assert len(augmented) == 6
        assert augmented[:2] == images
        assert augmented[2] == flip(images[0], FlipAxis.HORIZONTAL)
        assert augmented[5] == flip(images[1], FlipAxis.VERTICAL)


class TestFilters:
    def test_size_filter(self):
        assert passes_size_filter(ImageTensor(np.zeros((32, 128, 1))))
        assert not passes_size_filter(ImageTensor(np.zeros((32, 129, 1))))
        assert not passes_size_filter(ImageTensor(np.zeros((31, 40, 1))))
        images = [ImageTensor(np.zeros((40, 40, 1))), ImageTensor(np.zeros((8, 8, 1)))]
        assert filter_images(images) == [0]

    def test_to_batch_converts_channels_and_size(self):
        rgb = ImageTensor(np.stack([np.full((4, 4), v) for v in (0.0, 0.3, 0.6)], axis=2))
        batch = to_batch([rgb, ImageTensor(np.full((8, 8, 1), 0.5))], 4, 4, 1)
        assert batch.shape == (2, 1, 4, 4)
        np.testing.assert_allclose(batch[0], 0.3)
        np.testing.assert_allclose(batch[1], 0.5)
        gray_to_rgb = to_batch([ImageTensor(np.full((4, 4, 1), 0.2))], 4, 4, 3)
        np.testing.assert_allclose(gray_to_rgb, 0.2)
        with pytest.raises(ShapeError):
            to_batch([ImageTensor(np.zeros((4, 4, 2)))], 4, 4, 3)


class TestDedup:
    def test_signature_is_deterministic(self):
        img = _random_image(3)
        first = lsh_signature(img, planes=32, seed=4)
        assert len(first) == 32
        assert first == lsh_signature(img, planes=32, seed=4)
        assert first.hamming(lsh_signature(img, planes=32, seed=4)) == 0

    def test_brightness_and_contrast_do_not_change_the_signature(self):
        img = _random_image(5)
        dimmed = ImageTensor(img.values * 0.5 + 0.25)
        assert lsh_signature(img) == lsh_signature(dimmed)

    def test_hamming_length_mismatch(self):
        img = _random_image(0)
        with pytest.raises(ValueError):
            lsh_signature(img, planes=8).hamming(lsh_signature(img, planes=16))

    def test_keeps_first_of_each_duplicate(self):
        a, b = _random_image(10), _random_image(11)
        assert dedup([a, a, b]) == [0, 2]
        assert dedup([a, b, a, b]) == [0, 1]

    def test_maximal_threshold_keeps_one(self):
        images = [_random_image(seed) for seed in range(4)]
        assert dedup(images, planes=16, threshold=16) == [0]

    def test_empty_and_bad_threshold(self):
        assert dedup([]) == []
        with pytest.raises(ValueError):
            dedup([_random_image(0)], planes=8, threshold=9)
