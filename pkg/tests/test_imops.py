import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flim import imops


def conv_oracle(image, kernels, dilation):
    """Naive triple-loop convolution used as the independent reference."""
    h, w, c = image.shape
    m, k, _, _ = kernels.shape
    r = (k - 1) // 2
    out = np.zeros((h, w, m), dtype=np.float64)
    for b in range(m):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for di in range(-r, r + 1):
                    for dj in range(-r, r + 1):
                        ii = i + di * dilation
                        jj = j + dj * dilation
                        if 0 <= ii < h and 0 <= jj < w:
                            for ch in range(c):
                                acc += float(image[ii, jj, ch]) * \
                                    float(kernels[b, di + r, dj + r, ch])
                out[i, j, b] = acc
    return out


def pool_oracle(image, kind, s):
    """Window-enumeration pooling reference with valid-sample border handling."""
    h, w, c = image.shape
    lo, hi = (s - 1) // 2, s // 2
    out = np.zeros_like(image, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                vals = [image[i + di, j + dj, ch]
                        for di in range(-lo, hi + 1)
                        for dj in range(-lo, hi + 1)
                        if 0 <= i + di < h and 0 <= j + dj < w]
                out[i, j, ch] = max(vals) if kind == "max" else sum(vals) / len(vals)
    return out


class TestExtractPatch:
    def test_single_pixel_zero_padded(self):
        image = np.array([[[5.0]]], dtype=np.float32)
        patch = imops.extract_patch(image, 0, 0, 3)
        assert patch.tolist() == [0, 0, 0, 0, 5, 0, 0, 0, 0]

    def test_identity_window(self):
        image = np.arange(1, 10, dtype=np.float32).reshape(3, 3, 1)
        patch = imops.extract_patch(image, 1, 1, 3)
        assert patch.tolist() == list(range(1, 10))

    def test_dilation_two(self):
        image = np.arange(1, 26, dtype=np.float32).reshape(5, 5, 1)
        patch = imops.extract_patch(image, 2, 2, 3, dilation=2)
        assert patch.tolist() == [1, 3, 5, 11, 13, 15, 21, 23, 25]

    def test_dilation_matches_offset_enumeration(self, rng):
        image = rng.normal(size=(7, 6, 2)).astype(np.float32)
        for row, col, k, d in [(0, 0, 3, 1), (3, 2, 3, 2), (6, 5, 5, 1), (2, 3, 1, 4)]:
            got = imops.extract_patch(image, row, col, k, d)
            r = (k - 1) // 2
            expected = []
            for dr in range(-r, r + 1):
                for dc in range(-r, r + 1):
                    rr, cc = row + dr * d, col + dc * d
                    if 0 <= rr < 7 and 0 <= cc < 6:
                        expected.extend(image[rr, cc, :].tolist())
                    else:
                        expected.extend([0.0, 0.0])
            assert got.tolist() == pytest.approx(expected)

    def test_center_outside_raises(self):
        image = np.zeros((4, 4, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            imops.extract_patch(image, 4, 0, 3)
        with pytest.raises(ValueError):
            imops.extract_patch(image, 0, -1, 3)

    def test_even_size_raises(self):
        image = np.zeros((4, 4, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            imops.extract_patch(image, 0, 0, 2)


class TestConvolve:
    def test_delta_kernel_is_identity(self, rng):
        image = rng.normal(size=(5, 7, 1)).astype(np.float32)
        delta = np.zeros((1, 3, 3, 1), dtype=np.float32)
        delta[0, 1, 1, 0] = 1.0
        out = imops.convolve(image, delta)
        np.testing.assert_allclose(out[:, :, 0], image[:, :, 0], atol=1e-6)

    def test_all_ones_kernel_counts_window(self):
        image = np.ones((3, 3, 1), dtype=np.float32)
        kernel = np.ones((1, 3, 3, 1), dtype=np.float32)
        out = imops.convolve(image, kernel)[:, :, 0]
        expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=np.float32)
        np.testing.assert_array_equal(out, expected)

    def test_zero_image(self, rng):
        image = np.zeros((4, 4, 2), dtype=np.float32)
        kernels = rng.normal(size=(3, 3, 3, 2)).astype(np.float32)
        assert not imops.convolve(image, kernels).any()

    def test_matches_triple_loop_oracle(self, rng):
        for _ in range(5):
            image = rng.normal(size=(8, 8, 3)).astype(np.float32)
            kernels = rng.normal(size=(3, 3, 3, 3)).astype(np.float32)
            for dilation in (1, 2):
                got = imops.convolve(image, kernels, dilation)
                want = conv_oracle(image, kernels, dilation)
                assert np.abs(got - want).max() <= 1e-5

    def test_channel_mismatch_raises(self):
        image = np.zeros((4, 4, 2), dtype=np.float32)
        kernels = np.zeros((1, 3, 3, 3), dtype=np.float32)
        with pytest.raises(ValueError):
            imops.convolve(image, kernels)

    def test_unit_kernel_bounded_by_patch_norm(self, rng):
        # |<p, k>| <= |p| for unit-norm k (Cauchy-Schwarz).
        image = rng.normal(size=(6, 6, 2)).astype(np.float32)
        kernel = rng.normal(size=(3, 3, 2))
        kernel /= np.linalg.norm(kernel)
        out = imops.convolve(image, kernel[np.newaxis].astype(np.float32))
        cols = imops.im2col(image, 3)
        norms = np.linalg.norm(cols, axis=2)
        assert np.all(np.abs(out[:, :, 0]) <= norms + 1e-5)


class TestRelu:
    def test_simple(self):
        image = np.array([[[-1.0], [0.0], [2.0]]], dtype=np.float32)
        assert imops.relu(image).ravel().tolist() == [0, 0, 2]

    def test_all_negative(self):
        image = -np.ones((3, 3, 2), dtype=np.float32)
        assert not imops.relu(image).any()

    @given(arrays(np.float32, (4, 5, 2),
                  elements=st.floats(-10, 10, width=32)))
    @settings(max_examples=25, deadline=None)
    def test_idempotent_and_preserves_nonnegative(self, data):
        once = imops.relu(data)
        assert np.all(once >= 0)
        np.testing.assert_array_equal(once, imops.relu(once))
        keep = data >= 0
        np.testing.assert_array_equal(once[keep], data[keep])


class TestPool:
    def test_window_one_is_identity(self, rng):
        image = rng.normal(size=(4, 4, 2)).astype(np.float32)
        for kind in ("max", "average"):
            np.testing.assert_array_equal(imops.pool(image, kind, 1), image)

    def test_max_row(self):
        image = np.array([[[0.0], [5.0], [0.0]]], dtype=np.float32)
        out = imops.pool(image, "max", 3)
        assert out.ravel().tolist() == [5, 5, 5]

    def test_average_border_counts_valid_samples(self):
        image = np.array([[[0.0], [6.0], [0.0]]], dtype=np.float32)
        out = imops.pool(image, "average", 3)
        assert out.ravel().tolist() == [3, 2, 3]

    def test_matches_window_enumeration_oracle(self, rng):
        image = rng.normal(size=(6, 5, 3)).astype(np.float32)
        for kind in ("max", "average"):
            for s in (2, 3, 4):
                got = imops.pool(image, kind, s)
                want = pool_oracle(image, kind, s)
                np.testing.assert_allclose(got, want, atol=1e-5)

    def test_max_dominates_input(self, rng):
        image = rng.normal(size=(5, 5, 2)).astype(np.float32)
        assert np.all(imops.pool(image, "max", 3) >= image)

    def test_average_of_constant_is_constant(self):
        image = np.full((4, 6, 1), 2.5, dtype=np.float32)
        np.testing.assert_allclose(imops.pool(image, "average", 3), image, atol=1e-6)

    def test_bad_args(self):
        image = np.zeros((2, 2, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            imops.pool(image, "max", 0)
        with pytest.raises(ValueError):
            imops.pool(image, "median", 3)


class TestMinMaxNormalize:
    def test_affine(self):
        image = np.array([[[2.0], [4.0], [6.0]]], dtype=np.float32)
        out = imops.minmax_normalize_channels(image)
        assert out.ravel().tolist() == [0, 0.5, 1]

    def test_constant_channel_maps_to_zero(self):
        image = np.full((1, 2, 1), 7.0, dtype=np.float32)
        assert imops.minmax_normalize_channels(image).ravel().tolist() == [0, 0]

    def test_range_is_unit(self, rng):
        image = rng.normal(size=(6, 6, 3)).astype(np.float32)
        out = imops.minmax_normalize_channels(image)
        assert out.min() >= 0 and out.max() <= 1
        for ch in range(3):
            assert out[:, :, ch].min() == 0.0
            assert out[:, :, ch].max() == 1.0


class TestShapesAndIO:
    def test_ops_preserve_spatial_size(self, rng):
        image = rng.normal(size=(9, 7, 2)).astype(np.float32)
        kernels = rng.normal(size=(4, 3, 3, 2)).astype(np.float32)
        assert imops.convolve(image, kernels, 2).shape == (9, 7, 4)
        assert imops.relu(image).shape == image.shape
        assert imops.pool(image, "max", 3).shape == image.shape
        assert imops.minmax_normalize_channels(image).shape == image.shape

    def test_png_round_trip_gray(self, tmp_path, rng):
        image = (rng.integers(0, 256, size=(8, 6)) / 255.0).astype(np.float32)
        path = tmp_path / "gray.png"
        imops.save_png_gray(image, path)
        loaded = imops.load_png(path)
        assert loaded.shape == (8, 6, 1)
        np.testing.assert_allclose(loaded[:, :, 0], image, atol=1 / 255 / 2)

    def test_load_rgb(self, tmp_path, rng):
        from PIL import Image

        data = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
        path = tmp_path / "rgb.png"
        Image.fromarray(data, mode="RGB").save(path)
        loaded = imops.load_png(path)
        assert loaded.shape == (5, 4, 3)
        np.testing.assert_allclose(loaded, data / 255.0, atol=1e-6)

    def test_as_image_rejects_nan(self):
        with pytest.raises(ValueError):
            imops.as_image(np.array([[[np.nan]]]))
