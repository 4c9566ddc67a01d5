"""Feature extraction: gradient histograms and color-name probabilities."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occtrack.errors import NeedsColor, PatchTooSmall, ShapeMismatch
from occtrack.features import FeatureParams, assemble, extract_colornames, extract_hog
from occtrack.imaging import cosine_window


def _patch(seed: int, h: int = 48, w: int = 48, color: bool = False) -> np.ndarray:
    rng = np.random.default_rng(seed)
    shape = (h, w, 3) if color else (h, w)
    return rng.uniform(40.0, 210.0, size=shape)


class TestHog:
    def test_shapes(self):
        hog = extract_hog(_patch(0), 4, 9)
        assert hog.channels.shape == (9, 12, 12)
        assert hog.cell_size == 4

    @given(st.integers(min_value=0, max_value=9999))
    def test_deterministic(self, seed):
        p = _patch(seed)
        a = extract_hog(p, 4, 9).channels
        b = extract_hog(p.copy(), 4, 9).channels
        assert a.tobytes() == b.tobytes()

    @given(st.floats(min_value=-30.0, max_value=30.0))
    def test_additive_shift_invariance(self, offset):
        # gradients ignore a global brightness offset while no pixel clips
        p = _patch(11)
        a = extract_hog(p, 4, 9).channels
        b = extract_hog(p + offset, 4, 9).channels
        assert np.allclose(a, b, atol=1e-10)

    def test_uniform_patch_is_zero(self):
        flat = np.full((32, 32), 128.0)
        hog = extract_hog(flat, 4, 9).channels
        assert np.all(hog == 0.0)

    def test_nonnegative(self):
        hog = extract_hog(_patch(5, color=True), 4, 9).channels
        assert np.all(hog >= 0.0)

    def test_too_small_raises(self):
        with pytest.raises(PatchTooSmall):
            extract_hog(np.zeros((7, 20)), 4, 9)

    def test_orientation_rotation(self):
        # a vertical-edge grating and its transpose excite different bins
        x = np.tile(np.linspace(0, 255, 32), (32, 1))
        v = extract_hog(x, 4, 9).channels.sum(axis=(1, 2))
        h = extract_hog(x.T, 4, 9).channels.sum(axis=(1, 2))
        assert np.argmax(v) != np.argmax(h)


class TestColorNames:
    def test_shapes_and_simplex(self):
        cn = extract_colornames(_patch(1, color=True), 4)
        assert cn.channels.shape == (11, 12, 12)
        sums = cn.channels.sum(axis=0)
        assert np.allclose(sums, 1.0, atol=1e-9)
        assert np.all(cn.channels >= 0.0)

    @given(st.integers(min_value=0, max_value=9999))
    def test_deterministic(self, seed):
        p = _patch(seed, color=True)
        a = extract_colornames(p, 4).channels
        b = extract_colornames(p.copy(), 4).channels
        assert a.tobytes() == b.tobytes()

    def test_gray_input_rejected(self):
        with pytest.raises(NeedsColor):
            extract_colornames(np.zeros((16, 16)), 4)

    def test_too_small_raises(self):
        with pytest.raises(PatchTooSmall):
            extract_colornames(np.zeros((2, 2, 3)), 4)

    def test_distinct_colors_distinct_channels(self):
        red = np.zeros((16, 16, 3))
        red[..., 0] = 220.0
        green = np.zeros((16, 16, 3))
        green[..., 1] = 220.0
        a = extract_colornames(red, 4).channels.sum(axis=(1, 2))
        b = extract_colornames(green, 4).channels.sum(axis=(1, 2))
        assert np.argmax(a) != np.argmax(b)


class TestAssemble:
    def test_channel_count_and_grid(self):
        p = _patch(2, color=True)
        hog = extract_hog(p, 4, 9)
        cn = extract_colornames(p, 4)
        win = cosine_window(12, 12)
        stack = assemble(hog, cn, win)
        assert stack.channels.shape == (20, 12, 12)
        all_same = {c.shape for c in stack.channels}
        assert all_same == {(12, 12)}

    def test_window_applied(self):
        p = _patch(3)
        hog = extract_hog(p, 4, 9)
        win = cosine_window(12, 12)
        stack = assemble(hog, None, win)
        # Hann window zeroes the border cells on every channel
        assert np.all(stack.channels[:, 0, :] == 0.0)
        assert np.all(stack.channels[:, :, -1] == 0.0)
        assert np.allclose(stack.channels, hog.channels * win[None])

    def test_window_mismatch_raises(self):
        hog = extract_hog(_patch(4), 4, 9)
        with pytest.raises(ShapeMismatch):
            assemble(hog, None, cosine_window(5, 5))

    def test_cn_resampled_to_gradient_grid(self):
        p = _patch(6, color=True)
        hog = extract_hog(p, 4, 9)
        cn = extract_colornames(p, 8)
        stack = assemble(hog, cn, cosine_window(12, 12))
        assert stack.channels.shape == (20, 12, 12)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            FeatureParams(cell_size=0)
        with pytest.raises(ValueError):
            FeatureParams(n_bins=1)
        with pytest.raises(ValueError):
            FeatureParams(padding_factor=0.5)
        with pytest.raises(ValueError):
            FeatureParams(label_sigma_scale=0.0)
