import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsc_asr.augment import (
    AugmentPolicy,
    apply_masks,
    apply_raw_time_mask,
    apply_time_warp,
    augment_features,
    mask_array,
    utterance_rng,
    warp_matrix,
)
from lsc_asr.autograd import Tensor

NO_AUG = AugmentPolicy(0, 0, 0, 0, 0)


def feats(T=50, C=12, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(T, C))


class TestMasks:
    def test_zero_widths_identity(self):
        x = feats()
        pol = AugmentPolicy(2, 0, 2, 0, 0)
        np.testing.assert_array_equal(apply_masks(x, pol, utterance_rng(0, 1)), x)

    def test_full_time_mask(self):
        x = feats(T=6)

        class Full:
            def integers(self, lo, hi):
                return hi - 1  # widest mask, last legal start

        out = apply_masks(x, AugmentPolicy(1, 6, 0, 0, 0), Full())
        assert not np.any(out)

    def test_unmasked_entries_untouched(self):
        x = feats()
        pol = AugmentPolicy(2, 10, 2, 4, 0)
        out = apply_masks(x, pol, utterance_rng(3, 4))
        kept = out != 0
        np.testing.assert_array_equal(out[kept], x[kept])
        zero_rows = np.all(out == 0, axis=1)
        zero_cols = np.all(out == 0, axis=0)
        assert np.all(zero_rows[:, None] | zero_cols[None, :] | kept)

    def test_input_not_mutated(self):
        x = feats()
        before = x.copy()
        augment_features(x, AugmentPolicy(), utterance_rng(0, 0))
        np.testing.assert_array_equal(x, before)

    def test_deterministic(self):
        x = feats()
        a = augment_features(x, AugmentPolicy(), utterance_rng(5, 2, 1))
        b = augment_features(x, AugmentPolicy(), utterance_rng(5, 2, 1))
        assert a.tobytes() == b.tobytes()
        c = augment_features(x, AugmentPolicy(), utterance_rng(5, 2, 2))
        assert a.tobytes() != c.tobytes()

    @settings(max_examples=50)
    @given(st.integers(1, 30), st.integers(1, 20), st.integers(0, 3), st.integers(0, 40),
           st.integers(0, 3), st.integers(0, 25), st.integers(0, 1000))
    def test_mask_widths_bounded(self, T, C, nt, wt, nc, wc, seed):
        m = mask_array(T, C, AugmentPolicy(nt, wt, nc, wc, 0), np.random.default_rng(seed))
        assert set(np.unique(m)) <= {0.0, 1.0}
        if nt == 0 and nc == 0:
            assert np.all(m == 1)
        zero_rows = int(np.all(m == 0, axis=1).sum())
        if nc == 0:
            assert zero_rows <= nt * min(wt, T)

    def test_tensor_gradient_is_mask(self):
        x = Tensor(feats(T=8, C=4), requires_grad=True)
        pol = AugmentPolicy(1, 3, 1, 2, 0)
        out = apply_masks(x, pol, utterance_rng(0, 0))
        out.backward(np.ones(out.shape))
        np.testing.assert_array_equal(x.grad, mask_array(8, 4, pol, utterance_rng(0, 0)))

    def test_negative_policy_rejected(self):
        with pytest.raises(ValueError):
            AugmentPolicy(num_time_masks=-1)


class TestTimeWarp:
    def test_zero_shift_identity(self):
        np.testing.assert_allclose(warp_matrix(20, 7, 0), np.eye(20))

    def test_constant_features_unchanged(self):
        x = np.tile(np.arange(5.0), (40, 1))
        out = apply_time_warp(x, AugmentPolicy(0, 0, 0, 0, 5), utterance_rng(1, 1))
        np.testing.assert_allclose(out, x, atol=1e-12)

    def test_center_moves_to_target(self):
        M = warp_matrix(21, 10, 3)
        x = np.arange(21.0)
        np.testing.assert_allclose((M @ x)[13], 10.0)
        assert (M @ x)[0] == 0 and (M @ x)[-1] == 20

    @pytest.mark.parametrize("seed", range(10))
    def test_mass_roughly_preserved(self, seed):
        x = feats(T=100, seed=seed)
        out = apply_time_warp(x, AugmentPolicy(0, 0, 0, 0, 5), utterance_rng(seed, 0))
        assert abs(np.abs(out).sum() / np.abs(x).sum() - 1) < 0.05

    def test_short_sequence_skipped(self):
        x = feats(T=8)
        out = apply_time_warp(x, AugmentPolicy(0, 0, 0, 0, 5), utterance_rng(0, 0))
        assert out is x

    @settings(max_examples=40)
    @given(st.integers(3, 60), st.data())
    def test_rows_are_convex_weights(self, T, data):
        center = data.draw(st.integers(1, T - 2))
        shift = data.draw(st.integers(-center + 1, T - 2 - center))
        M = warp_matrix(T, center, shift)
        np.testing.assert_allclose(M.sum(axis=1), 1.0)
        assert np.all(M >= 0)


class TestRawMask:
    def test_zeroes_spans_only(self):
        x = np.random.default_rng(0).normal(size=2000)
        out = apply_raw_time_mask(x, AugmentPolicy(raw_time_masks=2, max_raw_mask_samples=300),
                                  utterance_rng(0, 0))
        changed = out != x
        assert np.all(out[changed] == 0)
        assert changed.sum() <= 600

    def test_disabled_by_default(self):
        x = np.ones(100)
        np.testing.assert_array_equal(apply_raw_time_mask(x, AugmentPolicy(), utterance_rng(0, 0)), x)
