"""Feature backbone: block semantics, weight sharing, receptive field."""

import numpy as np
import pytest

from stereosr.backbone import (
    extract_features,
    init_feature_extractor,
    init_res_aspp_block,
    init_residual_block,
    res_aspp_block,
    residual_block,
)
from stereosr.gradcheck import numerical_gradient
from stereosr.optim import named_parameters
from stereosr.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def zero_params(tree):
    for _, p in named_parameters(tree):
        p.data[...] = 0.0
    return tree


class TestResidualBlock:
    def test_zero_params_identity(self, rng):
        params = zero_params(init_residual_block(rng, 3))
        x = Tensor(rng.normal(size=(1, 3, 5, 6)).astype(np.float32))
        out = residual_block(x, params)
        np.testing.assert_array_equal(out.data, x.data)

    def test_preserves_shape(self, rng):
        params = init_residual_block(rng, 4)
        x = Tensor(rng.normal(size=(2, 4, 7, 9)).astype(np.float32))
        assert residual_block(x, params).shape == x.shape

    def test_channel_mismatch(self, rng):
        params = init_residual_block(rng, 4)
        with pytest.raises(ValueError, match="C=4"):
            residual_block(Tensor(rng.normal(size=(1, 3, 5, 5))), params)

    def test_identity_jacobian_at_zero_weights(self, rng):
        """With zero weights the block is the identity, so dy/dx is too."""
        params = zero_params(init_residual_block(rng, 2))
        x = Tensor(rng.normal(size=(1, 2, 3, 4)), requires_grad=True, dtype=np.float64)
        w = rng.normal(size=(1, 2, 3, 4))

        def loss():
            return (residual_block(x, params) * Tensor(w, dtype=np.float64)).sum()

        loss().backward()
        np.testing.assert_allclose(x.grad, w, atol=1e-12)
        np.testing.assert_allclose(numerical_gradient(loss, x), w, atol=1e-8)


class TestResASPPBlock:
    def test_zero_fusion_identity(self, rng):
        params = init_res_aspp_block(rng, 3)
        params.fuse.weight.data[...] = 0.0
        params.fuse.bias.data[...] = 0.0
        x = Tensor(rng.normal(size=(1, 3, 9, 9)).astype(np.float32))
        out = res_aspp_block(x, params)
        np.testing.assert_array_equal(out.data, x.data)

    @pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (17, 20)])
    def test_preserves_small_extents(self, rng, h, w):
        params = init_res_aspp_block(rng, 2)
        x = Tensor(rng.normal(size=(1, 2, h, w)).astype(np.float32))
        assert res_aspp_block(x, params).shape == x.shape

    def test_receptive_field_reaches_dilation_8(self, rng):
        """A center perturbation reaches exactly 8 px in one block, not 9."""
        params = init_res_aspp_block(rng, 1)
        base = rng.normal(size=(1, 1, 19, 19)).astype(np.float64)
        bumped = base.copy()
        bumped[0, 0, 9, 9] += 1.0
        a = res_aspp_block(Tensor(base, dtype=np.float64), params).data
        b = res_aspp_block(Tensor(bumped, dtype=np.float64), params).data
        diff = np.abs(b - a)[0, 0]
        assert diff[9, 17] > 0  # 8 px right via the dilation-8 branch
        assert diff[1, 9] > 0  # 8 px up
        assert diff[9, 18] == 0  # beyond the block's receptive field
        assert diff[0, 0] == 0


class TestExtractFeatures:
    def test_identical_inputs_bitwise_identical_features(self, rng):
        params = init_feature_extractor(rng, 1, 4)
        x = Tensor(rng.random((1, 1, 6, 8)).astype(np.float32))
        y = Tensor(x.data.copy())
        f_l, f_r = extract_features(x, y, params)
        assert np.array_equal(f_l.data, f_r.data)

    def test_swapped_inputs_swap_outputs(self, rng):
        params = init_feature_extractor(rng, 1, 4)
        a = Tensor(rng.random((1, 1, 6, 8)).astype(np.float32))
        b = Tensor(rng.random((1, 1, 6, 8)).astype(np.float32))
        f_a, f_b = extract_features(a, b, params)
        g_b, g_a = extract_features(b, a, params)
        assert np.array_equal(f_a.data, g_a.data)
        assert np.array_equal(f_b.data, g_b.data)

    def test_shape_mismatch_rejected(self, rng):
        params = init_feature_extractor(rng, 1, 4)
        with pytest.raises(ValueError, match="differ"):
            extract_features(
                Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 4, 5))), params
            )

    def test_parameter_count_is_single_branch(self, rng):
        """Shared design owns exactly one branch's parameters.

        Enumerated: entry conv (2 tensors) + 3 residual blocks (4 each)
        + 2 resASPP blocks (8 each) = 30 tensors; element count follows
        the layer dimensions for C=4, 1 input channel.
        """
        c = 4
        params = init_feature_extractor(rng, 1, c)
        named = list(named_parameters(params))
        assert len(named) == 2 + 3 * 4 + 2 * 8
        conv3 = c * c * 9 + c
        entry = c * 1 * 9 + c
        aspp = 3 * conv3 + (c * 3 * c + c)
        expected_elems = entry + 3 * (2 * conv3) + 2 * aspp
        assert sum(p.size for _, p in named) == expected_elems

    def test_both_eyes_feed_the_same_tensors(self, rng):
        """Left-only and right-only losses update the identical parameter set."""
        params = init_feature_extractor(rng, 1, 3)
        a = Tensor(rng.random((1, 1, 5, 6)).astype(np.float32))
        b = Tensor(rng.random((1, 1, 5, 6)).astype(np.float32))

        def grad_names(which):
            for _, p in named_parameters(params):
                p.zero_grad()
            f_l, f_r = extract_features(a, b, params)
            (f_l if which == "left" else f_r).sum().backward()
            return {
                name
                for name, p in named_parameters(params)
                if p.grad is not None and np.any(p.grad != 0)
            }

        left_names = grad_names("left")
        right_names = grad_names("right")
        assert left_names == right_names
        assert len(left_names) == len(list(named_parameters(params)))

    def test_zero_params_zero_features(self, rng):
        params = zero_params(init_feature_extractor(rng, 1, 4))
        x = Tensor(rng.random((1, 1, 5, 6)).astype(np.float32))
        f_l, f_r = extract_features(x, x, params)
        np.testing.assert_array_equal(f_l.data, 0.0)
        np.testing.assert_array_equal(f_r.data, 0.0)
