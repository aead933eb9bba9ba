"""Decoder building blocks: oracle equivalence on many random instances plus
the blocks' structural guarantees."""

import numpy as np
import pytest
import torch

import reference as ref
from conftest import randomize_running_stats_
from dmanet import ShapeError
from dmanet.blocks import (
    ContextualModule,
    ConvBnRelu,
    FeatureTransformBlock,
    GlobalContextBlock,
    LatticeEnhancedBlock,
    SpatialModule,
    WeightLearningBlock,
    lattice_combine,
)
from dmanet.encoder import init_module_

N_INSTANCES = 100


def _prepared(module, seed):
    """Deterministically initialized module in float64 eval mode with
    non-trivial batch-norm statistics."""
    init_module_(module, torch.Generator().manual_seed(seed))
    randomize_running_stats_(module, seed + 5000)
    module.double()
    module.eval()
    return module


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def test_conv_reference_cross_check():
    """The two independent convolution oracles agree with each other and
    with torch for assorted strides, paddings, and dilations."""
    rng = np.random.default_rng(3)
    for _ in range(20):
        stride = int(rng.integers(1, 3))
        dilation = int(rng.integers(1, 3))
        kernel = int(rng.choice([1, 3]))
        padding = dilation * (kernel // 2) + int(rng.integers(0, 2))
        x = _rand(rng, 2, 3, 9, 10)
        w = _rand(rng, 4, 3, kernel, kernel)
        b = _rand(rng, 4)
        fast = ref.conv2d_ref(x, w, b, stride, padding, dilation)
        slow = ref.conv2d_ref_loops(x, w, b, stride, padding, dilation)
        np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12)
        got = torch.nn.functional.conv2d(
            torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b),
            stride=stride, padding=padding, dilation=dilation)
        np.testing.assert_allclose(fast, got.numpy(), rtol=1e-10, atol=1e-10)


def test_lattice_combine_matches_reference():
    rng = np.random.default_rng(11)
    for _ in range(N_INSTANCES):
        n, c, h, w = 1, int(rng.integers(2, 6)), int(rng.integers(3, 8)), 5
        skip = torch.from_numpy(_rand(rng, n, c, h, w))
        transformed = torch.from_numpy(_rand(rng, n, c, h, w))
        gate_a = torch.from_numpy(rng.uniform(0, 1, (n, 1, h, w)))
        gate_b = torch.from_numpy(rng.uniform(0, 1, (n, 1, h, w)))
        p, q, fused = lattice_combine(skip, transformed, gate_a, gate_b)
        ep, eq, efused = ref.lattice_combine_ref(skip.numpy(), transformed.numpy(),
                                                 gate_a.numpy(), gate_b.numpy())
        np.testing.assert_allclose(p.numpy(), ep, rtol=1e-5, atol=1e-12)
        np.testing.assert_allclose(q.numpy(), eq, rtol=1e-5, atol=1e-12)
        np.testing.assert_allclose(fused.numpy(), efused, rtol=1e-5, atol=1e-12)
        assert (p >= 0).all() and (q >= 0).all()
        assert torch.equal(fused, p + q)


def test_lattice_combine_validates_shapes():
    x = torch.randn(1, 4, 6, 6)
    gate = torch.rand(1, 1, 6, 6)
    with pytest.raises(ShapeError, match="must match"):
        lattice_combine(x, torch.randn(1, 4, 6, 5), gate, gate)
    with pytest.raises(ShapeError, match="skip_gate"):
        lattice_combine(x, x, torch.rand(1, 2, 6, 6), gate)
    with pytest.raises(ShapeError, match="transform_gate"):
        lattice_combine(x, x, gate, torch.rand(1, 1, 5, 6))


def test_conv_bn_relu_matches_reference():
    rng = np.random.default_rng(21)
    for instance in range(N_INSTANCES):
        cin, cout = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        kernel = int(rng.choice([1, 3]))
        module = _prepared(ConvBnRelu(cin, cout, kernel_size=kernel), instance)
        x = _rand(rng, 2, cin, 6, 7)
        with torch.no_grad():
            got = module(torch.from_numpy(x)).numpy()
        want = ref.cbr_ref(x, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)
        assert (got >= 0).all()


def test_weight_learning_block_gates():
    rng = np.random.default_rng(31)
    for instance in range(N_INSTANCES):
        c = int(rng.integers(2, 8))
        module = _prepared(WeightLearningBlock(c), instance)
        x = _rand(rng, 2, c, 5, 6)
        with torch.no_grad():
            gate_a, gate_b = module(torch.from_numpy(x))
        ea, eb = ref.wlb_ref(x, ref.arrays_of(module), "")
        np.testing.assert_allclose(gate_a.numpy(), ea, rtol=1e-5, atol=1e-12)
        np.testing.assert_allclose(gate_b.numpy(), eb, rtol=1e-5, atol=1e-12)
        assert gate_a.shape == (2, 1, 5, 6) and gate_b.shape == (2, 1, 5, 6)
        for gate in (gate_a, gate_b):
            assert (gate > 0).all() and (gate < 1).all()


def test_contextual_module_matches_reference():
    rng = np.random.default_rng(41)
    for instance in range(N_INSTANCES):
        c = int(rng.integers(2, 6))
        module = _prepared(ContextualModule(c), instance)
        x = _rand(rng, 1, c, 8, 9)
        with torch.no_grad():
            got = module(torch.from_numpy(x)).numpy()
        want = ref.contextual_ref(x, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)
        assert got.shape == x.shape


def test_spatial_module_matches_reference():
    rng = np.random.default_rng(51)
    for instance in range(N_INSTANCES):
        c, skip = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        module = _prepared(SpatialModule(c, skip), instance)
        x = _rand(rng, 1, c, 7, 8)
        detail = _rand(rng, 1, skip, 7, 8)
        with torch.no_grad():
            got = module(torch.from_numpy(x), torch.from_numpy(detail)).numpy()
        want = ref.spatial_ref(x, detail, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)


def test_spatial_module_validates_inputs():
    module = SpatialModule(4, 2)
    with pytest.raises(ShapeError, match="spatial module"):
        module(torch.randn(1, 3, 8, 8), torch.randn(1, 2, 8, 8))
    with pytest.raises(ShapeError, match="detail"):
        module(torch.randn(1, 4, 8, 8), torch.randn(1, 3, 8, 8))
    with pytest.raises(ShapeError, match="disagree"):
        module(torch.randn(1, 4, 8, 8), torch.randn(1, 2, 8, 6))


def test_lattice_enhanced_block_matches_reference():
    rng = np.random.default_rng(61)
    for instance in range(N_INSTANCES):
        c, skip = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        module = _prepared(LatticeEnhancedBlock(c, skip), instance)
        x = _rand(rng, 1, c, 8, 8)
        detail = _rand(rng, 1, skip, 8, 8)
        with torch.no_grad():
            got = module(torch.from_numpy(x), torch.from_numpy(detail)).numpy()
        want = ref.lattice_block_ref(x, detail, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)
        assert got.shape[1] == 2 * c  # concatenation doubles the channels


def test_feature_transform_matches_reference():
    rng = np.random.default_rng(71)
    for instance in range(N_INSTANCES):
        cin, cout = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        module = _prepared(FeatureTransformBlock(cin, cout), instance)
        x = _rand(rng, 2, cin, 6, 7)
        with torch.no_grad():
            got = module(torch.from_numpy(x)).numpy()
        want = ref.feature_transform_ref(x, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)


def test_feature_transform_fusion_weights_sum_to_one():
    rng = np.random.default_rng(81)
    for instance in range(25):
        module = _prepared(FeatureTransformBlock(4, 4), instance)
        pooled = torch.from_numpy(_rand(rng, 3, 4, 1, 1))
        with torch.no_grad():
            v, w = module.fusion_weights(pooled)
        np.testing.assert_allclose((v + w).numpy(), 1.0, rtol=0, atol=1e-12)
        assert (v > 0).all() and (w > 0).all()
    with pytest.raises(ShapeError, match="pooled"):
        module.fusion_weights(torch.randn(1, 4, 2, 2))


def test_feature_transform_tensor_is_a_contraction():
    """The transformation tensor lies strictly inside (0, 1), so the output
    magnitude never exceeds the feature it rescales."""
    module = _prepared(FeatureTransformBlock(5, 5), 9)
    x = torch.randn(2, 5, 6, 6, dtype=torch.float64)
    with torch.no_grad():
        feats = module.cbr(x)
        out = module(x)
    assert (out.abs() <= feats.abs() + 1e-12).all()


def test_global_context_matches_reference_and_is_spatially_constant():
    rng = np.random.default_rng(91)
    for instance in range(N_INSTANCES):
        cin, cout = int(rng.integers(2, 8)), int(rng.integers(2, 6))
        module = _prepared(GlobalContextBlock(cin, cout), instance)
        x = _rand(rng, 2, cin, 4, 6)
        with torch.no_grad():
            got = module(torch.from_numpy(x)).numpy()
        want = ref.global_context_ref(x, ref.arrays_of(module), "")
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-12)
        spatial_spread = got.max(axis=(2, 3)) - got.min(axis=(2, 3))
        assert (spatial_spread == 0).all()


def test_channel_validation_messages():
    with pytest.raises(ShapeError, match="conv-bn-relu"):
        ConvBnRelu(4, 4)(torch.randn(1, 3, 8, 8))
    with pytest.raises(ShapeError, match="weight learning"):
        WeightLearningBlock(4)(torch.randn(1, 3, 8, 8))
    with pytest.raises(ShapeError, match="contextual"):
        ContextualModule(4)(torch.randn(1, 3, 8, 8))
    with pytest.raises(ShapeError, match="global context"):
        GlobalContextBlock(4, 2)(torch.randn(1, 3, 8, 8))
    with pytest.raises(ShapeError, match="rank-4"):
        ConvBnRelu(4, 4)(torch.randn(4, 8, 8))
