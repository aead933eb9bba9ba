"""Finite-difference verification of every differentiable building block,
the losses, and a few coordinates of the assembled network."""

import torch

from conftest import randomize_running_stats_
from dmanet import OhemConfig, blocks, build_dma_net, joint_loss
from dmanet.config import ModelConfig
from dmanet.encoder import BasicBlock
from dmanet.network import ModelOutputs
from dmanet.losses import ohem_cross_entropy, pixel_cross_entropy
from gradcheck import assert_gradients_match, check_module_gradients


def _rand(*shape, seed):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def test_conv_bn_relu_gradients():
    module = blocks.ConvBnRelu(3, 5, kernel_size=3)
    randomize_running_stats_(module, seed=1)
    checked = check_module_gradients(module, [_rand(2, 3, 6, 7, seed=1)])
    assert checked > 0


def test_residual_block_gradients():
    module = BasicBlock(4, 6, stride=2)
    randomize_running_stats_(module, seed=2)
    check_module_gradients(module, [_rand(2, 4, 8, 8, seed=2)])


def test_weight_learning_block_gradients():
    module = blocks.WeightLearningBlock(5)
    check_module_gradients(module, [_rand(2, 5, 4, 6, seed=3)])


def test_contextual_module_gradients():
    module = blocks.ContextualModule(4, rates=(2, 4))
    randomize_running_stats_(module, seed=4)
    check_module_gradients(module, [_rand(2, 4, 9, 9, seed=4)])


def test_spatial_module_gradients():
    module = blocks.SpatialModule(4, skip_ch=3)
    randomize_running_stats_(module, seed=5)
    check_module_gradients(
        module, [_rand(2, 4, 6, 6, seed=5), _rand(2, 3, 6, 6, seed=6)])


def test_lattice_block_gradients():
    # seeds chosen so no combine pre-activation sits within the probe step
    # of a relu kink, where central differences measure the wrong slope
    module = blocks.LatticeEnhancedBlock(4, skip_ch=3, rates=(2, 4))
    randomize_running_stats_(module, seed=6)
    check_module_gradients(
        module, [_rand(2, 4, 6, 6, seed=21), _rand(2, 3, 6, 6, seed=22)])


def test_feature_transform_gradients():
    module = blocks.FeatureTransformBlock(5, 5)
    randomize_running_stats_(module, seed=7)
    check_module_gradients(module, [_rand(2, 5, 5, 6, seed=9)])


def test_global_context_gradients():
    module = blocks.GlobalContextBlock(6, 4)
    randomize_running_stats_(module, seed=8)
    check_module_gradients(module, [_rand(2, 6, 4, 4, seed=10)])


def _loss_setup(seed, num_classes=5, shape=(2, 6, 8)):
    gen = torch.Generator().manual_seed(seed)
    logits = torch.randn(shape[0], num_classes, *shape[1:], generator=gen,
                         dtype=torch.float64).requires_grad_(True)
    labels = torch.randint(0, num_classes, shape, generator=gen)
    labels[0, 0, :3] = 255
    return logits, labels


def test_pixel_cross_entropy_gradients():
    logits, labels = _loss_setup(seed=11)
    assert_gradients_match(
        lambda: pixel_cross_entropy(logits, labels),
        [("logits", logits)], coords_per_tensor=12)


def test_ohem_gradients_away_from_the_selection_boundary():
    # mining switches pixels in and out at p == threshold; a well-separated
    # threshold keeps the kept set stable under the probe step
    logits, labels = _loss_setup(seed=12)
    config = OhemConfig(prob_threshold=0.5, min_keep_fraction=0.25)
    with torch.no_grad():
        probs = torch.softmax(logits, dim=1)
        gathered = probs.gather(1, labels.clamp(max=4).unsqueeze(1)).squeeze(1)
        assert (gathered - 0.5).abs().min() > 1e-3
    assert_gradients_match(
        lambda: ohem_cross_entropy(logits, labels, config),
        [("logits", logits)], coords_per_tensor=12)


def test_joint_loss_gradients_through_all_three_heads():
    gen = torch.Generator().manual_seed(13)
    heads = tuple(
        torch.randn(2, 4, 6, 8, generator=gen, dtype=torch.float64)
        .requires_grad_(True)
        for _ in range(3)
    )
    labels = torch.randint(0, 4, (2, 6, 8), generator=gen)
    assert_gradients_match(
        lambda: joint_loss(ModelOutputs(*heads), labels,
                           aux_weight=0.4, ohem=None).total,
        [("principal", heads[0]), ("aux_mid", heads[1]), ("aux_high", heads[2])],
        coords_per_tensor=6)


def test_full_network_gradients_spot_check():
    model = build_dma_net(ModelConfig(num_classes=3, width_divisor=16), seed=0)
    randomize_running_stats_(model, seed=9)
    model = model.double()
    model.eval()
    images = _rand(2, 3, 64, 64, seed=14).requires_grad_(True)
    gen = torch.Generator().manual_seed(15)
    projections = [torch.randn(2, 3, 64, 64, generator=gen, dtype=torch.float64)
                   for _ in range(3)]

    def make_scalar():
        outputs = model(images)
        return sum((head * proj).sum()
                   for head, proj in zip(outputs, projections))

    # a handful of parameters spanning the depth of the graph, plus the input
    wanted = [
        "encoder.stem.conv.weight",
        "encoder.sub4.block2.conv2.weight",
        "low_branch.lattice.context.gates.conv.bias",
        "mid_transform.channel_fc.weight",
        "global_context.cbr.bn.weight",
        "head.bias",
    ]
    chosen = [(name, param) for name, param in model.named_parameters()
              if name in wanted]
    assert len(chosen) == len(wanted)
    checked = assert_gradients_match(make_scalar, chosen + [("images", images)],
                                     coords_per_tensor=2)
    assert checked >= 14
