"""Tour of the decoder building blocks, one tensor at a time.

Run with ``python3 demos/01_building_blocks.py``. Everything is desk-scale
and seeded, so the printed numbers are stable across runs."""

import torch

from dmanet import blocks

torch.manual_seed(0)


def banner(title):
    print(f"\n=== {title} ===")


# ---------------------------------------------------------------------------
banner("conv-bn-relu")
cbr = blocks.ConvBnRelu(3, 8, kernel_size=3, dilation=2).eval()
x = torch.randn(1, 3, 16, 16)
with torch.no_grad():
    y = cbr(x)
print(f"input  {tuple(x.shape)}")
print(f"output {tuple(y.shape)}  (dilation pads to keep the grid)")
print(f"min    {y.min():.4f}  (non-negative after the relu)")

# ---------------------------------------------------------------------------
banner("weight-learning gates")
wlb = blocks.WeightLearningBlock(8).eval()
with torch.no_grad():
    gate_a, gate_b = wlb(y)
print(f"two single-channel gates: {tuple(gate_a.shape)}, {tuple(gate_b.shape)}")
print(f"gate ranges: [{gate_a.min():.4f}, {gate_a.max():.4f}] and "
      f"[{gate_b.min():.4f}, {gate_b.max():.4f}]  (sigmoid outputs)")

# ---------------------------------------------------------------------------
banner("lattice combine")
skip = torch.randn(1, 8, 16, 16)
transformed = torch.randn(1, 8, 16, 16)
p, q, fused = blocks.lattice_combine(skip, transformed, gate_a, gate_b)
print("fused = relu(skip + gate*transformed) + relu(gate*skip + transformed)")
print(f"p min {p.min():.4f}, q min {q.min():.4f}  (both halves rectified)")
print(f"fused shape {tuple(fused.shape)}")

# ---------------------------------------------------------------------------
banner("contextual + spatial enhancement")
context = blocks.ContextualModule(8, rates=(2, 4)).eval()
spatial = blocks.SpatialModule(8, skip_ch=4).eval()
detail = torch.randn(1, 4, 16, 16)
with torch.no_grad():
    context_out = context(y)
    spatial_out = spatial(context_out, detail)
print(f"contextual output {tuple(context_out.shape)}  (atrous rates 2 and 4)")
print(f"spatial output    {tuple(spatial_out.shape)}  (fused with the detail tap)")

# ---------------------------------------------------------------------------
banner("lattice-enhanced block")
lattice = blocks.LatticeEnhancedBlock(8, skip_ch=4, rates=(2, 4)).eval()
with torch.no_grad():
    enhanced = lattice(y, detail)
print(f"input {tuple(y.shape)} + detail {tuple(detail.shape)} "
      f"-> {tuple(enhanced.shape)}")
print("the contextual and spatial halves are concatenated: 2x the channels")

# ---------------------------------------------------------------------------
banner("feature transformation")
transform = blocks.FeatureTransformBlock(8, 8).eval()
with torch.no_grad():
    feats = transform.cbr(y)
    attention = transform.transformation(feats)
    out = transform(y)
print(f"transformation range [{attention.min():.4f}, {attention.max():.4f}] "
      f"(always inside (0, 1))")
pooled = feats.mean(dim=(2, 3), keepdim=True)
with torch.no_grad():
    v, w = transform.fusion_weights(pooled)
print(f"fusion weights v={float(v[0]):.4f}, w={float(w[0]):.4f}, "
      f"v+w={float(v[0] + w[0]):.4f}")
print(f"output {tuple(out.shape)}")

# ---------------------------------------------------------------------------
banner("global context")
context_block = blocks.GlobalContextBlock(8, 8).eval()
with torch.no_grad():
    tiled = context_block(y)
spread = (tiled.amax(dim=(2, 3)) - tiled.amin(dim=(2, 3))).max()
print(f"output {tuple(tiled.shape)}, spatial spread {float(spread):.1f} "
      f"(one pooled vector tiled everywhere)")
