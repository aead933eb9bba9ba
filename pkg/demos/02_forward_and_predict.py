"""Assemble the full network, inspect its three heads, and run inference
on a synthetic image.

Run with ``python3 demos/02_forward_and_predict.py``."""

import numpy as np
import torch

from dmanet import ModelConfig, build_dma_net, predict
from dmanet.data import make_synthetic_toy, normalize_image, pad_to_multiple

config = ModelConfig(num_classes=4, width_divisor=8)
model = build_dma_net(config, seed=0)
model.eval()
print(f"parameters: {sum(p.numel() for p in model.parameters()):,} "
      f"(width_divisor={config.width_divisor} shrinks every stage)")

# --- the three decoder features ------------------------------------------
images = torch.randn(1, 3, 64, 128)
with torch.no_grad():
    low, mid, high = model.forward_features(images)
print(f"\ninput {tuple(images.shape)}")
print(f"low-level branch  {tuple(low.shape)}   (1/8 resolution)")
print(f"mid-level branch  {tuple(mid.shape)}    (1/16 resolution)")
print(f"high-level branch {tuple(high.shape)}    (1/32 resolution)")

# --- the three classification heads ---------------------------------------
with torch.no_grad():
    outputs = model(images)
print("\nall heads are restored to the input resolution:")
for name, head in zip(("principal", "aux_mid", "aux_high"), outputs):
    print(f"  {name:<10} {tuple(head.shape)}")

# --- inference on a toy sample --------------------------------------------
sample = make_synthetic_toy(1, (64, 128), num_classes=4, seed=0)[0]
padded, original_size = pad_to_multiple(sample.image)
batch = torch.from_numpy(normalize_image(padded)).unsqueeze(0)
mask = predict(model, batch)[0][:original_size[0], :original_size[1]]

print(f"\npredicted mask: shape {mask.shape}, dtype {mask.dtype}")
values, counts = np.unique(mask, return_counts=True)
for value, count in zip(values, counts):
    share = count / mask.size
    print(f"  class {value}: {share:6.1%} of pixels")
print("(an untrained model predicts noise; see demo 03 for a trained one)")
