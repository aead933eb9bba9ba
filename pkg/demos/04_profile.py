"""Closed-form parameter/operation accounting, resolution scaling, and a
wall-clock latency measurement.

Run with ``python3 demos/04_profile.py``."""

from dmanet import ModelConfig, benchmark_latency, build_dma_net, profile

reference = ModelConfig(num_classes=19)

print("reference configuration at 768x1536:\n")
report = profile(reference, (768, 1536))
print(report.text())

print("\noperation count vs. resolution (parameters never move):")
for size in ((512, 1024), (768, 1536), (1024, 2048)):
    r = profile(reference, size)
    per_pixel = r.total_flops / (size[0] * size[1])
    print(f"  {size[0]:>4}x{size[1]:<4}  {r.total_flops / 1e9:8.2f} G ops"
          f"   {per_pixel:8.1f} per pixel")

ratio = (profile(reference, (768, 1536)).total_flops
         / profile(reference, (1024, 2048)).total_flops)
print(f"\n768x1536 / 1024x2048 operation ratio: {ratio:.7f} "
      f"(the pixel-count ratio is 0.5625)")

print("\nwall-clock latency of the desk-scale model at 256x512:")
tiny = build_dma_net(ModelConfig(num_classes=19, width_divisor=8), seed=0)
stats = benchmark_latency(tiny, (256, 512), warmup=3, iters=10)
for key in ("mean_ms", "p50_ms", "min_ms", "max_ms", "fps"):
    print(f"  {key:<8} {stats[key]:9.2f}")
