"""Full pipeline runs and what they cost.

Sweeps the percentile threshold on one scene and prints the cost report
each time: retained tokens, token sparsity, and the modeled FLOPs for
the full versus pruned forward pass (multiply-accumulate = 2 FLOPs).
"""

import json

from prato import PipelineConfig, ThresholdPolicy, run_pipeline
from prato.pipeline import block_flop_terms
from prato.synth import generate_scene

scene = generate_scene("ellipse", size=256, seed=5)
print(f"scene 256x256 -> 16x16 grid of 256 tokens; pruning after block 1 of 4\n")

for q in (25.0, 50.0, 75.0):
    cfg = PipelineConfig(policy=ThresholdPolicy("percentile", q), seed=5)
    pruned, bundles, report = run_pipeline(scene.image, scene.tight_box, cfg)
    print(f"percentile q={q:>4}: retained {pruned.retained_count:>3} tokens, "
          f"sparsity {report.token_sparsity:.3f}, "
          f"flops {report.flops_pruned / 1e6:7.1f}M vs {report.flops_full / 1e6:7.1f}M "
          f"(-{report.flops_reduction:.1%})")

print("\nper-block terms at 256 vs 128 tokens (width 64):")
for n in (256, 128):
    terms = block_flop_terms(n, 64)
    line = ", ".join(f"{k} {v / 1e6:.2f}M" for k, v in terms.items())
    print(f"   n={n}: {line}")
print("halving tokens quarters the attention term and halves the projections\n")

cfg = PipelineConfig(policy=ThresholdPolicy("percentile", 50.0), seed=5)
_, _, report = run_pipeline(scene.image, scene.tight_box, cfg)
print("cost report as emitted by the CLI prune subcommand:")
print(json.dumps(report.to_dict(), indent=2))
