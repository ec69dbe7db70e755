"""Prompt-quality sweep: tight, oversized, partial, and misleading boxes.

Runs the sweep harness over all four prompting conditions and prints
the per-cell retention statistics. Misleading prompts pull retention
away from the true target region; partial and oversized degrade more
gently.
"""

import tempfile

from prato import PipelineConfig, PromptPerturbation, SweepSpec, ThresholdPolicy
from prato.synth import run_sweep

spec = SweepSpec(
    policies=[ThresholdPolicy("percentile", 75.0)],
    k_values=[5],
    perturbations=[
        PromptPerturbation("tight"),
        PromptPerturbation("oversized", 0.5),
        PromptPerturbation("partial", 0.5),
        PromptPerturbation("misleading"),
    ],
    seeds=20,
    size=128,
    target_kind="ellipse",
    base_seed=0,
    pipeline=PipelineConfig(depth=4, seed=0),
)

with tempfile.TemporaryDirectory() as out_dir:
    summary = run_sweep(spec, out_dir)

print(f"{summary['total_rows']} runs, {summary['failed_rows']} failures\n")
print(f"{'condition':<38} {'sparsity':>8} {'in-box':>8} {'out-box':>8} {'true-box':>9}")
for key, cell in summary["cells"].items():
    print(f"{key:<38} {cell['mean_token_sparsity']:>8.3f} "
          f"{cell['mean_in_box_density']:>8.3f} {cell['mean_out_box_density']:>8.3f} "
          f"{cell['mean_original_box_density']:>9.3f}")

print("\nin-box density: retained fraction inside the prompt actually used")
print("true-box density: retained fraction inside the target's tight box")
print("misleading prompts keep their own box dense but starve the true box")
