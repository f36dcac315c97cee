"""
Learnable view versus hand-made augmentations
=============================================

The second view can come from the perturb network or from a classical
augmentation (feature masking, edge dropping/adding, PPR diffusion).
A few runs of each on the same graph.
"""

from convertgc.graph import SbmConfig, generate_sbm
from convertgc.pipeline import ABLATION_VARIANTS, TrainConfig, ablation_run

g = generate_sbm(SbmConfig(seed=0))
base = TrainConfig(epochs=200)
results = ablation_run(g, base, ABLATION_VARIANTS, n_runs=3)

print(f"{'variant':14s}  acc_mean  acc_std  nmi_mean")
for name, s in results.items():
    print(f"{name:14s}  {s.mean['acc']:.4f}    {s.std['acc']:.4f}   {s.mean['nmi']:.4f}")
