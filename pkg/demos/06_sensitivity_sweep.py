"""
Sensitivity to the loss weights
===============================

Sweep the semantic-loss weight alpha and the pseudo-label fraction tau.
"""

from convertgc.graph import SbmConfig, generate_sbm
from convertgc.pipeline import TrainConfig, sweep

g = generate_sbm(SbmConfig(noise=3.0, seed=1))
base = TrainConfig(epochs=150)
for param, values in (("alpha", [0.0, 0.1, 0.5, 1.0, 2.0]), ("tau", [0.25, 0.5, 0.75, 1.0])):
    out = sweep(g, base, param, values, n_runs=2)
    print(param, " ".join(f"{v:g}:{s.mean['acc']:.3f}" for v, s in out.items()))
