"""
Checking the hand-written gradients
===================================

Every network's backward pass is written by hand.  Central finite
differences on a tiny graph confirm the analytic gradient of the full
objective in both training stages.
"""

from convertgc.graph import SbmConfig, generate_sbm
from convertgc.pipeline import TrainConfig, check_gradients

g = generate_sbm(SbmConfig(blocks=3, nodes_per_block=4, p_in=0.6, p_out=0.1, dim=6, noise=0.5, seed=0))
for variant in ("aligned", "cross"):
    for stage2 in (False, True):
        rep, seed = check_gradients(g, TrainConfig(hidden=(16,), semantic_variant=variant), stage2)
        print(f"{variant:8s} stage {2 if stage2 else 1}  init seed {seed}  worst {rep.worst:.2e}  passed {rep.passed}")
        if variant == "aligned" and stage2:
            for name, err in sorted(rep.max_rel_error.items()):
                print(f"    {name:12s} {err:.2e}")
