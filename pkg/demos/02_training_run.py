"""
Training on a synthetic block-model graph
=========================================

Train the two-view model once, look at the loss curve, then cluster the
consensus embedding.
"""

import numpy as np

from convertgc.graph import SbmConfig, generate_sbm
from convertgc.pipeline import TrainConfig, evaluate, train

g = generate_sbm(SbmConfig(seed=0))
cfg = TrainConfig(epochs=400, seed=0)
result = train(g, cfg)

# stage 2 (label matching) switches on halfway
for log in result.logs[::40]:
    l = log.losses
    acc = log.metrics.acc if log.metrics else float("nan")
    print(f"epoch {log.epoch:3d}  l_c {l.l_c:8.4f}  l_s {l.l_s:.5f}  l_m {l.l_m:.4f}  stage2 {l.stage2}  acc {acc:.3f}")

report, E = evaluate(result.bundle, g, cfg, return_embeddings=True)
print("final:", {k: round(v, 4) for k, v in report.as_dict().items()})
# the consensus embedding averages two unit-norm views, so its rows have norm <= 1
norms = np.linalg.norm(E, axis=1)
print(f"consensus row norms in [{norms.min():.3f}, {norms.max():.3f}]")
