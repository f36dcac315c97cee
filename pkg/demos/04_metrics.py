"""
Clustering metrics
==================

Cluster ids are arbitrary, so accuracy first finds the best one-to-one
mapping of clusters to classes.  NMI and ARI ignore ids altogether.
"""

from convertgc.cluster import compute_metrics, contingency, hungarian_match

y_true = [0, 0, 0, 1, 1, 1, 2, 2, 2]
y_pred = [2, 2, 1, 0, 0, 0, 1, 1, 1]

M = contingency(y_true, y_pred)
print("contingency (rows = clusters, columns = classes)\n", M)
print("cluster -> class:", hungarian_match(M).tolist())
print(compute_metrics(y_true, y_pred))

# two classic small cases
print(compute_metrics([0, 0, 1, 1], [0, 1, 0, 1]))  # ARI -0.5
print(compute_metrics([0, 0, 1, 1], [0, 0, 0, 0]))  # one cluster: ARI 0, NMI 0
