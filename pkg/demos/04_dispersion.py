"""Local dispersion of difference vectors.

Each row is a difference between consecutive-layer activations. Around
every row we take its 30 nearest neighbours, run PCA, and divide the
non-leading variance by the leading one. Here the poisoned rows live near
a line, so their ratios are small; Welch tests per layer with BH
correction flag the difference, and a clean-vs-clean split does not.
"""

import numpy as np

from topoact.dispersion import DiffRepresentation, compare_conditions, split_ablation

rng = np.random.default_rng(0)
reps = []
for layer in range(4):
    clean = rng.standard_normal((150, 8))
    direction = rng.standard_normal(8)
    pois = rng.standard_normal((150, 1)) * direction + 0.2 * rng.standard_normal((150, 8))
    reps.append(DiffRepresentation(np.vstack([clean, pois]), ["clean"] * 150 + ["poisoned"] * 150, layer))

res = compare_conditions(reps, k=30)
for layer, a, b, p in zip(range(len(reps)), res.mean_a, res.mean_b, res.p_adjusted):
    print(f"layer {layer}: mean ratio clean {a:.2f}, poisoned {b:.2f}, BH p {p:.1e}")

null = split_ablation(reps, "clean_clean", seed=0, k=30)
print(f"clean vs clean: {null.significant.sum()} of {len(reps)} layers flagged")
