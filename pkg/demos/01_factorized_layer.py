"""A single factorized layer growing across three tasks.

Each task adds one rank-1 factor pair and freezes everything older. The
task-1 weight is reconstructed from the stored factors before and after the
later tasks train, and it does not move.
"""
import numpy as np

from incrank.layer import new_layer
from incrank.linalg import make_rng

rng = make_rng(0)
layer = new_layer(6, 4, 2, rng)
print("task 1 ranks:", layer.ranks())

w1 = layer.compose_weight(1).copy()
x = rng.standard_normal((3, 6))

for t in (2, 3):
    layer.add_task(1, rng)
    # pretend training: push every trainable array somewhere random
    for arr in layer.trainable().values():
        arr[...] = rng.standard_normal(arr.shape)
    print(f"after task {t}: ranks {layer.ranks()}, total rank {layer.total_rank}")

print("task-1 weight unchanged:", np.array_equal(layer.compose_weight(1), w1))
dense = x @ layer.compose_weight(3).T + layer.biases[3]
print("factored vs dense forward, max |diff|:",
      np.abs(layer.forward(x, 3) - dense).max())
print("parameters stored:", layer.param_count())
