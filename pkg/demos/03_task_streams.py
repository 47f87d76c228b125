"""Building permuted, rotated and split task streams from MNIST.

Needs the IDX files in the directory named by $INCRANK_DATA_DIR. Tasks
are materialised lazily, so only the one being looked at occupies memory.
"""
import numpy as np

from incrank.data import load_mnist, make_permuted_stream, make_rotated_stream, make_split_stream

train, test = load_mnist()

perm = make_permuted_stream(train, test, 5, seed=0)
print("permuted: task 1 is the identity permutation:",
      np.array_equal(perm.metadata[0], np.arange(784)))

rot = make_rotated_stream(train, test, 5, seed=0)
print("rotated angles (deg):", [round(a, 1) for a in rot.metadata])
img = rot.train(2).inputs[0].reshape(28, 28)
for row in img[::2]:
    print("".join("#" if v > 0.5 else "." for v in row[::1]))

split = make_split_stream(train, test, 2, seed=0)
print("split class groups:", [list(map(int, g)) for g in split.metadata])
print("task 1 sizes:", len(split.train(1)), "train /", len(split.test(1)), "test")
