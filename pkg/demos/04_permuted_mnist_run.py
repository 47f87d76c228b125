"""A short incremental run on permuted MNIST.

Five tasks, two epochs each, rank schedule (11, 1), MNIST read from
$INCRANK_DATA_DIR. Prints the accuracy matrix: every column stays constant
below the diagonal because old tasks read only frozen parameters. Takes
about half a minute on one core.
"""
import numpy as np

from incrank.data import load_mnist, make_permuted_stream
from incrank.metrics import avg_accuracy, forgetting
from incrank.trainer import TrainHyper, run_sequence

train, test = load_mnist()
stream = make_permuted_stream(train, test, 5, seed=0)
record = run_sequence(stream, TrainHyper(epochs=2, r1=11, rt=1, seed=0), [256, 256])

np.set_printoptions(precision=4, suppress=True)
print(record.accuracy)
print(f"A_5 = {avg_accuracy(record.accuracy, 5):.4f}")
print(f"F_5 = {forgetting(record.accuracy, 5):.4f}")
print("parameters after each task:", record.param_counts)
