import dataclasses

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from incrank.checkpoint import load_checkpoint
from incrank.data import TaskDataset, TaskStream, make_permuted_stream
from incrank.linalg import make_rng
from incrank.metrics import count_params, forgetting
from incrank.network import add_task_to_net, build_mlp
from incrank.trainer import TrainHyper, evaluate, infer, run_sequence, train_task


def separable_task(task_id=1, n=200, seed=0):
    rng = make_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(np.int64)
    return TaskDataset(task_id, x, y, 2)


def blob_stream(num_tasks=3, n=300, dim=8, seed=0):
    """Random Gaussian-blob classification tasks sharing one input space."""
    rng = make_rng(seed)
    centers = rng.standard_normal((3, dim)) * 2.5
    def sample(m):
        y = rng.integers(0, 3, m)
        return centers[y] + rng.standard_normal((m, dim)), y
    train, test = sample(n), sample(n // 2)
    return make_permuted_stream(train, test, num_tasks, seed)


FAST = dict(epochs=3, batch_size=16, lr=1e-2, r1=2, rt=1, seed=0)


def test_linear_oracle_separates_toy_task():
    ds = separable_task()
    pred = (ds.inputs @ np.array([1.0, 0.5]) > 0).astype(int)
    assert (pred == ds.labels).mean() == 1.0


def test_toy_task_rank1_reaches_099():
    ds = separable_task()
    net = build_mlp(2, [8], 1, make_rng(0))
    train_task(net, ds, TrainHyper(epochs=5, batch_size=8, lr=0.05, r1=1, rt=1))
    assert evaluate(net, ds, 1) >= 0.99


def test_train_task_freezes_previous_tasks():
    stream = blob_stream()
    net = build_mlp(stream.input_dim, [6, 5], 2, make_rng(0))
    hyper = TrainHyper(**FAST)
    train_task(net, stream.train(1), hyper)
    snap = {k: (v.tobytes()) for k, v in _all_arrays(net).items()}
    train_task(net, stream.train(2), hyper)
    after = _all_arrays(net)
    for k, b in snap.items():
        assert after[k].tobytes() == b, k


def _all_arrays(net):
    from incrank.checkpoint import net_arrays
    return net_arrays(net, "n")


def test_task_order_violation():
    stream = blob_stream()
    net = build_mlp(stream.input_dim, [6], 2, make_rng(0))
    with pytest.raises(ValueError, match="order"):
        train_task(net, stream.train(2), TrainHyper(**FAST))


def test_infer_bit_exact_after_later_tasks():
    stream = blob_stream()
    net = build_mlp(stream.input_dim, [6, 5], 2, make_rng(0))
    hyper = TrainHyper(**FAST)
    x = stream.test(1).inputs
    train_task(net, stream.train(1), hyper)
    logits1 = net.forward(x, 1).tobytes()
    pred1 = infer(net, x, 1)
    for t in (2, 3):
        train_task(net, stream.train(t), hyper)
    assert net.forward(x, 1).tobytes() == logits1
    np.testing.assert_array_equal(infer(net, x, 1), pred1)


def test_infer_ignores_later_factors():
    stream = blob_stream()
    net = build_mlp(stream.input_dim, [6, 5], 2, make_rng(0))
    hyper = TrainHyper(**FAST)
    for t in (1, 2, 3):
        train_task(net, stream.train(t), hyper)
    x = stream.test(2).inputs
    before = net.forward(x, 2).tobytes()
    for layer in net.hidden_layers:
        del layer.factors[2:]
    assert net.forward(x, 2).tobytes() == before


def test_argmax_ties_lowest_index():
    rng = make_rng(0)
    net = build_mlp(3, [4], 1, rng)
    add_task_to_net(net, 4, 1, rng)
    net.heads[1].weight[:] = 0.0
    net.heads[1].bias[:] = [0.0, 2.0, 2.0, 1.0]
    assert infer(net, np.ones(3), 1) == 1


def test_untrained_task_rejected():
    net = build_mlp(3, [4], 1, make_rng(0))
    add_task_to_net(net, 2, 1, make_rng(0))
    with pytest.raises(KeyError):
        evaluate(net, TaskDataset(2, np.zeros((2, 3)), np.zeros(2, dtype=np.int64), 2), 2)


def test_chance_level_untrained():
    rng = make_rng(0)
    net = build_mlp(20, [16], 4, rng)
    add_task_to_net(net, 10, 1, rng)
    x = rng.standard_normal((20000, 20))
    y = rng.integers(0, 10, 20000)
    assert abs(evaluate(net, TaskDataset(1, x, y, 10), 1) - 0.1) <= 0.03


def test_memorised_toy_set():
    ds = separable_task(n=40)
    net = build_mlp(2, [16], 2, make_rng(0))
    train_task(net, ds, TrainHyper(epochs=60, batch_size=8, lr=0.03, r1=2, rt=1))
    assert evaluate(net, ds, 1) == 1.0


def test_evaluate_thread_count_invariant():
    stream = blob_stream()
    net = build_mlp(stream.input_dim, [6, 5], 2, make_rng(0))
    train_task(net, stream.train(1), TrainHyper(**FAST))
    results = []
    for n in (1, 2, 4):
        with threadpool_limits(limits=n):
            results.append(evaluate(net, stream.test(1), 1))
    assert len(set(results)) == 1


def test_run_sequence_zero_forgetting_and_growth():
    stream = blob_stream(num_tasks=4)
    rec = run_sequence(stream, TrainHyper(**FAST), [6, 5])
    m = rec.accuracy
    for t in range(2, 5):
        for j in range(1, t):
            assert m[t - 1, j - 1] == m[j - 1, j - 1]
        assert forgetting(m, t) == 0.0
    assert np.isnan(m[np.triu_indices(4, 1)]).all()
    assert all(b > a for a, b in zip(rec.param_counts, rec.param_counts[1:]))
    closed = count_params(stream.input_dim, [6, 5], 3, 2, 1, 4).per_task
    assert rec.param_counts == closed


def test_run_sequence_single_task():
    rec = run_sequence(blob_stream(num_tasks=1), TrainHyper(**FAST), [6])
    assert rec.accuracy.shape == (1, 1) and 0.0 <= rec.accuracy[0, 0] <= 1.0


def test_run_sequence_parallel():
    stream = blob_stream(num_tasks=3)
    rec = run_sequence(stream, TrainHyper(**FAST), [6, 5], mode="parallel", parallel_rank=None)
    assert len(rec.nets) == 3
    assert all(n.num_tasks == 1 for n in rec.nets)
    for t in range(2, 4):
        assert forgetting(rec.accuracy, t) == 0.0


def test_run_sequence_deterministic(tmp_path):
    stream = blob_stream(num_tasks=3)
    a = run_sequence(stream, TrainHyper(**FAST), [6, 5], checkpoint=tmp_path / "a.npz")
    b = run_sequence(stream, TrainHyper(**FAST), [6, 5], checkpoint=tmp_path / "b.npz")
    assert a.accuracy.tobytes() == b.accuracy.tobytes()
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_resume_reproduces_uninterrupted_run(tmp_path):
    stream = blob_stream(num_tasks=4)
    full = run_sequence(stream, TrainHyper(**FAST), [6, 5], checkpoint=tmp_path / "full.npz")
    short = TaskStream(stream.kind, stream.base_train, stream.base_test, stream.metadata[:2],
                       stream.seed, stream.num_classes)
    part = tmp_path / "part.npz"
    run_sequence(short, TrainHyper(**FAST), [6, 5], checkpoint=part)
    # pad the saved accuracy matrix to the full stream length, then resume
    nets, acc, meta = load_checkpoint(part)
    padded = np.full((4, 4), np.nan)
    padded[:2, :2] = acc
    from incrank.checkpoint import save_checkpoint
    save_checkpoint(part, nets, padded, meta["completed"], meta["extra"])
    resumed = run_sequence(stream, TrainHyper(**FAST), [6, 5], checkpoint=part, resume=True)
    assert resumed.accuracy.tobytes() == full.accuracy.tobytes()
    assert part.read_bytes() == (tmp_path / "full.npz").read_bytes()


def test_divergence_aborts():
    stream = blob_stream(num_tasks=1)
    train = stream.train(1)
    bad = dataclasses.replace(train, inputs=train.inputs * np.inf)
    net = build_mlp(stream.input_dim, [6], 2, make_rng(0))
    with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
        train_task(net, bad, TrainHyper(**FAST))


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainHyper(epochs=0)
    with pytest.raises(ValueError):
        TrainHyper(rt=0)


def test_prefix_of_longer_run_matches_shorter_run():
    long = run_sequence(blob_stream(num_tasks=4), TrainHyper(**FAST), [6, 5])
    short = run_sequence(blob_stream(num_tasks=3), TrainHyper(**FAST), [6, 5])
    assert long.accuracy[:3, :3].tobytes() == short.accuracy.tobytes()
