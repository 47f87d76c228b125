import numpy as np
import pytest

from incrank.checkpoint import load_checkpoint, net_arrays, save_checkpoint
from incrank.linalg import make_rng
from incrank.network import add_task_to_net, build_mlp


def trained_like_net(tasks=3, seed=0):
    rng = make_rng(seed)
    net = build_mlp(7, [5, 4], 2, rng)
    for t in range(tasks):
        add_task_to_net(net, 3, 1 + t % 2, rng)
        for arr in net.trainable().values():
            arr[...] = rng.standard_normal(arr.shape)
    return net


def accuracy(t):
    m = np.full((t, t), np.nan)
    m[np.tril_indices(t)] = np.linspace(0.1, 0.9, t * (t + 1) // 2)
    return m


def test_roundtrip_bit_exact(tmp_path):
    net = trained_like_net()
    p = tmp_path / "ck.npz"
    save_checkpoint(p, [net], accuracy(3), 3, {"note": "x"})
    (back,), acc, meta = load_checkpoint(p)
    a, b = net_arrays(net, "n"), net_arrays(back, "n")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes(), k
    assert acc.tobytes() == accuracy(3).tobytes()
    assert meta["completed"] == 3 and meta["extra"] == {"note": "x"}
    x = make_rng(1).standard_normal((4, 7))
    for t in (1, 2, 3):
        assert back.forward(x, t).tobytes() == net.forward(x, t).tobytes()


def test_bytes_deterministic(tmp_path):
    for name in ("a.npz", "b.npz"):
        save_checkpoint(tmp_path / name, [trained_like_net()], accuracy(3), 3)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_freezing_restored(tmp_path):
    p = tmp_path / "ck.npz"
    save_checkpoint(p, [trained_like_net()], accuracy(3), 3)
    (net,), _, _ = load_checkpoint(p)
    layer = net.hidden_layers[0]
    assert [f.frozen for f in layer.factors] == [True, True, False]
    assert not layer.factors[0].u.flags.writeable
    assert not layer.selectors[(2, 1)].flags.writeable
    assert layer.selectors[(3, 1)].flags.writeable
    assert not net.heads[1].weight.flags.writeable
    assert set(net.trainable()) >= {"head.weight", "hidden0.s3"}


def test_multiple_nets(tmp_path):
    nets = [trained_like_net(1, seed=s) for s in range(3)]
    p = tmp_path / "par.npz"
    save_checkpoint(p, nets, accuracy(3), 3)
    back, _, meta = load_checkpoint(p)
    assert len(back) == 3 and len(meta["nets"]) == 3
    x = np.ones((1, 7))
    for a, b in zip(nets, back):
        assert a.forward(x, 1).tobytes() == b.forward(x, 1).tobytes()


def test_rejects_foreign_file(tmp_path):
    p = tmp_path / "other.npz"
    np.savez(p, x=np.zeros(2))
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(p)
