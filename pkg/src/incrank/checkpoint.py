"""Binary checkpoints: a deterministic ``.npz`` archive.

Layout (array names inside the archive)::

    meta                              uint8 bytes of a JSON document
    accuracy                          T x T float64, NaN above the diagonal
    net{n}/layer{k}/factor{i}/u       out_dim x r_i
    net{n}/layer{k}/factor{i}/v       in_dim x r_i
    net{n}/layer{k}/selector{t}_{i}   r_i    (diagonal of S for task t, source i)
    net{n}/layer{k}/bias{t}           out_dim
    net{n}/head{t}/weight             classes_t x last_hidden
    net{n}/head{t}/bias               classes_t

``meta`` records the format version, ``input_dim``, per-net ``hidden_dims``
and ``num_tasks``, the number of completed tasks and a free-form ``extra``
mapping (the run config).  Every zip member gets a fixed timestamp and
members are written in sorted order, so equal contents give equal bytes.
Arrays are stored raw, so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

from .layer import FactorizedLayer, FactorPair, _freeze
from .network import Head, MultiHeadNet

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def write_npz(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
    os.replace(tmp, path)


def net_arrays(net: MultiHeadNet, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for k, layer in enumerate(net.hidden_layers):
        base = f"{prefix}/layer{k}"
        for i, f in enumerate(layer.factors, start=1):
            out[f"{base}/factor{i}/u"] = f.u
            out[f"{base}/factor{i}/v"] = f.v
        for (t, i), s in layer.selectors.items():
            out[f"{base}/selector{t}_{i}"] = s
        for t, b in layer.biases.items():
            out[f"{base}/bias{t}"] = b
    for t, head in net.heads.items():
        out[f"{prefix}/head{t}/weight"] = head.weight
        out[f"{prefix}/head{t}/bias"] = head.bias
    return out


def save_checkpoint(path, nets: list[MultiHeadNet], accuracy: np.ndarray,
                    completed: int, extra: dict | None = None) -> None:
    if not nets:
        raise ValueError("nothing to save")
    meta = {
        "format": FORMAT_VERSION,
        "input_dim": nets[0].input_dim,
        "nets": [{"hidden_dims": n.hidden_dims, "num_tasks": n.num_tasks,
                  "factor_tasks": n.hidden_layers[0].num_tasks} for n in nets],
        "completed": completed,
        "extra": extra or {},
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
              "accuracy": np.asarray(accuracy, dtype=np.float64)}
    for n, net in enumerate(nets):
        arrays.update(net_arrays(net, f"net{n}"))
    write_npz(path, arrays)


def _load_net(z, prefix: str, input_dim: int, info: dict) -> MultiHeadNet:
    layers = []
    d = input_dim
    n_factor = info["factor_tasks"]
    n_heads = info["num_tasks"]
    # the trainable task is the newest one; everything older is frozen
    current = max(n_factor, n_heads)
    for k, width in enumerate(info["hidden_dims"]):
        base = f"{prefix}/layer{k}"
        layer = FactorizedLayer(d, width)
        for i in range(1, n_factor + 1):
            pair = FactorPair(z[f"{base}/factor{i}/u"].copy(), z[f"{base}/factor{i}/v"].copy(), i)
            if i < current:
                pair.freeze()
            layer.factors.append(pair)
        for t in range(1, n_factor + 1):
            for i in range(1, t + 1):
                s = z[f"{base}/selector{t}_{i}"].copy()
                if t < current:
                    _freeze(s)
                layer.selectors[(t, i)] = s
            b = z[f"{base}/bias{t}"].copy()
            if t < current:
                _freeze(b)
            layer.biases[t] = b
        layers.append(layer)
        d = width
    net = MultiHeadNet(input_dim, layers)
    for t in range(1, n_heads + 1):
        head = Head(z[f"{prefix}/head{t}/weight"].copy(), z[f"{prefix}/head{t}/bias"].copy())
        if t < current:
            _freeze(head.weight)
            _freeze(head.bias)
        net.heads[t] = head
    return net


def load_checkpoint(path):
    """Return ``(nets, accuracy, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        if "meta" not in z.files:
            raise ValueError(f"{path}: not a checkpoint (no meta entry)")
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')}")
        nets = [_load_net(z, f"net{n}", meta["input_dim"], info)
                for n, info in enumerate(meta["nets"])]
        accuracy = z["accuracy"].copy()
    return nets, accuracy, meta
