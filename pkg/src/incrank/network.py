"""Multi-head MLP: shared factorised ReLU trunk, one dense output head per task."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layer import FactorizedLayer, LayerCache, _freeze
from .linalg import ShapeError, orthogonal_init


@dataclass
class LossReport:
    loss: float
    correct: int
    batch_size: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.batch_size


@dataclass
class Head:
    weight: np.ndarray  # num_classes x hidden
    bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]


@dataclass
class MultiHeadNet:
    input_dim: int
    hidden_layers: list[FactorizedLayer]
    heads: dict[int, Head] = field(default_factory=dict)

    @property
    def num_tasks(self) -> int:
        return len(self.heads)

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.out_dim for layer in self.hidden_layers]

    def add_task(self, num_classes: int, rank: int, rng: np.random.Generator) -> int:
        """Open the next task and return its id.

        The first call only attaches a head, because the hidden layers are
        built with their first-task factors already in place.
        """
        if num_classes < 2:
            raise ValueError(f"a task needs at least 2 classes, got {num_classes}")
        t = self.num_tasks + 1
        if t > 1:
            for layer in self.hidden_layers:
                layer.add_task(rank, rng)
            for head in self.heads.values():
                _freeze(head.weight)
                _freeze(head.bias)
        hidden = self.hidden_layers[-1].out_dim
        if num_classes <= hidden:
            w = orthogonal_init(hidden, num_classes, rng).T.copy()
        else:
            w = orthogonal_init(num_classes, hidden, rng)
        self.heads[t] = Head(w, np.zeros(num_classes))
        return t

    def _check_task(self, t: int) -> Head:
        if t not in self.heads:
            raise KeyError(f"no head for task {t}; trained tasks are 1..{self.num_tasks}")
        return self.heads[t]

    def forward(self, x: np.ndarray, t: int, cache: bool = False):
        head = self._check_task(t)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected batch x {self.input_dim}, got {x.shape}")
        caches: list[tuple[LayerCache, np.ndarray]] = []
        h = x
        for layer in self.hidden_layers:
            if cache:
                pre, c = layer.forward(h, t, cache=True)
                h = np.maximum(pre, 0.0)
                caches.append((c, pre > 0))
            else:
                h = np.maximum(layer.forward(h, t), 0.0)
        logits = h @ head.weight.T + head.bias
        if cache:
            return logits, (caches, h)
        return logits

    def trainable(self) -> dict[str, np.ndarray]:
        """Named live references to every parameter the newest task trains."""
        t = self.num_tasks
        out: dict[str, np.ndarray] = {}
        for k, layer in enumerate(self.hidden_layers):
            for name, arr in layer.trainable().items():
                out[f"hidden{k}.{name}"] = arr
        out["head.weight"] = self.heads[t].weight
        out["head.bias"] = self.heads[t].bias
        return out

    def loss_and_backward(self, x: np.ndarray, labels: np.ndarray,
                          t: int) -> tuple[LossReport, dict[str, np.ndarray]]:
        if t != self.num_tasks:
            raise ValueError(f"task {t} is frozen; only task {self.num_tasks} is trainable")
        head = self._check_task(t)
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= head.num_classes):
            raise ValueError(f"labels must lie in [0, {head.num_classes})")
        logits, (caches, h) = self.forward(x, t, cache=True)
        n = logits.shape[0]
        logp = log_softmax(logits)
        rows = np.arange(n)
        loss = -logp[rows, labels].mean()
        correct = int((logits.argmax(axis=1) == labels).sum())

        g = np.exp(logp)
        g[rows, labels] -= 1.0
        g /= n
        grads = {"head.weight": g.T @ h, "head.bias": g.sum(axis=0)}
        g = g @ head.weight
        for k in range(len(self.hidden_layers) - 1, -1, -1):
            c, mask = caches[k]
            g = g * mask
            lg = self.hidden_layers[k].backward(c, g)
            for name, arr in lg.named().items():
                grads[f"hidden{k}.{name}"] = arr
            g = lg.grad_input
        return LossReport(float(loss), correct, n), grads

    def param_count(self) -> int:
        n = sum(layer.param_count() for layer in self.hidden_layers)
        n += sum(h.weight.size + h.bias.size for h in self.heads.values())
        return n


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def build_mlp(input_dim: int, hidden_dims: list[int], r1: int | None,
              rng: np.random.Generator) -> MultiHeadNet:
    """Factorised MLP with first-task factors and no heads.

    ``r1=None`` gives every layer full rank ``min(in, out)``.
    """
    if not hidden_dims:
        raise ValueError("hidden_dims must be non-empty")
    layers = []
    d = input_dim
    for width in hidden_dims:
        rank = min(d, width) if r1 is None else r1
        layers.append(FactorizedLayer.new(d, width, rank, rng))
        d = width
    return MultiHeadNet(input_dim, layers)


def add_task_to_net(net: MultiHeadNet, num_classes: int, rank: int,
                    rng: np.random.Generator) -> int:
    return net.add_task(num_classes, rank, rng)
