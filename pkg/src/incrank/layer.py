"""Fully connected layer whose weight grows by low-rank increments per task.

For task ``t`` the weight is ``W_t = sum_{i<=t} U_i diag(s_{i,t}) V_i^T``.
Factor pairs ``(U_i, V_i)`` of earlier tasks are frozen; task ``t`` trains its
own pair, every selector vector ``s_{i,t}`` and its own bias.  The dense
weight is never formed on the training path.

Task ids are 1-based. Frozen arrays are flagged read-only so an accidental
in-place update raises instead of silently causing forgetting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ShapeError, orthogonal_init


def _freeze(a: np.ndarray) -> None:
    a.flags.writeable = False


@dataclass
class FactorPair:
    u: np.ndarray  # out_dim x rank
    v: np.ndarray  # in_dim x rank
    origin_task: int
    frozen: bool = False

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def freeze(self) -> None:
        self.frozen = True
        _freeze(self.u)
        _freeze(self.v)


@dataclass
class LayerCache:
    x: np.ndarray
    z: np.ndarray  # x @ V for all factors used by the task
    task: int


@dataclass
class LayerGrads:
    u: np.ndarray
    v: np.ndarray
    selectors: dict[int, np.ndarray]  # source task i -> d s_{i,t}
    bias: np.ndarray
    grad_input: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        out = {"u": self.u, "v": self.v, "bias": self.bias}
        for i, g in self.selectors.items():
            out[f"s{i}"] = g
        return out


@dataclass
class FactorizedLayer:
    in_dim: int
    out_dim: int
    factors: list[FactorPair] = field(default_factory=list)
    selectors: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    biases: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def new(cls, in_dim: int, out_dim: int, r1: int,
            rng: np.random.Generator) -> "FactorizedLayer":
        """First-task layer: one orthogonally initialised pair, unit selector."""
        if r1 < 1:
            raise ValueError(f"initial rank must be >= 1, got {r1}")
        layer = cls(in_dim, out_dim)
        layer._append_pair(1, r1, rng)
        layer.selectors[(1, 1)] = np.ones(r1)
        layer.biases[1] = np.zeros(out_dim)
        return layer

    def _append_pair(self, task: int, rank: int, rng: np.random.Generator) -> None:
        # orthogonal_init wants a tall matrix, so very wide ranks are transposed
        u = _tall_orthogonal(self.out_dim, rank, rng)
        v = _tall_orthogonal(self.in_dim, rank, rng)
        self.factors.append(FactorPair(u, v, task))

    @property
    def num_tasks(self) -> int:
        return len(self.factors)

    @property
    def total_rank(self) -> int:
        return sum(f.rank for f in self.factors)

    def ranks(self) -> list[int]:
        return [f.rank for f in self.factors]

    def add_task(self, rank: int, rng: np.random.Generator) -> None:
        """Freeze everything learned so far and open a new task."""
        if rank < 1:
            raise ValueError(f"rank increment must be >= 1, got {rank}")
        t = self.num_tasks + 1
        for f in self.factors:
            f.freeze()
        for s in self.selectors.values():
            _freeze(s)
        for b in self.biases.values():
            _freeze(b)
        self._append_pair(t, rank, rng)
        for i, f in enumerate(self.factors[:-1], start=1):
            self.selectors[(t, i)] = np.zeros(f.rank)
        self.selectors[(t, t)] = np.ones(rank)
        self.biases[t] = np.zeros(self.out_dim)

    def _check_task(self, t: int) -> None:
        if not (1 <= t <= self.num_tasks):
            raise KeyError(f"unknown task {t}; layer has tasks 1..{self.num_tasks}")

    def _stacked(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fs = self.factors[:t]
        if len(fs) == 1:
            return fs[0].u, fs[0].v, self.selectors[(t, 1)]
        u = np.concatenate([f.u for f in fs], axis=1)
        v = np.concatenate([f.v for f in fs], axis=1)
        s = np.concatenate([self.selectors[(t, i)] for i in range(1, t + 1)])
        return u, v, s

    def compose_weight(self, t: int) -> np.ndarray:
        """Dense ``out_dim x in_dim`` weight for task ``t`` (testing/export only)."""
        self._check_task(t)
        w = np.zeros((self.out_dim, self.in_dim))
        for i, f in enumerate(self.factors[:t], start=1):
            w += (f.u * self.selectors[(t, i)]) @ f.v.T
        return w

    def forward(self, x: np.ndarray, t: int, cache: bool = False):
        self._check_task(t)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected batch x {self.in_dim}, got {x.shape}")
        u, v, s = self._stacked(t)
        z = x @ v
        y = (z * s) @ u.T + self.biases[t]
        if cache:
            return y, LayerCache(x, z, t)
        return y

    def backward(self, cache: LayerCache | None, grad_out: np.ndarray) -> LayerGrads:
        """Gradients for the trainable set of the cached task.

        Only the newest task is trainable, so backward is rejected for older
        tasks whose parameters are frozen.
        """
        if cache is None:
            raise ValueError("backward needs the cache from forward(..., cache=True)")
        t = cache.task
        if t != self.num_tasks:
            raise ValueError(f"task {t} is frozen; only task {self.num_tasks} is trainable")
        u, v, s = self._stacked(t)
        r_t = self.factors[t - 1].rank
        gu = grad_out @ u  # batch x R
        ds_all = np.einsum("br,br->r", gu, cache.z)
        dz = gu * s
        new = slice(ds_all.size - r_t, ds_all.size)
        d_u = grad_out.T @ (cache.z[:, new] * s[new])
        d_v = cache.x.T @ dz[:, new]
        selectors = {}
        offset = 0
        for i, f in enumerate(self.factors[:t], start=1):
            selectors[i] = ds_all[offset:offset + f.rank]
            offset += f.rank
        return LayerGrads(
            u=d_u,
            v=d_v,
            selectors=selectors,
            bias=grad_out.sum(axis=0),
            grad_input=dz @ v.T,
        )

    def trainable(self) -> dict[str, np.ndarray]:
        """Live references to the newest task's trainable arrays."""
        t = self.num_tasks
        pair = self.factors[-1]
        out = {"u": pair.u, "v": pair.v, "bias": self.biases[t]}
        for i in range(1, t + 1):
            out[f"s{i}"] = self.selectors[(t, i)]
        return out

    def param_count(self) -> int:
        n = sum(f.u.size + f.v.size for f in self.factors)
        n += sum(s.size for s in self.selectors.values())
        n += sum(b.size for b in self.biases.values())
        return n


def _tall_orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if cols <= rows:
        return orthogonal_init(rows, cols, rng)
    # rank beyond the dimension: orthonormal rows instead of columns
    return np.ascontiguousarray(orthogonal_init(cols, rows, rng).T)


def new_layer(in_dim: int, out_dim: int, r1: int,
              rng: np.random.Generator) -> FactorizedLayer:
    return FactorizedLayer.new(in_dim, out_dim, r1, rng)
