"""MNIST IDX loading and task-stream construction.

Streams are generated lazily: a :class:`TaskStream` keeps the base arrays plus
per-task metadata (a permutation, an angle or a class set) and builds the
transformed train/test sets for a task only when asked.  Twenty transformed
copies of MNIST in float64 would not fit in memory.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import derive_rng, make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATA_DIR_ENV = "INCRANK_DATA_DIR"


class IDXError(ValueError):
    pass


@dataclass
class TaskDataset:
    task_id: int
    inputs: np.ndarray  # N x D, float64 in [0, 1]
    labels: np.ndarray  # N, int64 local class ids
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)


def _read_idx(path: str | os.PathLike, magic: int, ndim: int) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 + 4 * ndim:
        raise IDXError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise IDXError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = raw[4 + 4 * ndim:]
    need = int(np.prod(dims))
    if len(body) < need:
        raise IDXError(f"{path}: truncated body, {len(body)} of {need} bytes")
    return np.frombuffer(body, dtype=np.uint8, count=need).reshape(dims)


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label pair; pixels scaled to [0, 1], images flattened."""
    images = _read_idx(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IDXError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return x, labels.astype(np.int64)


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / (name + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}(.gz) not found in {data_dir}")


def resolve_data_dir(data_dir=None) -> Path:
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
    if data_dir is None:
        raise FileNotFoundError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    return Path(data_dir)


def load_mnist(data_dir=None):
    """``((train_x, train_y), (test_x, test_y))`` from the four standard files."""
    data_dir = resolve_data_dir(data_dir)
    out = []
    for split in ("train", "test"):
        img, lab = MNIST_FILES[split]
        out.append(load_idx(_find(data_dir, img), _find(data_dir, lab)))
    return tuple(out)


def _cos_sin(angle: float) -> tuple[float, float]:
    # exact values on the quarter turns keep 90/180 degree rotations lossless
    quarter = angle / 90.0
    if quarter == round(quarter):
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(quarter)) % 4]
    rad = np.deg2rad(angle)
    return float(np.cos(rad)), float(np.sin(rad))


def _bilinear_plan(angle: float, side: int = SIDE):
    """Source indices and weights for rotating a ``side x side`` grid by ``angle``.

    Each output pixel ``(r, c)`` samples the input at the point obtained by
    rotating ``(r, c)`` by ``-angle`` about the image centre.
    """
    cos, sin = _cos_sin(angle)
    center = (side - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(side, dtype=np.float64),
                         np.arange(side, dtype=np.float64), indexing="ij")
    dr, dc = rr - center, cc - center
    src_r = cos * dr - sin * dc + center
    src_c = sin * dr + cos * dc + center
    r0 = np.floor(src_r)
    c0 = np.floor(src_c)
    fr = src_r - r0
    fc = src_c - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    idx, wts = [], []
    for dr_, dc_, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        r, c = r0 + dr_, c0 + dc_
        inside = (r >= 0) & (r < side) & (c >= 0) & (c < side)
        idx.append(np.where(inside, r * side + c, 0).ravel())
        wts.append(np.where(inside, w, 0.0).ravel())
    return idx, wts


def rotate_images(flat: np.ndarray, angle: float, side: int = SIDE) -> np.ndarray:
    """Rotate a batch of flattened square images (N x side*side)."""
    flat = np.asarray(flat, dtype=np.float64)
    idx, wts = _bilinear_plan(angle, side)
    out = flat[:, idx[0]] * wts[0]
    for i, w in zip(idx[1:], wts[1:]):
        out += flat[:, i] * w
    return np.clip(out, 0.0, 1.0)


def rotate_image(img: np.ndarray, angle: float) -> np.ndarray:
    """Rotate one square image about its centre with bilinear sampling, zero fill."""
    img = np.asarray(img, dtype=np.float64)
    side = img.shape[0]
    return rotate_images(img.reshape(1, -1), angle, side).reshape(side, side)


class TaskStream:
    """Ordered tasks derived from one base dataset.

    ``kind`` is ``"permuted"``, ``"rotated"`` or ``"split"``; ``metadata[t-1]``
    holds the permutation, angle or global class list of task ``t``.
    """

    def __init__(self, kind, base_train, base_test, metadata, seed, num_classes):
        self.kind = kind
        self.base_train = base_train
        self.base_test = base_test
        self.metadata = metadata
        self.seed = seed
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self.metadata)

    @property
    def input_dim(self) -> int:
        return self.base_train[0].shape[1]

    def _make(self, t: int, split: str) -> TaskDataset:
        if not 1 <= t <= len(self):
            raise IndexError(f"task {t} outside 1..{len(self)}")
        x, y = self.base_train if split == "train" else self.base_test
        meta = self.metadata[t - 1]
        if self.kind == "permuted":
            return TaskDataset(t, x[:, meta], y.copy(), self.num_classes, split)
        if self.kind == "rotated":
            return TaskDataset(t, rotate_images(x, meta), y.copy(), self.num_classes, split)
        if self.kind == "split":
            classes = np.asarray(meta)
            keep = np.isin(y, classes)
            lookup = np.full(int(y.max()) + 1, -1, dtype=np.int64)
            lookup[classes] = np.arange(len(classes))
            return TaskDataset(t, x[keep], lookup[y[keep]], len(classes), split)
        raise ValueError(f"unknown stream kind {self.kind!r}")

    def train(self, t: int) -> TaskDataset:
        return self._make(t, "train")

    def test(self, t: int) -> TaskDataset:
        return self._make(t, "test")

    def __getitem__(self, t: int) -> tuple[TaskDataset, TaskDataset]:
        return self.train(t), self.test(t)

    def __iter__(self):
        for t in range(1, len(self) + 1):
            yield self[t]


def _num_classes(*label_sets) -> int:
    return int(max(int(y.max()) for y in label_sets)) + 1


def make_permuted_stream(base_train, base_test, num_tasks: int, seed: int) -> TaskStream:
    """Task 1 keeps pixel order; tasks 2.. apply independent random permutations."""
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    dim = base_train[0].shape[1]
    perms = [np.arange(dim)]
    for t in range(2, num_tasks + 1):
        perms.append(derive_rng(seed, "permute", t).permutation(dim))
    return TaskStream("permuted", base_train, base_test, perms, seed,
                      _num_classes(base_train[1], base_test[1]))


def make_rotated_stream(base_train, base_test, num_tasks: int, seed: int) -> TaskStream:
    """One uniform angle in [0, 180] per task, in draw order."""
    if num_tasks < 1:
        raise ValueError("num_tasks must be >= 1")
    rng = derive_rng(seed, "rotate")
    angles: list[float] = []
    while len(angles) < num_tasks:
        a = float(rng.uniform(0.0, 180.0))
        if a not in angles:
            angles.append(a)
    return TaskStream("rotated", base_train, base_test, angles, seed,
                      _num_classes(base_train[1], base_test[1]))


def make_split_stream(base_train, base_test, classes_per_task: int, seed: int) -> TaskStream:
    """Disjoint class groups drawn without replacement; labels remapped per task."""
    total = _num_classes(base_train[1], base_test[1])
    if classes_per_task < 2 or total % classes_per_task:
        raise ValueError(f"{total} classes cannot be split into groups of {classes_per_task}")
    order = derive_rng(seed, "split").permutation(total)
    groups = [order[k:k + classes_per_task].tolist()
              for k in range(0, total, classes_per_task)]
    return TaskStream("split", base_train, base_test, groups, seed, classes_per_task)


def make_stream(kind: str, base_train, base_test, num_tasks: int, seed: int,
                classes_per_task: int = 2) -> TaskStream:
    if kind == "permuted":
        return make_permuted_stream(base_train, base_test, num_tasks, seed)
    if kind == "rotated":
        return make_rotated_stream(base_train, base_test, num_tasks, seed)
    if kind == "split":
        stream = make_split_stream(base_train, base_test, classes_per_task, seed)
        if num_tasks < len(stream):
            stream.metadata = stream.metadata[:num_tasks]
        return stream
    raise ValueError(f"unknown stream kind {kind!r}")


def batches(dataset: TaskDataset, batch_size: int, epoch_seed: int):
    """Shuffled minibatches ``(x, y)``; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = make_rng(epoch_seed).permutation(len(dataset))
    return [(dataset.inputs[idx], dataset.labels[idx])
            for idx in (order[k:k + batch_size] for k in range(0, len(order), batch_size))]


def save_stream(stream: TaskStream, out_dir, tasks=None) -> None:
    """Write stream metadata (``stream.json``) and per-task ``task{t:03d}.npz`` files."""
    import json

    from .checkpoint import write_npz

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = [m.tolist() if isinstance(m, np.ndarray) else m for m in stream.metadata]
    tasks = list(range(1, len(stream) + 1)) if tasks is None else list(tasks)
    doc = {"kind": stream.kind, "seed": stream.seed, "num_tasks": len(stream),
           "input_dim": stream.input_dim, "metadata": meta, "materialized": tasks}
    (out_dir / "stream.json").write_text(json.dumps(doc, sort_keys=True) + "\n")
    for t in tasks:
        train, test = stream[t]
        write_npz(out_dir / f"task{t:03d}.npz", {
            "train_x": train.inputs, "train_y": train.labels,
            "test_x": test.inputs, "test_y": test.labels,
            "num_classes": np.array(train.num_classes)})


class CachedStream:
    """Read-only stream backed by a directory written by :func:`save_stream`."""

    def __init__(self, path):
        import json

        self.path = Path(path)
        doc = json.loads((self.path / "stream.json").read_text())
        self.kind = doc["kind"]
        self.seed = doc["seed"]
        self.metadata = doc["metadata"]
        self._input_dim = doc["input_dim"]
        self.materialized = set(doc["materialized"])

    def __len__(self) -> int:
        return len(self.metadata)

    @property
    def input_dim(self) -> int:
        return self._input_dim

    def _load(self, t: int, split: str) -> TaskDataset:
        if t not in self.materialized:
            raise IndexError(f"task {t} was not materialized in {self.path}")
        with np.load(self.path / f"task{t:03d}.npz") as z:
            key = "train" if split == "train" else "test"
            return TaskDataset(t, z[f"{key}_x"], z[f"{key}_y"], int(z["num_classes"].item()), split)

    def train(self, t: int) -> TaskDataset:
        return self._load(t, "train")

    def test(self, t: int) -> TaskDataset:
        return self._load(t, "test")

    def __getitem__(self, t: int):
        return self.train(t), self.test(t)
