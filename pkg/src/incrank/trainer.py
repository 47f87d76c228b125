"""Sequential task training, task-conditioned inference and the experiment loop."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import TaskDataset, TaskStream, batches
from .linalg import derive_rng
from .network import MultiHeadNet, build_mlp
from .optim import Adam

log = logging.getLogger(__name__)

EVAL_CHUNK = 2000


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainHyper:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    r1: int | None = 11
    rt: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.r1 is not None and self.r1 < 1:
            raise ValueError("r1 must be >= 1")
        if self.rt < 1:
            raise ValueError("rt must be >= 1")


@dataclass
class RunRecord:
    accuracy: np.ndarray  # T x T, a[t-1, j-1] for j <= t, NaN elsewhere
    wall_time: list[float] = field(default_factory=list)
    param_counts: list[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    nets: list = field(default_factory=list, repr=False)

    @property
    def num_tasks(self) -> int:
        return self.accuracy.shape[0]


def train_task(net: MultiHeadNet, train: TaskDataset, hyper: TrainHyper,
               task_id: int | None = None) -> list[dict]:
    """Open the next task on ``net`` and fit its trainable set.

    ``task_id`` defaults to ``train.task_id``; it must be the next task in
    order.  Returns one log entry per epoch.
    """
    t = net.num_tasks + 1
    expected = train.task_id if task_id is None else task_id
    if expected != t:
        raise ValueError(f"task order violation: net expects task {t}, got {expected}")
    net.add_task(train.num_classes, hyper.rt, derive_rng(hyper.seed, "task", t))

    params = net.trainable()
    opt = Adam(params, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    history = []
    for epoch in range(hyper.epochs):
        epoch_seed = int(derive_rng(hyper.seed, "batches", t, epoch).integers(2**63))
        total_loss = 0.0
        correct = 0
        for xb, yb in batches(train, hyper.batch_size, epoch_seed):
            report, grads = net.loss_and_backward(xb, yb, t)
            if not np.isfinite(report.loss):
                raise TrainingDiverged(f"non-finite loss on task {t}, epoch {epoch + 1}, "
                                       f"step {opt.step_count + 1}")
            opt.step(params, grads)
            total_loss += report.loss * report.batch_size
            correct += report.correct
        entry = {"task": t, "epoch": epoch + 1, "loss": total_loss / len(train),
                 "train_accuracy": correct / len(train)}
        log.info("task %d epoch %d loss %.4f acc %.4f", t, epoch + 1,
                 entry["loss"], entry["train_accuracy"])
        history.append(entry)
    return history


def predict(net: MultiHeadNet, x: np.ndarray, t: int) -> np.ndarray:
    """Class predictions for task ``t``; ties go to the lowest class index."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    out = np.empty(len(x), dtype=np.int64)
    for k in range(0, len(x), EVAL_CHUNK):
        out[k:k + EVAL_CHUNK] = net.forward(x[k:k + EVAL_CHUNK], t).argmax(axis=1)
    return out[0] if single else out


infer = predict


def evaluate(net: MultiHeadNet, test: TaskDataset, t: int | None = None) -> float:
    t = test.task_id if t is None else t
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = predict(net, test.inputs, t)
    return int((pred == test.labels).sum()) / len(test)


def run_sequence(stream: TaskStream, hyper: TrainHyper, hidden_dims=(256, 256),
                 mode: str = "incremental", parallel_rank: int | None = None,
                 checkpoint: str | Path | None = None, resume: bool = False,
                 config: dict | None = None) -> RunRecord:
    """Train every task of ``stream`` in order and fill the accuracy matrix.

    ``mode="incremental"`` grows one network; ``mode="parallel"`` trains an
    independent network per task with rank ``parallel_rank`` (``None`` for
    full rank).  With ``checkpoint`` set, state is saved after every task and
    ``resume=True`` continues from an existing file.
    """
    if mode not in ("incremental", "parallel"):
        raise ValueError(f"unknown mode {mode!r}")
    n_tasks = len(stream)
    if n_tasks < 1:
        raise ValueError("empty stream")
    hidden_dims = list(hidden_dims)
    acc = np.full((n_tasks, n_tasks), np.nan)
    record = RunRecord(acc, config=dict(config or {}))
    nets: list[MultiHeadNet] = []
    start = 1

    if resume and checkpoint is not None and Path(checkpoint).exists():
        nets, saved, meta = load_checkpoint(checkpoint)
        if saved.shape != acc.shape:
            raise ValueError(f"checkpoint holds {saved.shape[0]} tasks, stream has {n_tasks}")
        acc[:] = saved
        start = meta["completed"] + 1
        log.info("resuming at task %d", start)
    elif mode == "incremental":
        nets = [build_mlp(stream.input_dim, hidden_dims, hyper.r1,
                          derive_rng(hyper.seed, "build"))]

    for t in range(start, n_tasks + 1):
        tic = time.perf_counter()
        train = stream.train(t)
        if mode == "incremental":
            train_task(nets[0], train, hyper)
        else:
            net = build_mlp(stream.input_dim, hidden_dims, parallel_rank,
                            derive_rng(hyper.seed, "build", t))
            train_task(net, dataclasses.replace(train, task_id=1), hyper)
            nets.append(net)
        del train
        for j in range(1, t + 1):
            test = stream.test(j)
            if mode == "incremental":
                acc[t - 1, j - 1] = evaluate(nets[0], test, j)
            else:
                acc[t - 1, j - 1] = evaluate(nets[j - 1], test, 1)
        record.wall_time.append(time.perf_counter() - tic)
        record.param_counts.append(sum(n.param_count() for n in nets))
        log.info("after task %d: A_t = %.4f", t, np.mean(acc[t - 1, :t]))
        if checkpoint is not None:
            save_checkpoint(checkpoint, nets, acc, t, extra={"mode": mode, **record.config})
    record.nets = nets
    return record
