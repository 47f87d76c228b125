"""Average accuracy, forgetting, parameter counts and their CSV forms.

An accuracy matrix is a ``T x T`` float array where entry ``[t-1, j-1]``
holds the test accuracy of task ``j`` after training task ``t`` (``j <= t``);
entries above the diagonal are NaN.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


def _row(m: np.ndarray, t: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not 1 <= t <= m.shape[0]:
        raise IndexError(f"task {t} outside 1..{m.shape[0]}")
    row = m[t - 1, :t]
    if np.isnan(row).any():
        raise ValueError(f"row {t} of the accuracy matrix is incomplete")
    return row


def avg_accuracy(m: np.ndarray, t: int) -> float:
    """Mean accuracy over tasks ``1..t`` after training task ``t``."""
    return float(np.mean(_row(m, t)))


def forgetting(m: np.ndarray, t: int) -> float:
    """Mean drop from each task's just-trained accuracy to its accuracy after ``t``.

    Signed: negative values mean earlier tasks improved.
    """
    if t < 2:
        raise ValueError("forgetting is defined for t >= 2")
    m = np.asarray(m, dtype=np.float64)
    final = _row(m, t)[:-1]
    diag = np.array([_row(m, j)[j - 1] for j in range(1, t)])
    return float(np.mean(diag - final))


def accuracy_curve(m: np.ndarray) -> list[float]:
    return [avg_accuracy(m, t) for t in range(1, np.asarray(m).shape[0] + 1)]


def forgetting_curve(m: np.ndarray) -> list[float]:
    return [forgetting(m, t) for t in range(2, np.asarray(m).shape[0] + 1)]


@dataclass
class ParamCountReport:
    factors: int
    selectors: int
    hidden_biases: int
    heads: int
    per_task: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.factors + self.selectors + self.hidden_biases + self.heads


def count_params(input_dim: int, hidden_dims: Sequence[int], head_classes,
                 r1: int, rt: int, num_tasks: int) -> ParamCountReport:
    """Closed-form count of every stored scalar of an incremental network.

    ``head_classes`` is either one class count shared by all tasks or a
    sequence with one entry per task.
    """
    if isinstance(head_classes, int):
        head_classes = [head_classes] * num_tasks
    head_classes = list(head_classes)
    if len(head_classes) != num_tasks:
        raise ValueError("need one class count per task")
    dims = [input_dim, *hidden_dims]
    edges = sum(a + b for a, b in zip(dims[:-1], dims[1:]))
    n_layers = len(hidden_dims)
    width = sum(hidden_dims)
    last = hidden_dims[-1]

    per_task = []
    for t in range(1, num_tasks + 1):
        rank = r1 + (t - 1) * rt
        sel = n_layers * sum(r1 + (s - 1) * rt for s in range(1, t + 1))
        heads = sum(c * last + c for c in head_classes[:t])
        per_task.append(edges * rank + sel + t * width + heads)

    rank_t = r1 + (num_tasks - 1) * rt
    return ParamCountReport(
        factors=edges * rank_t,
        selectors=n_layers * sum(r1 + (s - 1) * rt for s in range(1, num_tasks + 1)),
        hidden_biases=num_tasks * width,
        heads=sum(c * last + c for c in head_classes),
        per_task=per_task,
    )


def format_megaparams(n: int) -> str:
    """Millions rounded to two decimals with trailing zeros dropped: 101060 -> '0.1M'.

    Counts too small to survive that rounding fall back to two significant figures.
    """
    text = f"{n / 1e6:.2f}".rstrip("0").rstrip(".")
    if text == "0" and n > 0:
        text = f"{n / 1e6:.2g}"
    return f"{text}M"


def write_accuracy_csv(path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "j", "accuracy"])
        for t in range(1, m.shape[0] + 1):
            for j in range(1, t + 1):
                if not np.isnan(m[t - 1, j - 1]):
                    w.writerow([t, j, repr(float(m[t - 1, j - 1]))])


def read_accuracy_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["t", "j", "accuracy"]:
            raise ValueError(f"{path}: expected header t,j,accuracy, got {reader.fieldnames}")
        for rec in reader:
            rows.append((int(rec["t"]), int(rec["j"]), float(rec["accuracy"])))
    if not rows:
        raise ValueError(f"{path}: no accuracy entries")
    n = max(r[0] for r in rows)
    m = np.full((n, n), np.nan)
    for t, j, a in rows:
        if not (1 <= j <= t) or not (0.0 <= a <= 1.0):
            raise ValueError(f"{path}: invalid entry t={t} j={j} accuracy={a}")
        m[t - 1, j - 1] = a
    return m


def write_curves_csv(path, m: np.ndarray) -> None:
    """``t, A_t, F_t`` per completed row; F_1 is left blank."""
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "avg_accuracy", "forgetting"])
        for t in range(1, m.shape[0] + 1):
            if np.isnan(m[t - 1, :t]).any():
                break
            fg = repr(forgetting(m, t)) if t > 1 else ""
            w.writerow([t, repr(avg_accuracy(m, t)), fg])


def write_param_csv(path, report: ParamCountReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["component", "count"])
        for name in ("factors", "selectors", "hidden_biases", "heads", "total"):
            w.writerow([name, getattr(report, name)])
        for t, n in enumerate(report.per_task, start=1):
            w.writerow([f"after_task_{t}", n])
