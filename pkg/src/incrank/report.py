"""Run reports: A_t curve CSV, accuracy heatmap SVG and a text summary."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .metrics import (avg_accuracy, forgetting, format_megaparams, read_accuracy_csv,
                      write_curves_csv)

CELL = 16


def _gray(a: float) -> str:
    # 0 -> white, 1 -> black
    level = int(round(255 * (1.0 - min(max(a, 0.0), 1.0))))
    return f"#{level:02x}{level:02x}{level:02x}"


def heatmap_svg(m: np.ndarray, cell: int = CELL) -> str:
    """Task-wise accuracy heatmap; row t, column j shows a[t, j] in grayscale."""
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    margin = 24
    size = margin + n * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<text x="{margin}" y="12" font-size="10" font-family="monospace">'
        f'task j (columns) / after training t (rows); black = 1.0</text>',
    ]
    for t in range(n):
        for j in range(t + 1):
            a = m[t, j]
            if np.isnan(a):
                continue
            parts.append(
                f'<rect x="{margin + j * cell}" y="{margin + t * cell}" width="{cell}" '
                f'height="{cell}" fill="{_gray(a)}"><title>a[{t + 1},{j + 1}]={a!r}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def summarize(run_dir) -> dict:
    run_dir = Path(run_dir)
    m = read_accuracy_csv(run_dir / "accuracy.csv")
    summary_path = run_dir / "summary.json"
    meta = json.loads(summary_path.read_text()) if summary_path.exists() else {}
    n = m.shape[0]
    while n > 0 and np.isnan(m[n - 1, :n]).any():
        n -= 1
    if n == 0:
        raise ValueError(f"{run_dir}: no complete accuracy row")
    out = {
        "run_dir": str(run_dir),
        "num_tasks": n,
        "avg_accuracy": avg_accuracy(m, n),
        "forgetting": forgetting(m, n) if n > 1 else 0.0,
        "param_count": meta.get("param_count"),
        "r1": meta.get("config", {}).get("model", {}).get("r1"),
        "rt": meta.get("config", {}).get("model", {}).get("rt"),
        "mode": meta.get("config", {}).get("mode"),
    }
    return out


def write_report(run_dir) -> dict:
    run_dir = Path(run_dir)
    m = read_accuracy_csv(run_dir / "accuracy.csv")
    write_curves_csv(run_dir / "curves.csv", m)
    (run_dir / "heatmap.svg").write_text(heatmap_svg(m))
    s = summarize(run_dir)
    (run_dir / "report.txt").write_text(format_summary(s))
    return s


def format_summary(s: dict) -> str:
    lines = [
        f"run: {s['run_dir']}",
        f"tasks: {s['num_tasks']}",
        f"mode: {s.get('mode')}",
        f"rank (r1, rt): ({s.get('r1')}, {s.get('rt')})",
        f"A_T: {100 * s['avg_accuracy']:.2f}%",
        f"F_T: {100 * s['forgetting']:.2f}%",
    ]
    if s.get("param_count") is not None:
        lines.append(f"parameters: {s['param_count']} ({format_megaparams(s['param_count'])})")
    return "\n".join(lines) + "\n"


def format_sweep(summaries: list[dict]) -> str:
    lines = ["(r1,rt)      A_T      F_T   params"]
    for s in summaries:
        n = s.get("param_count")
        params = f"{n} ({format_megaparams(n)})" if n is not None else "-"
        lines.append(f"({s.get('r1')},{s.get('rt')})".ljust(10)
                     + f"{100 * s['avg_accuracy']:7.2f}  {100 * s['forgetting']:7.2f}   {params}")
    return "\n".join(lines) + "\n"
