"""Driving the CLI from Python: a small rank sweep plus its report.

Uses 3 permuted tasks on a 10k-image subset so it finishes quickly, then
renders the comparison table and one heatmap per run under ./demo_runs.
"""
import json
from pathlib import Path

from incrank.cli import main

root = Path("demo_runs")
root.mkdir(exist_ok=True)
cfg = root / "base.json"
cfg.write_text(json.dumps({
    "output_dir": str(root / "unused"),
    "stream": {"kind": "permuted", "num_tasks": 3, "train_limit": 10000},
    "train": {"epochs": 1},
}))

runs = []
for r1, rt in [(1, 1), (11, 1), (11, 4)]:
    out = root / f"r{r1}_{rt}"
    main(["run", str(cfg), "--output-dir", str(out),
          "--set", f"model.r1={r1}", "--set", f"model.rt={rt}"])
    runs.append(str(out))

main(["report", *runs])
