"""Command line harness: ``incrank run|report|eval|count-params|gen-stream``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics, report
from .checkpoint import load_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .data import CachedStream, IDXError, load_mnist, make_stream, save_stream
from .trainer import TrainingDiverged, evaluate, run_sequence

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

RANK_SWEEP = [(1, 1), (6, 1), (11, 1), (11, 2), (11, 4)]

log = logging.getLogger("incrank")


def build_stream(cfg: ExperimentConfig, data_dir=None):
    s = cfg.stream
    if s.cache_dir:
        stream = CachedStream(s.cache_dir)
        if len(stream) < s.num_tasks:
            raise ConfigError(f"stream.cache_dir: holds {len(stream)} tasks, need {s.num_tasks}")
        stream.metadata = stream.metadata[:s.num_tasks]
        return stream
    (tr_x, tr_y), (te_x, te_y) = load_mnist(data_dir or s.data_dir)
    if s.train_limit:
        tr_x, tr_y = tr_x[:s.train_limit], tr_y[:s.train_limit]
    if s.test_limit:
        te_x, te_y = te_x[:s.test_limit], te_y[:s.test_limit]
    return make_stream(s.kind, (tr_x, tr_y), (te_x, te_y), s.num_tasks, s.seed,
                       s.classes_per_task)


STREAM_IDENTITY = ("kind", "num_tasks", "seed", "classes_per_task", "train_limit", "test_limit")


def portable_config(cfg: ExperimentConfig) -> dict:
    """Config without machine-local paths, as stored inside checkpoints."""
    d = cfg.to_dict()
    d.pop("output_dir")
    d["stream"] = {k: d["stream"][k] for k in STREAM_IDENTITY}
    return d


def _load_cfg(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if getattr(args, "output_dir", None):
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    return load_config(args.config, overrides)


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream = build_stream(cfg, args.data_dir)
    config = cfg.to_dict()
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    record = run_sequence(
        stream, cfg.hyper(), cfg.model.hidden_dims, mode=cfg.mode,
        parallel_rank=cfg.parallel_rank, checkpoint=out / "checkpoint.npz",
        resume=args.resume, config=portable_config(cfg))
    metrics.write_accuracy_csv(out / "accuracy.csv", record.accuracy)
    metrics.write_curves_csv(out / "curves.csv", record.accuracy)
    n = record.num_tasks
    nets = record.nets
    param_count = sum(net.param_count() for net in nets)
    if cfg.mode == "incremental":
        classes = [h.num_classes for h in nets[0].heads.values()]
        closed = metrics.count_params(stream.input_dim, cfg.model.hidden_dims, classes,
                                      cfg.model.r1, cfg.model.rt, n)
        if closed.total != param_count:
            raise RuntimeError(f"closed-form count {closed.total} != stored {param_count}")
        metrics.write_param_csv(out / "params.csv", closed)
    summary = {
        "num_tasks": n,
        "avg_accuracy": metrics.avg_accuracy(record.accuracy, n),
        "forgetting": metrics.forgetting(record.accuracy, n) if n > 1 else 0.0,
        "param_count": param_count,
        "param_count_display": metrics.format_megaparams(param_count),
        "wall_time": record.wall_time,
        "config": config,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"A_{n} = {100 * summary['avg_accuracy']:.2f}%  "
          f"F_{n} = {100 * summary['forgetting']:.2f}%  params = {param_count}")
    return 0


def cmd_report(args) -> int:
    summaries = [report.write_report(d) for d in args.run_dirs]
    for s in summaries:
        print(report.format_summary(s), end="")
    if len(summaries) > 1:
        print(report.format_sweep(summaries), end="")
    return 0


def cmd_eval(args) -> int:
    if args.task < 1:
        raise ConfigError(f"task: must be >= 1, got {args.task}")
    cfg = _load_cfg(args)
    nets, _, meta = load_checkpoint(args.checkpoint)
    saved = meta.get("extra", {})
    if saved.get("stream") and saved["stream"] != portable_config(cfg)["stream"]:
        raise ConfigError("stream: config does not match the stream stored in the checkpoint")
    completed = meta["completed"]
    if args.task > completed:
        raise ConfigError(f"task: {args.task} not trained (checkpoint has 1..{completed})")
    stream = build_stream(cfg, args.data_dir)
    if saved.get("mode", "incremental") == "parallel":
        acc = evaluate(nets[args.task - 1], stream.test(args.task), 1)
    else:
        acc = evaluate(nets[0], stream.test(args.task), args.task)
    print(repr(acc))
    return 0


def cmd_count_params(args) -> int:
    configs = RANK_SWEEP if args.rank_sweep else [(args.r1, args.rt)]
    for r1, rt in configs:
        rep = metrics.count_params(args.input_dim, args.hidden, args.classes, r1, rt, args.tasks)
        print(f"({r1},{rt}) factors={rep.factors} selectors={rep.selectors} "
              f"hidden_biases={rep.hidden_biases} heads={rep.heads} "
              f"total={rep.total} ({metrics.format_megaparams(rep.total)})")
    return 0


def cmd_gen_stream(args) -> int:
    cfg = _load_cfg(args)
    stream = build_stream(cfg, args.data_dir)
    save_stream(stream, args.out, args.tasks)
    print(f"wrote {len(args.tasks) if args.tasks else len(stream)} task(s) to {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incrank", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cfg_args(sp):
        sp.add_argument("config", help="experiment config (JSON)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field, e.g. train.epochs=2")
        sp.add_argument("--data-dir", help="MNIST IDX directory (else config / $INCRANK_DATA_DIR)")

    sp = sub.add_parser("run", help="train a task sequence")
    cfg_args(sp)
    sp.add_argument("--output-dir")
    sp.add_argument("--resume", action="store_true", help="continue from checkpoint.npz")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="curves, heatmap and summary for run directories")
    sp.add_argument("run_dirs", nargs="+")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("eval", help="accuracy of one task from a checkpoint")
    sp.add_argument("checkpoint")
    cfg_args(sp)
    sp.add_argument("--task", type=int, required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("count-params", help="closed-form parameter count")
    sp.add_argument("--input-dim", type=int, default=784)
    sp.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    sp.add_argument("--classes", type=int, default=10)
    sp.add_argument("--r1", type=int, default=11)
    sp.add_argument("--rt", type=int, default=1)
    sp.add_argument("--tasks", type=int, default=20)
    sp.add_argument("--rank-sweep", action="store_true",
                    help="the five schedules (1,1) (6,1) (11,1) (11,2) (11,4)")
    sp.set_defaults(func=cmd_count_params)

    sp = sub.add_parser("gen-stream", help="materialise a task stream to disk")
    cfg_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tasks", type=int, nargs="+")
    sp.set_defaults(func=cmd_gen_stream)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IDXError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
