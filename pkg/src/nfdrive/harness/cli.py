"""Command line entry point: train / eval / serve / record / report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .metrics import read_log, summarize_log, episodes_to_baseline


def _load_config(path: str | None) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig(method="NFRL")


def cmd_train(args) -> int:
    from .training import Trainer
    config = _load_config(args.config)
    if args.seed is not None:
        d = config.to_dict()
        d["seed"] = args.seed
        config = RunConfig.from_dict(d)
    trainer = Trainer(config)
    result = trainer.train(args.out)
    print(json.dumps(result, indent=2))
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_checkpoint
    config = RunConfig.from_file(args.config) if args.config else None
    report = evaluate_checkpoint(args.checkpoint, config, args.episodes)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    if args.web:
        from .webserver import serve_web
        serve_web(config, args.port, record_out=args.record_out)
    else:
        from .server import serve
        print(f"environment server on port {args.port}", file=sys.stderr)
        serve(config, args.port, record_out=args.record_out)
    return 0


def cmd_record(args) -> int:
    """Scripted-expert demonstration recording."""
    import numpy as np
    from ..demos import DemoDataset, record_episode, save
    from ..simworld.expert import ScriptedExpert
    from ..simworld.world import spawn_scenario

    config = _load_config(args.config)
    ds = DemoDataset(source="scripted")
    for i in range(args.episodes):
        seed = config.seed * 100000 + 600000 + i
        world = spawn_scenario(seed=seed, n_traffic=config.n_traffic,
                               map_id=config.map_id)
        expert = ScriptedExpert()
        ep = record_episode(world, lambda o: expert.act(world),
                            episode_id=i, seed=seed,
                            shaping=config.shaping,
                            max_steps=config.max_episode_steps)
        ds.add_episode(ep)
    save(ds, args.out)
    total = sum(len(e) for e in ds.episodes)
    print(f"wrote {len(ds.episodes)} episodes ({total} steps) to {args.out}")
    return 0


def cmd_report(args) -> int:
    records = read_log(args.log)
    window = args.window
    summary = summarize_log(records, window)
    if args.baseline is not None:
        distances = [r["distance"] for r in records]
        hit = episodes_to_baseline(distances, args.baseline, window)
        summary["requested_baseline"] = {
            "meters": args.baseline,
            "episodes": hit if hit is not None else "not reached",
        }
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfdrive")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="runs/latest")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the environment server")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--record-out", default=None)
    p.add_argument("--web", action="store_true",
                   help="serve the browser teleop UI over websockets")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("record", help="record scripted-expert demonstrations")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_record)

    p = sub.add_parser("report", help="summarize a metrics log")
    p.add_argument("--log", required=True)
    p.add_argument("--baseline", type=float, default=None)
    p.add_argument("--window", type=int, default=10)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
