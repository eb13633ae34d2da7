"""Command-line entry point: ``cast-style <command> --config ... --out ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import torch

from . import pipeline
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .corpus import DatasetError

COMMANDS = ("gen-data", "build-vocab", "pretrain-style", "pretrain-coherence", "train-lm",
            "train", "eval", "ablate", "transfer")

EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_DATA = 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cast-style",
                                     description="Context-aware text style transfer pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default="runs/default", help="run directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _run(args) -> None:
    cfg = load_config(args.config, args.override, args.seed)
    out = args.out
    cmd = args.command
    if cmd == "gen-data":
        counts = pipeline.gen_data(cfg, out)
        for name, n in counts.items():
            print(f"{name}: {n}")
    elif cmd == "build-vocab":
        vocab = pipeline.build_vocab_stage(cfg, out)
        print(f"vocabulary: {len(vocab)} entries ({vocab.num_words} words + 4 specials)")
    elif cmd == "pretrain-style":
        _, report = pipeline.pretrain_style_stage(cfg, out)
        print(f"style classifier held-out accuracy: {report.heldout_accuracy:.2f}")
    elif cmd == "pretrain-coherence":
        _, report = pipeline.pretrain_coherence_stage(cfg, out)
        print(f"coherence classifier held-out accuracy: {report.heldout_accuracy:.2f}")
    elif cmd == "train-lm":
        _, report = pipeline.train_lm_stage(cfg, out)
        print(f"language model train perplexity: {report.train_perplexity:.2f}")
    elif cmd == "train":
        result = pipeline.train_stage(cfg, out)
        print(f"best dev selection metric {result.best_metric:.2f} at step {result.best_step}")
    elif cmd == "eval":
        report = pipeline.eval_stage(cfg, out)
        print((pipeline.Path(out) / "eval.txt").read_text(), end="")
    elif cmd == "ablate":
        pipeline.ablate_stage(cfg, out)
        print((pipeline.Path(out) / "ablation.txt").read_text(), end="")
    elif cmd == "transfer":
        line = sys.stdin.readline()
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"stdin is not a JSON record ({exc.msg})") from None
        print(" ".join(pipeline.transfer_stage(cfg, out, record)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    try:
        _run(args)
    except ConfigError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"error: checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DatasetError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
