"""Command line entry point: ``dpe {train-bpe,train-scorer,segment,emit,analyze}``.

Settings come from an optional TOML file (``--config``; flat ``key = value``
pairs using the long option names) overridden by explicit flags.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import DPEError
from .lattice import build_lattice
from .pipeline import (SOURCE_MODES, TARGET_MODES, ConfigError, PipelineConfig, run_analyze,
                       run_stage_emit_training_set, run_stage_segment, run_stage_train_scorer,
                       run_train_bpe)

EXIT_CONFIG = 2
EXIT_DATA = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with default settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--joiner")
    p.add_argument("--dropout-p", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", "-o")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-bpe", help="learn BPE merges and a vocabulary")
    _common(p)
    p.add_argument("--corpus", action="append")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--vocab-size", type=int)

    p = sub.add_parser("train-scorer", help="train the subword scorer by exact marginalization")
    _common(p)
    for name in ("source", "target", "vocab", "merges", "checkpoint", "heldout-source",
                 "heldout-target", "log"):
        p.add_argument(f"--{name}")
    p.add_argument("--mode", choices=("conditional", "lm"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--grad-accumulation", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)

    for cmd, text in (("segment", "segment a parallel corpus"),
                      ("emit", "write the final training corpus and manifest")):
        p = sub.add_parser(cmd, help=text)
        _common(p)
        for name in ("source", "target", "vocab", "merges", "checkpoint"):
            p.add_argument(f"--{name}")
        p.add_argument("--source-mode", choices=SOURCE_MODES)
        p.add_argument("--target-mode", "--mode", dest="target_mode", choices=TARGET_MODES)
        if cmd == "segment":
            p.add_argument("--pass-index", type=int, default=0)
            p.add_argument("--dump-lattice", metavar="WORD",
                           help="print the lattice of WORD in DOT format and exit")
        else:
            p.add_argument("--variants", type=int)

    p = sub.add_parser("analyze", help="compare two segmentations of one raw corpus")
    _common(p)
    p.add_argument("--a", dest="analysis_a")
    p.add_argument("--b", dest="analysis_b")
    p.add_argument("--raw")
    p.add_argument("--top", type=int)
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "pass_index", "dump_lattice"}


def load_config(args: argparse.Namespace) -> PipelineConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, "rb") as f:
                values.update(tomllib.load(f))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key, value in vars(args).items():
        if key not in _NOT_CONFIG and value is not None:
            values[key] = value
    return PipelineConfig.from_mapping(values)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "train-bpe":
            merges, vocab = run_train_bpe(cfg)
            print(f"merges={len(merges)} vocab={len(vocab)} max_len={vocab.max_len}")
        elif args.command == "train-scorer":
            path, report = run_stage_train_scorer(cfg)
            print(f"checkpoint={path} train_loss={report.train_loss} heldout_loss={report.heldout_loss}")
        elif args.command == "segment":
            if args.dump_lattice is not None:
                from .core import load_vocab
                if not cfg.vocab:
                    raise ConfigError("--dump-lattice needs --vocab")
                vocab = load_vocab(cfg.vocab)
                sys.stdout.write(build_lattice(args.dump_lattice, vocab).to_dot(vocab))
                return 0
            src, tgt = run_stage_segment(cfg, args.pass_index)
            print(f"source={src} target={tgt}")
        elif args.command == "emit":
            manifest = run_stage_emit_training_set(cfg)
            print(f"files={sorted(manifest['files'])}")
        elif args.command == "analyze":
            print(f"report={run_analyze(cfg)}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DPEError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
