"""``asen`` command-line tool: synth, train, evaluate, importance."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import config as config_mod
from . import pipeline
from .errors import AsenError


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value; dotted keys, JSON values; repeatable")
    p.add_argument("--workers", type=int, help="processes used for base-learner training")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset CSV")
    _common(p)

    p = sub.add_parser("train", help="train the pool, the attention layer and the baselines")
    _common(p)

    p = sub.add_parser("evaluate", help="score a saved model on one split")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset CSV (defaults to the configured source)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--allow-train", action="store_true",
                   help="permit evaluation on the train or val split")

    p = sub.add_parser("importance", help="permutation importance and top-k retraining")
    _common(p)
    p.add_argument("--model", type=Path, help="trained ASEN model (retrained when omitted)")
    p.add_argument("--data", type=Path, help="dataset CSV (defaults to the configured source)")
    p.add_argument("--k", type=int, help="number of features kept")
    return parser


def _resolve(args) -> config_mod.RunConfig:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    if args.workers is not None:
        overrides.append(f"pool.workers={args.workers}")
    return config_mod.load(args.config, overrides, args.seed)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = "config"
    try:
        cfg = _resolve(args)
        out = Path(cfg.output_dir)
        if args.command == "synth":
            info = pipeline.run_synth(cfg, out)
            print(f"wrote {out / 'dataset.csv'} ({info['rows']} rows)")
        elif args.command == "train":
            result = pipeline.run_train(cfg, out)
            print(f"wrote {len(result.files)} model files to {out / 'models'}")
        elif args.command == "evaluate":
            report = pipeline.run_evaluate(cfg, args.model, out, args.data, args.split,
                                           args.allow_train)
            print(pipeline.summary_header())
            print(report.summary_line(args.model.stem))
        else:
            result = pipeline.run_importance(cfg, args.model, out, args.k, args.data)
            print("selected:", ", ".join(result.selected_features))
            print(pipeline.summary_header())
            print(result.full.summary_line("full_feature_set"))
            print(result.selected.summary_line("after_feature_selection"))
    except pipeline.StageError as exc:
        print(f"asen {args.command}: {exc}", file=sys.stderr)
        return 1
    except (AsenError, OSError, ValueError) as exc:
        print(f"asen {args.command}: stage '{stage}' failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
