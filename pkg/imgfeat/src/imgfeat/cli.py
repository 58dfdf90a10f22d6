"""Command line: batch feature extraction and the training demo."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

log = logging.getLogger("imgfeat")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imgfeat",
        description="CNN feature extraction and a two-phase training demo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ex = sub.add_parser("extract", help="embed a directory of images")
    p_ex.add_argument("--images", required=True, help="image root directory")
    p_ex.add_argument("--labels", required=True, help="label map CSV (relative_path,label)")
    p_ex.add_argument("--output", required=True, help="embedding file (.csv or .vped)")
    p_ex.add_argument("--backbone", default="densenet121")
    p_ex.add_argument("--weights-dir", default="backbone-weights",
                      help="cache directory for pinned weights")
    p_ex.add_argument("--weights", default=None,
                      help="explicit weights file (skips the seeded cache)")
    p_ex.add_argument("--batch-size", type=int, default=8)
    p_ex.set_defaults(func=cmd_extract)

    p_tr = sub.add_parser("train-demo", help="two-phase training on the toy dataset")
    p_tr.add_argument("--config", default=None, help="training config JSON")
    p_tr.add_argument("--log", default=None, help="write the epoch log CSV here")
    p_tr.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_tr.set_defaults(func=cmd_train_demo)
    return parser


def cmd_extract(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    from imgfeat.extract import ExtractJob, extract

    if args.batch_size < 1:
        parser.error(f"--batch-size must be >= 1, got {args.batch_size}")
    job = ExtractJob(
        image_root=args.images,
        label_map=args.labels,
        output=args.output,
        backbone=args.backbone,
        weights_dir=args.weights_dir,
        weights_path=args.weights,
        batch_size=args.batch_size,
    )
    result = extract(job)
    print(f"{result.written} records written, {len(result.skipped)} skipped")
    return 0


def cmd_train_demo(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    from imgfeat.train import TrainConfig, accuracy, make_toy_data, make_toy_model, train

    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = TrainConfig.from_json(fh.read())
    else:
        config = TrainConfig(num_classes=2)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)

    data = make_toy_data(seed=config.seed)
    model = make_toy_model(num_classes=config.num_classes, seed=config.seed)
    result = train(model, data, config)
    if args.log:
        result.write_csv(args.log)
        log.info("wrote training log to %s", args.log)
    train_acc = accuracy(model, data.train_x, data.train_y)
    val_acc = accuracy(model, data.val_x, data.val_y)
    stopped = result.stopped_epoch if result.stopped_epoch is not None else "budget"
    print(f"best phase-2 epoch {result.best_epoch}, stopped at {stopped}, "
          f"train acc {train_acc:.3f}, val acc {val_acc:.3f}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except Exception as exc:  # noqa: BLE001 - one diagnostic line, exit 1
        log.error("error: %s", exc)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
