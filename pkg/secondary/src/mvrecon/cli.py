"""Command line front end: train a checkpoint, report IoU, serve the bridge."""

from __future__ import annotations

import argparse
import sys

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUN = 3


def cmd_train(args) -> int:
    from .train import TrainConfig, build_dataset, evaluate_iou, save_checkpoint, train_model

    cfg = TrainConfig(seed=args.seed, steps=args.steps, train_shapes=args.shapes,
                      eval_shapes=args.eval_shapes)
    dataset = build_dataset(cfg)
    model, history = train_model(cfg, dataset, log=lambda line: print(line, file=sys.stderr))
    scores = evaluate_iou(model, dataset.eval, ks=(1, 2, 4, 8))
    save_checkpoint(model, cfg, args.out, extra={"eval_iou": {str(k): v for k, v in scores.items()}})
    print(f"wrote checkpoint to {args.out}")
    for k in sorted(scores):
        print(f"iou k={k}: {scores[k]:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import json
    from pathlib import Path

    from .train import TrainConfig, build_dataset, evaluate_iou, load_checkpoint

    try:
        model = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = json.loads((Path(args.checkpoint) / "manifest.json").read_text())
    cfg = TrainConfig(**manifest["train_config"])
    dataset = build_dataset(cfg)
    for k, score in evaluate_iou(model, dataset.eval, ks=tuple(args.k)).items():
        print(f"iou k={k}: {score:.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import json

    from .server import run

    try:
        return run(args.checkpoint)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mvrecon",
        description="Toy multi-view reconstruction model and its bridge server.",
    )
    sub = ap.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train and write a checkpoint directory")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--steps", type=int, default=600)
    t.add_argument("--shapes", type=int, default=240)
    t.add_argument("--eval-shapes", type=int, default=60)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="IoU of a checkpoint on its eval split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--k", type=int, nargs="+", default=[1, 2, 4, 8])
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("serve", help="answer bridge requests on stdio")
    s.add_argument("--checkpoint", required=True)
    s.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
