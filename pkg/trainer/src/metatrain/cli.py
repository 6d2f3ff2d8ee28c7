"""Command-line entry point: train a model and export checkpoints."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ArchConfig, TrainConfig
from .train import DivergenceError, export, train


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metatrain",
                                description="Meta-train a few-shot transformer "
                                            "and export PTXF checkpoints")
    p.add_argument("--out", required=True, help="float checkpoint output path")
    p.add_argument("--quant-out", help="quantized checkpoint output path")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--image-pixels", type=int, default=16)
    p.add_argument("--num-classes", type=int, default=5)
    p.add_argument("--n", type=int, default=5, help="classes per episode")
    p.add_argument("--k", type=int, default=1, help="shots per class")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--batch-episodes", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--warmup-steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-episodes", type=int, default=512)
    p.add_argument("--dataset", choices=["synthetic", "omniglot"],
                   default="synthetic")
    p.add_argument("--data-root", help="omniglot image directory")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    arch = ArchConfig(layers=args.layers, embed_dim=args.embed_dim,
                      heads=args.heads, window=args.window,
                      image_pixels=args.image_pixels,
                      num_classes=args.num_classes)
    cfg = TrainConfig(arch=arch, n_way=args.n, k_shot=args.k,
                      steps=args.steps, batch_episodes=args.batch_episodes,
                      learning_rate=args.learning_rate,
                      warmup_steps=args.warmup_steps, seed=args.seed,
                      eval_episodes=args.eval_episodes,
                      dataset=args.dataset, data_root=args.data_root)

    def progress(step, loss, lr):
        if not args.quiet:
            print(f"step {step:6d}  loss {loss:.4f}  lr {lr:.2e}",
                  file=sys.stderr)

    try:
        result = train(cfg, progress=progress)
    except (DivergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stats = export(result.model, cfg, args.out, args.quant_out)
    manifest = {
        "config": cfg.to_dict(),
        "config_digest": arch.digest(),
        "final_loss": result.log[-1][1] if result.log else None,
        "eval_accuracy": result.eval_accuracy,
        "checkpoint": args.out,
        "quantized_checkpoint": args.quant_out,
        "quantization": stats,
    }
    print(json.dumps(manifest, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
