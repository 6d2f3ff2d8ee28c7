"""Command-line entry points: eval, equiv, quantize, inspect, bench.

Every command is deterministic given its --seed and checkpoint digest and
emits a JSON run manifest on stdout (or --out). Exit codes: 0 success,
1 check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .checkpoint import (CheckpointError, TensorEntry, load_checkpoint,
                         save_checkpoint)
from .config import ModelConfig
from .engine import (FewShotModel, evaluate, init_weights, quantize_weights)
from .episodes import OmniglotDataset, SyntheticFewShotDataset, episode_stream
from .plastic_attention import PlasticAttentionLayer
from .reference import RefAttentionBlock

DATA_ROOT_ENV = "PLASTIFORMER_DATA"


def _emit(manifest: dict, out_path: str | None):
    text = json.dumps(manifest, indent=2, default=float)
    if out_path:
        with open(out_path, "w") as f:
            f.write(text + "\n")
    print(text)


def _dataset(args, config: ModelConfig):
    if args.dataset == "synthetic":
        return SyntheticFewShotDataset(pixels=config.image_pixels, seed=args.seed)
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise SystemExit2(f"omniglot dataset needs --data-root or ${DATA_ROOT_ENV}")
    return OmniglotDataset(root)


class SystemExit2(SystemExit):
    def __init__(self, message):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise SystemExit2("--episodes must be >= 1")
    try:
        model = FewShotModel.from_checkpoint(args.checkpoint, mode=args.mode)
    except (OSError, CheckpointError) as exc:
        raise SystemExit2(exc)
    config = model.config
    if args.n != config.num_classes:
        raise SystemExit2(f"checkpoint is {config.num_classes}-way, asked for {args.n}-way")
    dataset = _dataset(args, config)
    stream = episode_stream(dataset, args.n, args.k, args.seed)
    t0 = time.perf_counter()
    result = evaluate(model, stream, args.episodes, workers=args.workers)
    elapsed = time.perf_counter() - t0
    lo, hi = result.confidence_interval()
    manifest = {
        "command": "eval",
        "mode": args.mode,
        "config_digest": config.digest(),
        "checkpoint_digest": model.checkpoint_digest,
        "seed": args.seed,
        "n": args.n,
        "k": args.k,
        "episodes": args.episodes,
        "accuracy": result.accuracy,
        "ci95": [lo, hi],
        "seconds": elapsed,
    }
    if args.dump_predictions:
        manifest["predictions"] = result.predictions
    _emit(manifest, args.out)
    return 0


def cmd_equiv(args) -> int:
    if args.d % args.heads != 0:
        raise SystemExit2(f"--d {args.d} not divisible by --h {args.heads}")
    rng = np.random.default_rng(args.seed)
    d = args.d
    mats = {k: rng.normal(0, 1 / np.sqrt(d), size=(d, d)) for k in ("wq", "wk", "wv", "wo")}
    bo = rng.normal(0, 0.1, size=d)
    gain = np.ones(d)
    plastic = PlasticAttentionLayer(n_heads=args.heads, window=args.w,
                                    bo=bo, norm_gain=gain, **mats)
    ref = RefAttentionBlock(n_heads=args.heads, window=args.w,
                            bo=bo, norm_gain=gain, **mats)
    xs = rng.normal(0, 1, size=(args.t, d))
    max_diff = 0.0
    for t in range(args.t):
        zp = plastic.attend_step(xs[t], t)
        zr = ref.attend_step(xs[t], t)
        max_diff = max(max_diff, float(np.max(np.abs(zp - zr))))
    passed = max_diff < 1e-5
    _emit(
        {
            "command": "equiv",
            "d": d, "heads": args.heads, "t": args.t, "w": args.w,
            "seed": args.seed,
            "max_abs_diff": max_diff,
            "tolerance": 1e-5,
            "pass": passed,
        },
        args.out,
    )
    return 0 if passed else 1


def cmd_quantize(args) -> int:
    try:
        config, tensors, in_digest = load_checkpoint(args.input)
    except (OSError, CheckpointError) as exc:
        raise SystemExit2(exc)
    if args.weight_bits is not None or args.activation_bits is not None:
        d = config.to_dict()
        if args.weight_bits is not None:
            d["weight_bits"] = args.weight_bits
        if args.activation_bits is not None:
            d["activation_bits"] = args.activation_bits
        config = ModelConfig.from_dict(d)
    weights = {name: t.values() for name, t in tensors.items()}
    entries = quantize_weights(config, weights)
    stats = {}
    for name, entry in entries.items():
        err = np.abs(entry.values() - weights[name])
        stats[name] = {
            "dtype": entry.dtype,
            "scale_exp": entry.scale_exp,
            "max_abs_error": float(err.max()) if err.size else 0.0,
        }
    save_checkpoint(args.output, config, entries)
    _, _, out_digest = load_checkpoint(args.output)
    _emit(
        {
            "command": "quantize",
            "input_digest": in_digest,
            "output_digest": out_digest,
            "config_digest": config.digest(),
            "tensors": stats,
        },
        args.out,
    )
    return 0


def cmd_inspect(args) -> int:
    try:
        config, tensors, digest = load_checkpoint(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        raise SystemExit2(exc)
    manifest = {
        "command": "inspect",
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "checkpoint_digest": digest,
        "tensors": {
            name: {"shape": list(t.array.shape), "dtype": t.dtype, "scale_exp": t.scale_exp}
            for name, t in tensors.items()
        },
    }
    if args.tokens > 0:
        model = FewShotModel.from_checkpoint(args.checkpoint, mode="plastic")
        rng = np.random.default_rng(args.seed)
        toks = rng.uniform(0, 1, size=(args.tokens, config.token_dim))
        model.forward_tokens(toks)
        last_slot = (args.tokens - 1) % config.window
        manifest["cache"] = [
            {
                "layer": i,
                "t": layer.attn.scheduler.t,
                "filled": layer.attn.scheduler.filled,
                "last_slot": last_slot,
                "keys_row": [list(h.key_row(last_slot)) for h in layer.attn.heads],
                "values_column": [
                    list(h.value_column(last_slot)) for h in layer.attn.heads
                ],
            }
            for i, layer in enumerate(model.layers)
        ]
    else:
        manifest["cache"] = "empty (no tokens processed)"
    _emit(manifest, args.out)
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    for d in args.d:
        mats = {k: rng.normal(0, 1 / np.sqrt(d), size=(d, d)) for k in ("wq", "wk", "wv", "wo")}
        bo = np.zeros(d)
        gain = np.ones(d)
        xs = rng.normal(0, 1, size=(args.t, d))
        timings = {}
        for mode, cls in (("reference", RefAttentionBlock), ("plastic", PlasticAttentionLayer)):
            block = cls(n_heads=1, window=args.w, bo=bo, norm_gain=gain, **mats)
            t0 = time.perf_counter()
            for t in range(args.t):
                block.attend_step(xs[t], t)
            timings[mode] = (time.perf_counter() - t0) / args.t
        rows.append({"d": d, "t": args.t, "w": args.w, "per_token_seconds": timings})
    _emit({"command": "bench", "seed": args.seed, "results": rows}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plastiformer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on few-shot episodes")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--episodes", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("float", "quant", "plastic"), default="float")
    p.add_argument("--dataset", choices=("synthetic", "omniglot"), default="synthetic")
    p.add_argument("--data-root")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-predictions", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("equiv", help="plastic vs reference attention check")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--h", dest="heads", type=int, default=1)
    p.add_argument("--t", type=int, default=8)
    p.add_argument("--w", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("quantize", help="produce a quantized checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--weight-bits", type=int)
    p.add_argument("--activation-bits", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("inspect", help="dump config, manifest and cache state")
    p.add_argument("checkpoint")
    p.add_argument("--tokens", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("bench", help="per-token latency, reference vs plastic")
    p.add_argument("--d", type=int, nargs="+", default=[64, 128])
    p.add_argument("--t", type=int, default=64)
    p.add_argument("--w", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
