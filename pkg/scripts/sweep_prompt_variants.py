#!/usr/bin/env python3
"""Prompt-variant ablation: padding vs fixed patch vs random patch.

Trains one prompt per variant on the same benchmark and mapping table and
reports prompted test accuracy next to the zero-shot baseline.

Usage:
  python scripts/sweep_prompt_variants.py --seed 0 --epochs 15
"""

import argparse
import sys

from semap.evaluator import evaluate, make_synthetic_benchmark
from semap.mapping import semap_a
from semap.similarity import build_profiles
from semap.trainer import TrainConfig, train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--per-class", type=int, default=30)
    ap.add_argument("--image-noise", type=float, default=0.2)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=0.1)
    args = ap.parse_args()

    bench = make_synthetic_benchmark(
        args.seed, per_class=args.per_class, image_noise=args.image_noise,
        rm_adversarial=True,
    )
    table = semap_a(build_profiles(bench.down_embeddings, bench.pre_embeddings))
    zero_shot = evaluate(table, bench.test_logits()).accuracy
    print(f"zero_shot {zero_shot:.4f}")

    # patch variants act on the full canvas; train on padded train images
    pad = (bench.d - bench.image_side) // 2
    padded_train = [
        (compose_full(img, bench, pad), label) for img, label in bench.train_dataset()
    ]
    padded_test_images = [compose_full(img, bench, pad) for img in bench.test_images]

    for variant in ("padding", "fixed_patch", "random_patch"):
        cfg = TrainConfig(
            epochs=args.epochs, learning_rate=args.lr, batch_size=32,
            seed=args.seed, prompt_variant=variant,
        )
        if variant == "padding":
            report = train(bench.backbone, table, bench.train_dataset(), cfg)
            batch = bench.test_logits(report.prompt)
        else:
            report = train(bench.backbone, table, padded_train, cfg)
            import numpy as np

            from semap.backbone import compose, forward
            from semap.embedding_io import LogitBatch

            scores = np.stack([
                forward(bench.backbone, compose(img, report.prompt))
                for img in padded_test_images
            ])
            batch = LogitBatch(scores.astype(np.float32), bench.test_labels)
        acc = evaluate(table, batch).accuracy
        print(f"{variant} {acc:.4f}  (final train loss {report.epoch_losses[-1]:.4f})")
    return 0


def compose_full(img, bench, pad):
    """Center a small image on a zero canvas so patch prompts see d x d input."""
    import numpy as np

    canvas = np.zeros((bench.d, bench.d))
    canvas[pad : pad + bench.image_side, pad : pad + bench.image_side] = img
    return canvas


if __name__ == "__main__":
    sys.exit(main())
