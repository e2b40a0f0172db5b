#!/usr/bin/env python3
"""Fixed-k ablation: zero-shot accuracy of semap_k as k grows.

Small k misses related pretrained classes; large k drowns the mapped sum in
unrelated ones. The adaptive strategy picks per-class prefix lengths and is
printed as the reference line.

Usage:
  python scripts/sweep_fixed_k.py --seed 0 --ks 1,2,5,10,20
"""

import argparse
import sys

from semap.evaluator import evaluate, make_synthetic_benchmark
from semap.mapping import semap_a, semap_k
from semap.similarity import build_profiles


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--per-class", type=int, default=30)
    ap.add_argument("--image-noise", type=float, default=0.2)
    ap.add_argument("--ks", default="1,2,3,5,10,20")
    args = ap.parse_args()

    bench = make_synthetic_benchmark(
        args.seed, m=args.m, n=args.n, per_class=args.per_class,
        image_noise=args.image_noise, rm_adversarial=True,
    )
    profiles = build_profiles(bench.down_embeddings, bench.pre_embeddings)
    batch = bench.test_logits()

    print("k accuracy")
    for token in args.ks.split(","):
        k = int(token)
        if not 1 <= k <= bench.n:
            print(f"skipping k={k} (out of range)", file=sys.stderr)
            continue
        acc = evaluate(semap_k(profiles, k), batch).accuracy
        print(f"{k} {acc:.4f}")

    adaptive = semap_a(profiles)
    acc = evaluate(adaptive, batch).accuracy
    ks = adaptive.k_values()
    print(f"adaptive {acc:.4f}  (k_i = {ks})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
