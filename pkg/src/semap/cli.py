"""Command-line front door.

Every subcommand is a thin shell over module operations. Diagnostics go to
stderr, data to stdout, so output can be piped. Exit codes: 0 success,
1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import backbone as bk
from . import embedding_io as eio
from .errors import SemapError
from .evaluator import (
    build_strategy_table,
    comparison_csv,
    compare_strategies,
    evaluate,
    format_comparison,
    format_report,
    make_synthetic_benchmark,
    write_benchmark,
)
from .mapping import (
    DEFAULT_CAP,
    DEFAULT_EPSILON,
    DEFAULT_GAMMA,
    MappingTable,
    fm_map,
    rm_map,
    semap1,
    semap_a,
    semap_k,
)
from .similarity import build_profiles
from .trainer import TrainConfig, format_train_report, train

FORMATS_NOTE = """\
file formats:
  labels      UTF-8 text, one label per line, newline-terminated
  embeddings  magic SEMAPEMB, u32 rows, u32 dim, rows*dim little-endian f32
  logits/data magic SEMAPLGT, u32 N, u32 n, u8 label-flag, N*n f32,
              then N u32 labels when the flag is 1 (data files store one
              flattened side*side image per row)
  mapping     magic line SEMAPMAP, then key: value lines and one
              "i: s1 s2 ..." line per downstream class
  backbone    magic line SEMAPBKB, then seed/d/hidden/n fields
  prompt      magic SEMAPPRM, u32 d, u32 variant tag, d*d f32 values
defaults for semap-a: epsilon=0.05 gamma=0.9 cap=50
"""

_STRATEGY_FLAGS = {"rm": "rm", "fm": "fm", "semap1": "semap1",
                   "semap-k": "semap_k", "semap-a": "semap_a"}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


class _UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="semap",
        description="Output-space label mapping, visual prompt training, and "
        "zero-shot transfer evaluation for frozen classifiers.",
        epilog=FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--threads", type=int, default=None,
        help="cap on worker threads (falls back to SEMAP_THREADS; the "
        "current implementation is single-threaded, so any cap >= 1 is met)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(
            name, help=help_text, epilog=FORMATS_NOTE,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        return p

    p = add("build-map", "build a mapping table file from labels/embeddings/logits")
    p.add_argument("--strategy", required=True, choices=sorted(_STRATEGY_FLAGS))
    p.add_argument("--pre-labels", required=True, metavar="F")
    p.add_argument("--down-labels", required=True, metavar="F")
    p.add_argument("--pre-emb", metavar="F", help="required for semap strategies")
    p.add_argument("--down-emb", metavar="F", help="required for semap strategies")
    p.add_argument("--logits", metavar="F",
                   help="labeled unprompted logits, required for fm")
    p.add_argument("--k", type=int, default=1, help="fixed k for semap-k (default 1)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help="semap-a gap threshold (default 0.05)")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA,
                   help="semap-a threshold decay (default 0.9)")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                   help="semap-a max indices per class (default 50)")
    p.add_argument("--out", required=True, metavar="F")

    p = add("eval-zeroshot", "evaluate a mapping on labeled logits, no training")
    p.add_argument("--map", required=True, metavar="F")
    p.add_argument("--logits", required=True, metavar="F")

    p = add("train-prompt", "train a visual prompt against a frozen backbone")
    p.add_argument("--map", required=True, metavar="F")
    p.add_argument("--backbone", required=True, metavar="F")
    p.add_argument("--data", required=True, metavar="F",
                   help="labeled image rows (flattened side*side) in the logit container")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--variant", default="padding",
                   choices=["padding", "fixed_patch", "random_patch"])
    p.add_argument("--pad", type=int, default=None,
                   help="padding width (default: inferred from data/backbone sides)")
    p.add_argument("--patch-size", type=int, default=None,
                   help="patch side for patch variants (default d//4)")
    p.add_argument("--out", required=True, metavar="F", help="prompt file to write")

    p = add("gen-toy", "generate a planted synthetic benchmark directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--per-class", type=int, default=30)
    p.add_argument("--emb-dim", type=int, default=32)
    p.add_argument("--emb-noise", type=float, default=0.01)
    p.add_argument("--image-noise", type=float, default=0.05)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--rm-adversarial", action="store_true",
                   help="plant pretrained indices outside [0, m)")
    p.add_argument("--out-dir", required=True, metavar="D")

    p = add("inspect-map", "print a mapping table summary")
    p.add_argument("--map", required=True, metavar="F")

    p = add("compare", "evaluate several strategies on a toy benchmark")
    p.add_argument("--toy-dir", metavar="D",
                   help="benchmark directory from gen-toy (regenerated from its manifest)")
    p.add_argument("--seed", type=int, default=None,
                   help="generate the benchmark in-process instead of --toy-dir")
    p.add_argument("--strategies", default="rm,fm,semap1,semap_a",
                   help="comma list from rm,fm,semap1,semap_k,semap_a")
    p.add_argument("--modes", default="zero_shot",
                   help="comma list from zero_shot,prompted")
    p.add_argument("--epochs", type=int, default=10, help="prompted-mode epochs")
    p.add_argument("--lr", type=float, default=0.1, help="prompted-mode learning rate")
    p.add_argument("--csv", metavar="F", help="also write the comparison as CSV")

    return parser


def _k_histogram(table: MappingTable) -> str:
    ks = table.k_values()
    counts: dict[int, int] = {}
    for k in ks:
        counts[k] = counts.get(k, 0) + 1
    body = "  ".join(f"k={k}:{counts[k]}" for k in sorted(counts))
    return f"k_i histogram over {len(ks)} classes: {body}"


def _cmd_build_map(args) -> int:
    pre_labels = eio.load_labels(args.pre_labels, "pretrained")
    down_labels = eio.load_labels(args.down_labels, "downstream")
    m, n = len(down_labels), len(pre_labels)
    strategy = _STRATEGY_FLAGS[args.strategy]

    if strategy == "rm":
        table = rm_map(m, n)
    elif strategy == "fm":
        if not args.logits:
            raise _UsageError("--logits is required for --strategy fm")
        table = fm_map(eio.load_logits(args.logits), m, n)
    else:
        if not args.pre_emb or not args.down_emb:
            raise _UsageError(
                "--pre-emb and --down-emb are required for semap strategies"
            )
        pre = eio.load_embeddings(args.pre_emb, pre_labels)
        down = eio.load_embeddings(args.down_emb, down_labels)
        profiles = build_profiles(down, pre)
        if strategy == "semap1":
            table = semap1(profiles)
        elif strategy == "semap_k":
            table = semap_k(profiles, args.k)
        else:
            table = semap_a(profiles, args.epsilon, args.gamma, args.cap)

    eio.write_mapping(args.out, table)
    print(f"wrote {args.out}: strategy={table.strategy} m={m} n={n}", file=sys.stderr)
    if strategy in ("semap_a", "semap_k"):
        print(_k_histogram(table), file=sys.stderr)
    return 0


def _cmd_eval_zeroshot(args) -> int:
    table = eio.load_mapping(args.map)
    batch = eio.load_logits(args.logits)
    report = evaluate(table, batch, dataset_id=str(args.logits))
    sys.stdout.write(format_report(report))
    return 0


def _infer_side(width: int) -> int:
    side = math.isqrt(width)
    if side * side != width:
        raise SemapError(f"data rows of width {width} are not square images")
    return side


def _cmd_train_prompt(args) -> int:
    table = eio.load_mapping(args.map)
    model = bk.load_backbone(args.backbone)
    data = eio.load_logits(args.data)
    if data.labels is None:
        raise SemapError(f"{args.data}: training data must carry labels")
    side = _infer_side(data.width)
    if args.variant == "padding":
        pad = args.pad if args.pad is not None else (model.d - side) // 2
        if model.d - 2 * pad != side:
            raise SemapError(
                f"image side {side} does not fit backbone side {model.d} "
                f"with padding {pad}"
            )
    elif side != model.d:
        raise SemapError(
            f"patch variants need full {model.d}x{model.d} images, got side {side}"
        )
    else:
        pad = 0
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        prompt_variant=args.variant,
        pad=pad if args.variant == "padding" else None,
        patch_size=args.patch_size,
    )
    images = data.scores.astype(np.float64).reshape(-1, side, side)
    dataset = [(images[i], int(data.labels[i])) for i in range(data.count)]
    report = train(model, table, dataset, cfg)
    bk.save_prompt(args.out, report.prompt)
    print(f"wrote {args.out}", file=sys.stderr)
    sys.stdout.write(format_train_report(report))
    return 0


def _cmd_gen_toy(args) -> int:
    bench = make_synthetic_benchmark(
        seed=args.seed, m=args.m, n=args.n, d=args.d, per_class=args.per_class,
        emb_dim=args.emb_dim, emb_noise=args.emb_noise,
        image_noise=args.image_noise, hidden=args.hidden,
        rm_adversarial=args.rm_adversarial,
    )
    paths = write_benchmark(bench, args.out_dir)
    for path in paths:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def _cmd_inspect_map(args) -> int:
    table = eio.load_mapping(args.map)
    lines = [
        "mapping_table",
        f"strategy: {table.strategy}",
        f"m: {table.m}",
        f"n: {table.n}",
    ]
    for key, value in table.hyperparams.items():
        lines.append(f"{key}: {value!r}")
    lines.append(_k_histogram(table))
    for i, idxs in enumerate(table.assignments):
        lines.append(f"{i}: " + " ".join(str(s) for s in idxs))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _read_manifest(toy_dir: Path) -> dict[str, str]:
    path = toy_dir / "manifest.txt"
    if not path.exists():
        raise SemapError(f"{path}: file not found")
    lines = path.read_bytes().decode("utf-8").splitlines()
    if not lines or lines[0] != "semap_toy_benchmark":
        raise SemapError(f"{path}: not a benchmark manifest")
    fields = {}
    for line in lines[1:]:
        key, sep, value = line.partition(":")
        if sep:
            fields[key.strip()] = value.strip()
    return fields


def _cmd_compare(args) -> int:
    if (args.toy_dir is None) == (args.seed is None):
        raise _UsageError("exactly one of --toy-dir or --seed is required")
    if args.toy_dir is not None:
        f = _read_manifest(Path(args.toy_dir))
        bench = make_synthetic_benchmark(
            seed=int(f["seed"]), m=int(f["m"]), n=int(f["n"]), d=int(f["d"]),
            per_class=int(f["per_class"]), emb_dim=int(f["emb_dim"]),
            emb_noise=float(f["emb_noise"]), image_noise=float(f["image_noise"]),
            hidden=int(f["hidden"]), rm_adversarial=bool(int(f["rm_adversarial"])),
        )
    else:
        bench = make_synthetic_benchmark(seed=args.seed)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    modes = [s.strip() for s in args.modes.split(",") if s.strip()]
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=32)
    reports = compare_strategies(bench, strategies, modes, cfg)
    sys.stdout.write(format_comparison(reports))
    if args.csv:
        Path(args.csv).write_text(comparison_csv(reports), encoding="utf-8")
        print(f"wrote {args.csv}", file=sys.stderr)
    return 0


_COMMANDS = {
    "build-map": _cmd_build_map,
    "eval-zeroshot": _cmd_eval_zeroshot,
    "train-prompt": _cmd_train_prompt,
    "gen-toy": _cmd_gen_toy,
    "inspect-map": _cmd_inspect_map,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get("SEMAP_THREADS"):
        try:
            threads = int(os.environ["SEMAP_THREADS"])
        except ValueError:
            print("semap: error: SEMAP_THREADS must be an integer", file=sys.stderr)
            return 1
    if threads is not None and threads < 1:
        print("semap: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"semap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (SemapError, IndexError, OSError) as exc:
        print(f"semap {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
