"""semap-export: produce semap-format files from real models and datasets.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import sys

from .formats import ExporterError
from .logits import MODEL_BUILDERS, export_dataset_labels, export_logits
from .text_embeddings import DEFAULT_TEMPLATE, DEFAULT_TEXT_MODEL, export_text_embeddings

DATASETS = ("stl10", "cifar10", "cifar100", "fmnist")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="semap-export",
        description="Bridge real models into the semap binary formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("text-embeddings",
                       help="CLIP text embeddings for a label file")
    p.add_argument("--labels", required=True, metavar="F")
    p.add_argument("--out", required=True, metavar="F")
    p.add_argument("--template", default=DEFAULT_TEMPLATE,
                   help=f"prompt template (default {DEFAULT_TEMPLATE!r})")
    p.add_argument("--model", default=DEFAULT_TEXT_MODEL,
                   help=f"text encoder id (default {DEFAULT_TEXT_MODEL})")

    p = sub.add_parser("logits",
                       help="pretrained-classifier logits over a dataset split")
    p.add_argument("--dataset", required=True, choices=DATASETS)
    p.add_argument("--model", required=True, choices=MODEL_BUILDERS)
    p.add_argument("--split", default="test",
                   help="dataset split: test or train (default test)")
    p.add_argument("--data-root", default="data", metavar="D")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--limit", type=int, default=None,
                   help="export at most N examples (smoke runs)")
    p.add_argument("--out", required=True, metavar="F")

    p = sub.add_parser("dump-labels",
                       help="write the class-name label file for a dataset")
    p.add_argument("--dataset", required=True,
                   choices=DATASETS + ("imagenet",))
    p.add_argument("--out", required=True, metavar="F")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "text-embeddings":
            rows = export_text_embeddings(args.labels, args.out, args.template, args.model)
            print(f"wrote {args.out}: {rows} rows", file=sys.stderr)
        elif args.command == "logits":
            if args.split not in ("test", "train"):
                print(f"semap-export: error: bad --split {args.split!r}", file=sys.stderr)
                return 1
            count, width = export_logits(
                args.dataset, args.model, args.split, args.out,
                data_root=args.data_root, batch_size=args.batch_size,
                limit=args.limit,
            )
            print(f"wrote {args.out}: {count} x {width}", file=sys.stderr)
        else:
            rows = export_dataset_labels(args.dataset, args.out)
            print(f"wrote {args.out}: {rows} labels", file=sys.stderr)
    except ExporterError as exc:
        print(f"semap-export {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
