"""annotate --in raw.jsonl --out corpus.jsonl --backend NAME
            [--embeddings --dim D]"""
from __future__ import annotations

import argparse
import sys

from .annotate import (EmptyAfterTokenization, annotate_stream, parse_raw,
                       write_meta)
from .embed import EmbedderUnavailable
from .ner import BackendUnavailable


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textannot",
        description="annotate raw documents into the corpus schema")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("annotate")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="rulebased")
    p.add_argument("--embeddings", action="store_true")
    p.add_argument("--embedder", default="hash")
    p.add_argument("--dim", type=int, default=64)
    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with open(args.input, "rb") as fh:
            raws = parse_raw(fh)
        with open(args.out, "w", encoding="utf-8") as out:
            count = annotate_stream(raws, out, backend=args.backend,
                                    embeddings=args.embeddings,
                                    embedder=args.embedder, dim=args.dim)
        if args.embeddings:
            write_meta(args.out + ".meta.json", args.embedder, args.dim)
        print(f"annotated {count} documents"
              + (f" with {args.dim}-dim embeddings" if args.embeddings else ""))
        return 0
    except (BackendUnavailable, EmbedderUnavailable, EmptyAfterTokenization,
            ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
