"""geogap-export CLI: write the embedding cache and topic files offline."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .cachefile import read_cache, write_cache
from .clustering import spherical_kmeans, topic_rows
from .encoders import DEFAULT_MODEL, resolve_encoder
from .records import ExportError, read_records


def cmd_embeddings(args: argparse.Namespace) -> int:
    records = read_records(args.data, format=args.format)
    encoder = resolve_encoder(args.model)
    vectors = []
    for start in range(0, len(records), args.batch):
        chunk = records[start:start + args.batch]
        vectors.append(encoder.encode([r.text for r in chunk], batch=args.batch))
    matrix = np.vstack(vectors)
    write_cache(args.out, [r.id for r in records], matrix)
    print(f"cache written: {args.out} ({len(records)} vectors, d={matrix.shape[1]})")
    return 0


def cmd_topics(args: argparse.Namespace) -> int:
    records = read_records(args.data, format=args.format)
    ids, matrix = read_cache(args.embeddings)
    index = {rid: i for i, rid in enumerate(ids)}
    missing = [r.id for r in records if r.id not in index]
    if missing:
        raise ExportError(f"no embedding for id {missing[0]!r} "
                          f"({len(missing)} missing in total)")
    ordered = matrix[[index[r.id] for r in records]]
    centroids = spherical_kmeans(ordered, args.k_s, seed=args.seed)
    rows = topic_rows(ordered, centroids, temperature=args.temperature)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"k_s": args.k_s,
                             "labels": [f"topic_{i}" for i in range(args.k_s)]}) + "\n")
        for record, row in zip(records, rows):
            fh.write(json.dumps({"id": record.id,
                                 "pi": [float(x) for x in row]}) + "\n")
    print(f"topics written: {args.out} ({len(records)} rows, k_s={args.k_s})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geogap-export",
        description="Run a sentence encoder over a requirement dataset and "
                    "write the binary embedding cache (and optional topic "
                    "distributions) consumed by geogap.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    e = sub.add_parser("embeddings", help="encode a dataset into a cache file")
    e.add_argument("--data", required=True, help="dataset file (csv or jsonl)")
    e.add_argument("--format", choices=("csv", "jsonl"), default=None)
    e.add_argument("--model", default=DEFAULT_MODEL,
                   help="model name, 'hash', or 'hash:<dim>' "
                        f"(default {DEFAULT_MODEL})")
    e.add_argument("--out", required=True, help="cache output path")
    e.add_argument("--batch", type=int, default=32)
    e.set_defaults(func=cmd_embeddings)

    t = sub.add_parser("topics", help="fit fallback topics and write JSONL")
    t.add_argument("--data", required=True)
    t.add_argument("--format", choices=("csv", "jsonl"), default=None)
    t.add_argument("--embeddings", required=True, help="cache file from 'embeddings'")
    t.add_argument("--out", required=True, help="topic JSONL output path")
    t.add_argument("--k-s", dest="k_s", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--temperature", type=float, default=0.1)
    t.set_defaults(func=cmd_topics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
