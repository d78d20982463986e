"""Command-line entry point: build the corpus artifact, score targets, run
the injection experiments.

Exit codes: 0 success (score: no gap above threshold), 1 usage error,
2 data error, 3 remote-service error, 4 (score only) gaps found above the
report threshold.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .artifacts import ArtifactError, load_artifacts, save_artifacts
from .baselines import BASELINES
from .corpus import DatasetError, load_dataset
from .embeddings import (EmbeddingError, RemoteEmbeddingError, load_cache,
                         fetch_remote, store_from_vectors)
from .evaluation import (EvalError, InjectionSpec, permutation_test,
                         run_cell_level, run_fraction_sweep, run_holdout,
                         run_k_sweep, run_type_level, write_records_csv,
                         write_records_jsonl, write_summary_json)
from .pipeline import build_artifacts
from .prototypes import CalibrationError, CentroidError
from .reporting import gap_report, heatmap_svg, novelties, write_report
from .scoring import (PRESETS, ScoreConfig, ScoringError, Target,
                      score_project)
from .topics import TopicFileError, ingest_topics

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REMOTE = 3
EXIT_GAPS_FOUND = 4

ENDPOINT_ENV = "GEOGAP_EMBED_ENDPOINT"
TOKEN_ENV = "GEOGAP_EMBED_TOKEN"

CONFIG_DEFAULTS = {
    "k": 1, "beta": 0.7, "gamma": 0.1, "epsilon": 1e-6, "k_s": 8,
    "mode": "A", "tau": 0.1,
}


class CliError(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def parse_config_file(path: str | Path) -> dict:
    """Parse a small key-value config file (TOML-style subset).

    Supports `key = value` lines, [section] headers (flattened into nested
    dicts), quoted strings, numbers, and booleans. Comments start with #.
    """
    out: dict = {}
    section = out
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            section = out.setdefault(name, {})
            continue
        if "=" not in line:
            raise CliError(f"config line {n}: expected key = value", EXIT_USAGE)
        key, value = (s.strip() for s in line.split("=", 1))
        section[key] = _parse_config_value(value)
    return out


def _parse_config_value(value: str):
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        return value[1:-1]
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _merged_config(args: argparse.Namespace) -> ScoreConfig:
    """defaults < config file < explicit flags."""
    merged = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = parse_config_file(args.config)
        merged.update({k: v for k, v in file_cfg.items()
                       if k in CONFIG_DEFAULTS or k in ("temperature", "preset",
                                                        "excluded_types")})
    preset = getattr(args, "preset", None) or merged.pop("preset", None)
    if preset:
        if preset not in PRESETS:
            raise CliError(f"unknown preset {preset!r}; valid: {', '.join(PRESETS)}",
                           EXIT_USAGE)
        merged["beta"], merged["gamma"] = PRESETS[preset]
    for flag in ("k", "beta", "gamma", "epsilon", "k_s", "mode", "tau", "temperature"):
        value = getattr(args, flag, None)
        if value is not None:
            merged[flag] = value
    excluded = merged.pop("excluded_types", ())
    if isinstance(excluded, str):
        excluded = tuple(s.strip() for s in excluded.split(",") if s.strip())
    try:
        return ScoreConfig(excluded_types=tuple(excluded), **merged)
    except ScoringError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _aliases_from_config(args: argparse.Namespace) -> dict | None:
    if getattr(args, "config", None):
        section = parse_config_file(args.config).get("aliases")
        if isinstance(section, dict):
            return section
    return None


def _load_store(args: argparse.Namespace, dataset) -> "object":
    """Embedding store from a cache file, or fetched from a remote endpoint."""
    if args.cache:
        return load_cache(args.cache)
    endpoint = getattr(args, "endpoint", None) or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise CliError(
            f"no embedding source: pass --cache or --endpoint (or set {ENDPOINT_ENV})",
            EXIT_USAGE)
    token = os.environ.get(TOKEN_ENV)
    vectors = fetch_remote([r.text for r in dataset.requirements], endpoint,
                           batch=args.batch, auth_token=token)
    return store_from_vectors(zip((r.id for r in dataset.requirements), vectors))


def _check_embeddings(dataset, store) -> None:
    for r in dataset.requirements:
        if r.id not in store:
            raise CliError(f"no embedding for requirement id {r.id!r}", EXIT_DATA)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    dataset = load_dataset(args.data, format=args.format,
                           aliases=_aliases_from_config(args))
    store = _load_store(args, dataset)
    _check_embeddings(dataset, store)
    topics = None
    if args.topics:
        _, dist = ingest_topics(args.topics, [r.id for r in dataset.requirements])
        from .topics import TopicModel
        topics = (TopicModel(k_s=dist.k_s,
                             labels=tuple(f"topic_{i}" for i in range(dist.k_s))),
                  dist)
    art = build_artifacts(dataset, store, list(dataset.projects), config,
                          seed=args.seed, topics=topics)
    save_artifacts(art, args.out)
    print(f"artifact written: {args.out}")
    print(f"N={art.n_points} M={len(art.projects)} K_t={art.k_t} "
          f"K_s={art.k_s} T*={art.temperature:.6g} k={art.k}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    try:
        art = load_artifacts(args.artifact)
    except FileNotFoundError:
        raise CliError(f"artifact file not found: {args.artifact}", EXIT_DATA) from None
    if args.k is not None and args.k != art.k:
        raise CliError(
            f"artifact was built with k={art.k}; rebuild it to score at k={args.k}",
            EXIT_DATA)
    config = ScoreConfig(**{**config.__dict__, "k": art.k})
    dataset = load_dataset(args.data, format=args.format, taxonomy=art.taxonomy,
                           aliases=_aliases_from_config(args))
    store = _load_store(args, dataset)
    _check_embeddings(dataset, store)
    topics = None
    if args.topics:
        _, dist = ingest_topics(args.topics, [r.id for r in dataset.requirements])
        topics = dist
    target = Target.from_store(store, [r.id for r in dataset.requirements],
                               topics=topics)
    if len(target) < 50:
        print(f"warning: target has {len(target)} requirements; detection is "
              f"unreliable below 50", file=sys.stderr)
    fingerprint = hashlib.sha256(Path(args.artifact).read_bytes()).hexdigest()
    result = score_project(art, target, config)
    report = gap_report(result, top_n=args.top_n, fingerprint=fingerprint)
    if args.novelty_threshold is not None:
        report["novelties"] = [
            {"id": rid, "z": z}
            for rid, z in novelties(art, target, args.novelty_threshold)
        ]
    if args.out:
        write_report(report, args.out)
        print(f"report written: {args.out}")
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    if args.svg:
        Path(args.svg).write_text(
            heatmap_svg(result.psi_cell, result.type_names, result.topic_labels),
            encoding="utf-8")
        print(f"heatmap written: {args.svg}")
    worst = max(entry["score"] for entry in report["ranking"])
    return EXIT_GAPS_FOUND if worst >= args.gap_threshold else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _merged_config(args)
    dataset = load_dataset(args.data, format=args.format,
                           aliases=_aliases_from_config(args))
    store = _load_store(args, dataset)
    _check_embeddings(dataset, store)
    spec = InjectionSpec(fraction=args.f, n_targets=args.n_targets,
                         seed=args.seed, min_count=args.min_count)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def emit(name: str, result) -> None:
        write_records_jsonl(result.records, out_dir / f"{name}.jsonl")
        write_summary_json(result.aggregate, out_dir / f"{name}.summary.json")
        write_records_csv(result.records, out_dir / f"{name}.csv")
        print(f"{name}: {json.dumps(result.aggregate, sort_keys=True)}")

    if args.experiment == "type-level":
        emit("type_level", run_type_level(dataset, store, config, spec, jobs=args.jobs))
    elif args.experiment == "fraction":
        sweep = run_fraction_sweep(dataset, store, config, spec,
                                   fractions=args.fractions, jobs=args.jobs)
        for f, result in sweep.items():
            emit(f"fraction_{f}", result)
    elif args.experiment == "k-sweep":
        sweep = run_k_sweep(dataset, store, config, spec, ks=args.ks, jobs=args.jobs)
        for k, result in sweep.items():
            emit(f"k_{k}", result)
    elif args.experiment == "permutation":
        base = run_type_level(dataset, store, config, spec, jobs=args.jobs)
        scores = {r.target: r.pre_scores for r in base.records if r.skipped is None}
        observed = {r.target: r.auroc for r in base.records if r.skipped is None}
        outcome = permutation_test(scores, n_perm=args.n_perm,
                                   n_targets=spec.n_targets, seed=spec.seed,
                                   observed=observed)
        write_summary_json(outcome, out_dir / "permutation.json")
        print(json.dumps(outcome, indent=2, sort_keys=True))
    elif args.experiment == "cell":
        emit("cell_level", run_cell_level(dataset, store, config, spec,
                                          n_cells=args.n_cells))
    elif args.experiment == "holdout":
        outcome = run_holdout(dataset, store, config,
                              mass_threshold=args.mass_threshold)
        write_summary_json({"n_valid_pairs": outcome["n_valid_pairs"],
                            "auroc_mean": outcome["auroc_mean"]},
                           out_dir / "holdout.summary.json")
        with open(out_dir / "holdout.jsonl", "w", encoding="utf-8") as fh:
            for pair in outcome["pairs"]:
                fh.write(json.dumps(pair) + "\n")
        print(f"holdout: valid_pairs={outcome['n_valid_pairs']} "
              f"auroc_mean={outcome['auroc_mean']}")
    elif args.experiment == "baseline":
        scorer = BASELINES.get(args.name)
        if scorer is None:
            raise CliError(
                f"unknown baseline {args.name!r}; valid: {', '.join(BASELINES)}",
                EXIT_USAGE)
        emit(f"baseline_{args.name.replace('-', '_')}",
             run_type_level(dataset, store, config, spec, scorer=scorer,
                            jobs=args.jobs))
    else:
        raise CliError(
            f"unknown experiment {args.experiment!r}; valid: type-level, fraction, "
            f"k-sweep, permutation, cell, holdout, baseline", EXIT_USAGE)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, needs_data: bool = True) -> None:
    if needs_data:
        p.add_argument("--data", required=True, help="dataset file (csv or jsonl)")
        p.add_argument("--format", choices=("csv", "jsonl"), default=None,
                       help="dataset format (default: infer from extension)")
    p.add_argument("--cache", default=None, help="binary embedding cache file")
    p.add_argument("--endpoint", default=None,
                   help=f"remote embedding endpoint (or ${ENDPOINT_ENV})")
    p.add_argument("--batch", type=int, default=32, help="remote fetch batch size")
    p.add_argument("--config", default=None, help="key-value config file")
    p.add_argument("--seed", type=int, default=0, help="root random seed")
    p.add_argument("--k", type=int, default=None, help="neighbourhood size "
                   "(flags > config file > built-in 1)")
    p.add_argument("--beta", type=float, default=None,
                   help="geo/type fusion weight (built-in 0.7)")
    p.add_argument("--gamma", type=float, default=None,
                   help="population fusion weight (built-in 0.1)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="z-score stabiliser (built-in 1e-6)")
    p.add_argument("--k-s", dest="k_s", type=int, default=None,
                   help="topic count (built-in 8)")
    p.add_argument("--mode", choices=("A", "B"), default=None,
                   help="project weighting: A uniform, B similarity (built-in A)")
    p.add_argument("--tau", type=float, default=None,
                   help="mode B softmax scale (built-in 0.1)")
    p.add_argument("--temperature", type=float, default=None,
                   help="fixed Gibbs temperature (default: calibrate)")
    p.add_argument("--preset", choices=tuple(PRESETS), default=None,
                   help="named (beta, gamma) configuration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geogap",
        description="Detect missing requirement types by comparing a project "
                    "against a multi-project reference corpus in embedding space.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    b = sub.add_parser("build", help="fit corpus artifacts from a labelled dataset",
                       formatter_class=fmt)
    _add_common(b)
    b.add_argument("--out", required=True, help="artifact output file")
    b.add_argument("--topics", default=None,
                   help="ingest topic distributions (JSONL) instead of the fallback")
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("score", help="score a target project against an artifact",
                       formatter_class=fmt)
    _add_common(s)
    s.add_argument("--artifact", required=True, help="artifact file from build")
    s.add_argument("--out", default=None, help="report JSON output (default stdout)")
    s.add_argument("--svg", default=None, help="write cell heatmap SVG here")
    s.add_argument("--topics", default=None, help="target topic distributions (JSONL)")
    s.add_argument("--top-n", type=int, default=3, help="summary size")
    s.add_argument("--gap-threshold", type=float, default=2.0,
                   help="fused score at which exit code flags gaps")
    s.add_argument("--novelty-threshold", type=float, default=None,
                   help="include novelties above this z-score")
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="run a synthetic gap-injection experiment",
                       formatter_class=fmt)
    e.add_argument("experiment",
                   choices=("type-level", "fraction", "k-sweep", "permutation",
                            "cell", "holdout", "baseline"))
    _add_common(e)
    e.add_argument("--f", type=float, default=1.0, help="removal fraction")
    e.add_argument("--fractions", type=float, nargs="+", default=(1.0, 0.75, 0.5))
    e.add_argument("--ks", type=int, nargs="+", default=(1, 3, 5, 10, 20))
    e.add_argument("--n-targets", type=int, default=3, help="types injected per fold")
    e.add_argument("--n-cells", type=int, default=5, help="cells injected per fold")
    e.add_argument("--min-count", type=int, default=3, help="eligibility floor")
    e.add_argument("--n-perm", type=int, default=1000, help="permutation count")
    e.add_argument("--mass-threshold", type=float, default=0.2,
                   help="holdout dominance share")
    e.add_argument("--name", default=None, help="baseline name for 'baseline'")
    e.add_argument("--out-dir", default="eval-results", help="output directory")
    e.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DatasetError, EmbeddingError, ArtifactError, TopicFileError,
            CentroidError, CalibrationError, ScoringError, EvalError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RemoteEmbeddingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE


if __name__ == "__main__":
    sys.exit(main())
