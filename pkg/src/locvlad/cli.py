"""Command-line interface: ``locvlad <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .embedding import FINAL_NORMS, EncodingConfig, load_embeddings, save_embeddings
from .errors import LocVladError
from .features import load_features
from .manifest import load_manifest
from .pipeline import ROLES, PipelineConfig, build_vocabulary, embed_manifest, encode_image, evaluate_manifest
from .retrieval import METRICS, build_index, query_index
from .synth import REFERENCE_CROP, SynthConfig, generate_dataset, run_sweep
from .vocabulary import load_vocabulary, save_vocabulary


def _encoding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--aggregation", choices=("sum", "mean"), default="sum")
    p.add_argument(
        "--no-residual-norm", action="store_true", help="accumulate raw residuals instead of unit residuals"
    )
    p.add_argument("--final-norm", choices=FINAL_NORMS, default="l2")
    p.add_argument("--alpha", type=float, default=0.5, help="power-law exponent")


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    _encoding_flags(p)
    p.add_argument("--locvlad", action="store_true", help="encode queries as locVLAD")
    p.add_argument("--crop", type=float, default=0.9, help="crop ratio for locVLAD (default 0.9)")
    p.add_argument("--locvlad-on-db", action="store_true", help="apply locVLAD to database images too")
    p.add_argument("--metric", choices=METRICS, default="l2")


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    enc = EncodingConfig(
        aggregation=args.aggregation,
        residual_normalization=not args.no_residual_norm,
        final_norm=args.final_norm,
        powerlaw_alpha=args.alpha,
    )
    return PipelineConfig(
        encoding=enc,
        locvlad_enabled=args.locvlad,
        crop_ratio=args.crop,
        locvlad_on_database=args.locvlad_on_db,
        metric=args.metric,
    )


def cmd_build_vocab(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    sets = [manifest.load(e) for e in manifest.images]
    vocab, seconds = build_vocabulary(sets, args.k, args.subsample, args.seed)
    save_vocabulary(vocab, args.out)
    print(f"k={vocab.k} d={vocab.d} train_size={vocab.train_size} iterations={vocab.iterations_run} elapsed={seconds:.3f}s")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    vocab = load_vocabulary(args.vocab)
    cfg = _pipeline_config(args)
    entries = embed_manifest(manifest, vocab, args.role, cfg)
    save_embeddings(entries, args.out)
    mode = "locVLAD" if cfg.uses_locvlad(args.role) else "VLAD"
    print(f"wrote {len(entries)} {args.role} embeddings ({mode}, length {vocab.k * vocab.d}) to {args.out}")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    vocab = load_vocabulary(args.vocab)
    index = build_index(load_embeddings(args.index, vocab.d))
    fs = load_features(args.features)
    cropped = load_features(args.cropped_features) if args.cropped_features else None
    q = encode_image(fs, vocab, _pipeline_config(args), "query", cropped)
    for rank, (image_id, dist) in enumerate(query_index(index, q, args.top, args.metric).hits, start=1):
        print(f"{rank} {image_id} {dist:.6f}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    vocab = load_vocabulary(args.vocab)
    index = build_index(load_embeddings(args.index, vocab.d))
    report = evaluate_manifest(manifest, index, vocab, _pipeline_config(args))
    if args.out:
        report.save(args.out)
    print(report.table(verbose=args.verbose))
    return 0


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    return SynthConfig(
        num_classes=args.classes,
        db_images_per_class=args.db_per_class,
        queries_per_class=args.queries_per_class,
        signature_size=args.signature,
        landmark_noise_sigma=args.sigma,
        border_distractor_count_db=args.border_db,
        border_distractor_count_query=args.border_query,
        d=args.dim,
        seed=args.seed,
        db_zoomed_per_class=args.zoomed_db,
    )


def _synth_flags(p: argparse.ArgumentParser) -> None:
    base = SynthConfig()
    p.add_argument("--seed", type=int, default=base.seed)
    p.add_argument("--classes", type=int, default=base.num_classes)
    p.add_argument("--db-per-class", type=int, default=base.db_images_per_class)
    p.add_argument("--queries-per-class", type=int, default=base.queries_per_class)
    p.add_argument("--signature", type=int, default=base.signature_size)
    p.add_argument("--sigma", type=float, default=base.landmark_noise_sigma)
    p.add_argument("--border-db", type=int, default=base.border_distractor_count_db)
    p.add_argument("--border-query", type=int, default=base.border_distractor_count_query)
    p.add_argument("--dim", type=int, default=base.d)
    p.add_argument("--zoomed-db", type=int, default=base.db_zoomed_per_class)


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _synth_config(args)
    path = generate_dataset(cfg, args.out)
    n_db = cfg.num_classes * cfg.db_images_per_class
    n_q = cfg.num_classes * cfg.queries_per_class
    print(f"{cfg.num_classes} classes, {n_db} database images, {n_q} queries; manifest {path}")
    return 0


ABLATION_COLUMNS = ["k", "crop", "method", "map", "top1", "recall5x", "vocab_seconds"]


def cmd_ablation(args: argparse.Namespace) -> int:
    from .plotting import plot_sweep, plot_vocab_time

    cfg = _synth_config(args)
    reports = run_sweep(cfg, args.k, args.crop, subsample_fraction=args.subsample, vocab_seed=args.vocab_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"config": asdict(cfg), "runs": [r.to_dict() for r in reports]}
    (out / "ablation.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    with open(out / "ablation.tsv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for r in reports:
            runs = [("vlad", r.vlad), ("locvlad", r.locvlad)]
            if r.locvlad_both is not None:
                runs.append(("locvlad_both", r.locvlad_both))
            for name, m in runs:
                writer.writerow(
                    [r.k, r.crop_ratio, name, f"{m.map_score:.6f}", f"{m.top1:.6f}", f"{m.recall5x:.6f}", f"{r.vocab_seconds:.4f}"]
                )
    plot_sweep(reports, out / "ablation_metrics.png")
    plot_vocab_time(reports, out / "vocab_time.png")
    print(f"{'k':>5} {'method':<13}{'mAP':>8}{'Top1':>8}{'R@5x':>8}")
    for r in reports:
        for name, m in (("vlad", r.vlad), ("locvlad", r.locvlad), ("locvlad_both", r.locvlad_both)):
            if m is not None:
                print(f"{r.k:>5} {name:<13}{m.map_score:>8.4f}{m.top1:>8.4f}{m.recall5x:>8.4f}")
    print(f"wrote ablation.json, ablation.tsv and figures to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locvlad", description="VLAD / locVLAD retrieval pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="train a k-means++ vocabulary on database features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--subsample", type=float, default=0.2, help="fraction of pooled descriptors (default 0.2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("embed", help="encode database or query images into a VLEM file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--role", choices=ROLES, required=True)
    p.add_argument("--out", required=True)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("query", help="rank an index against one feature file")
    p.add_argument("--index", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--cropped-features", help="features re-detected on the cropped image")
    p.add_argument("--top", type=int, default=10)
    _pipeline_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="score all manifest queries against an index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--verbose", action="store_true", help="print per-query rows")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    p.add_argument("--out", required=True)
    _synth_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablation", help="VLAD vs locVLAD on synthetic data over a k sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--crop", type=float, default=REFERENCE_CROP)
    p.add_argument("--subsample", type=float, default=0.2)
    p.add_argument("--vocab-seed", type=int, default=0)
    _synth_flags(p)
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LocVladError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"locvlad: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
