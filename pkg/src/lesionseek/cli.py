"""Command-line entrypoint wiring corpus generation, the attribute oracle,
database builds, retrieval, training export and evaluation."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

import lesionseek
from lesionseek import aedb, evaluate, store, synth, train_export
from lesionseek.core import (
    ATTRIBUTE_NAMES,
    AttributeVector,
    ManifestEntry,
    attribute_index,
    read_manifest,
    write_manifest,
)
from lesionseek.embedding import (
    CorpusStats,
    DEFAULT_ATTR_GAIN,
    DEFAULT_DIMENSION,
    DEFAULT_NOISE_SD,
    TunedSimProvider,
    UntunedSimProvider,
)
from lesionseek.errors import DataError
from lesionseek.oracle import compute_attributes
from lesionseek.retrieval import search_attribute, search_hierarchical, search_image_only

log = logging.getLogger("lesionseek")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits with the documented usage code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _configure_logging():
    level = os.environ.get("LESIONSEEK_LOG", "warn").lower()
    if level not in _LOG_LEVELS:
        print(
            f"lesionseek: ignoring invalid LESIONSEEK_LOG={level!r}", file=sys.stderr
        )
        level = "warn"
    logging.basicConfig(
        level=_LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s"
    )


def _write_run_config(out_dir: Path, subcommand: str, args: argparse.Namespace):
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in vars(args).items()
        if key != "func"
    }
    resolved["version"] = lesionseek.__version__
    path = out_dir / f"run_config.{subcommand}.json"
    path.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _memoized_oracle():
    cache: dict[str, AttributeVector] = {}

    def source(image):
        found = cache.get(image.image_id)
        if found is None:
            found = compute_attributes(image)
            cache[image.image_id] = found
        return found

    return source


def _prewarm(entries: list[ManifestEntry], source, threads: int):
    """Compute attributes for all entries up front, in parallel."""
    pending = [e for e in entries if e.attributes is None]
    if not pending:
        return
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(lambda e: source(e.load_image()), pending))


def _attrs_for_entry(entry: ManifestEntry, source) -> AttributeVector:
    if entry.attributes is not None:
        return AttributeVector.from_dict(entry.attributes)
    return source(entry.load_image())


# --- subcommands ---


def _cmd_gen(args):
    out_dir = Path(args.out)
    ranges = synth.ParamRanges(image_side_px=args.image_side)
    synth.generate_corpus(
        args.n, args.patients, out_dir, seed=args.seed, param_ranges=ranges,
        threads=args.threads,
    )
    _write_run_config(out_dir, "gen", args)
    print(f"wrote {args.n} images for {args.patients} patients to {out_dir}")
    return EXIT_OK


def _cmd_attrs(args):
    entries = read_manifest(args.manifest)
    source = _memoized_oracle()
    _prewarm(entries, source, args.threads)
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            values = _attrs_for_entry(entry, source)
            record = {"image_id": entry.image_id, **values.as_dict()}
            fh.write(json.dumps(record) + "\n")
    if args.embed_manifest:
        target = Path(args.embed_manifest)
        enriched = [
            entry.rebased(target.parent, attributes=_attrs_for_entry(entry, source).as_dict())
            for entry in entries
        ]
        write_manifest(enriched, target)
    _write_run_config(out_path.parent, "attrs", args)
    print(f"wrote attributes for {len(entries)} images to {out_path}")
    return EXIT_OK


def _provider_meta(provider, stats: CorpusStats | None) -> dict:
    if isinstance(provider, TunedSimProvider):
        return {
            "provider": "tuned",
            "d": provider.dim(),
            "noise_sd": provider.noise_sd,
            "attr_gain": provider.attr_gain,
            "visual_scale": provider.visual_scale,
            "seed": provider.seed,
            "stats": {
                "means": [float(x) for x in stats.means],
                "sds": [float(x) for x in stats.sds],
            },
        }
    return {"provider": "untuned", "d": provider.dim(), "seed": provider.seed}


def _provider_from_meta(meta: dict, source):
    if meta.get("provider") == "tuned":
        stats = CorpusStats(
            means=np.asarray(meta["stats"]["means"], dtype=np.float64),
            sds=np.asarray(meta["stats"]["sds"], dtype=np.float64),
        )
        return TunedSimProvider(
            stats,
            d=int(meta["d"]),
            noise_sd=float(meta["noise_sd"]),
            attr_gain=float(meta["attr_gain"]),
            seed=int(meta["seed"]),
            attribute_source=source,
            visual_scale=float(meta.get("visual_scale", 1.0)),
        )
    if meta.get("provider") == "untuned":
        return UntunedSimProvider(d=int(meta["d"]), seed=int(meta["seed"]))
    raise DataError(f"unrecognized provider metadata: {meta.get('provider')!r}")


def _load_meta(db_path: Path) -> dict:
    meta_path = Path(str(db_path) + ".meta.json")
    if not meta_path.exists():
        raise DataError(f"missing database metadata: {meta_path}")
    return json.loads(meta_path.read_text())


def _cmd_build_db(args):
    entries = read_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = _memoized_oracle()

    if args.provider == "untuned":
        provider = UntunedSimProvider(d=args.d, seed=args.seed)
        tags: list[str | None] = [None]
        stats = None
    else:
        _prewarm(entries, source, args.threads)
        stats_entries = entries
        if args.stats_manifest:
            stats_entries = read_manifest(args.stats_manifest)
            _prewarm(stats_entries, source, args.threads)
        stats = CorpusStats.from_vectors(
            [_attrs_for_entry(e, source) for e in stats_entries]
        )
        provider = TunedSimProvider(
            stats,
            d=args.d,
            noise_sd=args.noise_sd,
            attr_gain=args.attr_gain,
            seed=args.seed,
            attribute_source=source,
        )
        if args.tag == "all":
            tags = [None, *ATTRIBUTE_NAMES]
        elif args.tag == "image":
            tags = [None]
        else:
            attribute_index(args.tag)
            tags = [args.tag]

    databases = store.build_databases(
        provider, (entry.load_image() for entry in entries), tags
    )
    meta = _provider_meta(provider, stats)
    for tag, database in databases.items():
        path = store.database_path(out_dir, tag, args.provider)
        store.save_database(database, path)
        Path(str(path) + ".meta.json").write_text(
            json.dumps({**meta, "tag": tag if tag else "image", "count": len(database)},
                       indent=2) + "\n"
        )
        print(f"wrote {path} (tag={tag or 'image'}, count={len(database)}, d={database.d})")
    _write_run_config(out_dir, "build_db", args)
    return EXIT_OK


def _resolve_query_provider(db_dir: Path, kind: str, source):
    name = "untuned.aedb" if kind == "untuned" else "image.aedb"
    return _provider_from_meta(_load_meta(db_dir / name), source)


def _cmd_query(args):
    db_dir = Path(args.db_dir)
    entries = read_manifest(args.query_manifest)
    source = _memoized_oracle()

    if args.strategy in ("attr", "hier") and not args.attribute:
        raise DataError(f"strategy {args.strategy!r} requires --attribute")

    provider = _resolve_query_provider(
        db_dir, "untuned" if args.provider == "untuned" else "tuned", source
    )
    db_im = None
    if args.strategy in ("image", "hier"):
        name = "untuned.aedb" if args.provider == "untuned" else "image.aedb"
        db_im = store.load_database(db_dir / name)
    db_attr = None
    if args.strategy in ("attr", "hier"):
        db_attr = store.load_database(store.database_path(db_dir, args.attribute))

    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            image = entry.load_image()
            if args.strategy == "image":
                result = search_image_only(
                    image, provider, db_im, args.k, args.exclude_query
                )
            elif args.strategy == "attr":
                result = search_attribute(
                    image, args.attribute, provider, db_attr, args.k, args.exclude_query
                )
            else:
                result = search_hierarchical(
                    image, args.attribute, provider, db_im, db_attr,
                    args.k, args.b, args.exclude_query,
                )
            fh.write(
                json.dumps(
                    {
                        "query_id": result.query_id,
                        "strategy": result.strategy,
                        "hits": [[i, s] for i, s in result.hits],
                    }
                )
                + "\n"
            )
    _write_run_config(out_path.parent, "query", args)
    print(f"wrote results for {len(entries)} queries to {out_path}")
    return EXIT_OK


def _cmd_export_train(args):
    entries = read_manifest(args.manifest)
    source = _memoized_oracle()
    _prewarm(entries, source, args.threads)
    count = train_export.export_training_set(
        entries, args.w, args.seed, args.out, decimals=args.decimals, oracle=source
    )
    _write_run_config(Path(args.out).parent, "export_train", args)
    print(f"wrote {count} training tuples to {args.out}")
    return EXIT_OK


def _cmd_eval(args):
    train_entries = read_manifest(args.train)
    test_entries = read_manifest(args.test)
    db_dir = Path(args.db_dir)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    source = _memoized_oracle()

    databases = {}
    needs_tuned = any(s in ("attr", "hier", "image") for s in strategies)
    if needs_tuned:
        databases["image"] = store.load_database(db_dir / "image.aedb")
    if any(s in ("attr", "hier") for s in strategies):
        for attribute in ATTRIBUTE_NAMES:
            databases[attribute] = store.load_database(
                store.database_path(db_dir, attribute)
            )
    untuned_provider = None
    if "untuned" in strategies:
        databases["untuned"] = store.load_database(db_dir / "untuned.aedb")
        untuned_provider = _resolve_query_provider(db_dir, "untuned", source)
    provider = (
        _resolve_query_provider(db_dir, "tuned", source) if needs_tuned else None
    )

    report = evaluate.run_retrieval_benchmark(
        test_entries,
        train_entries,
        databases,
        provider,
        strategies=strategies,
        k=args.k,
        b=args.b,
        untuned_provider=untuned_provider,
        attribute_source=source,
    )
    report.write(args.out)
    _write_run_config(Path(args.out), "eval", args)
    for (attribute, strategy), stats in sorted(report.stats().items()):
        print(
            f"{attribute:24s} {strategy:8s} median={stats['median']:7.3f} "
            f"mean={stats['mean']:7.3f} n={stats['count']}"
        )
    return EXIT_OK


def _cmd_eval_r2(args):
    entries = read_manifest(args.manifest)
    source = _memoized_oracle()
    truths = {}
    for entry in entries:
        truths[entry.image_id] = _attrs_for_entry(entry, source).as_dict()

    predictions: dict[str, list[tuple[str, float]]] = {}
    with open(args.predictions, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                predictions.setdefault(obj["attribute"], []).append(
                    (obj["image_id"], float(obj["prediction"]))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{args.predictions}:{lineno}: bad prediction: {exc}") from None

    scores = evaluate.r2_by_attribute(predictions, truths)
    text = json.dumps({"r2": scores}, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        _write_run_config(Path(args.out).parent, "eval_r2", args)
    print(text)
    return EXIT_OK


def _cmd_info(args):
    tag, ids, matrix = aedb.read_embeddings(args.path)
    print(f"tag={tag or 'image'}, count={len(ids)}, d={matrix.shape[1]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lesionseek", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    default_threads = os.cpu_count() or 1

    p = sub.add_parser("gen", parents=[], help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--image-side", type=int, default=128)
    p.add_argument("--threads", type=int, default=default_threads)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("attrs", help="compute the 16 attributes for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embed-manifest", help="also write a manifest with attributes embedded")
    p.add_argument("--threads", type=int, default=default_threads)
    p.set_defaults(func=_cmd_attrs)

    p = sub.add_parser("build-db", help="build embedding databases")
    p.add_argument("--manifest", required=True)
    p.add_argument("--provider", choices=["tuned", "untuned"], default="tuned")
    p.add_argument("--tag", default="all",
                   help="'image', 'all', or one attribute name (tuned provider only)")
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=DEFAULT_DIMENSION)
    p.add_argument("--noise-sd", type=float, default=DEFAULT_NOISE_SD)
    p.add_argument("--attr-gain", type=float, default=DEFAULT_ATTR_GAIN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats-manifest",
                   help="manifest to compute attribute statistics from (default: --manifest)")
    p.add_argument("--threads", type=int, default=default_threads)
    p.set_defaults(func=_cmd_build_db)

    p = sub.add_parser("query", help="run retrieval queries")
    p.add_argument("--db-dir", required=True)
    p.add_argument("--strategy", choices=["image", "attr", "hier"], required=True)
    p.add_argument("--attribute")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--b", type=int, default=200)
    p.add_argument("--provider", choices=["tuned", "untuned"], default="tuned")
    p.add_argument("--query-manifest", required=True)
    p.add_argument("--exclude-query", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("export-train", help="export fine-tuning tuples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decimals", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=default_threads)
    p.set_defaults(func=_cmd_export_train)

    p = sub.add_parser("eval", help="run the retrieval-quality benchmark")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--db-dir", required=True)
    p.add_argument("--strategies", default="attr,hier,image,untuned")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--b", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("eval-r2", help="attribute-prediction R^2 from a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_r2)

    p = sub.add_parser("info", help="print embedding-database metadata")
    p.add_argument("path")
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"lesionseek: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"lesionseek: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # internal error: keep the traceback for debugging
        import traceback

        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
