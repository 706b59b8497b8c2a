#!/usr/bin/env python3
"""Desk-scale retrieval-quality experiment.

Generates a synthetic corpus, splits it by patient, builds the 17 tuned
databases plus the untuned baseline, runs the full percentile-rank benchmark
for all four strategies, and prints the per-attribute median table. The
defaults reproduce the acceptance-scale configuration (5,000 train / 500
test); pass --n-train 1000 --n-test 100 for a quick look.
"""

import argparse
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from lesionseek.core import ATTRIBUTE_NAMES, read_manifest
from lesionseek.embedding import CorpusStats, TunedSimProvider, UntunedSimProvider
from lesionseek.evaluate import run_retrieval_benchmark
from lesionseek.oracle import compute_attributes
from lesionseek.store import build_databases
from lesionseek.synth import generate_corpus, make_split


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-train", type=int, default=5000)
    parser.add_argument("--n-test", type=int, default=500)
    parser.add_argument("--images-per-patient", type=int, default=10)
    parser.add_argument("--corpus-seed", type=int, default=11)
    parser.add_argument("--split-seed", type=int, default=1)
    parser.add_argument("--provider-seed", type=int, default=2)
    parser.add_argument("--d", type=int, default=64)
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--b", type=int, default=200)
    parser.add_argument("--attr-gain", type=float, default=4.0)
    parser.add_argument("--noise-sd", type=float, default=0.05)
    parser.add_argument("--threads", type=int, default=8)
    parser.add_argument("--workdir", default="experiment")
    parser.add_argument("--report-dir", default=None,
                        help="also write summary.json / percentiles.csv here")
    args = parser.parse_args()

    total = args.n_train + args.n_test
    patients = total // args.images_per_patient
    workdir = Path(args.workdir)

    started = time.time()
    manifest_path = workdir / "corpus" / "manifest.jsonl"
    if manifest_path.exists() and len(read_manifest(manifest_path)) == total:
        print(f"reusing corpus at {manifest_path}")
    else:
        generate_corpus(total, patients, workdir / "corpus",
                        seed=args.corpus_seed, threads=args.threads)
        print(f"generated {total} images in {time.time() - started:.0f}s")
    entries = read_manifest(manifest_path)

    split = make_split(entries, args.n_train / total, seed=args.split_seed)
    train = [e for e in entries if e.image_id in split.train_ids]
    test = [e for e in entries if e.image_id in split.test_ids]
    print(f"split: {len(train)} train / {len(test)} test "
          f"(patient-disjoint, fraction {split.achieved_train_fraction:.3f})")

    cache = {}

    def source(image):
        if image.image_id not in cache:
            cache[image.image_id] = compute_attributes(image)
        return cache[image.image_id]

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        list(pool.map(lambda e: source(e.load_image()), train))
    print(f"attributes computed ({time.time() - started:.0f}s elapsed)")

    stats = CorpusStats.from_vectors([cache[e.image_id] for e in train])
    provider = TunedSimProvider(stats, d=args.d, noise_sd=args.noise_sd,
                                attr_gain=args.attr_gain, seed=args.provider_seed,
                                attribute_source=source)
    untuned = UntunedSimProvider(d=args.d, seed=args.provider_seed)
    databases = build_databases(provider, (e.load_image() for e in train),
                                [None, *ATTRIBUTE_NAMES])
    databases = {("image" if t is None else t): db for t, db in databases.items()}
    databases["untuned"] = build_databases(untuned, (e.load_image() for e in train),
                                           [None])[None]
    print(f"databases built ({time.time() - started:.0f}s elapsed)")

    report = run_retrieval_benchmark(test, train, databases, provider,
                                     strategies=("attr", "hier", "image", "untuned"),
                                     k=args.k, b=args.b, untuned_provider=untuned,
                                     attribute_source=source)
    print(f"benchmark done ({time.time() - started:.0f}s elapsed)\n")

    header = f"{'attribute':24s} {'attr':>8s} {'hier':>8s} {'image':>8s} {'untuned':>8s}  ordering"
    print(header)
    print("-" * len(header))
    ordered_count = 0
    for attribute in ATTRIBUTE_NAMES:
        m = {s: report.median(attribute, s) for s in ("attr", "hier", "image", "untuned")}
        ordered = m["attr"] <= m["hier"] <= m["image"] < m["untuned"]
        ordered_count += ordered
        print(f"{attribute:24s} {m['attr']:8.3f} {m['hier']:8.3f} {m['image']:8.3f} "
              f"{m['untuned']:8.3f}  {'ok' if ordered else 'violated'}")
    print(f"\nordering holds for {ordered_count}/16 attributes")

    if args.report_dir:
        report.write(args.report_dir)
        print(f"raw records and summary written to {args.report_dir}")


if __name__ == "__main__":
    main()
