#!/usr/bin/env python3
"""Patient-stratified train/test split of a corpus manifest.

Writes the split file plus two filtered manifests next to it, ready for
`lesionseek build-db` and `lesionseek eval`.
"""

import argparse
from pathlib import Path

from lesionseek.core import read_manifest, write_manifest
from lesionseek.synth import make_split, write_split


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--train-fraction", type=float, default=0.7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args()

    entries = read_manifest(args.manifest)
    split = make_split(entries, args.train_fraction, seed=args.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_split(split, out_dir / "split.json")
    train = [e.rebased(out_dir) for e in entries if e.image_id in split.train_ids]
    test = [e.rebased(out_dir) for e in entries if e.image_id in split.test_ids]
    write_manifest(train, out_dir / "train.jsonl")
    write_manifest(test, out_dir / "test.jsonl")
    print(f"train={len(train)} test={len(test)} "
          f"achieved_fraction={split.achieved_train_fraction:.4f}")


if __name__ == "__main__":
    main()
