#!/usr/bin/env python3
"""Write every named fixture to JSON for sharing and regression runs.

Fixed fixtures are written once; the random generators are written once per seed.
A ``zoo.json`` index lists every file with its SHA-256.

Usage:
    python scripts/generate_model_zoo.py [--out zoo] [--seeds 0-4]
"""

import argparse
import json
import sys
from pathlib import Path

from psrlab.cli import parse_seeds, sha256_file
from psrlab.exceptions import PsrLabError
from psrlab.fixtures import FIXTURES, generate_fixture
from psrlab.models import ModelClass, save_model, save_model_class

RANDOM_FIXTURES = ("random-revealing", "random-decodable")


def write_fixture(name, seed, out_dir):
    fixture = generate_fixture(name, rng_seed=seed)
    stem = f"{name}-seed{seed}" if name in RANDOM_FIXTURES else name
    path = out_dir / f"{stem}.json"
    if isinstance(fixture, ModelClass):
        save_model_class(fixture, path, window=fixture.core.window or 1)
    else:
        save_model(fixture, path)
    return path


def main():
    parser = argparse.ArgumentParser(description="Write the fixture zoo to JSON")
    parser.add_argument("--out", default="zoo", help="Output directory")
    parser.add_argument("--seeds", default="0", help="Seeds for the random fixtures, e.g. 0-4")
    args = parser.parse_args()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        seeds = parse_seeds(args.seeds)
    except PsrLabError as exc:
        print(f"ERROR: {exc}")
        sys.exit(2)

    index = {}
    for name in sorted(FIXTURES):
        for seed in seeds if name in RANDOM_FIXTURES else seeds[:1]:
            try:
                path = write_fixture(name, seed, out_dir)
            except PsrLabError as exc:
                print(f"  [    SKIP] {name:<20} seed={seed:<4} {exc}")
                continue
            index[path.name] = sha256_file(path)
            print(f"  [      OK] {name:<20} seed={seed:<4} {path}")

    (out_dir / "zoo.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"\n{len(index)} files written to {out_dir}")


if __name__ == "__main__":
    main()
