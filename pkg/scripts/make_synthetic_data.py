#!/usr/bin/env python3
"""Generate stand-in digit datasets in the canonical MNIST IDX and CIFAR-10
binary formats, for running the pipeline without the original downloads."""

import argparse
import sys
from pathlib import Path

from dmdetect.synthdata import make_cifar_like, make_mnist_like


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument(
        "--format", choices=["mnist", "cifar10", "both"], default="mnist"
    )
    ap.add_argument("--n-train", type=int, default=20000)
    ap.add_argument("--n-test", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=1234)
    a = ap.parse_args(argv)
    out = Path(a.out)
    if a.format in ("mnist", "both"):
        target = out / "mnist" if a.format == "both" else out
        paths = make_mnist_like(target, a.n_train, a.n_test, a.seed)
        print(f"wrote MNIST-format dataset: {sorted(str(p) for p in paths.values())}")
    if a.format in ("cifar10", "both"):
        target = out / "cifar10" if a.format == "both" else out
        paths = make_cifar_like(target, a.n_train, a.n_test, a.seed)
        print(f"wrote CIFAR-format dataset: {sorted(str(p) for p in paths.values())}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
