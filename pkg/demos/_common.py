"""Shared bootstrap for the demo scripts: a local synthetic corpus.

The demos never download anything. On first use this synthesizes a dataset
in the CIFAR-10 binary layout under demos/_data (~180 MB, written once);
set WIPUNET_DATA_ROOT to reuse an existing corpus instead.
"""

import os
from pathlib import Path

from wipunet.data_noise import TEST_FILES, TRAIN_FILES, load_cifar10, write_synthetic_cifar10

DATA_ROOT = Path(os.environ.get(
    "WIPUNET_DATA_ROOT",
    Path(__file__).resolve().parent / "_data" / "cifar-10-batches-bin",
))
OUT_DIR = Path(__file__).resolve().parent / "_out"


def dataset(limit_train=512, limit_test=256):
    """Load the demo corpus, synthesizing it on first use."""
    if not all((DATA_ROOT / f).is_file() for f in TRAIN_FILES + TEST_FILES):
        print(f"writing synthetic corpus under {DATA_ROOT} (first run only) ...")
        write_synthetic_cifar10(DATA_ROOT, seed=1234)
    OUT_DIR.mkdir(exist_ok=True)
    return load_cifar10(DATA_ROOT, limit_train=limit_train, limit_test=limit_test)
