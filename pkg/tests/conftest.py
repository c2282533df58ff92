"""Shared fixtures: the synthetic CIFAR-format corpus and loaded subsets."""

from pathlib import Path

import pytest

from wipunet.data_noise import (
    RECORD_BYTES,
    RECORDS_PER_FILE,
    TEST_FILES,
    TRAIN_FILES,
    load_cifar10,
    write_synthetic_cifar10,
)

CORPUS_DIR = Path("/tmp/wipunet-test-corpus")
CORPUS_SEED = 1234


@pytest.fixture(scope="session")
def cifar_root():
    """Synthetic corpus in the exact CIFAR-10 binary layout; cached across runs."""
    marker = CORPUS_DIR / ".complete"
    expected = RECORD_BYTES * RECORDS_PER_FILE
    valid = (
        marker.is_file()
        and marker.read_text() == f"seed={CORPUS_SEED}"
        and all(
            (CORPUS_DIR / f).is_file() and (CORPUS_DIR / f).stat().st_size == expected
            for f in TRAIN_FILES + TEST_FILES
        )
    )
    if not valid:
        write_synthetic_cifar10(CORPUS_DIR, seed=CORPUS_SEED)
        marker.write_text(f"seed={CORPUS_SEED}")
    return CORPUS_DIR


@pytest.fixture(scope="session")
def train_subset(cifar_root):
    return load_cifar10(cifar_root, limit_train=512, limit_test=0)[0]


@pytest.fixture(scope="session")
def test_subset(cifar_root):
    return load_cifar10(cifar_root, limit_train=0, limit_test=512)[1]
