"""Shared test fixtures for mfgan tests."""

import numpy as np
import pytest

from mfgan import autodiff as ad
from mfgan.data import build_factor_tables, build_user_sequences, leave_one_out_split
from mfgan.discriminator import FactorKind, FactorSpec
from mfgan.synthetic import SyntheticConfig, generate_synthetic
from mfgan.trainer import TrainingConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical and benchmark checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tmp_dir(tmp_path):
    """Provide a clean temporary directory."""
    return tmp_path


@pytest.fixture
def f64():
    """Build tensors in float64 for the duration of a test."""
    with ad.precision(np.float64):
        yield


TOY_DATA = SyntheticConfig(num_items=12, num_users=30, num_categories=3, min_length=5, max_length=8, seed=3)

TOY_FACTORS = [
    FactorSpec("category", FactorKind.CATEGORICAL),
    FactorSpec("price", FactorKind.NUMERIC, 4),
    FactorSpec("popularity", FactorKind.POPULARITY, 4),
]


@pytest.fixture
def toy_data():
    """(records, factor rows) of a tiny synthetic dataset."""
    return generate_synthetic(TOY_DATA)


@pytest.fixture
def toy_split(toy_data):
    records, _ = toy_data
    return leave_one_out_split(build_user_sequences(records))


@pytest.fixture
def toy_binned(toy_split, toy_data):
    """(factor tables, bin specs) of the toy dataset."""
    _, rows = toy_data
    columns = {
        "category": {item: r["category"] for item, r in rows.items()},
        "price": {item: r["price"] for item, r in rows.items()},
    }
    return build_factor_tables(toy_split, TOY_FACTORS, columns)


@pytest.fixture
def toy_tables(toy_binned):
    return toy_binned[0]


@pytest.fixture
def tiny_config():
    """A model and schedule small enough to train in a second or two."""
    return TrainingConfig(
        d=8, heads=2, gen_blocks=1, window=6, dropout=0.1,
        lr=0.01, gen_batch=16, disc_batch=8,
        pretrain_epochs=2, disc_pretrain_epochs=1,
        adversarial_rounds=2, g_epochs=1, d_epochs=1,
        patience=5, eval_negatives=3, seed=7,
    )


@pytest.fixture
def toy_files(tmp_dir, toy_data):
    """Interactions and factors files of the toy dataset on disk."""
    from mfgan.data import write_interactions
    from mfgan.synthetic import write_factors

    records, rows = toy_data
    return (write_interactions(records, tmp_dir / "data" / "interactions.tsv"),
            write_factors(rows, tmp_dir / "data" / "factors.tsv"))
