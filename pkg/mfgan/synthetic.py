"""Synthetic interaction data driven by a hidden item category.

Items are split evenly into categories. Each user walks a category-level
Markov chain (usually stepping to the "next" category, sometimes jumping
anywhere) and picks items inside the current category with Zipf-skewed
weights. A price factor is drawn around a per-category level, so both the
category and the price discriminators see real sequential structure.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .data import InteractionRecord, write_interactions
from .errors import ConfigError

logger = logging.getLogger(__name__)

FACTOR_SPECS = "category:categorical,price:numeric:10,popularity:popularity:10"


@dataclass(frozen=True)
class SyntheticConfig:
    num_items: int = 100
    num_users: int = 500
    num_categories: int = 5
    min_length: int = 8
    max_length: int = 25
    follow_prob: float = 0.8
    zipf: float = 1.1
    seed: int = 0

    def validate(self) -> "SyntheticConfig":
        if self.num_categories < 1 or self.num_items < self.num_categories:
            raise ConfigError("need at least one item per category")
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if not 3 <= self.min_length <= self.max_length:
            raise ConfigError("sequence lengths must satisfy 3 <= min_length <= max_length")
        if not 0.0 <= self.follow_prob <= 1.0:
            raise ConfigError("follow_prob must lie in [0, 1]")
        if self.zipf < 0:
            raise ConfigError("zipf exponent must be >= 0")
        return self


def item_label(index: int, width: int) -> str:
    return f"i{index:0{width}d}"


def transition_matrix(config: SyntheticConfig) -> np.ndarray:
    """Row-stochastic category transitions: mostly c -> c+1, otherwise uniform."""
    c = config.num_categories
    matrix = np.full((c, c), (1.0 - config.follow_prob) / c)
    matrix[np.arange(c), (np.arange(c) + 1) % c] += config.follow_prob
    return matrix


def generate_synthetic(config: SyntheticConfig) -> Tuple[List[InteractionRecord], Dict[str, Dict[str, str]]]:
    """Interactions plus ``{item: {"category": ..., "price": ...}}``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    width = len(str(config.num_items))
    categories = np.arange(config.num_items) % config.num_categories
    members = [np.flatnonzero(categories == c) for c in range(config.num_categories)]
    weights = []
    for m in members:
        w = 1.0 / np.arange(1, len(m) + 1) ** config.zipf
        weights.append(w / w.sum())

    levels = rng.uniform(5.0, 100.0, size=config.num_categories)
    factors = {}
    for i in range(config.num_items):
        c = int(categories[i])
        price = max(0.5, rng.normal(levels[c], 0.1 * levels[c]))
        factors[item_label(i + 1, width)] = {"category": f"c{c}", "price": f"{price:.2f}"}

    matrix = transition_matrix(config)
    records = []
    user_width = len(str(config.num_users))
    for u in range(config.num_users):
        user = f"u{u + 1:0{user_width}d}"
        length = int(rng.integers(config.min_length, config.max_length + 1))
        c = int(rng.integers(config.num_categories))
        for t in range(length):
            item = int(members[c][rng.choice(len(members[c]), p=weights[c])])
            records.append(InteractionRecord(user, item_label(item + 1, width), t + 1))
            c = int(rng.choice(config.num_categories, p=matrix[c]))
    logger.info("Generated %d interactions for %d users over %d items", len(records), config.num_users,
                config.num_items)
    return records, factors


def write_factors(factors: Dict[str, Dict[str, str]], path, names=("category", "price")) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(["item", *names]) + "\n")
        for item in sorted(factors):
            f.write("\t".join([item] + [factors[item].get(n, "") for n in names]) + "\n")
    return str(path)


def write_synthetic(out_dir, config: SyntheticConfig = SyntheticConfig()) -> Tuple[str, str]:
    """
    Write ``interactions.tsv`` and ``factors.tsv`` under ``out_dir``.

    Returns:
        (interactions path, factors path)
    """
    out = Path(out_dir)
    records, factors = generate_synthetic(config)
    return (write_interactions(records, out / "interactions.tsv"),
            write_factors(factors, out / "factors.tsv"))
