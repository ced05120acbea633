"""Sampled-negative ranking evaluation.

For every user the held-out item is ranked against ``negatives`` items the
user never interacted with. Ties count against the positive. Candidate
matrices handed to a scorer always hold the positive in column 0.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from rich.table import Table

from . import autodiff as ad
from .data import DatasetSplit, window_pad_many
from .errors import ContractError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalProtocol:
    negatives: int = 100
    cutoff: int = 10
    seed: int = 0


class Scorer(Protocol):
    def score(self, prefixes: Sequence[Sequence[int]], candidates: np.ndarray) -> np.ndarray:
        """Scores ``[B, C]`` for candidate ids ``[B, C]`` given B raw prefixes."""


class GeneratorScorer:
    """Generator logits at the last real position of each prefix."""

    def __init__(self, params, batch_size: int = 256):
        self.params = params
        self.batch_size = batch_size

    def score(self, prefixes, candidates):
        from .generator import next_item_logits

        windows = window_pad_many(prefixes, self.params.config.n)
        out = np.empty(candidates.shape, dtype=np.float64)
        with ad.no_grad():
            for start in range(0, len(windows), self.batch_size):
                stop = start + self.batch_size
                logits = next_item_logits(self.params, windows[start:stop]).data
                out[start:stop] = np.take_along_axis(logits, candidates[start:stop] - 1, axis=1)
        return out


class PopularityScorer:
    """PopRec: every candidate scored by its train interaction count."""

    def __init__(self, counts: np.ndarray):
        self.counts = np.asarray(counts, dtype=np.float64)

    def score(self, prefixes, candidates):
        return self.counts[candidates]


def poprec_baseline(split: DatasetSplit) -> PopularityScorer:
    if not any(u.train for u in split.users):
        raise DataError("popularity baseline needs a non-empty train split")
    return PopularityScorer(split.train_item_counts())


def sample_negatives(user_index: int, num_items: int, interacted: Iterable[int], count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct items outside ``interacted``, uniform without replacement."""
    seen = np.fromiter(set(interacted), dtype=np.int64)
    candidates = np.setdiff1d(np.arange(1, num_items + 1, dtype=np.int64), seen, assume_unique=True)
    if len(candidates) < count:
        logger.warning("User %d has only %d negative candidates (wanted %d)", user_index, len(candidates), count)
        return candidates
    return rng.choice(candidates, size=count, replace=False)


def user_rng(seed: int, user_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, user_index])


def rank_of_positive(pos: float, negs) -> int:
    """1 + number of negatives scoring at least as high as the positive.

    Infinite scores are allowed; NaN is rejected.
    """
    negs = np.asarray(negs, dtype=np.float64)
    if math.isnan(pos) or np.any(np.isnan(negs)):
        raise ContractError("ranking scores must not be NaN")
    return 1 + int(np.count_nonzero(negs >= pos))


def compute_metrics(rank: int, k: int = 10) -> Tuple[float, int, float]:
    """(NDCG@k, HR@k, reciprocal rank) for a single relevant item."""
    if rank < 1:
        raise ContractError(f"rank must be >= 1, got {rank}")
    if rank <= k:
        return 1.0 / math.log2(rank + 1), 1, 1.0 / rank
    return 0.0, 0, 1.0 / rank


@dataclass
class UserMetrics:
    user: str
    rank: int
    ndcg: float
    hr: int
    rr: float


@dataclass
class MetricsReport:
    ndcg: float
    hr: float
    mrr: float
    users: int
    cutoff: int = 10
    negatives: int = 100
    per_user: List[UserMetrics] = field(default_factory=list, repr=False)

    def to_lines(self) -> List[str]:
        k = self.cutoff
        return [
            f"users={self.users}",
            f"negatives={self.negatives}",
            f"cutoff={k}",
            f"ndcg@{k}={self.ndcg!r}",
            f"hr@{k}={self.hr!r}",
            f"mrr={self.mrr!r}",
        ]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "MetricsReport":
        values: Dict[str, str] = {}
        for line in lines:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        try:
            k = int(values["cutoff"])
            return cls(
                ndcg=float(values[f"ndcg@{k}"]),
                hr=float(values[f"hr@{k}"]),
                mrr=float(values["mrr"]),
                users=int(values["users"]),
                cutoff=k,
                negatives=int(values["negatives"]),
            )
        except (KeyError, ValueError) as e:
            raise DataError(f"malformed metrics report: {e}") from e


def evaluate_model(scorer: Scorer, split: DatasetSplit, protocol: EvalProtocol = EvalProtocol(),
                   target: str = "test", batch_size: int = 512) -> MetricsReport:
    """Rank each user's held-out item among sampled negatives and average the metrics.

    Args:
        scorer: Anything with ``score(prefixes, candidates)``.
        split: Leave-one-out dataset.
        protocol: Negative count, cutoff and sampling seed.
        target: ``"test"`` (prefix train+valid) or ``"valid"`` (prefix train).

    Returns:
        MetricsReport with per-user detail in user order.
    """
    if target not in ("test", "valid"):
        raise ContractError(f"unknown evaluation target {target!r}")
    rows: List[UserMetrics] = []
    for start in range(0, len(split.users), batch_size):
        chunk = list(enumerate(split.users[start:start + batch_size], start=start))
        prefixes, candidate_rows = [], []
        for index, u in chunk:
            positive = u.test_target if target == "test" else u.valid_target
            prefix = u.test_prefix if target == "test" else u.valid_prefix
            negs = sample_negatives(index, split.num_items, u.full, protocol.negatives, user_rng(protocol.seed, index))
            prefixes.append(prefix)
            candidate_rows.append(np.concatenate([[positive], negs]).astype(np.int64))
        width = max(len(c) for c in candidate_rows)
        if any(len(c) != width for c in candidate_rows):
            scores = [scorer.score([p], c[None, :])[0] for p, c in zip(prefixes, candidate_rows)]
        else:
            scores = list(scorer.score(prefixes, np.stack(candidate_rows)))
        for (index, u), s in zip(chunk, scores):
            rank = rank_of_positive(float(s[0]), s[1:])
            ndcg, hr, rr = compute_metrics(rank, protocol.cutoff)
            rows.append(UserMetrics(u.user, rank, ndcg, hr, rr))

    n = len(rows)
    return MetricsReport(
        ndcg=sum(r.ndcg for r in rows) / n if n else 0.0,
        hr=sum(r.hr for r in rows) / n if n else 0.0,
        mrr=sum(r.rr for r in rows) / n if n else 0.0,
        users=n,
        cutoff=protocol.cutoff,
        negatives=protocol.negatives,
        per_user=rows,
    )


def render_table(reports: Dict[str, MetricsReport], title: str = "Evaluation") -> Table:
    """Side-by-side rich table of several reports."""
    table = Table(title=title)
    table.add_column("Model", style="cyan")
    any_report = next(iter(reports.values()), None)
    k = any_report.cutoff if any_report else 10
    table.add_column(f"NDCG@{k}", justify="right", style="green")
    table.add_column(f"HR@{k}", justify="right", style="green")
    table.add_column("MRR", justify="right", style="green")
    table.add_column("Users", justify="right", style="dim")
    for name, report in reports.items():
        table.add_row(name, f"{report.ndcg:.4f}", f"{report.hr:.4f}", f"{report.mrr:.4f}", str(report.users))
    return table
