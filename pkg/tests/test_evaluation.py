"""Tests for sampled-negative ranking metrics."""

import math

import numpy as np
import pytest

from mfgan.data import DatasetSplit, UserSplit
from mfgan.errors import ContractError, DataError
from mfgan.evaluation import (
    EvalProtocol,
    GeneratorScorer,
    MetricsReport,
    compute_metrics,
    evaluate_model,
    poprec_baseline,
    rank_of_positive,
    render_table,
    sample_negatives,
)


class RandomScorer:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def score(self, prefixes, candidates):
        return self.rng.random(candidates.shape)


class OracleScorer:
    """Puts the positive (column 0) on top."""

    def score(self, prefixes, candidates):
        out = np.zeros(candidates.shape)
        out[:, 0] = 1.0
        return out


def _wide_split(num_users=2000, num_items=200, seed=0):
    rng = np.random.default_rng(seed)
    users = []
    for u in range(num_users):
        a, b, c, d = (int(x) + 1 for x in rng.choice(num_items, size=4, replace=False))
        users.append(UserSplit(f"u{u}", [a, b], c, d))
    return DatasetSplit(users=users, items=[f"i{i}" for i in range(num_items)])


class TestMetrics:
    def test_rank_one(self):
        assert compute_metrics(1) == (1.0, 1, 1.0)

    def test_rank_three(self):
        ndcg, hr, rr = compute_metrics(3)
        assert ndcg == pytest.approx(0.5)
        assert hr == 1
        assert rr == pytest.approx(1 / 3)

    def test_outside_cutoff(self):
        ndcg, hr, rr = compute_metrics(11, k=10)
        assert (ndcg, hr) == (0.0, 0)
        assert rr == pytest.approx(1 / 11)

    def test_rank_must_be_positive(self):
        with pytest.raises(ContractError):
            compute_metrics(0)

    def test_ties_count_against_positive(self):
        assert rank_of_positive(0.5, [0.5, 0.5, 0.1]) == 3
        assert rank_of_positive(0.5, [0.1, 0.2]) == 1

    def test_infinite_scores(self):
        assert rank_of_positive(math.inf, [1e308, -math.inf]) == 1
        assert rank_of_positive(-math.inf, [-math.inf]) == 2

    def test_nan_is_rejected(self):
        with pytest.raises(ContractError):
            rank_of_positive(float("nan"), [0.1])
        with pytest.raises(ContractError):
            rank_of_positive(0.1, [0.2, float("nan")])


class TestNegatives:
    def test_excludes_interacted_items(self):
        negs = sample_negatives(0, 50, [1, 2, 3], 20, np.random.default_rng(0))
        assert len(set(negs)) == 20
        assert not set(negs) & {1, 2, 3}
        assert np.all((negs >= 1) & (negs <= 50))

    def test_short_catalog(self):
        negs = sample_negatives(0, 5, [1, 2], 10, np.random.default_rng(0))
        assert sorted(negs) == [3, 4, 5]


class TestEvaluateModel:
    def test_oracle_is_perfect(self, toy_split):
        report = evaluate_model(OracleScorer(), toy_split, EvalProtocol(negatives=3))
        assert (report.ndcg, report.hr, report.mrr) == (1.0, 1.0, 1.0)
        assert report.users == len(toy_split.users)
        assert [r.user for r in report.per_user] == [u.user for u in toy_split.users]

    def test_random_scorer_hit_rate(self):
        report = evaluate_model(RandomScorer(1), _wide_split(), EvalProtocol(negatives=100, cutoff=10))
        assert report.hr == pytest.approx(10 / 101, abs=0.03)
        assert report.ndcg < report.hr

    def test_negatives_are_reproducible(self, toy_split):
        protocol = EvalProtocol(negatives=3, seed=5)
        a = evaluate_model(poprec_baseline(toy_split), toy_split, protocol)
        b = evaluate_model(poprec_baseline(toy_split), toy_split, protocol)
        assert [r.rank for r in a.per_user] == [r.rank for r in b.per_user]

    def test_valid_target(self, toy_split):
        report = evaluate_model(OracleScorer(), toy_split, EvalProtocol(negatives=3), target="valid")
        assert report.hr == 1.0

    def test_unknown_target(self, toy_split):
        with pytest.raises(ContractError):
            evaluate_model(OracleScorer(), toy_split, target="train")

    def test_generator_scorer(self, toy_split):
        from mfgan.attention import AttentionConfig
        from mfgan.generator import init_generator, next_item_logits
        from mfgan.data import window_pad

        gen = init_generator(AttentionConfig(d=8, h=2, n=6, causal=True), toy_split.num_items, 0)
        user = toy_split.users[0]
        candidates = np.array([[user.test_target, 1, 2]])
        scores = GeneratorScorer(gen).score([user.test_prefix], candidates)
        logits = next_item_logits(gen, window_pad(user.test_prefix, 6)[None, :]).data[0]
        np.testing.assert_allclose(scores[0], logits[candidates[0] - 1], rtol=1e-6)

    def test_poprec_needs_train_items(self):
        split = DatasetSplit(users=[UserSplit("u", [], 1, 2)], items=["a", "b"])
        with pytest.raises(DataError):
            poprec_baseline(split)


class TestReport:
    def test_lines_round_trip(self):
        report = MetricsReport(ndcg=0.123456789, hr=0.25, mrr=0.1, users=40, cutoff=5, negatives=50)
        back = MetricsReport.from_lines(report.to_lines())
        assert back == report
        assert "ndcg@5=0.123456789" in report.to_lines()

    def test_malformed(self):
        with pytest.raises(DataError):
            MetricsReport.from_lines(["users=3"])

    def test_render_table(self):
        report = MetricsReport(ndcg=0.5, hr=0.5, mrr=0.5, users=2)
        table = render_table({"PopRec": report})
        assert table.row_count == 1
        assert table.columns[1].header == "NDCG@10"
