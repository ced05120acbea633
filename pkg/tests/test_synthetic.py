"""Tests for the synthetic dataset generator, the desk benchmark and the ablation."""

import json

import numpy as np
import pytest

from mfgan.benchmark import (
    AblationReport,
    AblationSetting,
    BenchmarkReport,
    SeedResult,
    ablation_settings,
    final_quartile_std,
    run_ablation,
    run_benchmark,
)
from mfgan.data import ingest_factors, ingest_interactions
from mfgan.errors import ConfigError
from mfgan.synthetic import SyntheticConfig, generate_synthetic, transition_matrix, write_synthetic

TOY_DATA = SyntheticConfig(num_items=12, num_users=30, num_categories=3, min_length=5, max_length=8, seed=3)


class TestGenerator:
    def test_reproducible(self):
        assert generate_synthetic(TOY_DATA) == generate_synthetic(TOY_DATA)

    def test_lengths_and_labels(self):
        records, factors = generate_synthetic(TOY_DATA)
        per_user = {}
        for r in records:
            per_user.setdefault(r.user, []).append(r.timestamp)
        assert len(per_user) == TOY_DATA.num_users
        for stamps in per_user.values():
            assert TOY_DATA.min_length <= len(stamps) <= TOY_DATA.max_length
            assert stamps == list(range(1, len(stamps) + 1))
        assert set(factors) == {f"i{i:02d}" for i in range(1, 13)}
        assert {r.item for r in records} <= set(factors)

    def test_transitions_are_stochastic(self):
        matrix = transition_matrix(SyntheticConfig(num_categories=4, follow_prob=0.7))
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
        assert matrix[0, 1] == pytest.approx(0.7 + 0.3 / 4)

    def test_categories_follow_the_chain(self):
        config = SyntheticConfig(num_items=20, num_users=200, num_categories=4, follow_prob=1.0, seed=2)
        records, factors = generate_synthetic(config)
        steps = follows = 0
        for prev, cur in zip(records, records[1:]):
            if prev.user != cur.user:
                continue
            a = int(factors[prev.item]["category"][1:])
            b = int(factors[cur.item]["category"][1:])
            steps += 1
            follows += b == (a + 1) % 4
        assert follows == steps

    @pytest.mark.parametrize("kwargs", [
        {"num_items": 2, "num_categories": 3}, {"min_length": 2}, {"follow_prob": 1.5}, {"num_users": 0},
    ])
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ConfigError):
            SyntheticConfig(**kwargs).validate()

    def test_files_are_readable(self, tmp_dir):
        interactions, factors = write_synthetic(tmp_dir, TOY_DATA)
        assert len(ingest_interactions(interactions)) == len(generate_synthetic(TOY_DATA)[0])
        names, columns = ingest_factors(factors)
        assert names == ["category", "price"]
        assert len(columns["price"]) == TOY_DATA.num_items


class TestBenchmark:
    def test_final_quartile(self):
        assert final_quartile_std([]) == 0.0
        assert final_quartile_std([5.0, 1.0, 2.0, 2.0]) == 0.0
        assert final_quartile_std([9, 9, 9, 9, 9, 9, 1.0, 3.0]) == pytest.approx(1.0)

    def test_report_medians(self):
        report = BenchmarkReport(10, [
            SeedResult(0, 0.1, 0.3, 0.35, 0.32, 0.01, 0.02),
            SeedResult(1, 0.2, 0.4, 0.38, 0.30, 0.03, 0.01),
            SeedResult(2, 0.1, 0.5, 0.50, 0.31, 0.02, 0.05),
        ])
        assert report.median("mle") == pytest.approx(0.4)
        assert report.mle_beats_poprec
        assert not report.mfgan_at_least_mle
        assert report.multi_factor_steadier
        assert report.to_dict()["median"]["sdsf"] == pytest.approx(0.31)

    def test_small_run(self, tmp_dir, tiny_config):
        report = run_benchmark(tmp_dir, seeds=(0,), data=TOY_DATA, training=tiny_config)
        assert [r.seed for r in report.rows] == [0]
        row = report.rows[0]
        for value in (row.poprec, row.mle, row.mfgan, row.sdsf):
            assert 0.0 <= value <= 1.0
        saved = json.loads((tmp_dir / "benchmark.json").read_text(encoding="utf-8"))
        assert saved["seeds"][0]["seed"] == 0
        assert (tmp_dir / "manifest" / "catalog.tsv").is_file()

    @pytest.mark.slow
    def test_desk_scale_comparison(self, tmp_dir):
        report = run_benchmark(tmp_dir)
        assert report.mle_beats_poprec


class TestAblation:
    def test_settings_order(self):
        labels = [s.label for s in ablation_settings(["item", "category", "price"])]
        assert labels == [
            "item", "item+category", "item+category+price",
            "-item", "-category", "-price",
            "sdaf", "uni-d", "lam=max", "lam=min",
        ]

    def test_variants_use_every_factor(self):
        settings = {s.label: s for s in ablation_settings(["item", "category"])}
        assert settings["uni-d"].factors == ("item", "category")
        assert settings["uni-d"].variant == "uni-d"
        assert settings["lam=min"].lam_mode == "min"
        assert settings["item+category"].key == (("item", "category"), "full", "mean")

    def test_needs_two_factors(self):
        with pytest.raises(ConfigError):
            ablation_settings(["item"])

    def test_report(self):
        report = AblationReport(10)
        report.add(0, {"MLE": 0.2, "item": 0.3})
        report.add(1, {"MLE": 0.4, "item": 0.1})
        report.add(2, {"MLE": 0.3, "item": 0.2})
        assert report.seeds == [0, 1, 2]
        assert report.median("MLE") == pytest.approx(0.3)
        assert report.median("missing") == 0.0
        rows = report.to_dict()["rows"]
        assert [r["label"] for r in rows] == ["MLE", "item"]
        assert rows[1]["ndcg"] == [0.3, 0.1, 0.2]

    def test_small_run(self, tmp_dir, tiny_config):
        settings = [
            AblationSetting("item", ("item",)),
            AblationSetting("item+category", ("item", "category")),
            AblationSetting("lam=max", ("item", "category"), lam_mode="max"),
        ]
        report = run_ablation(tmp_dir, seeds=(0,), data=TOY_DATA, training=tiny_config, settings=settings)
        assert list(report.scores) == ["MLE", "item", "item+category", "lam=max"]
        for values in report.scores.values():
            assert len(values) == 1
            assert 0.0 <= values[0] <= 1.0
        saved = json.loads((tmp_dir / "ablation.json").read_text(encoding="utf-8"))
        assert saved["seeds"] == [0]

    def test_unknown_factor(self, tmp_dir, tiny_config):
        with pytest.raises(ConfigError):
            run_ablation(tmp_dir, seeds=(0,), data=TOY_DATA, training=tiny_config,
                         settings=[AblationSetting("colour", ("colour",))])
