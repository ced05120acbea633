"""Tests for factor discriminators."""

import numpy as np
import pytest

from mfgan import autodiff as ad
from mfgan.attention import AttentionConfig
from mfgan.discriminator import (
    FIRST_BIN,
    FactorKind,
    FactorTable,
    UNKNOWN_BIN,
    build_discriminators,
    discriminator_loss,
    factor_sequence_embed,
    init_discriminator,
    item_id_table,
    position_scores,
    rationality_score,
    rationality_scores,
    score_logits,
)
from mfgan.errors import ConfigError, ContractError, DataError


def _tables(num_items=10):
    category = np.array([0] + [FIRST_BIN + (i % 3) for i in range(num_items)])
    price = np.array([0] + [FIRST_BIN + (i % 2) for i in range(num_items)])
    price[4] = UNKNOWN_BIN
    return [
        FactorTable("category", FactorKind.CATEGORICAL, category, size=FIRST_BIN + 3),
        FactorTable("price", FactorKind.NUMERIC, price, size=FIRST_BIN + 2),
    ]


@pytest.fixture
def disc_config():
    return AttentionConfig(d=8, h=2, L=1, n=5, causal=False)


class TestFactorTable:
    def test_pad_must_map_to_pad_bin(self):
        with pytest.raises(DataError):
            FactorTable("x", FactorKind.CATEGORICAL, np.array([1, 2, 2]), size=3)

    def test_bins_must_fit(self):
        with pytest.raises(DataError):
            FactorTable("x", FactorKind.CATEGORICAL, np.array([0, 2, 5]), size=4)

    def test_size_defaults_to_max_bin(self):
        assert FactorTable("x", FactorKind.NUMERIC, np.array([0, 2, 3])).size == 4

    def test_lookup_unknown_item(self):
        table = item_id_table(4)
        np.testing.assert_array_equal(table.lookup([0, 3, 4]), [0, 3, 4])
        with pytest.raises(DataError):
            table.lookup([5])


class TestInit:
    def test_pad_rows_are_zero(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=0)
        for emb in disc.factor_embs:
            np.testing.assert_array_equal(emb.data[0], 0.0)
        assert disc.projection is not None
        assert disc.projection.shape == (16, 8)

    def test_single_block_only(self):
        with pytest.raises(ConfigError):
            init_discriminator(_tables()[:1], AttentionConfig(d=8, L=2, n=5), seed=0)

    def test_needs_a_table(self, disc_config):
        with pytest.raises(ConfigError):
            init_discriminator([], disc_config, seed=0)

    def test_mlp_head_shape(self, disc_config):
        disc = init_discriminator(_tables()[:1], disc_config, seed=0)
        assert disc.mlp_w1.shape == (8, 4)
        assert disc.mlp_w2.shape == (4, 1)
        assert all(name.startswith("disc/category/") for name in disc.named_parameters())


class TestVariants:
    def test_full_builds_one_per_factor(self, disc_config):
        discs = build_discriminators("full", _tables(), 10, disc_config, seed=0)
        assert [d.name for d in discs] == ["category", "price"]
        assert all(not d.config.causal for d in discs)

    def test_sdsf_uses_item_ids(self, disc_config):
        discs = build_discriminators("sdsf", _tables(), 10, disc_config, seed=0)
        assert len(discs) == 1
        assert discs[0].tables[0].kind is FactorKind.ITEM_ID
        assert discs[0].factor_embs[0].shape == (11, 8)

    def test_sdaf_concatenates(self, disc_config):
        discs = build_discriminators("sdaf", _tables(), 10, disc_config, seed=0)
        assert len(discs) == 1
        assert discs[0].name == "all"
        assert discs[0].projection is not None

    def test_uni_d_is_causal(self, disc_config):
        discs = build_discriminators("uni-d", _tables(), 10, disc_config, seed=0)
        assert all(d.config.causal for d in discs)

    def test_full_needs_factors(self, disc_config):
        with pytest.raises(ConfigError):
            build_discriminators("full", [], 10, disc_config, seed=0)

    def test_unknown_variant(self, disc_config):
        with pytest.raises(ValueError):
            build_discriminators("both", _tables(), 10, disc_config, seed=0)

    def test_discriminators_get_different_weights(self, disc_config):
        tables = [_tables()[0], FactorTable("again", FactorKind.CATEGORICAL, _tables()[0].bins, size=5)]
        a, b = build_discriminators("full", tables, 10, disc_config, seed=0)
        assert not np.allclose(a.factor_embs[0].data, b.factor_embs[0].data)


class TestScores:
    def test_embedding_zeroes_padding(self, disc_config):
        disc = init_discriminator(_tables()[:1], disc_config, seed=1)
        x = factor_sequence_embed([0, 0, 1, 2, 3], disc).data
        np.testing.assert_array_equal(x[:2], 0.0)

    def test_scores_are_probabilities(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=1)
        windows = np.array([[0, 0, 1, 2, 3], [1, 2, 3, 4, 5], [0, 0, 0, 0, 7]])
        scores = rationality_scores(disc, windows)
        assert scores.shape == (3,)
        assert np.all((scores > 0) & (scores < 1))
        assert rationality_score(disc, windows[1]) == pytest.approx(scores[1], rel=1e-6)

    def test_window_must_end_with_real_item(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=1)
        with pytest.raises(ContractError):
            score_logits(disc, [1, 2, 3, 4, 0])

    def test_bidirectional_score_sees_early_items(self, disc_config):
        disc = build_discriminators("sdsf", [], 10, disc_config, seed=2)[0]
        a = rationality_score(disc, [1, 2, 3, 4, 5])
        b = rationality_score(disc, [9, 2, 3, 4, 5])
        assert a != b

    def test_uni_d_positions_ignore_future(self, disc_config):
        disc = build_discriminators("uni-d", _tables(), 10, disc_config, seed=3)[0]
        base = position_scores(disc, [1, 2, 3, 4, 5])
        for t in range(4):
            window = [1, 2, 3, 4, 5][:t + 1] + [8] * (4 - t)
            np.testing.assert_array_equal(position_scores(disc, window)[:t + 1], base[:t + 1])

    def test_pad_positions_report_half(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=1)
        scores = position_scores(disc, [0, 0, 1, 2, 3])
        np.testing.assert_array_equal(scores[:2], 0.5)

    def test_constant_head(self, disc_config):
        disc = init_discriminator(_tables()[:1], disc_config, seed=1)
        disc.mlp_w2.data = np.zeros_like(disc.mlp_w2.data)
        disc.mlp_b2.data = np.array([np.log(0.9 / 0.1)], dtype=disc.mlp_b2.dtype)
        scores = rationality_scores(disc, np.array([[0, 0, 1, 2, 3], [5, 6, 7, 8, 9]]))
        np.testing.assert_allclose(scores, 0.9, rtol=1e-6)


class TestLoss:
    def test_matches_softplus_formula(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=4)
        real = np.array([[0, 1, 2, 3, 4], [1, 2, 3, 4, 5]])
        fake = np.array([[0, 1, 2, 3, 9], [1, 2, 3, 4, 7]])
        z_real = score_logits(disc, real).data.astype(np.float64)
        z_fake = score_logits(disc, fake).data.astype(np.float64)
        expected = np.mean(np.logaddexp(0, -z_real)) + np.mean(np.logaddexp(0, z_fake))
        assert discriminator_loss(disc, real, fake).item() == pytest.approx(expected, rel=1e-5)

    def test_empty_batch(self, disc_config):
        disc = init_discriminator(_tables(), disc_config, seed=4)
        with pytest.raises(ContractError):
            discriminator_loss(disc, np.zeros((0, 5), dtype=int), np.array([[1, 2, 3, 4, 5]]))

    def test_loss_gradient(self, f64):
        cfg = AttentionConfig(d=8, h=2, L=1, n=5, causal=False)
        disc = init_discriminator(_tables(20), cfg, seed=5)
        real = np.array([[0, 1, 2, 3, 4], [6, 7, 8, 9, 10]])
        fake = np.array([[0, 1, 2, 3, 15], [6, 7, 8, 9, 20]])

        def f():
            return discriminator_loss(disc, real, fake)

        params = disc.named_parameters()
        analytic = ad.backward(f())
        numeric = ad.finite_diff_grad(f, params, eps=1e-5)
        for name, p in params.items():
            assert ad.relative_error(analytic.of(p), numeric[name]) < 1e-3, name
