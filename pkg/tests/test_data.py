"""Tests for ingestion, k-core filtering, splitting and factor binning."""

import numpy as np
import pytest

from mfgan.data import (
    BinSpec,
    InteractionRecord,
    bin_factor_values,
    build_factor_tables,
    build_user_sequences,
    dataset_stats,
    ingest_factors,
    ingest_interactions,
    k_core_filter,
    leave_one_out_split,
    subsample_users,
    window_pad,
    window_pad_many,
)
from mfgan.discriminator import FIRST_BIN, UNKNOWN_BIN, FactorKind, FactorSpec
from mfgan.errors import ConfigError, ContractError, DataError


def _records(rows):
    return [InteractionRecord(u, i, t) for u, i, t in rows]


class TestIngest:
    def test_header_is_skipped(self, tmp_dir):
        path = tmp_dir / "interactions.tsv"
        path.write_text("user\titem\ttimestamp\nu1\ta\t1\nu1\tb\t2\n", encoding="utf-8")
        records = ingest_interactions(path)
        assert records == _records([("u1", "a", 1), ("u1", "b", 2)])

    def test_headerless_file(self, tmp_dir):
        path = tmp_dir / "interactions.tsv"
        path.write_text("u1\ta\t5\n", encoding="utf-8")
        assert ingest_interactions(path) == _records([("u1", "a", 5)])

    def test_few_malformed_lines_are_skipped(self, tmp_dir):
        path = tmp_dir / "interactions.tsv"
        lines = [f"u{i % 7}\ti{i % 13}\t{i}" for i in range(200)] + ["broken line"]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert len(ingest_interactions(path)) == 200

    def test_many_malformed_lines_fail(self, tmp_dir):
        path = tmp_dir / "interactions.tsv"
        path.write_text("u1\ta\t1\nu1\tb\tnot-a-time\nu2\tc\n", encoding="utf-8")
        with pytest.raises(DataError):
            ingest_interactions(path)

    def test_missing_file(self, tmp_dir):
        with pytest.raises(DataError):
            ingest_interactions(tmp_dir / "nope.tsv")

    def test_factors_file(self, tmp_dir):
        path = tmp_dir / "factors.tsv"
        path.write_text("item\tcategory\tprice\na\tc1\t1.5\nb\tc2\t\n", encoding="utf-8")
        names, columns = ingest_factors(path)
        assert names == ["category", "price"]
        assert columns["category"] == {"a": "c1", "b": "c2"}
        assert columns["price"] == {"a": "1.5"}

    def test_factors_need_a_header(self, tmp_dir):
        path = tmp_dir / "factors.tsv"
        path.write_text("item\n", encoding="utf-8")
        with pytest.raises(DataError):
            ingest_factors(path)


class TestKCore:
    def test_reaches_fixed_point(self):
        rng = np.random.default_rng(0)
        records = _records(
            (f"u{rng.integers(40)}", f"i{rng.zipf(1.5) % 60}", t) for t in range(600)
        )
        kept = k_core_filter(records, 5)
        users = {}
        items = {}
        for r in kept:
            users[r.user] = users.get(r.user, 0) + 1
            items[r.item] = items.get(r.item, 0) + 1
        assert all(c >= 5 for c in users.values())
        assert all(c >= 5 for c in items.values())
        assert k_core_filter(kept, 5) == kept

    def test_cascading_removal(self):
        records = _records([
            ("u1", "a", 1), ("u1", "b", 2),
            ("u2", "a", 1), ("u2", "b", 2),
            ("u3", "a", 1), ("u3", "c", 2),
        ])
        kept = k_core_filter(records, 2)
        assert {r.user for r in kept} == {"u1", "u2"}
        assert {r.item for r in kept} == {"a", "b"}

    def test_can_empty_the_dataset(self):
        assert k_core_filter(_records([("u1", "a", 1)]), 2) == []

    def test_threshold_must_be_positive(self):
        with pytest.raises(ConfigError):
            k_core_filter([], 0)

    def test_subsample_keeps_whole_users(self):
        records = _records((f"u{i % 10}", f"i{i}", i) for i in range(50))
        kept = subsample_users(records, 4, seed=1)
        assert len({r.user for r in kept}) == 4
        assert len(kept) == 20
        assert subsample_users(records, 4, seed=1) == kept
        assert subsample_users(records, 0, seed=1) == records


class TestSplit:
    def test_leave_one_out(self):
        records = _records([
            ("bob", "x", 3), ("bob", "y", 1), ("bob", "z", 2), ("bob", "w", 4),
            ("amy", "x", 1), ("amy", "y", 2),
        ])
        split = leave_one_out_split(build_user_sequences(records))
        assert split.items == ["w", "x", "y", "z"]
        assert split.dropped_users == 1
        (bob,) = split.users
        assert bob.train == [3, 4]
        assert bob.valid_target == 2
        assert bob.test_target == 1
        assert bob.test_prefix == [3, 4, 2]
        assert split.item_name(1) == "w"

    def test_short_users_are_dropped_with_a_warning(self, caplog):
        records = _records([
            ("amy", "x", 1), ("amy", "y", 2), ("amy", "z", 3),
            ("bob", "x", 1), ("bob", "y", 2),
            ("cat", "z", 1),
        ])
        with caplog.at_level("WARNING", logger="mfgan.data"):
            split = leave_one_out_split(build_user_sequences(k_core_filter(records, 1)))
        assert [u.user for u in split.users] == ["amy"]
        assert split.dropped_users == 2
        assert "Dropped 2 users" in caplog.text

    def test_equal_timestamps_keep_file_order(self):
        records = _records([("u", "b", 1), ("u", "a", 1), ("u", "c", 1)])
        (seq,) = build_user_sequences(records)
        assert seq.items == ["b", "a", "c"]

    def test_unknown_user(self, toy_split):
        with pytest.raises(DataError):
            toy_split.user("nobody")

    def test_train_counts_ignore_held_out(self, toy_split):
        counts = toy_split.train_item_counts()
        assert counts[0] == 0
        assert counts.sum() == sum(len(u.train) for u in toy_split.users)


class TestWindowPad:
    def test_left_pads(self):
        np.testing.assert_array_equal(window_pad([4, 5], 4), [0, 0, 4, 5])

    def test_keeps_most_recent(self):
        np.testing.assert_array_equal(window_pad([1, 2, 3, 4, 5], 3), [3, 4, 5])

    def test_empty(self):
        np.testing.assert_array_equal(window_pad([], 2), [0, 0])
        assert window_pad_many([], 3).shape == (0, 3)

    def test_bad_length(self):
        with pytest.raises(ContractError):
            window_pad([1], 0)


class TestBinning:
    def test_equal_frequency_bins(self):
        values = [str(v) for v in range(1, 101)]
        spec = bin_factor_values([f"i{v}" for v in range(100)], values, 4)
        assert spec.num_bins == 4
        assigned = [spec.assign(v) for v in values]
        assert np.bincount(assigned).tolist() == [25, 25, 25, 25]

    def test_categorical_first_appearance(self):
        spec = bin_factor_values(["a", "b", "c"], ["red", "blue", "red"], 0, kind="categorical")
        assert spec.categories == {"red": 0, "blue": 1}
        assert spec.assign("green") is None

    def test_constant_values_use_one_bin(self):
        spec = bin_factor_values(["a", "b"], ["3", "3"], 5)
        assert spec.num_bins == 1
        assert spec.assign("3") == 0

    def test_missing_and_non_numeric(self):
        spec = BinSpec("price", "numeric", boundaries=(1.0, 2.0))
        assert spec.assign("") is None
        assert spec.assign("cheap") is None
        assert spec.assign("nan") is None
        assert spec.assign("1.5") == 1

    def test_numeric_needs_two_bins(self):
        with pytest.raises(ConfigError):
            bin_factor_values(["a"], ["1"], 1)


class TestFactorTables:
    def test_unknown_values_get_unknown_bin(self, toy_split):
        known = toy_split.users[0].train[0]
        columns = {"category": {toy_split.item_name(known): "c0"}}
        specs = [FactorSpec("category", FactorKind.CATEGORICAL)]
        (table,), _ = build_factor_tables(toy_split, specs, columns)
        assert table.bins[0] == 0
        assert table.bins[known] == FIRST_BIN
        others = np.delete(table.bins, [0, known])
        assert np.all(others == UNKNOWN_BIN)

    def test_categorical_bins_follow_file_order(self, toy_split):
        names = [toy_split.item_name(i) for i in range(toy_split.num_items, 0, -1)]
        column = {name: f"c{int(name[1:]) % 3}" for name in names}
        specs = [FactorSpec("category", FactorKind.CATEGORICAL)]
        _, (spec,) = build_factor_tables(toy_split, specs, {"category": column})
        train_names = {toy_split.item_name(i) for u in toy_split.users for i in u.train}
        seen = []
        for name in names:
            if name in train_names and column[name] not in seen:
                seen.append(column[name])
        assert list(spec.categories) == seen
        assert [spec.categories[c] for c in seen] == list(range(len(seen)))

    def test_popularity_is_derived(self, toy_split):
        specs = [FactorSpec("popularity", FactorKind.POPULARITY, 3)]
        (table,), (spec,) = build_factor_tables(toy_split, specs, {})
        assert table.num_items == toy_split.num_items
        counts = toy_split.train_item_counts()
        busiest, quietest = int(np.argmax(counts[1:])) + 1, int(np.argmin(counts[1:])) + 1
        assert table.bins[busiest] >= table.bins[quietest]
        assert spec.kind == "numeric"

    def test_item_id_table(self, toy_split):
        (table,), _ = build_factor_tables(toy_split, [FactorSpec("item", FactorKind.ITEM_ID)], {})
        np.testing.assert_array_equal(table.bins, np.arange(toy_split.num_items + 1))

    def test_missing_column(self, toy_split):
        with pytest.raises(DataError):
            build_factor_tables(toy_split, [FactorSpec("brand", FactorKind.CATEGORICAL)], {})


class TestStats:
    def test_counts(self, toy_split):
        stats = dataset_stats(toy_split, num_factors=3)
        assert stats["users"] == len(toy_split.users)
        assert stats["items"] == toy_split.num_items
        assert stats["interactions"] == toy_split.num_interactions
        assert stats["factors"] == 3
        assert 0 < stats["density"] <= 1
