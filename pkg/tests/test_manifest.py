"""Tests for the split manifest."""

import numpy as np
import pytest

from mfgan.data import dataset_stats
from mfgan.errors import DataError
from mfgan.manifest import MANIFEST_FILES, SplitManifest, read_manifest, write_manifest


@pytest.fixture
def written(tmp_dir, toy_split, toy_binned):
    tables, specs = toy_binned
    root = write_manifest(tmp_dir / "manifest", toy_split, tables, specs, dataset_stats(toy_split, len(tables)))
    return root, tables, specs


class TestManifest:
    def test_writes_every_file(self, written):
        root, _, _ = written
        assert SplitManifest(root).exists()
        assert sorted(p.name for p in root.iterdir()) == sorted(MANIFEST_FILES)

    def test_round_trip(self, written, toy_split):
        root, tables, specs = written
        split, loaded_tables, loaded_specs = read_manifest(root)
        assert split.items == toy_split.items
        assert split.users == toy_split.users
        assert split.dropped_users == toy_split.dropped_users
        for a, b in zip(tables, loaded_tables):
            assert (a.name, a.kind, a.size) == (b.name, b.kind, b.size)
            np.testing.assert_array_equal(a.bins, b.bins)
        assert loaded_specs == specs

    def test_rewrite_is_byte_identical(self, written, tmp_dir):
        root, tables, specs = written
        split, _, _ = read_manifest(root)
        stats = SplitManifest(root).stats()
        again = write_manifest(tmp_dir / "again", split, tables, specs, stats)
        for name in MANIFEST_FILES:
            assert (root / name).read_bytes() == (again / name).read_bytes(), name

    def test_missing_manifest(self, tmp_dir):
        with pytest.raises(DataError, match="mfgan prep"):
            read_manifest(tmp_dir / "nothing")

    def test_catalog_must_be_contiguous(self, written):
        root, _, _ = written
        lines = (root / "catalog.tsv").read_text(encoding="utf-8").splitlines()
        lines[0] = "7\t" + lines[0].split("\t")[1]
        (root / "catalog.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_manifest(root)
