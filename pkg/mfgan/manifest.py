"""
Split manifest - the on-disk result of ``mfgan prep``.

Structure:
    <manifest>/
        catalog.tsv     dense_id<TAB>item
        train.tsv       user<TAB>space-separated dense ids
        valid.tsv       user<TAB>dense id of the validation target
        test.tsv        user<TAB>dense id of the test target
        bins.tsv        factor<TAB>kind<TAB>rows<TAB>boundaries or categories
        factors.tsv     dense_id<TAB>bin per factor (header names factors)
        stats.txt       key=value dataset statistics

All files are UTF-8 with LF line ends and contain nothing run-dependent, so
the same inputs always give byte-identical manifests.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .data import BinSpec, DatasetSplit, UserSplit
from .discriminator import FactorKind, FactorTable
from .errors import DataError

logger = logging.getLogger(__name__)

MANIFEST_FILES = ("catalog.tsv", "train.tsv", "valid.tsv", "test.tsv", "bins.tsv", "factors.tsv", "stats.txt")


class SplitManifest:
    """Read and write a split manifest directory."""

    def __init__(self, root):
        self.root = Path(root)

    def exists(self) -> bool:
        return all((self.root / name).is_file() for name in MANIFEST_FILES)

    def _write(self, name: str, lines: Sequence[str]) -> None:
        with open(self.root / name, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(line + "\n" for line in lines)

    def _read(self, name: str) -> List[str]:
        path = self.root / name
        try:
            with open(path, "r", encoding="utf-8") as f:
                return [line.rstrip("\n") for line in f if line.strip()]
        except OSError as e:
            raise DataError(f"manifest file missing or unreadable: {path}") from e

    def write(self, split: DatasetSplit, tables: Sequence[FactorTable], bin_specs: Sequence[BinSpec],
              stats: Dict[str, object]) -> Path:
        """
        Write every manifest file.

        Args:
            split: Leave-one-out dataset
            tables: Factor tables aligned with ``bin_specs``
            bin_specs: Fitted bins per factor
            stats: Dataset statistics for stats.txt

        Returns:
            The manifest directory
        """
        self.root.mkdir(parents=True, exist_ok=True)
        self._write("catalog.tsv", [f"{i}\t{item}" for i, item in enumerate(split.items, start=1)])
        self._write("train.tsv", [f"{u.user}\t{' '.join(map(str, u.train))}" for u in split.users])
        self._write("valid.tsv", [f"{u.user}\t{u.valid_target}" for u in split.users])
        self._write("test.tsv", [f"{u.user}\t{u.test_target}" for u in split.users])

        bin_lines = []
        for table, spec in zip(tables, bin_specs):
            if spec.kind == "categorical":
                detail = json.dumps(spec.categories, ensure_ascii=False, sort_keys=True)
            else:
                detail = ",".join(repr(b) for b in spec.boundaries)
            bin_lines.append(f"{table.name}\t{table.kind.value}\t{table.size}\t{detail}")
        self._write("bins.tsv", bin_lines)

        header = "\t".join(["item"] + [t.name for t in tables])
        rows = [header]
        for dense in range(1, split.num_items + 1):
            rows.append("\t".join([str(dense)] + [str(int(t.bins[dense])) for t in tables]))
        self._write("factors.tsv", rows)
        stats = dict(stats)
        stats.setdefault("dropped_users", split.dropped_users)
        self._write("stats.txt", [f"{k}={v}" for k, v in stats.items()])
        logger.info("Wrote manifest to %s", self.root)
        return self.root

    def load_split(self) -> DatasetSplit:
        items = []
        for expected, line in enumerate(self._read("catalog.tsv"), start=1):
            dense, _, item = line.partition("\t")
            if int(dense) != expected:
                raise DataError(f"catalog.tsv: ids must be contiguous, found {dense} at row {expected}")
            items.append(item)
        valid = dict(line.split("\t") for line in self._read("valid.tsv"))
        test = dict(line.split("\t") for line in self._read("test.tsv"))
        users = []
        for line in self._read("train.tsv"):
            user, _, ids = line.partition("\t")
            if user not in valid or user not in test:
                raise DataError(f"user {user} has no validation or test target")
            users.append(UserSplit(user, [int(i) for i in ids.split()], int(valid[user]), int(test[user])))
        stats = self.stats()
        return DatasetSplit(users=users, items=items, dropped_users=int(stats.get("dropped_users", 0)))

    def load_tables(self) -> Tuple[List[FactorTable], List[BinSpec]]:
        rows = self._read("factors.tsv")
        names = rows[0].split("\t")[1:]
        bins = np.zeros((len(rows), len(names)), dtype=np.int64)
        for r, line in enumerate(rows[1:], start=1):
            parts = line.split("\t")
            if int(parts[0]) != r or len(parts) != len(names) + 1:
                raise DataError(f"factors.tsv: malformed row {r}")
            bins[r] = [int(x) for x in parts[1:]]
        tables, specs = [], []
        for j, line in enumerate(self._read("bins.tsv")):
            name, kind, size, detail = (line.split("\t") + [""])[:4]
            if names[j] != name:
                raise DataError(f"bins.tsv and factors.tsv disagree on factor {j}: {name} vs {names[j]}")
            kind = FactorKind(kind)
            tables.append(FactorTable(name, kind, bins[:, j], size=int(size)))
            if kind is FactorKind.CATEGORICAL:
                specs.append(BinSpec(name, kind.value, categories=json.loads(detail) if detail else {}))
            else:
                boundaries = tuple(float(b) for b in detail.split(",") if b)
                specs.append(BinSpec(name, "numeric" if kind is not FactorKind.ITEM_ID else kind.value,
                                     boundaries=boundaries))
        return tables, specs

    def stats(self) -> Dict[str, str]:
        out = {}
        for line in self._read("stats.txt"):
            key, _, value = line.partition("=")
            out[key] = value
        return out


def write_manifest(root, split: DatasetSplit, tables: Sequence[FactorTable], bin_specs: Sequence[BinSpec],
                   stats: Dict[str, object]) -> Path:
    return SplitManifest(root).write(split, tables, bin_specs, stats)


def read_manifest(root) -> Tuple[DatasetSplit, List[FactorTable], List[BinSpec]]:
    """Split, factor tables and bin specs stored under ``root``."""
    manifest = SplitManifest(root)
    if not manifest.exists():
        missing = [name for name in MANIFEST_FILES if not (manifest.root / name).is_file()]
        raise DataError(f"no split manifest at {manifest.root} (missing {', '.join(missing)}); run `mfgan prep` first")
    split = manifest.load_split()
    tables, specs = manifest.load_tables()
    for table in tables:
        if table.num_items != split.num_items:
            raise DataError(f"factor {table.name} covers {table.num_items} items, catalog has {split.num_items}")
    return split, tables, specs
