"""Interaction and factor ingestion, k-core filtering, leave-one-out splits.

Raw inputs are tab-separated UTF-8 files:

    interactions.tsv    user<TAB>item<TAB>timestamp      (optional header)
    factors.tsv         item<TAB>factor_1<TAB>...        (header required)

Everything downstream works on dense item ids ``1..|I|``; 0 is the pad.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ContractError, DataError

logger = logging.getLogger(__name__)

# Fraction of malformed lines tolerated before a file is rejected.
MALFORMED_TOLERANCE = 0.01


@dataclass(frozen=True)
class InteractionRecord:
    user: str
    item: str
    timestamp: int


@dataclass
class UserSequence:
    user: str
    items: List[str]
    timestamps: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class UserSplit:
    """One user's leave-one-out partition, in dense ids."""

    user: str
    train: List[int]
    valid_target: int
    test_target: int

    @property
    def valid_prefix(self) -> List[int]:
        return list(self.train)

    @property
    def test_prefix(self) -> List[int]:
        return self.train + [self.valid_target]

    @property
    def full(self) -> List[int]:
        return self.train + [self.valid_target, self.test_target]


@dataclass
class DatasetSplit:
    users: List[UserSplit]
    items: List[str]
    dropped_users: int = 0

    def __post_init__(self):
        self.item_ids: Dict[str, int] = {item: i + 1 for i, item in enumerate(self.items)}
        self._user_index = {u.user: i for i, u in enumerate(self.users)}

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def num_interactions(self) -> int:
        return sum(len(u.full) for u in self.users)

    def item_name(self, dense_id: int) -> str:
        return self.items[dense_id - 1]

    def user(self, name: str) -> UserSplit:
        try:
            return self.users[self._user_index[name]]
        except KeyError:
            raise DataError(f"unknown user: {name}") from None

    def train_sequences(self) -> List[List[int]]:
        return [u.train for u in self.users]

    def train_item_counts(self) -> np.ndarray:
        """Interaction count per dense id over the train portions (index 0 unused)."""
        counts = np.zeros(self.num_items + 1, dtype=np.int64)
        for u in self.users:
            np.add.at(counts, np.asarray(u.train, dtype=np.int64), 1)
        return counts


@dataclass
class BinSpec:
    """Fitted discretisation of one factor's raw values."""

    name: str
    kind: str
    boundaries: Tuple[float, ...] = ()
    categories: Dict[str, int] = field(default_factory=dict)

    @property
    def num_bins(self) -> int:
        if self.kind == "categorical":
            return max(1, len(self.categories))
        return len(self.boundaries) + 1

    def assign(self, value) -> Optional[int]:
        """0-based bin of ``value``; None for missing or unseen values."""
        if value is None or value == "":
            return None
        if self.kind == "categorical":
            return self.categories.get(str(value))
        try:
            v = float(value)
        except (TypeError, ValueError):
            return None
        if not np.isfinite(v):
            return None
        return int(np.searchsorted(np.asarray(self.boundaries, dtype=np.float64), v, side="right"))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _read_lines(path) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _check_malformed(path, bad: List[int], total: int) -> None:
    if not bad:
        return
    if len(bad) > MALFORMED_TOLERANCE * max(total, 1):
        raise DataError(f"{path}: {len(bad)} of {total} lines malformed (first at line {bad[0]})")
    logger.warning("%s: skipped %d malformed lines (first at line %d)", path, len(bad), bad[0])


def _is_int(text: str) -> bool:
    try:
        int(text)
        return True
    except ValueError:
        return False


def ingest_interactions(path) -> List[InteractionRecord]:
    """Parse ``user<TAB>item<TAB>timestamp`` lines; a non-numeric first line is a header."""
    lines = _read_lines(path)
    records, bad, total = [], [], 0
    first = True
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if first:
            first = False
            if len(parts) == 3 and not _is_int(parts[2].strip()):
                continue
        total += 1
        if len(parts) != 3 or not parts[0].strip() or not parts[1].strip() or not _is_int(parts[2].strip()):
            bad.append(lineno)
            continue
        records.append(InteractionRecord(parts[0].strip(), parts[1].strip(), int(parts[2].strip())))
    _check_malformed(path, bad, total)
    logger.info("Read %d interactions from %s", len(records), path)
    return records


def write_interactions(records: Iterable[InteractionRecord], path, header: bool = True) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header:
            f.write("user\titem\ttimestamp\n")
        for r in records:
            f.write(f"{r.user}\t{r.item}\t{r.timestamp}\n")
    return str(path)


def ingest_factors(path) -> Tuple[List[str], Dict[str, Dict[str, str]]]:
    """Read a factors file into ``(names, {factor: {item: raw value}})``.

    Empty cells are left out of the mapping and later land in the unknown bin.
    """
    lines = [line for line in _read_lines(path) if line.strip()]
    if not lines:
        raise DataError(f"{path}: empty factors file")
    header = lines[0].split("\t")
    names = [h.strip() for h in header[1:]]
    if not names or any(not n for n in names):
        raise DataError(f"{path}: header must name every factor column")
    columns: Dict[str, Dict[str, str]] = {n: {} for n in names}
    bad = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(header) or not parts[0].strip():
            bad.append(lineno)
            continue
        item = parts[0].strip()
        for name, raw in zip(names, parts[1:]):
            raw = raw.strip()
            if raw:
                columns[name][item] = raw
    _check_malformed(path, bad, len(lines) - 1)
    return names, columns


# ---------------------------------------------------------------------------
# filtering and splitting
# ---------------------------------------------------------------------------

def subsample_users(records: Sequence[InteractionRecord], max_users: int, seed: int) -> List[InteractionRecord]:
    """Keep the interactions of ``max_users`` users drawn uniformly (order preserved)."""
    users = sorted({r.user for r in records})
    if max_users <= 0 or len(users) <= max_users:
        return list(records)
    rng = np.random.default_rng(seed)
    chosen = {users[i] for i in rng.choice(len(users), size=max_users, replace=False)}
    logger.info("Subsampled %d of %d users", max_users, len(users))
    return [r for r in records if r.user in chosen]


def k_core_filter(records: Sequence[InteractionRecord], k: int) -> List[InteractionRecord]:
    """Prune until every user and every item has at least ``k`` interactions."""
    if k < 1:
        raise ConfigError(f"k-core threshold must be >= 1, got {k}")
    current = list(records)
    rounds = 0
    while True:
        users = Counter(r.user for r in current)
        items = Counter(r.item for r in current)
        kept = [r for r in current if users[r.user] >= k and items[r.item] >= k]
        rounds += 1
        if len(kept) == len(current):
            break
        current = kept
    if not current:
        logger.warning("%d-core filtering removed every interaction", k)
    logger.debug("%d-core reached after %d rounds: %d interactions", k, rounds, len(current))
    return current


def build_user_sequences(records: Sequence[InteractionRecord]) -> List[UserSequence]:
    """Per-user chronological sequences; equal timestamps keep file order."""
    grouped: Dict[str, List[InteractionRecord]] = defaultdict(list)
    for r in records:
        grouped[r.user].append(r)
    sequences = []
    for user in sorted(grouped):
        ordered = sorted(grouped[user], key=lambda r: r.timestamp)
        sequences.append(UserSequence(user, [r.item for r in ordered], [r.timestamp for r in ordered]))
    return sequences


def leave_one_out_split(sequences: Sequence[UserSequence]) -> DatasetSplit:
    """Last item to test, second-to-last to validation, the rest to train."""
    usable = [s for s in sequences if len(s) >= 3]
    dropped = len(sequences) - len(usable)
    if dropped:
        logger.warning("Dropped %d users with fewer than 3 interactions", dropped)
    items = sorted({item for s in usable for item in s.items})
    ids = {item: i + 1 for i, item in enumerate(items)}
    users = []
    for s in sorted(usable, key=lambda s: s.user):
        dense = [ids[i] for i in s.items]
        users.append(UserSplit(s.user, dense[:-2], dense[-2], dense[-1]))
    return DatasetSplit(users=users, items=items, dropped_users=dropped)


def window_pad(sequence: Sequence[int], n: int) -> np.ndarray:
    """The most recent ``min(len, n)`` ids, left-padded with 0 to length n."""
    if n < 1:
        raise ContractError(f"window length must be >= 1, got {n}")
    seq = np.asarray(sequence, dtype=np.int64).reshape(-1)[-n:]
    out = np.zeros(n, dtype=np.int64)
    if seq.size:
        out[n - seq.size:] = seq
    return out


def window_pad_many(sequences: Sequence[Sequence[int]], n: int) -> np.ndarray:
    if not len(sequences):
        return np.zeros((0, n), dtype=np.int64)
    return np.stack([window_pad(s, n) for s in sequences])


# ---------------------------------------------------------------------------
# factor binning
# ---------------------------------------------------------------------------

def bin_factor_values(items: Sequence[str], values: Sequence, num_bins: int,
                      kind: str = "numeric", name: str = "factor") -> BinSpec:
    """Fit equal-frequency numeric bins or first-appearance categorical bins."""
    if len(items) != len(values):
        raise ContractError("items and values differ in length")
    if kind == "categorical":
        categories: Dict[str, int] = {}
        for v in values:
            if v is None or v == "":
                continue
            categories.setdefault(str(v), len(categories))
        return BinSpec(name=name, kind=kind, categories=categories)

    if num_bins < 2:
        raise ConfigError(f"factor {name}: need at least 2 bins, got {num_bins}")
    numeric = []
    for v in values:
        try:
            x = float(v)
        except (TypeError, ValueError):
            continue
        if np.isfinite(x):
            numeric.append(x)
    arr = np.asarray(numeric, dtype=np.float64)
    if arr.size == 0 or np.all(arr == arr[0]):
        logger.warning("Factor %s is constant; using a single bin", name)
        return BinSpec(name=name, kind=kind)
    cuts = np.quantile(arr, [k / num_bins for k in range(1, num_bins)])
    boundaries = np.unique(cuts)
    boundaries = boundaries[boundaries > arr.min()]
    return BinSpec(name=name, kind=kind, boundaries=tuple(float(b) for b in boundaries))


def build_factor_tables(split: DatasetSplit, specs, columns: Dict[str, Dict[str, str]]):
    """One :class:`FactorTable` (and its :class:`BinSpec`) per factor spec.

    Bins are fitted on items that appear in some train portion, visited in the
    order of ``columns`` (file order), so categorical bins follow first appearance
    in the factors file.
    """
    from .discriminator import FIRST_BIN, UNKNOWN_BIN, FactorKind, FactorTable, item_id_table

    train_names = {split.item_name(i) for u in split.users for i in u.train}
    counts = split.train_item_counts()
    tables, bin_specs = [], []
    for spec in specs:
        if spec.kind is FactorKind.ITEM_ID:
            tables.append(item_id_table(split.num_items))
            bin_specs.append(BinSpec(name=spec.name, kind=spec.kind.value))
            continue
        if spec.kind is FactorKind.POPULARITY:
            raw = {split.item_name(i): str(int(counts[i])) for i in range(1, split.num_items + 1)}
            kind = "numeric"
        else:
            if spec.name not in columns:
                raise DataError(f"factor {spec.name} is not present in the factors file")
            raw = columns[spec.name]
            kind = spec.kind.value
        fit_items = [item for item in raw if item in train_names]
        bin_spec = bin_factor_values(fit_items, [raw[i] for i in fit_items], spec.num_bins, kind, spec.name)
        bins = np.zeros(split.num_items + 1, dtype=np.int64)
        unknown = 0
        for dense in range(1, split.num_items + 1):
            b = bin_spec.assign(raw.get(split.item_name(dense)))
            if b is None:
                bins[dense] = UNKNOWN_BIN
                unknown += 1
            else:
                bins[dense] = FIRST_BIN + b
        if unknown:
            logger.info("Factor %s: %d items in the unknown bin", spec.name, unknown)
        tables.append(FactorTable(spec.name, spec.kind, bins, size=FIRST_BIN + bin_spec.num_bins))
        bin_specs.append(bin_spec)
    return tables, bin_specs


def dataset_stats(split: DatasetSplit, num_factors: int = 0) -> Dict[str, object]:
    users = len(split.users)
    items = split.num_items
    interactions = split.num_interactions
    density = interactions / (users * items) if users and items else 0.0
    return {
        "users": users,
        "items": items,
        "interactions": interactions,
        "factors": num_factors,
        "avg_length": round(interactions / users, 4) if users else 0.0,
        "density": round(density, 6),
        "dropped_users": split.dropped_users,
    }
