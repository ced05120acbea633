"""Export functionality for attribution tables and evaluation reports."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .data import DatasetSplit, window_pad_many
from .discriminator import DiscriminatorParams, rationality_scores
from .errors import ContractError, DataError
from .evaluation import MetricsReport


@dataclass
class AttributionRow:
    user: str
    position: int
    item: str
    scores: List[float]
    dominant: str


@dataclass
class AttributionTable:
    """Per-position rationality scores of every discriminator."""

    factors: List[str]
    rows: List[AttributionRow] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "factors": list(self.factors),
            "rows": [
                {
                    "user": r.user,
                    "position": r.position,
                    "item": r.item,
                    "scores": dict(zip(self.factors, r.scores)),
                    "dominant": r.dominant,
                }
                for r in self.rows
            ],
        }


def dominant_factor(scores: Sequence[float], factors: Sequence[str]) -> str:
    """Factor with the highest score; the first one wins ties."""
    if len(scores) != len(factors) or not factors:
        raise ContractError("need one score per factor")
    return factors[int(np.argmax(np.asarray(scores, dtype=np.float64)))]


def attribute_sequence(discs: Sequence[DiscriminatorParams], items: Sequence[int], user: str = "",
                       names: Optional[Sequence[str]] = None) -> List[AttributionRow]:
    """Score every prefix ``items[:t]`` with every discriminator.

    Args:
        discs: Discriminators, one column each
        items: Dense item ids of one sequence
        user: Label copied into each row
        names: Item labels indexed by dense id; ids are printed when omitted

    Returns:
        One row per position, 1-based
    """
    if not discs:
        raise ContractError("attribution needs at least one discriminator")
    if not items:
        return []
    factors = [d.name for d in discs]
    n = discs[0].config.n
    windows = window_pad_many([list(items[:t]) for t in range(1, len(items) + 1)], n)
    columns = np.stack([rationality_scores(d, windows) for d in discs], axis=1)
    rows = []
    for t, item in enumerate(items, start=1):
        scores = [float(x) for x in columns[t - 1]]
        label = names[item] if names is not None else str(item)
        rows.append(AttributionRow(user, t, label, scores, dominant_factor(scores, factors)))
    return rows


def build_attribution(discs: Sequence[DiscriminatorParams], split: DatasetSplit,
                      users: Optional[Sequence[str]] = None, limit: int = 0) -> AttributionTable:
    """Attribution table over full user sequences (train, validation and test items).

    Raises:
        DataError: A requested user is not in the split
    """
    if users:
        selected = [split.user(u) for u in users]
    else:
        selected = list(split.users[:limit] if limit else split.users)
    names = [""] + list(split.items)
    table = AttributionTable(factors=[d.name for d in discs])
    for u in selected:
        table.rows.extend(attribute_sequence(discs, u.full, u.user, names))
    return table


def export_attribution_tsv(table: AttributionTable, filepath: str) -> str:
    """
    Export an attribution table as TSV.

    Args:
        table: Attribution table
        filepath: Output file path

    Returns:
        Path to the created file
    """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["user", "position", "item"] + [f"score_{name}" for name in table.factors] + ["dominant"])
        for r in table.rows:
            writer.writerow([r.user, r.position, r.item] + [repr(s) for s in r.scores] + [r.dominant])

    return str(path)


def export_json(data: Dict[str, Any], filepath: str, pretty: bool = True) -> str:
    """
    Export data to a JSON file with sorted keys.

    Args:
        data: Data to export
        filepath: Output file path
        pretty: Pretty print with indentation

    Returns:
        Path to the created file
    """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2 if pretty else None, ensure_ascii=False, sort_keys=True)
        f.write("\n")

    return str(path)


def read_attribution_tsv(filepath: str) -> AttributionTable:
    path = Path(filepath)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f, delimiter="\t")
            header = next(reader)
            factors = [h[len("score_"):] for h in header[3:-1]]
            rows = [
                AttributionRow(rec[0], int(rec[1]), rec[2], [float(x) for x in rec[3:-1]], rec[-1])
                for rec in reader if rec
            ]
    except (OSError, StopIteration, ValueError, IndexError) as e:
        raise DataError(f"cannot read attribution table {path}: {e}") from e
    return AttributionTable(factors=factors, rows=rows)


def export_metrics(report: MetricsReport, filepath: str) -> str:
    """Write a report as key=value lines (parsed back by ``MetricsReport.from_lines``)."""
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(line + "\n" for line in report.to_lines())
    return str(path)


def read_metrics(filepath: str) -> MetricsReport:
    try:
        with open(filepath, encoding="utf-8") as f:
            return MetricsReport.from_lines(f)
    except OSError as e:
        raise DataError(f"cannot read metrics report {filepath}: {e}") from e


def export_user_metrics(report: MetricsReport, filepath: str) -> str:
    """Per-user rank, NDCG, hit and reciprocal rank as TSV."""
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = report.cutoff
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["user", "rank", f"ndcg@{k}", f"hr@{k}", "rr"])
        for r in report.per_user:
            writer.writerow([r.user, r.rank, repr(r.ndcg), r.hr, repr(r.rr)])
    return str(path)
