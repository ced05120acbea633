"""Training ledger - append-only log of what each training epoch did.

One record per line, space-separated ``key=value`` pairs, for example::

    epoch=12 phase=G objective=-1.204511 reward=0.512300
    epoch=13 phase=D loss_category=1.301250 loss_price=1.355008

``phase`` is one of MLE, DPRE, G, D, EVAL. Records carry no wall-clock time
so identical runs write identical ledgers. Logging is best-effort: a ledger
failure is reported through the logger and never interrupts training.
"""

import logging
from pathlib import Path
from typing import Dict, List, Union

logger = logging.getLogger(__name__)

PHASES = ("MLE", "DPRE", "G", "D", "EVAL")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value).replace(" ", "_")


def format_record(**fields) -> str:
    return " ".join(f"{k}={format_value(v)}" for k, v in fields.items() if v is not None)


def log_record(path: Union[str, Path, None], **fields) -> None:
    """Append one record. Never raises.

    Args:
        path: Ledger file; ``None`` disables logging.
        fields: Record fields in output order (epoch, phase, loss, ...).
    """
    if path is None:
        return
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8", newline="\n") as f:
            f.write(format_record(**fields) + "\n")
    except Exception as e:
        logger.warning("Could not write training ledger %s: %s", path, e)


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_record(line: str) -> Dict[str, object]:
    record = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if sep:
            record[key] = _parse_value(value)
    return record


def read_ledger(path: Union[str, Path], phase: str = None) -> List[Dict[str, object]]:
    """All records of a ledger file, optionally only one phase. Empty on miss."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                record = parse_record(line)
                if phase is None or record.get("phase") == phase:
                    records.append(record)
    except OSError:
        return []
    return records


def truncate_after(path: Union[str, Path], epoch: int) -> None:
    """Drop records past ``epoch`` so a resumed run does not duplicate them."""
    path = Path(path)
    if not path.exists():
        return
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
        kept = [line for line in lines if line.strip() and int(parse_record(line).get("epoch", 0)) <= epoch]
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(line + "\n" for line in kept)
    except (OSError, ValueError) as e:
        logger.warning("Could not trim training ledger %s: %s", path, e)
