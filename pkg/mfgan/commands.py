"""Stage runners behind the CLI commands.

Each runner takes a validated :class:`RunConfig`, does its work on disk and
returns a small result object; printing is left to ``cli.py``.

Output directory layout::

    <out>/
        config.effective        effective key=value config
        manifest/               split manifest (see manifest.py)
        train.log               training ledger
        checkpoints/latest.ckpt
        eval/<model>.metrics    key=value report per model
        eval/<model>.users.tsv  per-user ranks
        attribution.tsv / attribution.json
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .checkpoint import load_checkpoint, restore_state, save_checkpoint, structure_digest
from .config import RunConfig, write_effective_config
from .data import (
    BinSpec,
    DatasetSplit,
    build_factor_tables,
    build_user_sequences,
    dataset_stats,
    ingest_factors,
    ingest_interactions,
    k_core_filter,
    leave_one_out_split,
    subsample_users,
)
from .discriminator import FactorKind, FactorTable
from .errors import CheckpointError, ConfigError, DataError
from .evaluation import EvalProtocol, GeneratorScorer, MetricsReport, evaluate_model, poprec_baseline
from .export import (
    AttributionTable,
    build_attribution,
    export_attribution_tsv,
    export_json,
    export_metrics,
    export_user_metrics,
)
from .ledger import truncate_after
from .manifest import read_manifest, write_manifest
from .trainer import Trainer, TrainerState, init_state

logger = logging.getLogger(__name__)


@dataclass
class PrepResult:
    split: DatasetSplit
    tables: List[FactorTable]
    bin_specs: List[BinSpec]
    stats: Dict[str, object]
    manifest_dir: Path


@dataclass
class TrainResult:
    state: TrainerState
    checkpoint: Path
    ledger: Path
    resumed: bool = False


@dataclass
class EvaluateResult:
    reports: Dict[str, MetricsReport]
    files: List[str] = field(default_factory=list)


@dataclass
class AttributeResult:
    table: AttributionTable
    tsv: str
    json: str


def run_prep(config: RunConfig) -> PrepResult:
    """Ingest, filter, split and bin; write the manifest."""
    if not config.interactions:
        raise ConfigError("no interactions file configured (key: interactions)")
    specs = config.factor_list()
    records = ingest_interactions(config.interactions)
    records = subsample_users(records, config.max_users, config.training.seed)
    records = k_core_filter(records, config.k_core)
    split = leave_one_out_split(build_user_sequences(records))
    if not split.users:
        raise DataError(f"no user keeps 3 interactions after {config.k_core}-core filtering")

    columns: Dict[str, Dict[str, str]] = {}
    if config.factors:
        _, columns = ingest_factors(config.factors)
    elif any(s.kind in (FactorKind.CATEGORICAL, FactorKind.NUMERIC) for s in specs):
        raise ConfigError("factor_specs name file-backed factors but no factors file is configured")
    tables, bin_specs = build_factor_tables(split, specs, columns)
    stats = dataset_stats(split, len(tables))
    manifest_dir = write_manifest(config.manifest_dir, split, tables, bin_specs, stats)
    write_effective_config(config)
    return PrepResult(split, tables, bin_specs, stats, manifest_dir)


def _restore(config: RunConfig, split: DatasetSplit, tables: Sequence[FactorTable], path: Path) -> TrainerState:
    digest = structure_digest(config.training, split.num_items, tables)
    data = load_checkpoint(path, expected_digest=digest)
    state = init_state(config.training, split.num_items, tables)
    return restore_state(state, data)


def run_train(config: RunConfig, resume: bool = False, rounds: Optional[int] = None,
              on_progress: Optional[Callable[[TrainerState], None]] = None) -> TrainResult:
    """Pretrain, then adversarially train, checkpointing as it goes.

    Args:
        config: Validated run configuration
        resume: Continue from the configured checkpoint when it exists
        rounds: Cap on the total number of adversarial rounds
        on_progress: Called with the state after every epoch or round

    Returns:
        TrainResult with the final state
    """
    split, tables, _ = read_manifest(config.manifest_dir)
    write_effective_config(config)
    digest = structure_digest(config.training, split.num_items, tables)
    ckpt = config.checkpoint_path
    ledger = config.ledger_path

    resumed = False
    if resume and ckpt.exists():
        state = _restore(config, split, tables, ckpt)
        truncate_after(ledger, state.epoch)
        resumed = True
        logger.info("Resuming from %s at stage %s, epoch %d", ckpt, state.stage, state.epoch)
    else:
        if resume:
            logger.warning("No checkpoint at %s; starting a fresh run", ckpt)
        if ledger.exists():
            ledger.unlink()
        state = init_state(config.training, split.num_items, tables)

    trainer = Trainer(split, tables, config.training, ledger_path=ledger, state=state)
    for count, s in enumerate(trainer.run(rounds=rounds), start=1):
        if count % config.checkpoint_every == 0:
            save_checkpoint(s, ckpt, digest)
        if on_progress is not None:
            on_progress(s)
    save_checkpoint(trainer.state, ckpt, digest)
    return TrainResult(trainer.state, ckpt, ledger, resumed)


def _protocol(config: RunConfig) -> EvalProtocol:
    return EvalProtocol(config.training.eval_negatives, config.training.eval_cutoff, config.training.seed)


def run_evaluate(config: RunConfig, target: str = "test") -> EvaluateResult:
    """PopRec plus the checkpointed generator (when a checkpoint exists)."""
    split, tables, _ = read_manifest(config.manifest_dir)
    protocol = _protocol(config)
    reports = {"PopRec": evaluate_model(poprec_baseline(split), split, protocol, target=target)}

    ckpt = config.checkpoint_path
    if ckpt.exists():
        state = _restore(config, split, tables, ckpt)
        reports["MFGAN"] = evaluate_model(GeneratorScorer(state.generator), split, protocol, target=target)
    elif config.checkpoint:
        raise CheckpointError(f"checkpoint not found: {ckpt}")
    else:
        logger.info("No checkpoint at %s; reporting the popularity baseline only", ckpt)

    files = []
    eval_dir = config.out_dir / "eval"
    for name, report in reports.items():
        slug = name.lower()
        files.append(export_metrics(report, eval_dir / f"{slug}.metrics"))
        files.append(export_user_metrics(report, eval_dir / f"{slug}.users.tsv"))
    return EvaluateResult(reports, files)


def run_attribute(config: RunConfig, users: Sequence[str] = (), limit: int = 0) -> AttributeResult:
    """Per-position discriminator scores for selected users, as TSV and JSON."""
    split, tables, _ = read_manifest(config.manifest_dir)
    ckpt = config.checkpoint_path
    if not ckpt.exists():
        raise CheckpointError(f"checkpoint not found: {ckpt}; run `mfgan train` first")
    state = _restore(config, split, tables, ckpt)
    table = build_attribution(state.discriminators, split, users=list(users), limit=limit)
    tsv = export_attribution_tsv(table, config.out_dir / "attribution.tsv")
    json_path = export_json(table.to_dict(), config.out_dir / "attribution.json")
    return AttributeResult(table, tsv, json_path)
