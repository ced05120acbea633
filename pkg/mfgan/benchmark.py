"""Desk-scale comparison on synthetic data.

For each seed the same prepared dataset is used to train:

    MLE     generator pretraining only (the self-attentive baseline)
    MFGAN   the pretrained generator refined against one discriminator per factor
    SDSF    the same pretrained generator refined against a single item-id discriminator

and every model, plus PopRec, is scored on the test targets. The stability
figure is the standard deviation of the per-epoch generator objective over
the final quarter of adversarial training.

The ablation run refines the same pretrained generator once per
:class:`AblationSetting` and reports NDCG per setting and seed.
"""

import logging
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .commands import run_prep
from .config import RunConfig
from .data import DatasetSplit
from .discriminator import FactorTable, Variant
from .errors import ConfigError
from .evaluation import EvalProtocol, GeneratorScorer, evaluate_model, poprec_baseline
from .export import export_json
from .optim import Adam
from .synthetic import FACTOR_SPECS, SyntheticConfig, write_synthetic
from .trainer import Trainer, TrainerState, TrainingConfig, init_state

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def desk_training_config(seed: int = 0) -> TrainingConfig:
    """Small model and short schedule that finish in minutes on a laptop."""
    return TrainingConfig(
        d=16, heads=1, gen_blocks=2, window=20, dropout=0.2,
        lr=0.005, gen_batch=128, disc_batch=64,
        pretrain_epochs=30, disc_pretrain_epochs=3,
        adversarial_rounds=4, g_epochs=4, d_epochs=1,
        patience=4, seed=seed,
    )


def final_quartile_std(objectives: Sequence[float]) -> float:
    """Population standard deviation of the last quarter (at least one value)."""
    if not objectives:
        return 0.0
    tail = list(objectives)[-max(1, len(objectives) // 4):]
    return float(np.std(np.asarray(tail, dtype=np.float64)))


@dataclass
class SeedResult:
    seed: int
    poprec: float
    mle: float
    mfgan: float
    sdsf: float
    std_mfgan: float
    std_sdsf: float


@dataclass
class BenchmarkReport:
    cutoff: int
    rows: List[SeedResult] = field(default_factory=list)

    def median(self, column: str) -> float:
        return float(statistics.median(getattr(r, column) for r in self.rows)) if self.rows else 0.0

    @property
    def mle_beats_poprec(self) -> bool:
        return self.median("mle") > self.median("poprec")

    @property
    def mfgan_at_least_mle(self) -> bool:
        return self.median("mfgan") >= self.median("mle")

    @property
    def multi_factor_steadier(self) -> bool:
        return self.median("std_mfgan") <= self.median("std_sdsf")

    def to_dict(self) -> Dict[str, object]:
        return {
            "cutoff": self.cutoff,
            "seeds": [r.__dict__ for r in self.rows],
            "median": {c: self.median(c) for c in ("poprec", "mle", "mfgan", "sdsf", "std_mfgan", "std_sdsf")},
            "mle_beats_poprec": self.mle_beats_poprec,
            "mfgan_at_least_mle": self.mfgan_at_least_mle,
            "multi_factor_steadier": self.multi_factor_steadier,
        }


def _exhaust(trainer: Trainer, **kwargs) -> TrainerState:
    for _ in trainer.run(**kwargs):
        pass
    return trainer.state


def _refine(split: DatasetSplit, tables: Sequence[FactorTable], config: TrainingConfig,
            pretrained: TrainerState) -> TrainerState:
    """Adversarial training that starts from a copy of a pretrained generator."""
    state = init_state(config, split.num_items, tables)
    state.generator = pretrained.generator.clone()
    state.gen_optimizer = Adam(state.generator.named_parameters(), lr=config.lr)
    state.stage = "generator_pretrained"
    state.gen_epochs_done = pretrained.gen_epochs_done
    state.epoch = pretrained.epoch
    return _exhaust(Trainer(split, tables, config, state=state))


def run_seed(split: DatasetSplit, tables: Sequence[FactorTable], config: TrainingConfig) -> SeedResult:
    protocol = EvalProtocol(config.eval_negatives, config.eval_cutoff, config.seed)

    def ndcg(scorer) -> float:
        return evaluate_model(scorer, split, protocol).ndcg

    full_cfg = replace(config, variant=Variant.FULL.value)
    pretrained = _exhaust(Trainer(split, tables, full_cfg), pretrain_only=True)
    mle = ndcg(GeneratorScorer(pretrained.generator))
    full = _refine(split, tables, full_cfg, pretrained)
    sdsf = _refine(split, tables, replace(config, variant=Variant.SDSF.value), pretrained)
    return SeedResult(
        seed=config.seed,
        poprec=ndcg(poprec_baseline(split)),
        mle=mle,
        mfgan=ndcg(GeneratorScorer(full.generator)),
        sdsf=ndcg(GeneratorScorer(sdsf.generator)),
        std_mfgan=final_quartile_std(full.objectives),
        std_sdsf=final_quartile_std(sdsf.objectives),
    )


def run_benchmark(out_dir, seeds: Sequence[int] = DEFAULT_SEEDS, data: SyntheticConfig = SyntheticConfig(),
                  training: Optional[TrainingConfig] = None,
                  on_seed: Optional[Callable[[SeedResult], None]] = None) -> BenchmarkReport:
    """
    Generate the synthetic dataset, prepare it once and train every model per seed.

    Args:
        out_dir: Directory for data, manifest and benchmark.json
        seeds: Training seeds
        data: Synthetic dataset settings
        training: Base training config; its seed is replaced per run
        on_seed: Called after each seed finishes

    Returns:
        BenchmarkReport with one row per seed
    """
    out = Path(out_dir)
    interactions, factors = write_synthetic(out / "data", data)
    base = training or desk_training_config()
    prep = run_prep(RunConfig(interactions=interactions, factors=factors, factor_specs=FACTOR_SPECS,
                              k_core=1, out=str(out), training=base))
    report = BenchmarkReport(cutoff=base.eval_cutoff)
    for seed in seeds:
        result = run_seed(prep.split, prep.tables, replace(base, seed=int(seed)))
        logger.info("Seed %d: PopRec %.4f  MLE %.4f  MFGAN %.4f  SDSF %.4f", result.seed, result.poprec,
                    result.mle, result.mfgan, result.sdsf)
        report.rows.append(result)
        if on_seed is not None:
            on_seed(result)
    if not report.multi_factor_steadier:
        logger.warning("Multi-factor objective was not steadier than SDSF (median std %.4f vs %.4f)",
                       report.median("std_mfgan"), report.median("std_sdsf"))
    export_json(report.to_dict(), out / "benchmark.json")
    return report


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

# Identifier first, then the synthetic factors in file order.
ABLATION_FACTOR_SPECS = "item:item-id," + FACTOR_SPECS


@dataclass(frozen=True)
class AblationSetting:
    """One discriminator set trained against the shared pretrained generator."""

    label: str
    factors: Tuple[str, ...]
    variant: str = Variant.FULL.value
    lam_mode: str = "mean"

    @property
    def key(self) -> Tuple[Tuple[str, ...], str, str]:
        return self.factors, self.variant, self.lam_mode


def ablation_settings(factors: Sequence[str]) -> List[AblationSetting]:
    """Growing prefixes of ``factors`` and single removals, then variants of the full set.

    The variants are the sdaf and uni-d layouts followed by the max and min
    reward regimes.
    """
    factors = tuple(factors)
    if len(factors) < 2:
        raise ConfigError(f"an ablation needs at least two factors, got {list(factors)}")
    settings = [AblationSetting("+".join(factors[:k]), factors[:k]) for k in range(1, len(factors) + 1)]
    settings += [AblationSetting(f"-{name}", tuple(f for f in factors if f != name)) for name in factors]
    settings += [AblationSetting(v.value, factors, variant=v.value) for v in (Variant.SDAF, Variant.UNI_D)]
    settings += [AblationSetting(f"lam={mode}", factors, lam_mode=mode) for mode in ("max", "min")]
    return settings


@dataclass
class AblationReport:
    cutoff: int
    seeds: List[int] = field(default_factory=list)
    scores: Dict[str, List[float]] = field(default_factory=dict)

    def add(self, seed: int, row: Dict[str, float]) -> None:
        self.seeds.append(seed)
        for label, value in row.items():
            self.scores.setdefault(label, []).append(value)

    def median(self, label: str) -> float:
        values = self.scores.get(label, [])
        return float(statistics.median(values)) if values else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "cutoff": self.cutoff,
            "seeds": self.seeds,
            "rows": [{"label": label, "ndcg": values, "median": self.median(label)}
                     for label, values in self.scores.items()],
        }


def run_ablation_seed(split: DatasetSplit, tables: Sequence[FactorTable], config: TrainingConfig,
                      settings: Sequence[AblationSetting]) -> Dict[str, float]:
    """NDCG of the MLE generator, then of every setting refined from it (duplicates trained once)."""
    protocol = EvalProtocol(config.eval_negatives, config.eval_cutoff, config.seed)
    by_name = {t.name: t for t in tables}
    for s in settings:
        missing = [name for name in s.factors if name not in by_name]
        if missing:
            raise ConfigError(f"ablation setting {s.label!r} names unknown factors: {', '.join(missing)}")

    pretrained = _exhaust(Trainer(split, tables, replace(config, variant=Variant.FULL.value)), pretrain_only=True)
    row = {"MLE": evaluate_model(GeneratorScorer(pretrained.generator), split, protocol).ndcg}
    trained: Dict[tuple, float] = {}
    for s in settings:
        if s.key not in trained:
            cfg = replace(config, variant=s.variant, lam_mode=s.lam_mode)
            state = _refine(split, [by_name[name] for name in s.factors], cfg, pretrained)
            trained[s.key] = evaluate_model(GeneratorScorer(state.generator), split, protocol).ndcg
            logger.info("Seed %d, %s: NDCG %.4f", config.seed, s.label, trained[s.key])
        row[s.label] = trained[s.key]
    return row


def run_ablation(out_dir, seeds: Sequence[int] = DEFAULT_SEEDS, data: SyntheticConfig = SyntheticConfig(),
                 training: Optional[TrainingConfig] = None,
                 settings: Optional[Sequence[AblationSetting]] = None,
                 on_seed: Optional[Callable[[int], None]] = None) -> AblationReport:
    """
    Retrain the adversarial stage with different discriminator sets on synthetic data.

    Args:
        out_dir: Directory for data, manifest and ablation.json
        seeds: Training seeds
        data: Synthetic dataset settings
        training: Base training config; its seed is replaced per run
        settings: Discriminator sets to compare (default: ablation_settings over
            item, category, price and popularity)
        on_seed: Called with the seed after each seed finishes

    Returns:
        AblationReport with one NDCG per setting and seed
    """
    out = Path(out_dir)
    interactions, factors = write_synthetic(out / "data", data)
    base = training or desk_training_config()
    prep = run_prep(RunConfig(interactions=interactions, factors=factors, factor_specs=ABLATION_FACTOR_SPECS,
                              k_core=1, out=str(out), training=base))
    settings = list(settings) if settings is not None else ablation_settings([t.name for t in prep.tables])
    report = AblationReport(cutoff=base.eval_cutoff)
    for seed in seeds:
        report.add(int(seed), run_ablation_seed(prep.split, prep.tables, replace(base, seed=int(seed)), settings))
        if on_seed is not None:
            on_seed(int(seed))
    export_json(report.to_dict(), out / "ablation.json")
    return report
