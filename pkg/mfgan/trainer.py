"""Adversarial training loop.

Stages, in order, each resumable from a saved :class:`TrainerState`:

    init                        generator MLE pretraining epochs
    generator_pretrained        discriminator pretraining epochs
    discriminators_pretrained   (accuracy report)
    adversarial                 rounds of G epochs then D epochs
    done                        early stop reached

Every random draw comes from ``TrainerState.rng`` (or from generators seeded
by it), so a run restored from a checkpoint continues bit for bit.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .attention import EVAL, AttentionConfig, ForwardMode
from .data import DatasetSplit, window_pad, window_pad_many
from .discriminator import (
    DiscriminatorParams,
    FactorTable,
    Variant,
    build_discriminators,
    discriminator_loss,
    rationality_scores,
)
from .errors import ConfigError, ContractError, DataError
from .evaluation import EvalProtocol, GeneratorScorer, evaluate_model
from .generator import (
    GeneratorParams,
    forward_all_positions,
    init_generator,
    mle_loss_batch,
    next_item_logits,
    sample_categorical,
    training_windows,
)
from .ledger import log_record
from .optim import Adam
from .reward import PRESETS, CombinationParams, q_value

logger = logging.getLogger(__name__)

STAGES = ("init", "generator_pretrained", "discriminators_pretrained", "adversarial", "done")

# Largest catalog exact_policy_gradient will enumerate.
MAX_ENUMERATED_ITEMS = 64


@dataclass
class TrainingConfig:
    """Model and optimisation settings. Defaults are the full-scale setup."""

    d: int = 50
    heads: int = 1
    gen_blocks: int = 2
    window: int = 50
    dropout: float = 0.2
    layer_norm: bool = True
    residual: bool = True
    variant: str = "full"
    lam_mode: str = "mean"
    lam: float = 0.0
    lr: float = 0.001
    disc_lr: float = 0.0
    gen_batch: int = 128
    disc_batch: int = 16
    pretrain_epochs: int = 50
    disc_pretrain_epochs: int = 5
    adversarial_rounds: int = 10
    g_epochs: int = 100
    d_epochs: int = 1
    steps_per_epoch: int = 0
    samples_per_position: int = 1
    baseline: bool = False
    parallel_d: bool = False
    patience: int = 20
    eval_negatives: int = 100
    eval_cutoff: int = 10
    seed: int = 42

    def validate(self) -> "TrainingConfig":
        positive = ("d", "heads", "gen_blocks", "window", "gen_batch", "disc_batch",
                    "g_epochs", "d_epochs", "samples_per_position", "patience",
                    "eval_negatives", "eval_cutoff")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("pretrain_epochs", "disc_pretrain_epochs", "adversarial_rounds", "steps_per_epoch"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.d % self.heads != 0:
            raise ConfigError(f"d={self.d} must be divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr <= 0 or self.disc_lr < 0:
            raise ConfigError("learning rates must be positive")
        if self.lam_mode != "soft" and self.lam_mode not in PRESETS:
            raise ConfigError(f"unknown lam_mode {self.lam_mode!r}")
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of "
                              f"{', '.join(v.value for v in Variant)}") from None
        self.combination()
        return self

    @property
    def discriminator_lr(self) -> float:
        return self.disc_lr or self.lr

    def combination(self) -> CombinationParams:
        return CombinationParams.from_mode(self.lam_mode, self.lam)

    def generator_config(self) -> AttentionConfig:
        return AttentionConfig(d=self.d, h=self.heads, L=self.gen_blocks, n=self.window, causal=True,
                               dropout_p=self.dropout, layer_norm=self.layer_norm, residual=self.residual)

    def discriminator_config(self) -> AttentionConfig:
        return AttentionConfig(d=self.d, h=self.heads, L=1, n=self.window, causal=False,
                               dropout_p=self.dropout, layer_norm=self.layer_norm, residual=self.residual)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass
class TrainerState:
    generator: GeneratorParams
    discriminators: List[DiscriminatorParams]
    gen_optimizer: Adam
    disc_optimizers: List[Adam]
    rng: np.random.Generator
    stage: str = "init"
    epoch: int = 0
    gen_epochs_done: int = 0
    disc_epochs_done: int = 0
    round: int = 0
    best_ndcg: float = -1.0
    stale_rounds: int = 0
    objectives: List[float] = field(default_factory=list)


@dataclass
class NegativeBatch:
    """Real windows ending at a sampled position and their generated twins."""

    real: np.ndarray
    fake: np.ndarray
    positions: np.ndarray


@dataclass
class GStepResult:
    objective: float
    reward: float
    positions: int


def init_state(config: TrainingConfig, num_items: int, tables: Sequence[FactorTable]) -> TrainerState:
    config.validate()
    gen_seed, disc_seed, loop_seed = np.random.SeedSequence(config.seed).generate_state(3)
    generator = init_generator(config.generator_config(), num_items, int(gen_seed))
    discs = build_discriminators(config.variant, tables, num_items, config.discriminator_config(), int(disc_seed))
    return TrainerState(
        generator=generator,
        discriminators=discs,
        gen_optimizer=Adam(generator.named_parameters(), lr=config.lr),
        disc_optimizers=[Adam(d.named_parameters(), lr=config.discriminator_lr) for d in discs],
        rng=np.random.default_rng(int(loop_seed)),
    )


def _softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def _batches(count: int, size: int, rng: np.random.Generator, cap: int = 0) -> List[np.ndarray]:
    order = rng.permutation(count)
    batches = [order[i:i + size] for i in range(0, count, size)]
    return batches[:cap] if cap > 0 else batches


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]+", "_", name)


def mle_examples(sequences: Sequence[Sequence[int]], n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked teacher-forcing windows for every sequence with a next-item target."""
    pairs = [training_windows(s, n) for s in sequences if len(s) >= 2]
    if not pairs:
        raise DataError("no training sequence has two or more items")
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# ---------------------------------------------------------------------------
# generator pretraining
# ---------------------------------------------------------------------------

def generator_epoch(gen: GeneratorParams, optimizer: Adam, inputs: np.ndarray, targets: np.ndarray,
                    config: TrainingConfig, rng: np.random.Generator) -> float:
    """One MLE pass; returns the mean batch loss."""
    losses = []
    mode = ForwardMode(training=True, rng=rng)
    for idx in _batches(len(inputs), config.gen_batch, rng, config.steps_per_epoch):
        loss = mle_loss_batch(gen, inputs[idx], targets[idx], mode)
        optimizer.step(ad.backward(loss))
        losses.append(loss.item())
    return float(np.mean(losses))


def pretrain_generator(split: DatasetSplit, config: TrainingConfig, gen: Optional[GeneratorParams] = None,
                       rng: Optional[np.random.Generator] = None, ledger_path=None) -> GeneratorParams:
    """Fit the generator by maximum likelihood for ``config.pretrain_epochs`` passes."""
    config.validate()
    if not split.users:
        raise DataError("cannot pretrain on an empty split")
    gen_seed, _, loop_seed = np.random.SeedSequence(config.seed).generate_state(3)
    gen = gen or init_generator(config.generator_config(), split.num_items, int(gen_seed))
    rng = rng or np.random.default_rng(int(loop_seed))
    optimizer = Adam(gen.named_parameters(), lr=config.lr)
    inputs, targets = mle_examples(split.train_sequences(), config.window)
    for epoch in range(1, config.pretrain_epochs + 1):
        loss = generator_epoch(gen, optimizer, inputs, targets, config, rng)
        log_record(ledger_path, epoch=epoch, phase="MLE", loss=loss)
    return gen


# ---------------------------------------------------------------------------
# negatives and discriminator steps
# ---------------------------------------------------------------------------

def generate_negatives(gen: GeneratorParams, real_batch: Sequence[Sequence[int]],
                       rng: np.random.Generator) -> NegativeBatch:
    """For each sequence pick a position t >= 1 and swap item t for a generator draw.

    The real window is ``seq[:t+1]``; the fake one is ``seq[:t]`` followed by
    the sampled item. Both are right-aligned, so they differ only in the last
    column.
    """
    seqs = [[int(i) for i in s if int(i) != 0] for s in real_batch]
    if not seqs:
        raise ContractError("cannot generate negatives for an empty batch")
    lengths = np.asarray([len(s) for s in seqs], dtype=np.int64)
    if np.any(lengths < 2):
        raise ContractError("negative generation needs sequences with at least 2 items")
    n = gen.config.n
    positions = rng.integers(1, lengths)
    real = window_pad_many([s[:t + 1] for s, t in zip(seqs, positions)], n)
    prefixes = window_pad_many([s[:t] for s, t in zip(seqs, positions)], n)
    with ad.no_grad():
        probs = _softmax64(next_item_logits(gen, prefixes).data)
    fake = real.copy()
    fake[:, -1] = sample_categorical(probs, rng) + 1
    return NegativeBatch(real=real, fake=fake, positions=positions)


def _disc_update(disc: DiscriminatorParams, optimizer: Adam, real: np.ndarray, fake: np.ndarray,
                 rng: np.random.Generator) -> float:
    loss = discriminator_loss(disc, real, fake, ForwardMode(training=True, rng=rng))
    optimizer.step(ad.backward(loss))
    return loss.item()


def d_step(discs: Sequence[DiscriminatorParams], optimizers: Sequence[Adam], real: np.ndarray,
           fake: np.ndarray, rngs: Sequence[np.random.Generator], parallel: bool = False) -> List[float]:
    """One optimizer step per discriminator on the two-term loss.

    Each discriminator owns its parameters, optimizer and dropout rng, so the
    threaded path gives the same result as the sequential one.
    """
    if len(real) == 0 or len(fake) == 0:
        raise ContractError("d_step needs non-empty real and fake batches")
    jobs = list(zip(discs, optimizers, rngs))
    if parallel and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            futures = [pool.submit(_disc_update, d, o, real, fake, r) for d, o, r in jobs]
            return [f.result() for f in futures]
    return [_disc_update(d, o, real, fake, r) for d, o, r in jobs]


def _spawn_rngs(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    return [np.random.default_rng(int(s)) for s in rng.integers(0, 2 ** 63 - 1, size=count)]


def discriminator_epoch(gen: GeneratorParams, discs: Sequence[DiscriminatorParams], optimizers: Sequence[Adam],
                        sequences: Sequence[Sequence[int]], config: TrainingConfig,
                        rng: np.random.Generator) -> Dict[str, float]:
    """One pass of balanced real/fake batches; returns mean loss per discriminator."""
    seqs = [s for s in sequences if len(s) >= 2]
    if not seqs:
        raise DataError("no sequence is long enough to build real/fake pairs")
    totals = np.zeros(len(discs))
    steps = 0
    for idx in _batches(len(seqs), config.disc_batch, rng, config.steps_per_epoch):
        negatives = generate_negatives(gen, [seqs[i] for i in idx], rng)
        losses = d_step(discs, optimizers, negatives.real, negatives.fake,
                        _spawn_rngs(rng, len(discs)), config.parallel_d)
        totals += losses
        steps += 1
    return {d.name: float(t / steps) for d, t in zip(discs, totals)}


def discriminator_accuracy(gen: GeneratorParams, discs: Sequence[DiscriminatorParams],
                           sequences: Sequence[Sequence[int]], rng: np.random.Generator) -> Dict[str, float]:
    """Share of real windows scored > 0.5 and fake windows scored < 0.5."""
    seqs = [s for s in sequences if len(s) >= 2]
    if not seqs:
        return {d.name: 0.0 for d in discs}
    negatives = generate_negatives(gen, seqs, rng)
    out = {}
    for disc in discs:
        real = rationality_scores(disc, negatives.real)
        fake = rationality_scores(disc, negatives.fake)
        out[disc.name] = float((np.sum(real > 0.5) + np.sum(fake < 0.5)) / (len(real) + len(fake)))
    return out


def pretrain_discriminators(discs: Sequence[DiscriminatorParams], gen: GeneratorParams, split: DatasetSplit,
                            config: TrainingConfig, rng: np.random.Generator,
                            optimizers: Optional[Sequence[Adam]] = None,
                            ledger_path=None) -> Tuple[List[DiscriminatorParams], Dict[str, float]]:
    """Train every discriminator against the frozen generator, then report held-out accuracy."""
    optimizers = optimizers or [Adam(d.named_parameters(), lr=config.discriminator_lr) for d in discs]
    for epoch in range(1, config.disc_pretrain_epochs + 1):
        losses = discriminator_epoch(gen, discs, optimizers, split.train_sequences(), config, rng)
        log_record(ledger_path, epoch=epoch, phase="DPRE",
                   **{f"loss_{_safe_name(k)}": v for k, v in losses.items()})
    held_out = [u.train + [u.valid_target] for u in split.users]
    accuracy = discriminator_accuracy(gen, discs, held_out, np.random.default_rng([config.seed, 1]))
    return list(discs), accuracy


# ---------------------------------------------------------------------------
# policy gradient
# ---------------------------------------------------------------------------

def _append_action(inputs: np.ndarray, row: int, col: int, action: int) -> np.ndarray:
    n = inputs.shape[1]
    window = np.zeros(n, dtype=np.int64)
    prefix = inputs[row, max(0, col + 2 - n):col + 1]
    window[n - 1 - len(prefix):n - 1] = prefix
    window[-1] = action
    return window


def score_windows(discs: Sequence[DiscriminatorParams], windows: np.ndarray) -> np.ndarray:
    """Rationality scores ``[B, m]``; evaluation mode, off the tape."""
    return np.stack([rationality_scores(d, windows) for d in discs], axis=1)


def policy_gradient_loss(log_probs: ad.Tensor, rewards: np.ndarray) -> ad.Tensor:
    """-mean(reward * log pi(action)); rewards are constants."""
    weights = ad.Tensor(np.asarray(rewards).astype(log_probs.dtype))
    return ad.scale(ad.reduce_mean(ad.mul(weights, log_probs)), -1.0)


def g_step(gen: GeneratorParams, discs: Sequence[DiscriminatorParams], optimizer: Adam,
           batch: Sequence[Sequence[int]], config: TrainingConfig, rng: np.random.Generator) -> GStepResult:
    """One REINFORCE ascent step over every teacher-forced position of ``batch``.

    At each real position the generator samples ``samples_per_position``
    actions, every discriminator scores prefix+action, the scores are combined
    into Q and the step follows mean(Q * grad log G(action | prefix)).

    Actions are drawn from the evaluation-mode policy; the log-probabilities
    that carry the gradient come from a training-mode (dropout) forward pass.
    """
    inputs, targets = mle_examples(batch, gen.config.n)
    combination = config.combination()
    with ad.no_grad():
        policy = forward_all_positions(gen, inputs, EVAL).data
    logits = forward_all_positions(gen, inputs, ForwardMode(training=True, rng=rng))
    log_probs = ad.log_softmax(logits)

    rows, cols = np.nonzero(targets != 0)
    k = config.samples_per_position
    rows, cols = np.repeat(rows, k), np.repeat(cols, k)
    actions = sample_categorical(_softmax64(policy[rows, cols]), rng) + 1
    fake = np.stack([_append_action(inputs, r, c, a) for r, c, a in zip(rows, cols, actions)])

    q = q_value(score_windows(discs, fake), combination)
    advantage = q - q.mean() if config.baseline else q
    picked = ad.getitem(log_probs, (rows, cols, actions - 1))
    loss = policy_gradient_loss(picked, advantage)
    optimizer.step(ad.backward(loss))
    return GStepResult(objective=float(np.mean(q * picked.data)), reward=float(q.mean()), positions=len(q))


def action_rewards(discs: Sequence[DiscriminatorParams], prefix: Sequence[int], num_items: int, n: int,
                   combination: CombinationParams) -> np.ndarray:
    """Q(prefix, a) for every item a, indexed by ``a - 1``."""
    real = [int(i) for i in prefix if int(i) != 0]
    windows = window_pad_many([real + [a] for a in range(1, num_items + 1)], n)
    return np.asarray(q_value(score_windows(discs, windows), combination), dtype=np.float64)


def expected_reward(gen: GeneratorParams, discs: Sequence[DiscriminatorParams], prefix: Sequence[int],
                    combination: CombinationParams) -> ad.Tensor:
    """J = sum over items of G(a | prefix) * Q(prefix, a), differentiable in the generator."""
    if gen.num_items > MAX_ENUMERATED_ITEMS:
        raise ContractError(f"cannot enumerate {gen.num_items} actions (limit {MAX_ENUMERATED_ITEMS})")
    q = action_rewards(discs, prefix, gen.num_items, gen.config.n, combination)
    window = window_pad([i for i in prefix if i], gen.config.n)
    probs = ad.softmax_rows(next_item_logits(gen, window[None, :], EVAL))
    return ad.reduce_sum(ad.mul(probs, ad.Tensor(q[None, :].astype(probs.dtype))))


def exact_policy_gradient(gen: GeneratorParams, discs: Sequence[DiscriminatorParams], prefix: Sequence[int],
                          combination: CombinationParams) -> Tuple[ad.GradientSet, float]:
    objective = expected_reward(gen, discs, prefix, combination)
    value = objective.item()
    return ad.backward(objective), value


def sampled_policy_gradient(gen: GeneratorParams, discs: Sequence[DiscriminatorParams], prefix: Sequence[int],
                            combination: CombinationParams, rng: np.random.Generator,
                            num_samples: int) -> Tuple[ad.GradientSet, ad.GradientSet]:
    """Mean and standard error of the per-draw estimator Q(a) * grad log G(a | prefix)."""
    if num_samples < 2:
        raise ContractError("need at least 2 samples for a standard error")
    q = action_rewards(discs, prefix, gen.num_items, gen.config.n, combination)
    window = window_pad([i for i in prefix if i], gen.config.n)[None, :]
    with ad.no_grad():
        probs = _softmax64(next_item_logits(gen, window, EVAL).data[0])
    draws = sample_categorical(np.broadcast_to(probs, (num_samples, len(probs))), rng)
    counts = np.bincount(draws, minlength=len(probs))

    params = gen.named_parameters()
    first = {name: np.zeros(p.shape, dtype=np.float64) for name, p in params.items()}
    second = {name: np.zeros(p.shape, dtype=np.float64) for name, p in params.items()}
    for action in np.nonzero(counts)[0]:
        log_probs = ad.log_softmax(next_item_logits(gen, window, EVAL))
        grads = ad.backward(ad.getitem(log_probs, (0, int(action))))
        for name, p in params.items():
            g = grads.of(p).astype(np.float64) * q[action]
            first[name] += counts[action] * g
            second[name] += counts[action] * g * g

    mean, stderr = ad.GradientSet(), ad.GradientSet()
    for name in params:
        m = first[name] / num_samples
        var = np.maximum(second[name] / num_samples - m * m, 0.0) * num_samples / (num_samples - 1)
        mean[name] = m
        stderr[name] = np.sqrt(var / num_samples)
    return mean, stderr


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

class Trainer:
    """Runs pretraining and adversarial rounds over one dataset split."""

    def __init__(self, split: DatasetSplit, tables: Sequence[FactorTable], config: TrainingConfig,
                 ledger_path=None, state: Optional[TrainerState] = None):
        self.split = split
        self.tables = list(tables)
        self.config = config.validate()
        self.ledger_path = ledger_path
        self.state = state or init_state(config, split.num_items, self.tables)
        self.inputs, self.targets = mle_examples(split.train_sequences(), config.window)
        self.sequences = [s for s in split.train_sequences() if len(s) >= 2]
        self.protocol = EvalProtocol(config.eval_negatives, config.eval_cutoff, config.seed)

    def _log(self, phase: str, **fields) -> None:
        log_record(self.ledger_path, epoch=self.state.epoch, phase=phase, **fields)

    def pretrain_generator_epoch(self) -> float:
        s = self.state
        loss = generator_epoch(s.generator, s.gen_optimizer, self.inputs, self.targets, self.config, s.rng)
        s.epoch += 1
        s.gen_epochs_done += 1
        self._log("MLE", loss=loss)
        logger.info("MLE epoch %d: loss %.4f", s.gen_epochs_done, loss)
        return loss

    def pretrain_discriminators_epoch(self) -> Dict[str, float]:
        s = self.state
        losses = discriminator_epoch(s.generator, s.discriminators, s.disc_optimizers,
                                     self.sequences, self.config, s.rng)
        s.epoch += 1
        s.disc_epochs_done += 1
        self._log("DPRE", **{f"loss_{_safe_name(k)}": v for k, v in losses.items()})
        return losses

    def discriminator_accuracy(self) -> Dict[str, float]:
        held_out = [u.train + [u.valid_target] for u in self.split.users]
        return discriminator_accuracy(self.state.generator, self.state.discriminators, held_out,
                                      np.random.default_rng([self.config.seed, 1]))

    def validation_ndcg(self) -> float:
        report = evaluate_model(GeneratorScorer(self.state.generator), self.split, self.protocol, target="valid")
        return report.ndcg

    def adversarial_round(self) -> Dict[str, float]:
        s, cfg = self.state, self.config
        summary: Dict[str, float] = {}
        for _ in range(cfg.g_epochs):
            results = [
                g_step(s.generator, s.discriminators, s.gen_optimizer,
                       [self.sequences[i] for i in idx], cfg, s.rng)
                for idx in _batches(len(self.sequences), cfg.gen_batch, s.rng, cfg.steps_per_epoch)
            ]
            weights = np.asarray([r.positions for r in results], dtype=np.float64)
            objective = float(np.average([r.objective for r in results], weights=weights))
            reward = float(np.average([r.reward for r in results], weights=weights))
            s.epoch += 1
            s.objectives.append(objective)
            self._log("G", objective=objective, reward=reward)
            summary.update(objective=objective, reward=reward)
        for _ in range(cfg.d_epochs):
            losses = discriminator_epoch(s.generator, s.discriminators, s.disc_optimizers,
                                         self.sequences, cfg, s.rng)
            s.epoch += 1
            self._log("D", **{f"loss_{_safe_name(k)}": v for k, v in losses.items()})
            summary.update({f"loss_{_safe_name(k)}": v for k, v in losses.items()})

        s.round += 1
        ndcg = self.validation_ndcg()
        if ndcg > s.best_ndcg:
            s.best_ndcg, s.stale_rounds = ndcg, 0
        else:
            s.stale_rounds += 1
        self._log("EVAL", round=s.round, ndcg=ndcg, best=s.best_ndcg)
        logger.info("Round %d: valid NDCG@%d %.4f (best %.4f)", s.round, cfg.eval_cutoff, ndcg, s.best_ndcg)
        if s.stale_rounds >= cfg.patience:
            logger.info("No validation improvement for %d rounds; stopping", s.stale_rounds)
            s.stage = "done"
        summary["ndcg"] = ndcg
        return summary

    def run(self, rounds: Optional[int] = None, pretrain_only: bool = False) -> Iterator[TrainerState]:
        """Advance through the remaining stages, yielding after every epoch or round.

        ``rounds`` caps the total number of adversarial rounds (counted from the
        start of training, not from this call).
        """
        s, cfg = self.state, self.config
        if s.stage not in STAGES:
            raise ContractError(f"unknown trainer stage {s.stage!r}")
        if s.stage == "init":
            while s.gen_epochs_done < cfg.pretrain_epochs:
                self.pretrain_generator_epoch()
                yield s
            s.stage = "generator_pretrained"
        if pretrain_only:
            return
        if s.stage == "generator_pretrained":
            while s.disc_epochs_done < cfg.disc_pretrain_epochs:
                self.pretrain_discriminators_epoch()
                yield s
            accuracy = self.discriminator_accuracy()
            self._log("DPRE", **{f"acc_{_safe_name(k)}": v for k, v in accuracy.items()})
            s.stage = "discriminators_pretrained"
            yield s
        if s.stage == "discriminators_pretrained":
            s.stage = "adversarial"
        limit = cfg.adversarial_rounds if rounds is None else min(rounds, cfg.adversarial_rounds)
        while s.stage == "adversarial" and s.round < limit:
            self.adversarial_round()
            yield s


def adversarial_train(trainer: Trainer, rounds: Optional[int] = None) -> Iterator[TrainerState]:
    """Stream of trainer states, one per completed epoch or round."""
    return trainer.run(rounds=rounds)
