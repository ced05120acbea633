"""Causal self-attentive next-item generator.

Item ids are dense integers ``1..|I|``; id 0 is the pad. Windows are
left-padded so the most recent item always sits at index ``n - 1``. The item
embedding table is tied: its rows ``1..|I|`` also act as the output layer, so
logit column ``k - 1`` scores item ``k`` and the pad can never be predicted.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import autodiff as ad
from .attention import (
    EVAL,
    AttentionConfig,
    BlockParams,
    ForwardMode,
    block_forward,
    block_parameter_count,
    init_block,
    positional_sum,
    zero_padding_rows,
)
from .autodiff import Tensor
from .data import window_pad
from .errors import ConfigError, ContractError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class GeneratorParams:
    item_emb: Tensor
    pos_emb: Tensor
    blocks: List[BlockParams]
    config: AttentionConfig
    num_items: int

    def named_parameters(self) -> Dict[str, Tensor]:
        params = {self.item_emb.name: self.item_emb, self.pos_emb.name: self.pos_emb}
        for block in self.blocks:
            params.update(block.named_parameters())
        return params

    def clone(self) -> "GeneratorParams":
        return copy.deepcopy(self)


@dataclass
class DistributionVector:
    """Next-item probabilities; ``probs[k - 1]`` belongs to item ``k``."""

    probs: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.probs)

    def prob(self, item: int) -> float:
        return float(self.probs[item - 1])

    def argmax(self) -> int:
        return int(np.argmax(self.probs)) + 1


def init_generator(config: AttentionConfig, num_items: int, seed: int) -> GeneratorParams:
    if not config.causal:
        raise ConfigError("the generator needs causal attention")
    if num_items < 1:
        raise ConfigError(f"catalog must hold at least one item, got {num_items}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(config.d)
    item_emb = rng.uniform(-bound, bound, size=(num_items + 1, config.d))
    item_emb[0] = 0.0
    pos_emb = rng.uniform(-bound, bound, size=(config.n, config.d))
    blocks = [init_block(config, rng, f"gen/block{i}") for i in range(config.L)]
    return GeneratorParams(
        item_emb=ad.parameter(item_emb, "gen/item_emb"),
        pos_emb=ad.parameter(pos_emb, "gen/pos_emb"),
        blocks=blocks,
        config=config,
        num_items=num_items,
    )


def parameter_count(config: AttentionConfig, num_items: int) -> int:
    """Closed form: tied item table, positions, and L blocks."""
    return (num_items + 1) * config.d + config.n * config.d + config.L * block_parameter_count(config)


def _windows(params: GeneratorParams, sequence) -> np.ndarray:
    ids = np.asarray(sequence, dtype=np.int64)
    if ids.shape[-1] != params.config.n:
        raise ShapeError(f"expected windows of length {params.config.n}, got shape {ids.shape}")
    return ids


def _hidden_states(params: GeneratorParams, ids: np.ndarray, mode: ForwardMode) -> Tensor:
    keep = ids != 0
    cfg = params.config
    x = positional_sum(ad.embedding_lookup(params.item_emb, ids), params.pos_emb)
    x = zero_padding_rows(x, keep)
    x = ad.dropout(x, cfg.dropout_p, mode.training, mode.rng)
    for block in params.blocks:
        x = block_forward(x, block, cfg, mode, key_padding=~keep)
        x = zero_padding_rows(x, keep)
    return x


def _output_weights(params: GeneratorParams) -> Tensor:
    return ad.getitem(params.item_emb, slice(1, None)).T


def forward_all_positions(params: GeneratorParams, sequence, mode: ForwardMode = EVAL) -> Tensor:
    """Logits ``[..., n, |I|]``; row t predicts the item after position t."""
    ids = _windows(params, sequence)
    return ad.matmul(_hidden_states(params, ids, mode), _output_weights(params))


def next_item_logits(params: GeneratorParams, prefixes, mode: ForwardMode = EVAL) -> Tensor:
    """Logits ``[B, |I|]`` at the last window position for a batch of windows."""
    ids = _windows(params, prefixes)
    if ids.ndim == 1:
        ids = ids[None, :]
    if np.any(ids[:, -1] == 0):
        raise ContractError("prefix windows must end with a real item")
    last = ad.getitem(_hidden_states(params, ids, mode), (slice(None), -1))
    return ad.matmul(last, _output_weights(params))


def _softmax64(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def next_item_distribution(params: GeneratorParams, prefix: Sequence[int]) -> DistributionVector:
    real = [int(i) for i in prefix if int(i) != 0]
    if not real:
        raise ContractError("cannot predict from an empty prefix")
    with ad.no_grad():
        logits = next_item_logits(params, window_pad(real, params.config.n)[None, :])
    return DistributionVector(_softmax64(logits.data[0]))


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one 0-based index per row of ``probs`` ([..., K])."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    cdf /= cdf[..., -1:]
    u = rng.random(probs.shape[:-1])[..., None]
    idx = (cdf < u).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_next(params: GeneratorParams, prefix: Sequence[int], rng: np.random.Generator) -> int:
    dist = next_item_distribution(params, prefix)
    return int(sample_categorical(dist.probs, rng)) + 1


def training_windows(sequence: Sequence[int], n: int):
    """Teacher-forcing (inputs, targets) windows for one sequence of real items."""
    real = [int(i) for i in sequence if int(i) != 0]
    if len(real) < 2:
        raise ContractError(f"need at least 2 real items for a next-item target, got {len(real)}")
    return window_pad(real[:-1], n), window_pad(real[1:], n)


def mle_loss_batch(params: GeneratorParams, inputs, targets, mode: ForwardMode = EVAL) -> Tensor:
    """Mean of -log G(target | prefix) over every non-pad target position."""
    inputs = np.asarray(inputs, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if inputs.shape != targets.shape:
        raise ShapeError(f"inputs {inputs.shape} and targets {targets.shape} differ")
    rows, cols = np.nonzero(targets != 0)
    if rows.size == 0:
        raise ContractError("batch has no target positions")
    log_probs = ad.log_softmax(forward_all_positions(params, inputs, mode))
    picked = ad.getitem(log_probs, (rows, cols, targets[rows, cols] - 1))
    return ad.scale(ad.reduce_mean(picked), -1.0)


def mle_loss(params: GeneratorParams, sequence: Sequence[int], mode: ForwardMode = EVAL) -> Tensor:
    inputs, targets = training_windows(sequence, params.config.n)
    return mle_loss_batch(params, inputs[None, :], targets[None, :], mode)
