"""Factor-specific discriminators.

Each discriminator looks at a window of items through one factor: every item
is replaced by its factor bin, embedded, summed with its own positional
encoding and passed through a single (by default bidirectional) attention
block. A two-layer MLP on the last position gives the logit of "this window
came from real data".

Bin ids inside a :class:`FactorTable` are laid out as::

    0        pad (also the row every pad position embeds)
    1        unknown value
    2 ...    fitted bins

Item-id tables skip the unknown row: bin ``k`` is item ``k``.
"""

import copy
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .attention import (
    EVAL,
    AttentionConfig,
    BlockParams,
    ForwardMode,
    block_forward,
    init_block,
    positional_sum,
    zero_padding_rows,
)
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DataError, ShapeError

logger = logging.getLogger(__name__)

PAD_BIN = 0
UNKNOWN_BIN = 1
FIRST_BIN = 2

# Sigmoid outputs are clipped to stay strictly inside (0, 1) in float64.
SCORE_EPS = 1e-7


class FactorKind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"
    ITEM_ID = "item-id"
    POPULARITY = "popularity"


class Variant(str, Enum):
    """Discriminator layouts: one per factor, single item-id, single concatenated, causal."""

    FULL = "full"
    SDSF = "sdsf"
    SDAF = "sdaf"
    UNI_D = "uni-d"


@dataclass(frozen=True)
class FactorSpec:
    name: str
    kind: FactorKind
    num_bins: int = 50

    def __post_init__(self):
        object.__setattr__(self, "kind", FactorKind(self.kind))
        if self.kind in (FactorKind.NUMERIC, FactorKind.POPULARITY) and self.num_bins < 2:
            raise ConfigError(f"factor {self.name}: numeric factors need at least 2 bins")


@dataclass
class FactorTable:
    """Total map from dense item id to embedding row for one factor."""

    name: str
    kind: FactorKind
    bins: np.ndarray = field(repr=False)
    size: int = 0

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.int64)
        if self.size <= 0:
            self.size = int(self.bins.max()) + 1 if self.bins.size else 1
        if self.bins.size == 0 or self.bins[0] != PAD_BIN:
            raise DataError(f"factor {self.name}: pad item must map to the pad bin")
        if self.bins.min() < 0 or self.bins.max() >= self.size:
            raise DataError(f"factor {self.name}: bin ids must lie in [0, {self.size})")

    @property
    def num_items(self) -> int:
        return len(self.bins) - 1

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.bins)):
            bad = ids[(ids < 0) | (ids >= len(self.bins))][0]
            raise DataError(f"item {bad} is not mapped by factor {self.name}")
        return self.bins[ids]


def item_id_table(num_items: int) -> FactorTable:
    """Identity table over item ids (single item-id discriminator)."""
    return FactorTable("item", FactorKind.ITEM_ID, np.arange(num_items + 1), size=num_items + 1)


@dataclass
class DiscriminatorParams:
    name: str
    tables: Tuple[FactorTable, ...]
    factor_embs: List[Tensor]
    pos_emb: Tensor
    block: BlockParams
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor
    config: AttentionConfig
    projection: Optional[Tensor] = None

    def named_parameters(self) -> Dict[str, Tensor]:
        params = {t.name: t for t in self.factor_embs}
        if self.projection is not None:
            params[self.projection.name] = self.projection
        params[self.pos_emb.name] = self.pos_emb
        params.update(self.block.named_parameters())
        for t in (self.mlp_w1, self.mlp_b1, self.mlp_w2, self.mlp_b2):
            params[t.name] = t
        return params

    def clone(self) -> "DiscriminatorParams":
        return copy.deepcopy(self)


def init_discriminator(tables: Sequence[FactorTable], config: AttentionConfig, seed: int,
                       name: Optional[str] = None) -> DiscriminatorParams:
    """One attention block, a factor embedding per table, and the MLP head.

    Several tables are concatenated and projected back to width d.
    """
    if isinstance(tables, FactorTable):
        tables = [tables]
    tables = tuple(tables)
    if not tables:
        raise ConfigError("a discriminator needs at least one factor table")
    if config.L != 1:
        raise ConfigError(f"discriminators use exactly one attention block, got L={config.L}")
    name = name or "+".join(t.name for t in tables)
    prefix = f"disc/{name}"
    rng = np.random.default_rng(seed)
    d = config.d
    bound = 1.0 / np.sqrt(d)

    factor_embs = []
    for table in tables:
        rows = rng.uniform(-bound, bound, size=(table.size, d))
        rows[PAD_BIN] = 0.0
        factor_embs.append(ad.parameter(rows, f"{prefix}/emb/{table.name}"))
    projection = None
    if len(tables) > 1:
        width = d * len(tables)
        projection = ad.parameter(rng.uniform(-1.0 / np.sqrt(width), 1.0 / np.sqrt(width), size=(width, d)),
                                  f"{prefix}/projection")
    pos_emb = ad.parameter(rng.uniform(-bound, bound, size=(config.n, d)), f"{prefix}/pos_emb")
    block = init_block(config, rng, f"{prefix}/block")
    hidden = max(1, d // 2)
    return DiscriminatorParams(
        name=name,
        tables=tables,
        factor_embs=factor_embs,
        pos_emb=pos_emb,
        block=block,
        mlp_w1=ad.parameter(rng.uniform(-bound, bound, size=(d, hidden)), f"{prefix}/mlp_w1"),
        mlp_b1=ad.parameter(np.zeros(hidden), f"{prefix}/mlp_b1"),
        mlp_w2=ad.parameter(rng.uniform(-1.0 / np.sqrt(hidden), 1.0 / np.sqrt(hidden), size=(hidden, 1)),
                            f"{prefix}/mlp_w2"),
        mlp_b2=ad.parameter(np.zeros(1), f"{prefix}/mlp_b2"),
        config=config,
        projection=projection,
    )


def build_discriminators(variant, tables: Sequence[FactorTable], num_items: int,
                         config: AttentionConfig, seed: int) -> List[DiscriminatorParams]:
    """Instantiate the discriminator set for a variant.

    ``config.causal`` is overridden: only ``uni-d`` masks future positions.
    """
    variant = Variant(variant)
    bidirectional = replace(config, causal=False, L=1)
    causal = replace(config, causal=True, L=1)
    seeds = np.random.SeedSequence(seed).generate_state(max(1, len(tables)))

    if variant is Variant.SDSF:
        return [init_discriminator([item_id_table(num_items)], bidirectional, int(seeds[0]))]
    if not tables:
        raise ConfigError(f"variant {variant.value} needs at least one factor")
    if variant is Variant.SDAF:
        return [init_discriminator(list(tables), bidirectional, int(seeds[0]), name="all")]
    cfg = causal if variant is Variant.UNI_D else bidirectional
    return [init_discriminator([t], cfg, int(s)) for t, s in zip(tables, seeds)]


def _windows(params: DiscriminatorParams, items) -> np.ndarray:
    ids = np.asarray(items, dtype=np.int64)
    if ids.shape[-1] != params.config.n:
        raise ShapeError(f"expected windows of length {params.config.n}, got shape {ids.shape}")
    return ids


def factor_sequence_embed(items, params: DiscriminatorParams) -> Tensor:
    """Factor-bin embeddings plus positions; pad rows come out as zeros."""
    ids = _windows(params, items)
    parts = [ad.embedding_lookup(emb, table.lookup(ids))
             for table, emb in zip(params.tables, params.factor_embs)]
    x = parts[0] if len(parts) == 1 else ad.matmul(ad.concat(parts, axis=-1), params.projection)
    x = positional_sum(x, params.pos_emb)
    return zero_padding_rows(x, ids != 0)


def _hidden_states(params: DiscriminatorParams, ids: np.ndarray, mode: ForwardMode) -> Tensor:
    keep = ids != 0
    x = ad.dropout(factor_sequence_embed(ids, params), params.config.dropout_p, mode.training, mode.rng)
    x = block_forward(x, params.block, params.config, mode, key_padding=~keep)
    return zero_padding_rows(x, keep)


def _mlp(params: DiscriminatorParams, h: Tensor) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(h, params.mlp_w1), params.mlp_b1))
    out = ad.add(ad.matmul(hidden, params.mlp_w2), params.mlp_b2)
    return ad.reshape(out, tuple(out.shape[:-1]))


def score_logits(params: DiscriminatorParams, items, mode: ForwardMode = EVAL) -> Tensor:
    """Pre-sigmoid scores ``[...]`` read at the last window position."""
    ids = _windows(params, items)
    if np.any(ids[..., -1] == 0):
        raise ContractError("discriminator windows must end with a real item")
    h = _hidden_states(params, ids, mode)
    last = ad.getitem(h, (slice(None),) * (h.ndim - 2) + (-1,))
    return _mlp(params, last)


def _squash(logits: np.ndarray) -> np.ndarray:
    return np.clip(ad.stable_sigmoid(np.asarray(logits, dtype=np.float64)), SCORE_EPS, 1.0 - SCORE_EPS)


def rationality_scores(params: DiscriminatorParams, windows, chunk: int = 1024) -> np.ndarray:
    """Evaluation-mode scores in (0, 1) for a batch ``[B, n]`` of windows."""
    ids = _windows(params, windows)
    if ids.ndim == 1:
        ids = ids[None, :]
    out = np.empty(len(ids), dtype=np.float64)
    with ad.no_grad():
        for start in range(0, len(ids), chunk):
            out[start:start + chunk] = _squash(score_logits(params, ids[start:start + chunk]).data)
    return out


def rationality_score(params: DiscriminatorParams, items) -> float:
    return float(rationality_scores(params, np.asarray(items)[None, :])[0])


def position_scores(params: DiscriminatorParams, items, mode: ForwardMode = EVAL) -> np.ndarray:
    """The MLP head applied at every position, squashed to (0, 1); pad positions report 0.5."""
    ids = _windows(params, items)
    with ad.no_grad():
        logits = _mlp(params, _hidden_states(params, ids, mode)).data
    scores = _squash(logits)
    return np.where(ids != 0, scores, 0.5)


def discriminator_loss(params: DiscriminatorParams, real_batch, fake_batch,
                       mode: ForwardMode = EVAL) -> Tensor:
    """mean(-log D(real)) + mean(-log(1 - D(fake))), computed from logits."""
    real = _windows(params, real_batch)
    fake = _windows(params, fake_batch)
    if real.ndim == 1:
        real = real[None, :]
    if fake.ndim == 1:
        fake = fake[None, :]
    if len(real) == 0 or len(fake) == 0:
        raise ContractError("discriminator loss needs non-empty real and fake batches")
    real_term = ad.reduce_mean(ad.softplus(ad.scale(score_logits(params, real, mode), -1.0)))
    fake_term = ad.reduce_mean(ad.softplus(score_logits(params, fake, mode)))
    return ad.add(real_term, fake_term)
