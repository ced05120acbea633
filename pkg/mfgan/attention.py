"""Self-attention building blocks shared by the generator and the discriminators.

Inputs are ``[..., n, d]`` tensors: a single window or a batch of windows.
A block is multi-head attention followed by a position-wise feed-forward
network, each wrapped as ``LN(x + Dropout(sublayer(x)))``. Residuals and layer
normalisation can be switched off through :class:`AttentionConfig`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttentionConfig:
    """Shape and behaviour of a stack of attention blocks."""

    d: int
    h: int = 1
    L: int = 1
    n: int = 50
    causal: bool = True
    dropout_p: float = 0.0
    d_ff: Optional[int] = None
    layer_norm: bool = True
    residual: bool = True

    def __post_init__(self):
        if self.d < 1 or self.h < 1 or self.d % self.h != 0:
            raise ConfigError(f"width d={self.d} must be a positive multiple of heads h={self.h}")
        if self.L < 1:
            raise ConfigError(f"block count must be >= 1, got {self.L}")
        if self.n < 1:
            raise ConfigError(f"window length must be >= 1, got {self.n}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout_p}")
        if self.d_ff is not None and self.d_ff < 1:
            raise ConfigError(f"feed-forward width must be >= 1, got {self.d_ff}")

    @property
    def ffn_width(self) -> int:
        return self.d if self.d_ff is None else self.d_ff

    @property
    def head_width(self) -> int:
        return self.d // self.h


@dataclass
class ForwardMode:
    """Training flag plus the generator that drives dropout masks."""

    training: bool = False
    rng: Optional[np.random.Generator] = None


EVAL = ForwardMode()


@dataclass
class BlockParams:
    """Weights of one attention block.

    The per-head projections are stored fused as d x d matrices whose column
    slice ``[i*d/h, (i+1)*d/h)`` is head ``i``.
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w_1: Tensor
    b_1: Tensor
    w_2: Tensor
    b_2: Tensor
    ln1_g: Optional[Tensor] = None
    ln1_b: Optional[Tensor] = None
    ln2_g: Optional[Tensor] = None
    ln2_b: Optional[Tensor] = None

    def named_parameters(self) -> Dict[str, Tensor]:
        out = {}
        for attr in ("w_q", "w_k", "w_v", "w_o", "w_1", "b_1", "w_2", "b_2",
                     "ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            tensor = getattr(self, attr)
            if tensor is not None:
                out[tensor.name] = tensor
        return out


def init_block(config: AttentionConfig, rng: np.random.Generator, prefix: str) -> BlockParams:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases, unit layer-norm gains."""
    d, d_ff = config.d, config.ffn_width
    bound = 1.0 / math.sqrt(d)

    def uniform(shape, name):
        return ad.parameter(rng.uniform(-bound, bound, size=shape), f"{prefix}/{name}")

    block = BlockParams(
        w_q=uniform((d, d), "w_q"),
        w_k=uniform((d, d), "w_k"),
        w_v=uniform((d, d), "w_v"),
        w_o=uniform((d, d), "w_o"),
        w_1=uniform((d, d_ff), "w_1"),
        b_1=ad.parameter(np.zeros(d_ff), f"{prefix}/b_1"),
        w_2=uniform((d_ff, d), "w_2"),
        b_2=ad.parameter(np.zeros(d), f"{prefix}/b_2"),
    )
    if config.layer_norm:
        block.ln1_g = ad.parameter(np.ones(d), f"{prefix}/ln1_g")
        block.ln1_b = ad.parameter(np.zeros(d), f"{prefix}/ln1_b")
        block.ln2_g = ad.parameter(np.ones(d), f"{prefix}/ln2_g")
        block.ln2_b = ad.parameter(np.zeros(d), f"{prefix}/ln2_b")
    return block


def block_parameter_count(config: AttentionConfig) -> int:
    d, d_ff = config.d, config.ffn_width
    count = 4 * d * d + 2 * d * d_ff + d_ff + d
    if config.layer_norm:
        count += 4 * d
    return count


def causal_mask(n: int) -> np.ndarray:
    """Boolean [n, n] mask, true strictly above the diagonal (future keys)."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def positional_sum(E: Tensor, P: Tensor) -> Tensor:
    if tuple(E.shape[-2:]) != tuple(P.shape):
        raise ShapeError(f"positional_sum: embeddings {E.shape} do not match positions {P.shape}")
    return ad.add(E, P)


def zero_padding_rows(x: Tensor, keep: np.ndarray) -> Tensor:
    """Multiply rows of ``x`` by ``keep`` ([..., n] booleans)."""
    return ad.mul(x, Tensor(keep[..., None].astype(x.dtype)))


def scaled_dot_attention(Q: Tensor, K: Tensor, V: Tensor, causal: bool,
                         key_padding: Optional[np.ndarray] = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k) + mask) V over the last two axes.

    ``key_padding`` is a boolean [..., n] array, true at keys that must not be
    attended (pad ids). Leading axes of Q, K, V may hold batch and head axes.
    """
    n = K.shape[-2]
    scores = ad.scale(ad.matmul(Q, K.T), 1.0 / math.sqrt(Q.shape[-1]))
    mask = None
    if causal:
        mask = causal_mask(n)
    if key_padding is not None:
        padded = np.asarray(key_padding, dtype=bool)[..., None, :]
        while padded.ndim < scores.ndim:
            padded = np.expand_dims(padded, -3)
        mask = padded if mask is None else (mask | padded)
    if mask is not None:
        scores = ad.masked_fill(scores, mask)
    return ad.matmul(ad.softmax_rows(scores), V)


def _split_heads(x: Tensor, h: int) -> Tensor:
    lead = tuple(x.shape[:-1])
    return ad.swapaxes(ad.reshape(x, lead + (h, x.shape[-1] // h)), -2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    merged = ad.swapaxes(x, -2, -3)
    lead = tuple(merged.shape[:-2])
    return ad.reshape(merged, lead + (merged.shape[-2] * merged.shape[-1],))


def multi_head_attention(F: Tensor, params: BlockParams, causal: bool, h: int,
                         key_padding: Optional[np.ndarray] = None) -> Tensor:
    """Concat(head_1..head_h) W_O with head_i = Attention(F W_Q_i, F W_K_i, F W_V_i)."""
    if F.shape[-1] != params.w_q.shape[0]:
        raise ShapeError(f"attention input width {F.shape[-1]} != {params.w_q.shape[0]}")
    Q = _split_heads(ad.matmul(F, params.w_q), h)
    K = _split_heads(ad.matmul(F, params.w_k), h)
    V = _split_heads(ad.matmul(F, params.w_v), h)
    heads = scaled_dot_attention(Q, K, V, causal, key_padding)
    return ad.matmul(_merge_heads(heads), params.w_o)


def pffn(F: Tensor, params: BlockParams) -> Tensor:
    hidden = ad.relu(ad.add(ad.matmul(F, params.w_1), params.b_1))
    return ad.add(ad.matmul(hidden, params.w_2), params.b_2)


def block_forward(F: Tensor, params: BlockParams, config: AttentionConfig,
                  mode: ForwardMode = EVAL, key_padding: Optional[np.ndarray] = None) -> Tensor:
    """One attention sub-layer and one feed-forward sub-layer."""
    attended = multi_head_attention(F, params, config.causal, config.h, key_padding)
    attended = ad.dropout(attended, config.dropout_p, mode.training, mode.rng)
    x = ad.add(F, attended) if config.residual else attended
    if config.layer_norm:
        x = ad.layer_norm(x, params.ln1_g, params.ln1_b)

    fed = ad.dropout(pffn(x, params), config.dropout_p, mode.training, mode.rng)
    y = ad.add(x, fed) if config.residual else fed
    if config.layer_norm:
        y = ad.layer_norm(y, params.ln2_g, params.ln2_b)
    return y
