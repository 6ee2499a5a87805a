"""Temporal pooling: frames x dim -> one fixed-size vector per segment.

Mean and max pooling are parameter-free. Attention pooling scores each
frame with a single linear map (w . h_i + b), normalizes the scores with
a max-stabilized softmax, and returns the weighted frame average; its
exact parameter gradients are provided so the attention variant can be
trained jointly with the downstream regressor. Frame gradients are not
produced because the upstream encoder is frozen.

All pooling arithmetic is done in float64 regardless of input precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import EmbeddingSequence
from .errors import ContractError, EmptyInputError


@dataclass(eq=False)
class PooledVector:
    segment_id: str
    rendition: str
    values: np.ndarray  # shape (dim,), float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


@dataclass(eq=False)
class AttentionPoolParams:
    """Linear frame scorer: score_i = score_weights . h_i + score_bias."""

    score_weights: np.ndarray  # shape (dim,)
    score_bias: float = 0.0

    def __post_init__(self):
        self.score_weights = np.asarray(self.score_weights, dtype=np.float64)
        self.score_bias = float(self.score_bias)

    @classmethod
    def zeros(cls, dim: int) -> "AttentionPoolParams":
        return cls(score_weights=np.zeros(dim, dtype=np.float64), score_bias=0.0)

    def copy(self) -> "AttentionPoolParams":
        return AttentionPoolParams(self.score_weights.copy(), self.score_bias)


def _segment_id(seq) -> str:
    return getattr(seq, "segment_id", "")


def _rendition(seq) -> str:
    return getattr(seq, "rendition", "")


def _frames64(seq) -> np.ndarray:
    # Accepts an EmbeddingSequence or a bare frames x dim matrix.
    data = np.asarray(getattr(seq, "data", seq), dtype=np.float64)
    if data.ndim != 2:
        raise ContractError(f"expected 2-D frame matrix, got ndim={data.ndim}")
    if data.shape[0] < 1:
        raise EmptyInputError("pooling requires at least one frame")
    return data


def mean_pool(seq: EmbeddingSequence) -> PooledVector:
    """Column means: values[j] = (1/N) sum_i data[i][j]."""
    data = _frames64(seq)
    values = data.sum(axis=0) / data.shape[0]
    return PooledVector(_segment_id(seq), _rendition(seq), values)


def max_pool(seq: EmbeddingSequence) -> PooledVector:
    """Column-wise maxima."""
    data = _frames64(seq)
    return PooledVector(_segment_id(seq), _rendition(seq), data.max(axis=0))


def _attention_weights(
    data: np.ndarray, params: AttentionPoolParams
) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized (max-stabilized) and normalized softmax weights."""
    scores = data @ params.score_weights + params.score_bias
    raw = np.exp(scores - scores.max())
    return raw, raw / raw.sum()


def attention_pool(
    seq: EmbeddingSequence, params: AttentionPoolParams
) -> tuple[PooledVector, np.ndarray]:
    """Softmax-weighted frame average; also returns the N frame weights.

    With zero score weights every frame scores identically, the weighted
    sum reduces to ``data.sum(0) / N``, and the output matches mean_pool
    bit for bit.
    """
    data = _frames64(seq)
    if params.score_weights.shape != (data.shape[1],):
        raise ContractError(
            f"score_weights shape {params.score_weights.shape} does not match dim {data.shape[1]}"
        )
    raw, alpha = _attention_weights(data, params)
    values = (raw[:, None] * data).sum(axis=0) / raw.sum()
    return PooledVector(_segment_id(seq), _rendition(seq), values), alpha


def attention_pool_backward(
    seq: EmbeddingSequence,
    params: AttentionPoolParams,
    upstream_gradient: np.ndarray,
) -> tuple[AttentionPoolParams, None]:
    """Exact gradients of (upstream . pooled_output) w.r.t. the scorer.

    With c_i = upstream . h_i and cbar = sum_i alpha_i c_i:

        d/dw  = sum_i alpha_i (c_i - cbar) h_i
        d/db  = sum_i alpha_i (c_i - cbar)   (identically zero: softmax is
                                              invariant to score shifts)

    Returns (parameter gradients, None); frame gradients are not needed
    for a frozen encoder.
    """
    data = _frames64(seq)
    upstream = np.asarray(upstream_gradient, dtype=np.float64)
    if upstream.shape != (data.shape[1],):
        raise ContractError(
            f"upstream gradient shape {upstream.shape} does not match dim {data.shape[1]}"
        )
    _, alpha = _attention_weights(data, params)
    c = data @ upstream
    cbar = float(alpha @ c)
    coeff = alpha * (c - cbar)
    grad_w = data.T @ coeff
    grad_b = float(coeff.sum())
    return AttentionPoolParams(score_weights=grad_w, score_bias=grad_b), None
