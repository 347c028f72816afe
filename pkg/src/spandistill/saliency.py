"""Bidirectional token-importance weights from hidden states.

Each token's hidden vector is scaled by its own feature standard deviation,
pairwise dot-product scores are formed between all tokens (scaled by sqrt of
the feature dimension), the diagonal and padded destinations are masked out,
and a row softmax over destinations is averaged over the non-padded source
rows. The result is one non-negative weight per token; the weights of the
non-padded tokens of a row sum to 1.

Weights derived from student states stay differentiable; weights derived
from teacher states are constants (the teacher runs outside any tape).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spandistill import tensor as T
from spandistill.tensor import Tensor

__all__ = ["TokenWeights", "standardize", "pairwise_weights", "token_weights"]

SIGMA_FLOOR = 1e-12


@dataclass
class TokenWeights:
    """Per-token importance weights for one batch at one layer."""

    weights: Tensor  # [batch, seq]; zero at padded positions
    source_layer: int
    source_model: str  # "teacher" | "student"


def _sigma_guard(H: Tensor, padding_mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-token feature std with padded positions made safe for backward.

    Returns (sigma [B,S,1] Tensor, raw sigma values as numpy). At padded
    positions the variance gets +1 before the square root — those entries
    are excluded from everything downstream, but the gradient path through
    sqrt must stay defined even if a padded state is constant.
    """
    d = H.shape[-1]
    mu = T.mean(H, axis=-1, keepdims=True)
    centered = T.sub(H, mu)
    var = T.mean(T.mul(centered, centered), axis=-1, keepdims=True)
    raw_sigma = np.sqrt(var.data[..., 0])
    pad_boost = np.where(padding_mask, 0.0, 1.0)[..., None]
    sigma = T.sqrt(T.add(var, pad_boost))
    return sigma, raw_sigma


def standardize(H: Tensor, padding_mask: np.ndarray | None = None) -> Tensor:
    """Scale each token vector by its population feature standard deviation.

    Rejects any non-padded token whose std is at or below 1e-12, reporting
    the (row, position) of the first offender.
    """
    if H.ndim != 3:
        raise T.ShapeError(f"standardize expects [batch, seq, d], got shape {H.shape}")
    if padding_mask is None:
        padding_mask = np.ones(H.shape[:2], dtype=bool)
    else:
        padding_mask = np.asarray(padding_mask, dtype=bool)
        if padding_mask.shape != H.shape[:2]:
            raise T.ShapeError(
                f"padding mask shape {padding_mask.shape} != token grid {H.shape[:2]}"
            )
    sigma, raw = _sigma_guard(H, padding_mask)
    bad = (raw <= SIGMA_FLOOR) & padding_mask
    if np.any(bad):
        row, pos = map(int, np.argwhere(bad)[0])
        raise ValueError(
            f"constant hidden vector: std {raw[row, pos]:.3e} <= {SIGMA_FLOOR} "
            f"at row {row}, token {pos}"
        )
    return T.div(H, sigma)


def pairwise_weights(Hhat: Tensor, padding_mask: np.ndarray) -> Tensor:
    """Weights from already-standardized states: masked softmax, source mean.

    Scores are pairwise dot products over sqrt(d), -inf at the diagonal (no
    token attends to itself) and at padded destinations; the mean over
    source rows counts only non-padded ones. Returns [batch, seq].
    """
    if Hhat.ndim != 3:
        raise T.ShapeError(f"pairwise_weights expects [batch, seq, d], got shape {Hhat.shape}")
    padding_mask = np.asarray(padding_mask, dtype=bool)
    if padding_mask.shape != Hhat.shape[:2]:
        raise T.ShapeError(
            f"padding mask shape {padding_mask.shape} != token grid {Hhat.shape[:2]}"
        )
    batch, seq, d = Hhat.shape
    n_real = padding_mask.sum(axis=1)
    if np.any(n_real < 2):
        row = int(np.argwhere(n_real < 2)[0, 0])
        raise ValueError(f"row {row} has {int(n_real[row])} non-padded tokens; need >= 2")

    scores = T.div(T.matmul(Hhat, T.transpose(Hhat)), float(np.sqrt(d)))  # [B,S,S]
    diag = np.broadcast_to(np.eye(seq, dtype=bool), (batch, seq, seq))
    dest_pad = np.broadcast_to(~padding_mask[:, None, :], (batch, seq, seq))
    alpha = T.softmax(T.masked_fill(scores, diag | dest_pad, -np.inf), axis=-1)

    source_mask = padding_mask[:, :, None].astype(np.float64)  # exclude padded sources
    summed = T.sum_(T.mul(alpha, source_mask), axis=1)  # [B,S], sources in order
    return T.div(summed, n_real[:, None].astype(np.float64))


def token_weights(
    H: Tensor,
    padding_mask: np.ndarray,
    source_layer: int = 0,
    source_model: str = "student",
) -> TokenWeights:
    """Importance weight per token from raw hidden states.

    Standardizes each token vector, then runs the pairwise attention
    aggregation of `pairwise_weights`.
    """
    if H.ndim != 3:
        raise T.ShapeError(f"token_weights expects [batch, seq, d], got shape {H.shape}")
    padding_mask = np.asarray(padding_mask, dtype=bool)
    w = pairwise_weights(standardize(H, padding_mask), padding_mask)
    return TokenWeights(weights=w, source_layer=source_layer, source_model=source_model)
