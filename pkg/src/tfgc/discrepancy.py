"""Per-pixel temporal discrepancy attention with multi-grain aggregation.

Every pixel attends across the clip's time steps; the temporal variance
of its attention-score sums decides (through a k-th smallest threshold)
whether its attended update is let through.  The updated features are
then re-read along horizontal and vertical axis views and aggregated at
three temporal granularities before a residual merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError
from .smoothness import _ensure_batch


class AxisViews(NamedTuple):
    f_v: torch.Tensor  # (W, C, H, T) or batched
    f_h: torch.Tensor  # (H, C, T, W) or batched


@dataclass
class VarianceMap:
    """Per-pixel temporal variance with its activation threshold and mask."""

    data: torch.Tensor       # (H, W) variance values
    threshold: float         # k-th smallest variance
    mask: torch.Tensor       # (H, W) bool, True strictly above the threshold


def project_qkv(
    features: torch.Tensor,
    w_q: torch.Tensor,
    w_k: torch.Tensor,
    w_v: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Three independent 1x1 channel projections of the same feature map."""
    c = features.shape[-3]
    for w in (w_q, w_k, w_v):
        if w.shape != (c, c):
            raise ShapeError(f"projection must be ({c}, {c}), got {tuple(w.shape)}")
    x, batched = _ensure_batch(features)
    outs = tuple(torch.einsum("oc,btchw->btohw", w, x) for w in (w_q, w_k, w_v))
    return outs if batched else tuple(o.squeeze(0) for o in outs)


def temporal_scores(f_q: torch.Tensor, f_k: torch.Tensor) -> torch.Tensor:
    """Per-pixel frame-to-frame similarity: A[h,w,t,s] = <Q_t, K_s> over channels."""
    if f_q.shape != f_k.shape:
        raise ShapeError(f"Q/K shapes differ: {tuple(f_q.shape)} vs {tuple(f_k.shape)}")
    q, batched = _ensure_batch(f_q)
    k, _ = _ensure_batch(f_k)
    scores = torch.einsum("btchw,bschw->bhwts", q, k)
    return scores if batched else scores.squeeze(0)


def _population_variance(x: torch.Tensor, dim: int) -> torch.Tensor:
    mean = x.mean(dim=dim, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=dim)
    # identical values must give exactly zero, so static clips stay inert
    constant = x.amax(dim=dim) == x.amin(dim=dim)
    return torch.where(constant, torch.zeros_like(var), var)


def _variance_mask(scores: torch.Tensor, k: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batched variance activation. scores is (B, H, W, T, T)."""
    b, h, w = scores.shape[0], scores.shape[1], scores.shape[2]
    if not 1 <= k <= h * w:
        raise ValueError(f"k must lie in [1, {h * w}], got {k}")
    summed = scores.sum(dim=-1)                   # (B, H, W, T)
    variance = _population_variance(summed, dim=-1)
    threshold = torch.kthvalue(variance.reshape(b, h * w), k, dim=1).values
    mask = variance > threshold[:, None, None]
    return variance, threshold, mask


def variance_activate(scores: torch.Tensor, k: int) -> VarianceMap:
    """Threshold per-pixel temporal variance at its k-th smallest value.

    Positions strictly above the threshold are activated; ties at the
    threshold stay off, so the mask size is deterministic.
    """
    if scores.ndim != 4:
        raise ShapeError(f"scores must be (H, W, T, T), got {tuple(scores.shape)}")
    variance, threshold, mask = _variance_mask(scores.detach().unsqueeze(0), k)
    return VarianceMap(
        data=variance.squeeze(0),
        threshold=float(threshold.squeeze(0)),
        mask=mask.squeeze(0),
    )


def default_k(height: int, width: int, fraction: float = 0.5) -> int:
    """Activation threshold index: keep the top (1 - fraction) of variances."""
    return max(1, min(height * width, math.ceil(fraction * height * width)))


def discrepancy_update(
    features: torch.Tensor,
    f_q: torch.Tensor,
    f_k: torch.Tensor,
    f_v: torch.Tensor,
    alpha: torch.Tensor,
    k: int,
) -> torch.Tensor:
    """Variance-gated per-pixel temporal attention, added residually.

    The mask is treated as a constant during gradient computation;
    gradients flow through the attended values and alpha only.
    """
    x, batched = _ensure_batch(features)
    q, _ = _ensure_batch(f_q)
    key, _ = _ensure_batch(f_k)
    v, _ = _ensure_batch(f_v)
    scores = torch.einsum("btchw,bschw->bhwts", q, key)
    _, _, mask = _variance_mask(scores.detach(), k)
    weights = torch.softmax(scores, dim=-1)
    attended = torch.einsum("bhwts,bschw->btchw", weights, v)
    gate = mask.to(x.dtype)[:, None, None, :, :]
    out = x + alpha * gate * attended
    return out if batched else out.squeeze(0)


def axis_reshape(features: torch.Tensor) -> AxisViews:
    """Pure permutations into vertical (W,C,H,T) and horizontal (H,C,T,W) views."""
    x, batched = _ensure_batch(features)
    f_v = x.permute(0, 4, 2, 3, 1)
    f_h = x.permute(0, 3, 2, 1, 4)
    if not batched:
        f_v, f_h = f_v.squeeze(0), f_h.squeeze(0)
    return AxisViews(f_v=f_v, f_h=f_h)


def axis_restore_v(f_v: torch.Tensor) -> torch.Tensor:
    """Invert the vertical view back to (T, C, H, W)."""
    if f_v.ndim == 4:
        return f_v.permute(3, 1, 2, 0)
    return f_v.permute(0, 4, 2, 3, 1)


def axis_restore_h(f_h: torch.Tensor) -> torch.Tensor:
    """Invert the horizontal view back to (T, C, H, W)."""
    if f_h.ndim == 4:
        return f_h.permute(2, 1, 0, 3)
    return f_h.permute(0, 3, 2, 1, 4)


def _conv_last_axis(x: torch.Tensor, taps: torch.Tensor) -> torch.Tensor:
    """Per-channel 3-tap convolution along the last axis, zero padded.

    ``x`` is (..., C, D, L) with channels third from the end; ``taps`` is
    (C, 3).
    """
    moved = x.movedim(-3, -2)  # (..., D, C, L)
    lead = moved.shape[:-2]
    c, length = moved.shape[-2], moved.shape[-1]
    flat = moved.reshape(-1, c, length)
    out = F.conv1d(flat, taps.unsqueeze(1), padding=1, groups=c)
    return out.reshape(*lead, c, length).movedim(-2, -3)


def multigrain_aggregate(view: torch.Tensor, taps: torch.Tensor) -> torch.Tensor:
    """Tri-scale aggregation along the last axis.

    output = (conv(x) + up2(conv(pool2(x))) + up4(conv(pool4(x)))) / 3
    with average pooling down and nearest-neighbour repetition up.
    ``taps`` is (3, C, 3): one 3-tap per-channel kernel per scale.
    """
    length = view.shape[-1]
    if length % 4 != 0:
        raise ShapeError(f"last axis must be divisible by 4, got {length}")
    c = view.shape[-3]
    if taps.shape != (3, c, 3):
        raise ShapeError(f"taps must be (3, {c}, 3), got {tuple(taps.shape)}")

    def pooled(x: torch.Tensor, factor: int) -> torch.Tensor:
        shape = x.shape
        flat = x.reshape(-1, 1, shape[-1])
        down = F.avg_pool1d(flat, kernel_size=factor, stride=factor)
        return down.reshape(*shape[:-1], shape[-1] // factor)

    full = _conv_last_axis(view, taps[0])
    half = _conv_last_axis(pooled(view, 2), taps[1]).repeat_interleave(2, dim=-1)
    quarter = _conv_last_axis(pooled(view, 4), taps[2]).repeat_interleave(4, dim=-1)
    return (full + half + quarter) / 3.0


class TemporalDiscrepancyAttention(nn.Module):
    """Variance-activated temporal attention plus tri-scale axis aggregation.

    ``alpha`` and the aggregation kernels start at zero, so the module is
    exactly the identity at initialization and both branches fade in.
    Per-pixel attention is single-head by construction.
    """

    def __init__(self, channels: int, k_fraction: float = 0.5, heads: int = 1) -> None:
        super().__init__()
        if heads != 1:
            raise ValueError("per-pixel temporal attention is single-head")
        self.k_fraction = float(k_fraction)
        scale = 1.0 / math.sqrt(channels)
        self.w_q = nn.Parameter(torch.randn(channels, channels) * scale)
        self.w_k = nn.Parameter(torch.randn(channels, channels) * scale)
        self.w_v = nn.Parameter(torch.randn(channels, channels) * scale)
        self.alpha = nn.Parameter(torch.zeros(()))
        self.taps_v = nn.Parameter(torch.zeros(3, channels, 3))
        self.taps_h = nn.Parameter(torch.zeros(3, channels, 3))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x, batched = _ensure_batch(features)
        h, w = x.shape[-2], x.shape[-1]
        k = default_k(h, w, self.k_fraction)
        f_q, f_k, f_v = project_qkv(x, self.w_q, self.w_k, self.w_v)
        updated = discrepancy_update(x, f_q, f_k, f_v, self.alpha, k)
        views = axis_reshape(updated)
        vertical = axis_restore_v(multigrain_aggregate(views.f_v, self.taps_v))
        horizontal = axis_restore_h(multigrain_aggregate(views.f_h, self.taps_h))
        out = updated + 0.5 * (vertical + horizontal)
        return out if batched else out.squeeze(0)
