"""Audio-visual cross-attention fusion.

Audio features form queries against visual keys over the clip's time
steps, one token per frame with channel-and-space flattened descriptors.
The value path is a pointwise linear combination of both modalities, and
the fused output adds a residual-transformed value to the projected
concatenation of the attention heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import AlignmentError, ShapeError


@dataclass
class FusionState:
    """Head-split query/key/value tensors, each (B, heads, d, T, H', W')."""

    query: torch.Tensor
    key: torch.Tensor
    value: torch.Tensor
    fused: torch.Tensor | None = None

    @property
    def width(self) -> int:
        return self.value.shape[1] * self.value.shape[2]

    def value_merged(self) -> torch.Tensor:
        """Pre-head value: (B, width, T, H', W')."""
        b, heads, d, t, h, w = self.value.shape
        return self.value.reshape(b, heads * d, t, h, w)


def _split_heads(x: torch.Tensor, heads: int) -> torch.Tensor:
    b, c, t, h, w = x.shape
    return x.reshape(b, heads, c // heads, t, h, w)


class AudioVisualFusion(nn.Module):
    """Multi-head cross-attention with audio queries and visual keys."""

    def __init__(
        self,
        audio_channels: int,
        visual_channels: int,
        width: int = 64,
        heads: int = 4,
        divisor: str | float = "sqrt_dim",
    ) -> None:
        super().__init__()
        if width % heads != 0:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.width = width
        self.divisor = divisor
        # channel alignment of the audio path: pointwise over every
        # temporal line, i.e. a kernel-1 1-D convolution at each cell
        self.align = nn.Conv3d(audio_channels, width, kernel_size=1, bias=False)
        self.query_conv = nn.Conv3d(width, width, kernel_size=3, padding=1, bias=False)
        self.key_conv = nn.Conv3d(visual_channels, width, kernel_size=3, padding=1, bias=False)
        self.value_conv = nn.Conv3d(
            audio_channels + visual_channels, width, kernel_size=1, bias=False
        )
        self.proj = nn.Conv3d(width, width, kernel_size=1, bias=False)
        self.res1 = nn.Conv3d(width, width, kernel_size=1, bias=False)
        self.res2 = nn.Conv3d(width, width, kernel_size=1, bias=False)
        self._init_passthrough(audio_channels + visual_channels)

    def _init_passthrough(self, concat_channels: int) -> None:
        """Start the fused output as the plain modality concatenation.

        The value conv copies each input channel into its own slot (as far
        as the width allows), while the attention projection and the
        second residual conv begin at zero.  The fused tensor at
        initialization is then exactly the value, so the head sees both
        raw modalities from the first step and the attention path fades
        in through the projection.
        """
        with torch.no_grad():
            self.value_conv.weight.mul_(0.1)
            for c in range(min(self.width, concat_channels)):
                self.value_conv.weight[c].zero_()
                self.value_conv.weight[c, c, 0, 0, 0] = 1.0
            self.proj.weight.zero_()
            self.res2.weight.zero_()

    # -- construction ------------------------------------------------------

    def build_qkv(self, audio_map: torch.Tensor, visual_map: torch.Tensor) -> FusionState:
        """Project both modalities into head-split query/key/value tensors.

        ``audio_map`` is (B, T, C_a, G, G); ``visual_map`` is
        (B, T, C_v, H, W) and is average-pooled to the audio grid.  The
        query comes from the audio path (channel alignment then a 3-D
        convolution), the key from the visual path, and the value from a
        pointwise convolution over the channel concatenation of both.
        """
        if audio_map.shape[1] != visual_map.shape[1]:
            raise AlignmentError(
                f"time steps differ: audio {audio_map.shape[1]} vs visual {visual_map.shape[1]}"
            )
        b, t = audio_map.shape[:2]
        grid = audio_map.shape[-1]
        if visual_map.shape[-2:] != (grid, grid):
            bt = b * t
            pooled = F.adaptive_avg_pool2d(
                visual_map.reshape(bt, *visual_map.shape[2:]), (grid, grid)
            )
            visual_map = pooled.reshape(b, t, -1, grid, grid)

        a = audio_map.permute(0, 2, 1, 3, 4)   # (B, C_a, T, G, G)
        v = visual_map.permute(0, 2, 1, 3, 4)  # (B, C_v, T, G, G)

        query = self.query_conv(self.align(a))
        key = self.key_conv(v)
        value = self.value_conv(torch.cat([a, v], dim=1))
        return FusionState(
            query=_split_heads(query, self.heads),
            key=_split_heads(key, self.heads),
            value=_split_heads(value, self.heads),
        )

    # -- attention ---------------------------------------------------------

    def attention_divisor(self, state: FusionState) -> float:
        d, _, h, w = state.key.shape[2:]
        if self.divisor == "sqrt_dim":
            return math.sqrt(d * h * w)
        if self.divisor == "paper_H":
            return float(h)
        return float(self.divisor)

    def cross_attend(
        self, state: FusionState, return_weights: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        """Per-head temporal cross-attention.

        Tokens are the T time steps with flattened (d, H', W') descriptors;
        the output keeps the head-split layout (B, heads, d, T, H', W').
        """
        return cross_attend(state, self.attention_divisor(state), return_weights)

    def fuse(self, attended: torch.Tensor, state: FusionState) -> torch.Tensor:
        """Concat heads, project, and add the residual-transformed value."""
        return fuse(attended, state.value_merged(), self.proj, self.res1, self.res2)

    def forward(self, audio_map: torch.Tensor, visual_map: torch.Tensor) -> torch.Tensor:
        state = self.build_qkv(audio_map, visual_map)
        attended = self.cross_attend(state)
        fused = self.fuse(attended, state)
        state.fused = fused
        return fused


def attention_weights(state: FusionState, divisor: float) -> torch.Tensor:
    """Row-stochastic (B, heads, T, T) attention weights."""
    b, heads, d, t, h, w = state.query.shape
    q = state.query.permute(0, 1, 3, 2, 4, 5).reshape(b, heads, t, d * h * w)
    k = state.key.permute(0, 1, 3, 2, 4, 5).reshape(b, heads, t, d * h * w)
    logits = torch.einsum("bhtx,bhsx->bhts", q, k) / divisor
    return torch.softmax(logits, dim=-1)


def cross_attend(
    state: FusionState, divisor: float, return_weights: bool = False
) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
    """Attend the value tokens with softmax(Q K^T / divisor) per head."""
    if state.query.shape != state.key.shape:
        raise ShapeError(
            f"query/key shapes differ: {tuple(state.query.shape)} vs {tuple(state.key.shape)}"
        )
    b, heads, d, t, h, w = state.value.shape
    weights = attention_weights(state, divisor)
    v = state.value.permute(0, 1, 3, 2, 4, 5).reshape(b, heads, t, d * h * w)
    out = torch.einsum("bhts,bhsx->bhtx", weights, v)
    out = out.reshape(b, heads, t, d, h, w).permute(0, 1, 3, 2, 4, 5)
    if return_weights:
        return out, weights
    return out


def fuse(
    attended: torch.Tensor,
    value: torch.Tensor,
    proj: nn.Conv3d,
    res1: nn.Conv3d,
    res2: nn.Conv3d,
) -> torch.Tensor:
    """Head concatenation, 1x1 projection, plus the value residual path.

    ``attended`` is (B, heads, d, T, H', W') or a list of per-head
    tensors; ``value`` is the pre-head value (B, width, T, H', W').
    Returns (B, T, width, H', W').
    """
    if isinstance(attended, (list, tuple)):
        attended = torch.stack(list(attended), dim=1)
    b, heads, d, t, h, w = attended.shape
    concat = attended.reshape(b, heads * d, t, h, w)
    residual = value + res2(F.relu(res1(value)))
    out = residual + proj(concat)
    return out.permute(0, 2, 1, 3, 4)
