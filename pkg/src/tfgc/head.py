"""Detection head over fused and frequency features, plus the joint loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError


@dataclass
class DetectionOutput:
    """Paired video and audio authenticity scores for one clip."""

    video_logit: float
    audio_logit: float
    video_prob: float
    audio_prob: float

    @classmethod
    def from_logits(cls, video_logit: float, audio_logit: float) -> "DetectionOutput":
        return cls(
            video_logit=float(video_logit),
            audio_logit=float(audio_logit),
            video_prob=float(torch.sigmoid(torch.tensor(float(video_logit)))),
            audio_prob=float(torch.sigmoid(torch.tensor(float(audio_logit)))),
        )


class DepthwiseSeparable(nn.Module):
    """Depthwise k x k conv followed by a pointwise 1x1 conv and ReLU."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3) -> None:
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_channels, in_channels, kernel, padding=kernel // 2, groups=in_channels
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.pointwise(self.depthwise(x)))


class DetectionHead(nn.Module):
    """Two depthwise-separable blocks, global pooling, and the video logit.

    The blocks run per frame; pooling spans time and space, so the logit
    cannot depend on frame order once the convolutions are pointwise.
    """

    def __init__(self, in_channels: int, width: int = 128, kernel: int = 3) -> None:
        super().__init__()
        self.block1 = DepthwiseSeparable(in_channels, width, kernel)
        self.block2 = DepthwiseSeparable(width, width, kernel)
        self.fc = nn.Linear(width, 1)

    def forward(self, fused: torch.Tensor, freq: torch.Tensor | None = None) -> torch.Tensor:
        """(B, T, C, H, W) fused features [+ (B, T, N, H, W) frequency] to (B,) logits."""
        x = fused if freq is None else torch.cat([fused, freq], dim=2)
        b, t, c, h, w = x.shape
        if self.block1.depthwise.in_channels != c:
            raise ShapeError(
                f"head expects {self.block1.depthwise.in_channels} channels, got {c}"
            )
        y = self.block2(self.block1(x.reshape(b * t, c, h, w)))
        pooled = y.reshape(b, t, -1, h, w).mean(dim=(1, 3, 4))
        return self.fc(pooled).squeeze(-1)


def joint_loss(
    out: DetectionOutput,
    video_label: int,
    audio_label: int,
    audio_weight: float = 1.0,
) -> float:
    """Video BCE plus audio_weight times audio BCE for a single clip."""
    video = torch.tensor(out.video_logit, dtype=torch.float64)
    audio = torch.tensor(out.audio_logit, dtype=torch.float64)
    return float(
        joint_loss_logits(
            video,
            audio,
            torch.tensor(float(video_label), dtype=torch.float64),
            torch.tensor(float(audio_label), dtype=torch.float64),
            audio_weight,
        )
    )


def joint_loss_logits(
    video_logits: torch.Tensor,
    audio_logits: torch.Tensor,
    video_labels: torch.Tensor,
    audio_labels: torch.Tensor,
    audio_weight: float = 1.0,
) -> torch.Tensor:
    """Batched joint loss on raw logits; labels are 0 (real) or 1 (fake)."""
    if audio_weight < 0:
        raise ValueError(f"audio_weight must be >= 0, got {audio_weight}")
    video_bce = F.binary_cross_entropy_with_logits(video_logits, video_labels)
    audio_bce = F.binary_cross_entropy_with_logits(audio_logits, audio_labels)
    return video_bce + audio_weight * audio_bce
