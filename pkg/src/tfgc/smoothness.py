"""Frame-transition smoothness gating.

Inter-frame differences are padded back to clip length so every frame
sees its difference to both neighbours, mixed across channels by a
learnable bias-free 1x1 convolution, and folded multiplicatively into
the input.  On a static clip the gate is exactly the identity.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ShapeError, TooFewFrames


def _ensure_batch(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.ndim == 4:
        return x.unsqueeze(0), False
    if x.ndim == 5:
        return x, True
    raise ShapeError(f"expected (T, C, H, W) or (B, T, C, H, W), got {tuple(x.shape)}")


def frame_diffs(frames: torch.Tensor) -> torch.Tensor:
    """Consecutive frame differences: element i is frame i+1 minus frame i."""
    if frames.shape[-4] < 2:
        raise TooFewFrames(f"need at least 2 frames, got {frames.shape[-4]}")
    return frames[..., 1:, :, :, :] - frames[..., :-1, :, :, :]


def pad_sum_diffs(diffs: torch.Tensor) -> torch.Tensor:
    """Sum of the front-padded and back-padded difference sequences.

    For diffs D_1..D_{T-1} the result has length T with entries
    [2*D_1, D_1+D_2, ..., D_{T-2}+D_{T-1}, 2*D_{T-1}].
    """
    front = torch.cat([diffs[..., :1, :, :, :], diffs], dim=-4)
    back = torch.cat([diffs, diffs[..., -1:, :, :, :]], dim=-4)
    return front + back


def difference_modulation(frames: torch.Tensor, dhat: torch.Tensor, mixer: nn.Conv2d) -> torch.Tensor:
    """Multiplicative attention term: frames * mixer(dhat), shape preserved."""
    x, batched = _ensure_batch(frames)
    d, _ = _ensure_batch(dhat)
    b, t, c, h, w = d.shape
    if mixer.in_channels != c:
        raise ShapeError(f"mixer expects {mixer.in_channels} channels, feature has {c}")
    gate = mixer(d.reshape(b * t, c, h, w)).reshape(b, t, -1, h, w)
    out = x * gate
    return out if batched else out.squeeze(0)


def apply_difference_gate(frames: torch.Tensor, mixer: nn.Conv2d) -> torch.Tensor:
    """Full gate: out = frames + frames * mixer(padded difference stack)."""
    diffs = frame_diffs(frames)
    dhat = pad_sum_diffs(diffs)
    return frames + difference_modulation(frames, dhat, mixer)


class FrameDifferenceGate(nn.Module):
    """Learnable channel reweighting of inter-frame difference information.

    The mixer starts at zero so the module begins as the identity and the
    modulation fades in during training.
    """

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.mixer = nn.Conv2d(channels, channels, kernel_size=1, bias=False)
        nn.init.zeros_(self.mixer.weight)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return apply_difference_gate(frames, self.mixer)
