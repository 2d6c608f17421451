"""The full detector: visual trunk, coherence modules, fusion, and heads.

Media preparation (decoding, log-mel encoding, frequency statistics) is
separated from the learnable forward pass so datasets can cache it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import AudioStream, make_adapter
from .config import RunConfig
from .discrepancy import TemporalDiscrepancyAttention
from .frequency import clip_band_features
from .fusion import AudioVisualFusion
from .head import DetectionHead, DetectionOutput
from .media_io import Clip, Waveform
from .smoothness import FrameDifferenceGate


@dataclass
class PreparedSample:
    """Cached per-clip inputs for the learnable forward pass."""

    clip: torch.Tensor        # (T, C, H, W) float32
    audio_feats: torch.Tensor  # (T_a, D_a) encoder output
    freq_feats: torch.Tensor   # (T, N_bands, H_b, W_b)


class VisualTrunk(nn.Module):
    """Stem and depthwise block lifting frames into the working resolution."""

    def __init__(self, in_channels: int, width: int, cap: int) -> None:
        super().__init__()
        self.cap = cap
        self.stem = nn.Conv2d(in_channels, width, 3, stride=2, padding=1)
        self.norm1 = nn.GroupNorm(4, width)
        self.depthwise = nn.Conv2d(width, width, 3, padding=1, groups=width)
        self.pointwise = nn.Conv2d(width, width, 1)
        self.norm2 = nn.GroupNorm(4, width)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        b, t, c, h, w = frames.shape
        x = F.relu(self.norm1(self.stem(frames.reshape(b * t, c, h, w))))
        x = F.relu(self.norm2(self.pointwise(self.depthwise(x))))
        if x.shape[-1] > self.cap:
            x = F.adaptive_avg_pool2d(x, (self.cap, self.cap))
        return x.reshape(b, t, -1, x.shape[-2], x.shape[-1])


class CoherenceDetector(nn.Module):
    """Joint video/audio authenticity model with per-module toggles."""

    def __init__(self, config: RunConfig) -> None:
        super().__init__()
        self.config = config
        self.adapter = make_adapter(config.audio_adapter, config.audio_pretrained_path)

        in_channels = 3
        self.gate = FrameDifferenceGate(in_channels) if config.use_rsfdm else None
        self.trunk = VisualTrunk(in_channels, config.trunk_width, config.trunk_cap)
        self.discrepancy = (
            TemporalDiscrepancyAttention(config.trunk_width, config.dctam_k_fraction)
            if config.use_dctam
            else None
        )
        self.audio = AudioStream(
            feat_dim=self.adapter.output_dim,
            res_dim=config.audio_res_dim,
            map_channels=config.audio_map_channels,
        )
        grid = self.audio.grid
        if config.use_vafm:
            self.fusion = AudioVisualFusion(
                audio_channels=config.audio_map_channels,
                visual_channels=config.trunk_width,
                width=config.vafm_width,
                heads=config.vafm_heads,
                divisor=config.vafm_divisor,
            )
            self.visual_only = None
        else:
            self.fusion = None
            self.visual_only = nn.Conv2d(config.trunk_width, config.vafm_width, 1, bias=False)
        self.grid = grid

        head_channels = config.vafm_width + (config.lfs_bands if config.use_lfs else 0)
        self.head = DetectionHead(head_channels, width=config.head_width, kernel=config.head_kernel)

    # -- media preparation (cacheable, not learnable) -----------------------

    def prepare(self, clip: Clip, waveform: Waveform) -> PreparedSample:
        frames = torch.from_numpy(np.ascontiguousarray(clip.frames, dtype=np.float32))
        audio_feats = self.adapter.encode(waveform).data
        cfg = self.config
        if cfg.use_lfs:
            freq = clip_band_features(
                clip.frames, window=cfg.lfs_window, stride=cfg.lfs_stride, n_bands=cfg.lfs_bands
            )
            freq_feats = torch.from_numpy(freq)
        else:
            freq_feats = torch.zeros(frames.shape[0], 0, 1, 1)
        return PreparedSample(clip=frames, audio_feats=audio_feats, freq_feats=freq_feats)

    # -- learnable forward ---------------------------------------------------

    def forward(
        self,
        clips: torch.Tensor,
        audio_feats: torch.Tensor,
        freq_feats: torch.Tensor,
        keep_visual_map: bool = False,
    ) -> dict:
        """Batched forward pass.

        ``clips`` is (B, T, C, H, W), ``audio_feats`` (B, T_a, D_a), and
        ``freq_feats`` (B, T, N_bands, H_b, W_b).  Returns a dict with
        ``video_logits``, ``audio_logits``, and, when requested, the
        pre-fusion ``visual_map`` with gradients retained for saliency.
        """
        b, t = clips.shape[:2]
        x = clips * 2.0 - 1.0  # fixed centering to [-1, 1]
        if self.gate is not None:
            x = self.gate(x)
        visual = self.trunk(x)
        if self.discrepancy is not None:
            visual = self.discrepancy(visual)
        if keep_visual_map and visual.requires_grad:
            visual.retain_grad()

        conditioned = (audio_feats - self.adapter.feature_shift) * self.adapter.feature_scale
        refined = self.audio.refine(conditioned)
        audio_logits = self.audio.logit(refined)

        if self.fusion is not None:
            audio_map = self.audio.maps(refined, t)
            fused = self.fusion(audio_map, visual)
        else:
            pooled = F.adaptive_avg_pool2d(
                visual.reshape(b * t, *visual.shape[2:]), (self.grid, self.grid)
            )
            fused = self.visual_only(pooled).reshape(b, t, -1, self.grid, self.grid)

        freq = None
        if self.config.use_lfs:
            bt = b * t
            freq = F.adaptive_avg_pool2d(
                freq_feats.reshape(bt, *freq_feats.shape[2:]), (self.grid, self.grid)
            ).reshape(b, t, -1, self.grid, self.grid)

        video_logits = self.head(fused, freq)
        out = {"video_logits": video_logits, "audio_logits": audio_logits}
        if keep_visual_map:
            out["visual_map"] = visual
        return out

    # -- single-clip helpers -------------------------------------------------

    @torch.no_grad()
    def predict(self, clip: Clip, waveform: Waveform) -> DetectionOutput:
        prepared = self.prepare(clip, waveform)
        out = self.forward(
            prepared.clip.unsqueeze(0),
            prepared.audio_feats.unsqueeze(0),
            prepared.freq_feats.unsqueeze(0),
        )
        return DetectionOutput.from_logits(
            out["video_logits"].item(), out["audio_logits"].item()
        )

    def saliency(self, clip: Clip, waveform: Waveform) -> np.ndarray:
        """Gradient-times-activation heatmaps at the last visual feature map.

        Returns (T, H, W) maps normalized to [0, 1], upsampled to the
        input frame size.
        """
        prepared = self.prepare(clip, waveform)
        clips = prepared.clip.unsqueeze(0).requires_grad_(True)
        with torch.enable_grad():
            out = self.forward(
                clips,
                prepared.audio_feats.unsqueeze(0),
                prepared.freq_feats.unsqueeze(0),
                keep_visual_map=True,
            )
            visual_map = out["visual_map"]
            out["video_logits"].sum().backward()
        grad = visual_map.grad
        cam = F.relu((grad * visual_map.detach()).sum(dim=2))  # (1, T, h, w)
        size = clip.frames.shape[-1]
        cam = F.interpolate(cam, size=(size, size), mode="bilinear", align_corners=False)
        cam = cam.squeeze(0)
        peak = cam.max()
        if peak > 0:
            cam = cam / peak
        return cam.detach().numpy()
