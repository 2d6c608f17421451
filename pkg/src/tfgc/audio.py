"""Audio feature extraction, refinement, and the audio authenticity head.

A pluggable encoder adapter maps raw waveforms to a feature sequence.
The default adapter is a deterministic log-mel filterbank so tests and
CI never need model downloads; a pretrained speech-representation
adapter can be swapped in for real runs.  On top of the encoder sit two
residual blocks, a clip-level authenticity head, and the conversion to
2-D per-frame maps consumed by the fusion stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import AudioTooShort, DataError
from .media_io import AUDIO_SAMPLE_RATE, Waveform

LOG_FLOOR = 1e-8


@dataclass
class AudioFeatureSeq:
    """Encoder output: (T_a, D_a) features with a fixed hop in seconds."""

    data: torch.Tensor
    hop: float


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters (HTK scale) over rFFT bin center frequencies."""
    if fmax is None:
        fmax = sample_rate / 2.0
    to_mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    from_mel = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    mel_points = np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2)
    hz_points = from_mel(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    weights = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        left, center, right = hz_points[m : m + 3]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        weights[m] = np.clip(np.minimum(up, down), 0.0, None)
    return weights


class LogMelAdapter:
    """Deterministic log-mel filterbank encoder (64 mels, 25 ms / 20 ms).

    ``feature_shift``/``feature_scale`` tell the model how to condition
    the raw log features to roughly zero mean, unit scale before its
    learnable layers; the encode output itself stays plain log-mel.
    """

    name = "logmel"
    feature_shift = -4.0
    feature_scale = 0.25

    def __init__(
        self,
        n_mels: int = 64,
        sample_rate: int = AUDIO_SAMPLE_RATE,
        win_length: int = 400,
        hop_length: int = 320,
        n_fft: int = 512,
    ) -> None:
        self.output_dim = n_mels
        self.sample_rate = sample_rate
        self.win_length = win_length
        self.hop_length = hop_length
        self.n_fft = n_fft
        self._window = np.hanning(win_length)
        self._mel = mel_filterbank(n_mels, n_fft, sample_rate)

    @property
    def hop_seconds(self) -> float:
        return self.hop_length / self.sample_rate

    def encode(self, waveform: Waveform | np.ndarray) -> AudioFeatureSeq:
        samples = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.size
        if n < self.hop_length:
            raise AudioTooShort(f"waveform has {n} samples, hop is {self.hop_length}")
        n_frames = math.ceil(n / self.hop_length)
        padded_len = (n_frames - 1) * self.hop_length + self.win_length
        padded = np.zeros(padded_len)
        padded[:n] = samples
        idx = np.arange(self.win_length)[None, :] + self.hop_length * np.arange(n_frames)[:, None]
        frames = padded[idx] * self._window[None, :]
        spectrum = np.fft.rfft(frames, n=self.n_fft, axis=1)
        power = np.abs(spectrum) ** 2
        mel_power = power @ self._mel.T
        feats = np.log10(mel_power + LOG_FLOOR)
        return AudioFeatureSeq(torch.from_numpy(feats.astype(np.float32)), hop=self.hop_seconds)


class PretrainedSpeechAdapter:
    """Seam for a pretrained speech-representation model.

    Loads lazily through the ``transformers`` package; the wrapped module
    is exposed for fine-tuning.  Nothing in the test suite requires this
    adapter.
    """

    name = "pretrained"
    feature_shift = 0.0
    feature_scale = 1.0

    def __init__(self, model_path: str, sample_rate: int = AUDIO_SAMPLE_RATE) -> None:
        try:
            from transformers import Wav2Vec2Model
        except ImportError as exc:  # pragma: no cover
            raise DataError(
                "the pretrained audio adapter needs the 'transformers' package "
                "(pip install tfgc[speech])"
            ) from exc
        self.module = Wav2Vec2Model.from_pretrained(model_path)
        self.module.eval()
        self.output_dim = int(self.module.config.hidden_size)
        self.sample_rate = sample_rate
        # wav2vec-style encoders step 20 ms at 16 kHz
        self.hop_seconds = 0.02

    def encode(self, waveform: Waveform | np.ndarray) -> AudioFeatureSeq:  # pragma: no cover
        samples = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
        if samples.size < int(self.hop_seconds * self.sample_rate):
            raise AudioTooShort(f"waveform has {samples.size} samples")
        batch = torch.from_numpy(np.asarray(samples, dtype=np.float32)).unsqueeze(0)
        hidden = self.module(batch).last_hidden_state.squeeze(0)
        return AudioFeatureSeq(hidden, hop=self.hop_seconds)


def make_adapter(kind: str, pretrained_path: str | None = None):
    if kind == "logmel":
        return LogMelAdapter()
    if kind == "pretrained":
        if not pretrained_path:
            raise DataError("audio.pretrained_path must be set for the pretrained adapter")
        return PretrainedSpeechAdapter(pretrained_path)
    raise DataError(f"unknown audio adapter {kind!r}")


def resample_time(feats: torch.Tensor, t_steps: int) -> torch.Tensor:
    """Linearly interpolate (..., T_a, D) features onto t_steps frame centers.

    Output step t samples the sequence at normalized time (t + 0.5) / t_steps,
    treating input step s as centered at (s + 0.5) / T_a.
    """
    t_a = feats.shape[-2]
    query = (torch.arange(t_steps, dtype=feats.dtype) + 0.5) / t_steps
    pos = query * t_a - 0.5
    lo = pos.floor().clamp(0, t_a - 1).long()
    hi = (lo + 1).clamp(max=t_a - 1)
    frac = (pos - lo.to(feats.dtype)).clamp(0.0, 1.0).unsqueeze(-1)
    return feats[..., lo, :] * (1.0 - frac) + feats[..., hi, :] * frac


class ResidualBlock(nn.Module):
    """Per-step linear, nonlinearity, linear, with a skip connection."""

    def __init__(self, dim: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.fc2(F.relu(self.fc1(x)))


def grid_permutation(n: int) -> np.ndarray:
    """Coprime-stride shuffle of feature indices onto the 2-D grid.

    Spreads neighbouring feature dimensions across the whole grid, so
    every small spatial neighbourhood of the reshaped map sees the full
    feature range rather than one contiguous slice of it.
    """
    stride = max(1, round(n * 0.382))
    while math.gcd(stride, n) != 1:
        stride += 1
    return (np.arange(n) * stride) % n


class AudioStream(nn.Module):
    """Residual refinement, the audio logit head, and fusion-ready 2-D maps."""

    def __init__(
        self,
        feat_dim: int = 64,
        res_dim: int = 256,
        map_channels: int = 16,
        grid: int = 8,
    ) -> None:
        super().__init__()
        self.feat_dim = feat_dim
        self.grid = grid
        self.grid_channels = math.ceil(feat_dim / (grid * grid))
        self.res1 = ResidualBlock(feat_dim, res_dim)
        self.res2 = ResidualBlock(feat_dim, res_dim)
        self.head = nn.Linear(feat_dim, 1)
        self.map_conv1 = nn.Conv2d(self.grid_channels, map_channels, 3, padding=1)
        self.map_conv2 = nn.Conv2d(map_channels, map_channels, 3, padding=1)
        self.map_channels = map_channels
        perm = grid_permutation(self.grid_channels * grid * grid)
        self.register_buffer("grid_perm", torch.from_numpy(perm).long(), persistent=False)

    def refine(self, feats: torch.Tensor) -> torch.Tensor:
        """Two residual blocks over encoder output (..., T_a, D)."""
        return self.res2(self.res1(feats))

    def logit(self, refined: torch.Tensor) -> torch.Tensor:
        """Clip-level audio authenticity logit via temporal mean pooling."""
        return self.head(refined.mean(dim=-2)).squeeze(-1)

    def maps(self, refined: torch.Tensor, t_steps: int) -> torch.Tensor:
        """Per-frame 2-D audio maps: (..., T, map_channels, grid, grid).

        The map path centers each feature dimension over the clip before
        the convolutions: fusion consumes temporal dynamics, while the
        absolute spectral content stays with the authenticity head.
        """
        aligned = resample_time(refined, t_steps)
        aligned = aligned - aligned.mean(dim=-2, keepdim=True)
        lead = aligned.shape[:-1]
        padded_dim = self.grid_channels * self.grid * self.grid
        pad = padded_dim - self.feat_dim
        if pad:
            aligned = F.pad(aligned, (0, pad))
        spread = aligned[..., self.grid_perm]
        grid_in = spread.reshape(-1, self.grid_channels, self.grid, self.grid)
        out = self.map_conv2(F.relu(self.map_conv1(grid_in)))
        return out.reshape(*lead, self.map_channels, self.grid, self.grid)

    def forward(self, feats: torch.Tensor, t_steps: int) -> tuple[torch.Tensor, torch.Tensor]:
        refined = self.refine(feats)
        return self.logit(refined), self.maps(refined, t_steps)


def encode(waveform: Waveform, adapter, stream: AudioStream | None = None) -> AudioFeatureSeq:
    """Encoder adapter plus, when a stream is given, its residual blocks."""
    seq = adapter.encode(waveform)
    if stream is None:
        return seq
    return AudioFeatureSeq(stream.refine(seq.data), hop=seq.hop)
