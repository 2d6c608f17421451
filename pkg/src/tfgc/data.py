"""Dataset assembly: synthetic generation and manifest-backed loading."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .errors import DataError
from .manifest import derive_labels, read_manifest
from .media_io import (
    SYNTH_MODES,
    LabeledPair,
    label_to_int,
    load_clip,
    load_wav,
    synth_pair,
)
from .model import CoherenceDetector


@dataclass
class Sample:
    """One prepared training/evaluation sample."""

    clip: torch.Tensor
    audio_feats: torch.Tensor
    freq_feats: torch.Tensor
    video_label: int
    audio_label: int
    clip_id: str
    mode: str | None = None  # synthetic generation mode, when known


def _prepare_pair(model: CoherenceDetector, pair: LabeledPair, mode: str | None) -> Sample:
    prepared = model.prepare(pair.clip, pair.waveform)
    return Sample(
        clip=prepared.clip,
        audio_feats=prepared.audio_feats,
        freq_feats=prepared.freq_feats,
        video_label=label_to_int(pair.video_label),
        audio_label=label_to_int(pair.audio_label),
        clip_id=pair.clip.clip_id,
        mode=mode,
    )


def synthetic_samples(
    model: CoherenceDetector,
    count: int,
    seed: int,
    T: int,
    size: int,
    salt: int = 0,
) -> list[Sample]:
    """A balanced coherent/jitter/desync dataset, deterministic in seed.

    ``salt`` separates independent datasets (train vs held-out) drawn
    from the same base seed.
    """
    seeds = np.random.SeedSequence([int(seed), int(salt)]).generate_state(count)
    samples = []
    for i in range(count):
        mode = SYNTH_MODES[i % len(SYNTH_MODES)]
        pair = synth_pair(int(seeds[i]), mode, T=T, size=size)
        samples.append(_prepare_pair(model, pair, mode))
    return samples


def manifest_samples(model: CoherenceDetector, config: RunConfig, split: str | None = None) -> list[Sample]:
    """Load every manifest record's frames and audio from the data root."""
    if not config.manifest or not config.data_root:
        raise DataError("manifest runs need data.manifest and data.root")
    root = Path(config.data_root)
    records = read_manifest(config.manifest)
    if split is not None:
        records = [r for r in records if r.split == split]
    if not records:
        raise DataError(f"no records for split {split!r} in {config.manifest}")
    samples = []
    for record in records:
        video_label, audio_label = derive_labels(record)
        clip = load_clip(
            root / record.clip_id,
            T=config.clip_len,
            size=config.frame_size,
            stride=config.frame_stride,
            frame_rate=config.frame_rate,
        )
        waveform = load_wav(root / f"{record.clip_id}.wav")
        pair = LabeledPair(clip, waveform, video_label, audio_label)
        samples.append(_prepare_pair(model, pair, None))
    return samples


def resolve_dataset(model: CoherenceDetector, config: RunConfig, split: str = "train") -> list[Sample]:
    if config.data_kind == "synthetic":
        salt = 0 if split == "train" else 1
        return synthetic_samples(
            model,
            count=config.synth_count,
            seed=config.seed,
            T=config.clip_len,
            size=config.frame_size,
            salt=salt,
        )
    return manifest_samples(model, config, split=split)


def collate(samples: list[Sample]) -> dict:
    return {
        "clips": torch.stack([s.clip for s in samples]),
        "audio_feats": torch.stack([s.audio_feats for s in samples]),
        "freq_feats": torch.stack([s.freq_feats for s in samples]),
        "video_labels": torch.tensor([s.video_label for s in samples], dtype=torch.float32),
        "audio_labels": torch.tensor([s.audio_label for s in samples], dtype=torch.float32),
    }


def iter_batches(samples: list[Sample], batch_size: int, rng: np.random.Generator | None = None):
    """Yield collated batches, shuffled when a generator is supplied."""
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        yield collate(chunk)
