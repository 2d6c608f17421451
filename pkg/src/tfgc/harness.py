"""Training, evaluation, inference, and checkpoint round-tripping."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .data import Sample, collate, iter_batches, resolve_dataset
from .errors import DivergenceError, SchemaError
from .head import DetectionOutput, joint_loss_logits
from .media_io import load_clip, load_wav
from .model import CoherenceDetector

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class EvalReport:
    """Accuracy and per-class counts for one evaluation pass."""

    accuracy: float
    n: int
    counts: dict          # video channel: tp / tn / fp / fn at threshold 0.5
    audio_accuracy: float
    config_hash: str
    wall_seconds: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n": self.n,
            "counts": dict(self.counts),
            "audio_accuracy": self.audio_accuracy,
            "config_hash": self.config_hash,
            "wall_seconds": self.wall_seconds,
            **self.extras,
        }


def save_checkpoint(model: CoherenceDetector, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, Path(path))


def load_checkpoint(path: str | Path) -> CoherenceDetector:
    try:
        payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise SchemaError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise SchemaError(f"{path} is not a recognized checkpoint")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise SchemaError(
            f"checkpoint format {payload['format_version']} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    config = RunConfig(**payload["config"])
    model = CoherenceDetector(config)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise SchemaError(f"checkpoint weights do not match its config: {exc}") from exc
    model.eval()
    return model


def train(config: RunConfig, write_outputs: bool = True) -> tuple[CoherenceDetector, EvalReport]:
    """Train on the configured dataset; returns the model and a train report.

    Deterministic in the seed for synthetic data.  A non-finite loss
    aborts with :class:`DivergenceError`, keeping the last epoch's
    checkpoint on disk.
    """
    start = time.time()
    torch.manual_seed(config.seed)
    model = CoherenceDetector(config)
    samples = resolve_dataset(model, config, split="train")

    out_dir = Path(config.output_dir)
    ckpt_path = out_dir / "checkpoint.pt"
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    # anneal to a tenth of the base rate so late epochs settle
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(1, config.epochs), eta_min=config.learning_rate * 0.1
    )
    shuffle_rng = np.random.default_rng([config.seed, 0xBA7C])
    history = []
    model.train()
    for epoch in range(config.epochs):
        losses = []
        for batch in iter_batches(samples, config.batch_size, shuffle_rng):
            optimizer.zero_grad()
            out = model(batch["clips"], batch["audio_feats"], batch["freq_feats"])
            loss = joint_loss_logits(
                out["video_logits"],
                out["audio_logits"],
                batch["video_labels"],
                batch["audio_labels"],
                config.loss_audio_weight,
            )
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}; last checkpoint: "
                    f"{ckpt_path if ckpt_path.exists() else 'none'}"
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        scheduler.step()
        if write_outputs:
            save_checkpoint(model, ckpt_path)

    model.eval()
    report = evaluate_model(model, samples)
    report.extras["final_loss"] = history[-1] if history else None
    report.extras["epoch_losses"] = history
    report.extras["role"] = "train"
    report.wall_seconds = time.time() - start

    if write_outputs:
        save_checkpoint(model, ckpt_path)
        (out_dir / "train_report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n"
        )
        from . import report as reporting

        reporting.write_history_csv(history, out_dir / "history.csv")
        reporting.plot_loss_curve(history, out_dir / "loss_curve.png")
    return model, report


def _confusion(predictions: list[int], labels: list[int]) -> dict:
    counts = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for pred, label in zip(predictions, labels):
        if label == 1:
            counts["tp" if pred == 1 else "fn"] += 1
        else:
            counts["fp" if pred == 1 else "tn"] += 1
    return counts


def evaluate_predictions(
    outputs: list[DetectionOutput],
    video_labels: list[int],
    audio_labels: list[int],
    config_hash: str = "",
    wall_seconds: float = 0.0,
) -> EvalReport:
    """Score a list of detection outputs at the 0.5 threshold."""
    video_preds = [1 if o.video_prob > 0.5 else 0 for o in outputs]
    audio_preds = [1 if o.audio_prob > 0.5 else 0 for o in outputs]
    n = len(outputs)
    correct = sum(p == y for p, y in zip(video_preds, video_labels))
    audio_correct = sum(p == y for p, y in zip(audio_preds, audio_labels))
    return EvalReport(
        accuracy=correct / n,
        n=n,
        counts=_confusion(video_preds, video_labels),
        audio_accuracy=audio_correct / n,
        config_hash=config_hash,
        wall_seconds=wall_seconds,
    )


@torch.no_grad()
def score_samples(model: CoherenceDetector, samples: list[Sample], batch_size: int = 16) -> list[DetectionOutput]:
    model.eval()
    outputs = []
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start : start + batch_size])
        out = model(batch["clips"], batch["audio_feats"], batch["freq_feats"])
        for v, a in zip(out["video_logits"].tolist(), out["audio_logits"].tolist()):
            outputs.append(DetectionOutput.from_logits(v, a))
    return outputs


def evaluate_model(
    model: CoherenceDetector, samples: list[Sample], out_dir: str | Path | None = None
) -> EvalReport:
    """Evaluate a model over samples; optionally write report files."""
    start = time.time()
    outputs = score_samples(model, samples)
    report = evaluate_predictions(
        outputs,
        [s.video_label for s in samples],
        [s.audio_label for s in samples],
        config_hash=model.config.config_hash(),
    )
    report.wall_seconds = time.time() - start
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        from . import report as reporting

        reporting.write_scores_csv(samples, outputs, out_dir / "scores.csv")
        reporting.plot_score_histogram(samples, outputs, out_dir / "score_hist.png")
    return report


def infer(
    model: CoherenceDetector,
    frames_dir: str | Path,
    wav_path: str | Path,
    out_dir: str | Path | None = None,
) -> tuple[DetectionOutput, np.ndarray]:
    """Score one clip and produce per-frame saliency heatmaps."""
    config = model.config
    clip = load_clip(
        frames_dir,
        T=config.clip_len,
        size=config.frame_size,
        stride=config.frame_stride,
        frame_rate=config.frame_rate,
    )
    waveform = load_wav(wav_path)
    output = model.predict(clip, waveform)
    saliency = model.saliency(clip, waveform)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "clip_id": clip.clip_id,
            "video_logit": output.video_logit,
            "audio_logit": output.audio_logit,
            "video_prob": output.video_prob,
            "audio_prob": output.audio_prob,
            "config_hash": config.config_hash(),
        }
        (out_dir / "detection.json").write_text(json.dumps(payload, indent=2) + "\n")
        from . import report as reporting

        reporting.save_saliency_frames(clip, saliency, out_dir / "saliency")
    return output, saliency
