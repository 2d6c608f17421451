"""Figure rendering and delimited outputs for the report paths.

Every reporting entry point writes machine-readable CSV next to a
rendered matplotlib figure, so runs can be inspected without re-loading
checkpoints.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .head import DetectionOutput
from .manifest import DistributionReport
from .media_io import Clip


def write_history_csv(history: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history):
            writer.writerow([epoch, f"{loss:.6f}"])


def plot_loss_curve(history: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(len(history)), history, marker="o", lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_scores_csv(samples, outputs: list[DetectionOutput], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["clip_id", "mode", "video_label", "video_prob", "audio_label", "audio_prob"]
        )
        for sample, out in zip(samples, outputs):
            writer.writerow(
                [
                    sample.clip_id,
                    sample.mode or "",
                    sample.video_label,
                    f"{out.video_prob:.6f}",
                    sample.audio_label,
                    f"{out.audio_prob:.6f}",
                ]
            )


def plot_score_histogram(samples, outputs: list[DetectionOutput], path: str | Path) -> None:
    real = [o.video_prob for s, o in zip(samples, outputs) if s.video_label == 0]
    fake = [o.video_prob for s, o in zip(samples, outputs) if s.video_label == 1]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    bins = np.linspace(0, 1, 21)
    if real:
        ax.hist(real, bins=bins, alpha=0.6, label="real")
    if fake:
        ax.hist(fake, bins=bins, alpha=0.6, label="fake")
    ax.axvline(0.5, color="k", lw=0.8, ls="--")
    ax.set_xlabel("video fake probability")
    ax.set_ylabel("clips")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_distribution_csv(report: DistributionReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "train", "test"])
        for scenario_id in sorted(report.per_scenario):
            row = report.per_scenario[scenario_id]
            writer.writerow([scenario_id, row["train"], row["test"]])


def plot_distribution(report: DistributionReport, path: str | Path) -> None:
    ids = sorted(report.per_scenario)
    train = [report.per_scenario[i]["train"] for i in ids]
    test = [report.per_scenario[i]["test"] for i in ids]
    x = np.arange(len(ids))
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(9, 3.4), width_ratios=[3, 1])
    ax.bar(x - 0.2, train, width=0.4, label="train")
    ax.bar(x + 0.2, test, width=0.4, label="test")
    ax.set_xticks(x, [str(i) for i in ids])
    ax.set_xlabel("scenario id (0 = pristine)")
    ax.set_ylabel("clips")
    ax.legend()
    ax2.pie(
        [report.totals["real"], report.totals["fake"]],
        labels=["real", "fake"],
        autopct="%1.1f%%",
        colors=["#4c9f70", "#c3553a"],
    )
    ax2.set_title(f"n = {report.total}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_saliency_frames(clip: Clip, saliency: np.ndarray, out_dir: str | Path) -> list[Path]:
    """One heatmap image per frame, saliency overlaid on the input frame."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(saliency.shape[0]):
        fig, ax = plt.subplots(figsize=(2.6, 2.6))
        frame = clip.frames[t]
        base = frame[0] if frame.shape[0] == 1 else frame.transpose(1, 2, 0)
        ax.imshow(base, cmap="gray" if frame.shape[0] == 1 else None)
        ax.imshow(saliency[t], cmap="inferno", alpha=0.55, vmin=0.0, vmax=1.0)
        ax.axis("off")
        out = out_dir / f"frame_{t:03d}.png"
        fig.savefig(out, dpi=100, bbox_inches="tight", pad_inches=0)
        plt.close(fig)
        paths.append(out)
    return paths
