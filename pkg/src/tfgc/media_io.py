"""Clip and waveform ingestion plus a deterministic synthetic pair generator.

On-disk layout handled here: one directory per clip holding frames named
``00000.png`` (``.jpg`` also accepted) in lexicographic order, with the
aligned mono waveform stored beside the directory as ``<clip_id>.wav``
(16-bit PCM).

The synthetic generator renders a face proxy (elliptical head, two eye
dots, a mouth bar) whose mouth opening tracks the audio amplitude
envelope.  The ``jitter`` and ``desync`` modes each break exactly one
coherence property of the ``coherent`` rendering, so the generated pairs
serve as labelled training data without any external footage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError, DecodeError, MissingFrames

AUDIO_SAMPLE_RATE = 16000
DEFAULT_FRAME_RATE = 25.0
SYNTH_MODES = ("coherent", "jitter", "desync")

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_MODE_CODE = {"coherent": 1, "jitter": 2, "desync": 3}
_SCENE_SALT = 0x5CE2


@dataclass
class ChannelStats:
    """Per-channel affine parameters recorded by :func:`normalize`."""

    mean: np.ndarray
    std: np.ndarray  # 1.0 where the raw channel had zero variance


@dataclass
class Clip:
    """A fixed-length stack of square face-crop frames.

    ``frames`` has shape (T, C, H, W) with values in [0, 1] for ingested
    clips.  Standardized clips carry their remap in ``norm`` and are
    exempt from the range check.
    """

    frames: np.ndarray
    frame_rate: float
    clip_id: str
    norm: ChannelStats | None = None

    def __post_init__(self) -> None:
        f = self.frames
        if f.ndim != 4:
            raise ValueError(f"frames must be (T, C, H, W), got shape {f.shape}")
        t, c, h, w = f.shape
        if t < 2:
            raise ValueError(f"clip needs at least 2 frames, got {t}")
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if h != w:
            raise ValueError(f"frames must be square, got {h}x{w}")
        if not np.isfinite(f).all():
            raise ValueError("clip contains non-finite values")
        if self.norm is None and (f.min() < 0.0 or f.max() > 1.0):
            raise ValueError("ingested clip values must lie in [0, 1]")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.frames.shape[0] / self.frame_rate


@dataclass
class Waveform:
    """Mono audio samples time-aligned to a clip."""

    samples: np.ndarray
    sample_rate: int
    clip_id: str

    def __post_init__(self) -> None:
        s = self.samples
        if s.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {s.shape}")
        if not np.isfinite(s).all():
            raise ValueError("waveform contains non-finite values")
        if s.size and (s.min() < -1.0 or s.max() > 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class SynthTruth:
    """Ground-truth channels the generator used while rendering."""

    envelope: np.ndarray      # (T,) audio amplitude envelope at frame centers
    aperture: np.ndarray      # (T,) mouth opening actually rendered, pixels
    mouth_boxes: np.ndarray   # (T, 4) per-frame x0, y0, x1, y1 mouth region
    head_centers: np.ndarray  # (T, 2) per-frame head center, pixels


@dataclass
class LabeledPair:
    """A clip with its aligned waveform and independent authenticity labels."""

    clip: Clip
    waveform: Waveform
    video_label: str  # "real" | "fake"
    audio_label: str
    truth: SynthTruth | None = None


def label_to_int(label: str) -> int:
    """Map "real"/"fake" to 0/1 for loss and metric computation."""
    if label == "real":
        return 0
    if label == "fake":
        return 1
    raise ValueError(f"unknown label {label!r}")


# ---------------------------------------------------------------------------
# ingestion


def load_clip(
    frame_dir: str | Path,
    T: int,
    size: int,
    stride: int = 1,
    frame_rate: float = DEFAULT_FRAME_RATE,
) -> Clip:
    """Load the first T frames from a directory of image files.

    Frames are taken in lexicographic filename order with an optional
    sampling ``stride``, resized to ``size`` x ``size`` and scaled to
    [0, 1].  Raises :class:`MissingFrames` when the directory holds too
    few frames and :class:`DecodeError` for unreadable images.
    """
    frame_dir = Path(frame_dir)
    if not frame_dir.is_dir():
        raise MissingFrames(f"{frame_dir} is not a directory")
    files = sorted(
        p for p in frame_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    needed = stride * (T - 1) + 1
    if len(files) < needed:
        raise MissingFrames(
            f"{frame_dir} holds {len(files)} frames, need {needed} "
            f"for T={T} at stride {stride}"
        )
    picked = files[::stride][:T]

    arrays = []
    for path in picked:
        try:
            with Image.open(path) as img:
                img.load()
                if img.mode != "L":
                    img = img.convert("RGB")
                if img.size != (size, size):
                    img = img.resize((size, size), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise DecodeError(f"cannot decode frame {path}: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[None, :, :]
        else:
            arr = arr.transpose(2, 0, 1)
        arrays.append(arr)

    channels = {a.shape[0] for a in arrays}
    if channels == {1, 3}:
        arrays = [np.repeat(a, 3, axis=0) if a.shape[0] == 1 else a for a in arrays]
    frames = np.stack(arrays).astype(np.float32)
    np.clip(frames, 0.0, 1.0, out=frames)
    return Clip(frames, frame_rate=frame_rate, clip_id=frame_dir.name)


def load_wav(path: str | Path, target_rate: int = AUDIO_SAMPLE_RATE) -> Waveform:
    """Read a PCM WAV file as mono float samples, resampled to target_rate."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DecodeError(f"cannot read wav {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if rate != target_rate:
        g = math.gcd(int(rate), int(target_rate))
        samples = resample_poly(samples, target_rate // g, rate // g)
    samples = np.clip(samples, -1.0, 1.0).astype(np.float32)
    return Waveform(samples, sample_rate=target_rate, clip_id=path.stem)


def save_wav(path: str | Path, waveform: Waveform) -> None:
    """Write a waveform as 16-bit PCM mono."""
    quantized = np.round(waveform.samples * 32767.0).astype(np.int16)
    wavfile.write(Path(path), waveform.sample_rate, quantized)


def normalize(clip: Clip) -> Clip:
    """Standardize each channel to zero mean, unit variance over the clip.

    Channels with zero variance are centered only.  The affine remap is
    recorded on the returned clip so :func:`denormalize` can invert it.
    """
    x = clip.frames.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    safe = np.where(std > 0.0, std, 1.0)
    out = (x - mean[None, :, None, None]) / safe[None, :, None, None]
    stats = ChannelStats(mean=mean, std=safe)
    return Clip(
        out.astype(clip.frames.dtype),
        frame_rate=clip.frame_rate,
        clip_id=clip.clip_id,
        norm=stats,
    )


def denormalize(clip: Clip) -> Clip:
    """Invert :func:`normalize` using the recorded channel statistics."""
    if clip.norm is None:
        raise DataError("clip carries no normalization record")
    x = clip.frames.astype(np.float64)
    x = x * clip.norm.std[None, :, None, None] + clip.norm.mean[None, :, None, None]
    x = np.clip(x, 0.0, 1.0)
    return Clip(
        x.astype(clip.frames.dtype),
        frame_rate=clip.frame_rate,
        clip_id=clip.clip_id,
    )


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class _Scene:
    base_center: np.ndarray
    sway_amp: np.ndarray
    sway_freq: np.ndarray
    sway_phase: np.ndarray
    radii: np.ndarray
    eye_offset: np.ndarray
    eye_radius: float
    mouth_drop: float
    mouth_width: float
    face_color: np.ndarray
    mouth_color: np.ndarray
    eye_color: np.ndarray
    bg_color: np.ndarray
    envelope: np.ndarray
    tone_freq: float
    tone_phases: np.ndarray


def _sample_scene(rng: np.random.Generator, T: int, size: int) -> _Scene:
    s = float(size)
    base_center = s / 2.0 + rng.uniform(-s / 20.0, s / 20.0, 2)
    sway_amp = rng.uniform(s / 28.0, s / 16.0, 2)
    sway_freq = rng.uniform(0.5, 1.5, 2)
    sway_phase = rng.uniform(0.0, 2.0 * np.pi, 2)
    radii = np.array([s * rng.uniform(0.26, 0.30), s * rng.uniform(0.34, 0.38)])
    eye_offset = np.array([radii[0] * 0.45, radii[1] * 0.38])
    eye_radius = s * rng.uniform(0.045, 0.06)
    mouth_drop = radii[1] * 0.50
    mouth_width = radii[0] * 1.25

    base = rng.uniform(0.50, 0.60)
    amp1 = rng.uniform(0.22, 0.32)
    amp2 = rng.uniform(0.05, 0.12)
    ph = rng.uniform(0.0, 2.0 * np.pi, 2)
    k = np.arange(T)
    env = (
        base
        + amp1 * np.sin(2.0 * np.pi * k / T + ph[0])
        + amp2 * np.sin(4.0 * np.pi * k / T + ph[1])
    )
    env = np.clip(env, 0.05, 1.0)

    face = np.clip(np.array([0.84, 0.72, 0.60]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
    mouth = np.clip(np.array([0.30, 0.10, 0.10]) + rng.uniform(-0.04, 0.04, 3), 0, 1)
    eye = np.array([0.08, 0.08, 0.10])
    bg = np.clip(np.array([0.06, 0.06, 0.09]) + rng.uniform(-0.02, 0.02, 3), 0, 1)

    return _Scene(
        base_center=base_center,
        sway_amp=sway_amp,
        sway_freq=sway_freq,
        sway_phase=sway_phase,
        radii=radii,
        eye_offset=eye_offset,
        eye_radius=float(eye_radius),
        mouth_drop=float(mouth_drop),
        mouth_width=float(mouth_width),
        face_color=face,
        mouth_color=mouth,
        eye_color=eye,
        bg_color=bg,
        envelope=env,
        tone_freq=float(rng.uniform(120.0, 260.0)),
        tone_phases=rng.uniform(0.0, 2.0 * np.pi, 3),
    )


def _head_centers(scene: _Scene, T: int) -> np.ndarray:
    k = np.arange(T)[:, None]
    return scene.base_center[None, :] + scene.sway_amp[None, :] * np.sin(
        2.0 * np.pi * scene.sway_freq[None, :] * k / T + scene.sway_phase[None, :]
    )


def _scramble_envelope(env: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Phase-scramble an envelope, keeping its amplitude spectrum and mean.

    Re-draws the phases until the scrambled copy decorrelates from the
    original (|Pearson r| < 0.3), so desync clips carry no residual
    audio-visual alignment.  Deterministic in the supplied generator.
    """
    spectrum = np.fft.rfft(env)
    mags = np.abs(spectrum)
    n = env.size
    best: np.ndarray | None = None
    best_r = np.inf
    for _ in range(64):
        phases = rng.uniform(0.0, 2.0 * np.pi, mags.size)
        scrambled = mags * np.exp(1j * phases)
        scrambled[0] = spectrum[0]
        if n % 2 == 0:
            scrambled[-1] = mags[-1] * rng.choice([-1.0, 1.0])
        cand = np.fft.irfft(scrambled, n=n)
        r = abs(float(np.corrcoef(env, cand)[0, 1]))
        if r < best_r:
            best_r = r
            best = cand
        if r < 0.3:
            break
    assert best is not None
    return best


def _aperture_from(drive: np.ndarray, size: int) -> np.ndarray:
    lo, hi = float(drive.min()), float(drive.max())
    span = hi - lo if hi > lo else 1.0
    unit = (drive - lo) / span
    ap_min = max(1.0, size / 32.0)
    ap_max = size * 0.26
    return ap_min + unit * (ap_max - ap_min)


def _render_frame(
    scene: _Scene,
    center: np.ndarray,
    eye_radius: float,
    aperture: float,
    size: int,
) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) + 0.5
    yy = coords[:, None]
    xx = coords[None, :]
    cx, cy = float(center[0]), float(center[1])
    rx, ry = scene.radii

    def blend(img: np.ndarray, alpha: np.ndarray, color: np.ndarray) -> np.ndarray:
        return img * (1.0 - alpha[None]) + color[:, None, None] * alpha[None]

    img = np.broadcast_to(scene.bg_color[:, None, None], (3, size, size)).copy()

    d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    face_alpha = np.clip((1.0 - d) / 0.08, 0.0, 1.0)
    img = blend(img, face_alpha, scene.face_color)

    ex, ey = scene.eye_offset
    for sign in (-1.0, 1.0):
        dist = np.sqrt((xx - (cx + sign * ex)) ** 2 + (yy - (cy - ey)) ** 2)
        eye_alpha = np.clip(eye_radius - dist + 0.5, 0.0, 1.0)
        img = blend(img, eye_alpha, scene.eye_color)

    my = cy + scene.mouth_drop
    half_w = scene.mouth_width / 2.0
    ax = np.clip(half_w - np.abs(xx - cx) + 0.5, 0.0, 1.0)
    ay = np.clip(aperture / 2.0 - np.abs(yy - my) + 0.5, 0.0, 1.0)
    img = blend(img, ax * ay, scene.mouth_color)

    return np.clip(img, 0.0, 1.0)


def _render_audio(scene: _Scene, T: int, frame_rate: float) -> np.ndarray:
    n = int(round(T / frame_rate * AUDIO_SAMPLE_RATE))
    t = np.arange(n, dtype=np.float64) / AUDIO_SAMPLE_RATE
    frame_t = (np.arange(T) + 0.5) / frame_rate
    env = np.interp(t, frame_t, scene.envelope)
    f0 = scene.tone_freq
    p = scene.tone_phases
    tone = (
        0.60 * np.sin(2.0 * np.pi * f0 * t + p[0])
        + 0.25 * np.sin(4.0 * np.pi * f0 * t + p[1])
        + 0.15 * np.sin(6.0 * np.pi * f0 * t + p[2])
    )
    return (0.95 * env * tone).astype(np.float64)


def synth_pair(
    seed: int,
    mode: str,
    T: int = 8,
    size: int = 32,
    frame_rate: float = DEFAULT_FRAME_RATE,
) -> LabeledPair:
    """Generate one deterministic synthetic clip-audio pair.

    ``coherent`` renders smooth head sway with the mouth opening tracking
    the audio envelope (labels real/real).  ``jitter`` perturbs the head
    position and eye radius independently per frame (fake/real).
    ``desync`` keeps the smooth motion but drives the mouth with a
    phase-scrambled copy of the envelope (fake/real).
    """
    if mode not in SYNTH_MODES:
        raise ValueError(f"mode must be one of {SYNTH_MODES}, got {mode!r}")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if T < 4:
        raise ValueError(f"T must be >= 4, got {T}")

    scene_rng = np.random.default_rng([int(seed), _SCENE_SALT])
    mode_rng = np.random.default_rng([int(seed), _MODE_CODE[mode]])
    scene = _sample_scene(scene_rng, T, size)

    drive = scene.envelope
    if mode == "desync":
        drive = _scramble_envelope(scene.envelope, mode_rng)
    aperture = _aperture_from(drive, size)

    centers = _head_centers(scene, T)
    eye_radii = np.full(T, scene.eye_radius)
    if mode == "jitter":
        centers = centers + mode_rng.uniform(-size / 14.0, size / 14.0, (T, 2))
        eye_radii = scene.eye_radius * mode_rng.uniform(0.55, 1.70, T)

    frames = np.stack(
        [
            _render_frame(scene, centers[k], float(eye_radii[k]), float(aperture[k]), size)
            for k in range(T)
        ]
    ).astype(np.float32)

    ap_max = size * 0.26
    boxes = np.zeros((T, 4), dtype=np.int64)
    for k in range(T):
        cx, cy = centers[k]
        my = cy + scene.mouth_drop
        boxes[k] = [
            int(np.clip(math.floor(cx - scene.mouth_width / 2.0 - 1), 0, size)),
            int(np.clip(math.floor(my - ap_max / 2.0 - 1), 0, size)),
            int(np.clip(math.ceil(cx + scene.mouth_width / 2.0 + 1), 0, size)),
            int(np.clip(math.ceil(my + ap_max / 2.0 + 1), 0, size)),
        ]

    clip_id = f"synth-{mode}-{int(seed):08d}"
    clip = Clip(frames, frame_rate=frame_rate, clip_id=clip_id)
    samples = _render_audio(scene, T, frame_rate).astype(np.float32)
    waveform = Waveform(samples, sample_rate=AUDIO_SAMPLE_RATE, clip_id=clip_id)

    video_label = "real" if mode == "coherent" else "fake"
    truth = SynthTruth(
        envelope=scene.envelope.copy(),
        aperture=aperture,
        mouth_boxes=boxes,
        head_centers=centers,
    )
    return LabeledPair(clip, waveform, video_label, "real", truth=truth)


def write_pair(pair: LabeledPair, out_dir: str | Path) -> dict:
    """Write a pair in the standard on-disk layout and return its record.

    Creates ``<out_dir>/<clip_id>/%05d.png`` plus ``<out_dir>/<clip_id>.wav``
    and returns the manifest record fields for the pair.
    """
    out_dir = Path(out_dir)
    frame_dir = out_dir / pair.clip.clip_id
    frame_dir.mkdir(parents=True, exist_ok=True)
    for k in range(pair.clip.num_frames):
        arr = np.round(pair.clip.frames[k].transpose(1, 2, 0) * 255.0).astype(np.uint8)
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        Image.fromarray(arr).save(frame_dir / f"{k:05d}.png")
    save_wav(out_dir / f"{pair.clip.clip_id}.wav", pair.waveform)
    scenario_id = 0 if pair.video_label == "real" else 1
    return {
        "clip_id": pair.clip.clip_id,
        "scenario_id": scenario_id,
        "source_video_id": pair.clip.clip_id,
        "source_audio_id": pair.clip.clip_id,
        "split": "train",
    }
