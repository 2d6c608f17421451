"""Run configuration: defaults, file loading, overrides, and hashing.

Config files are JSON.  Keys may be flat dotted names (``vafm.heads``)
or nested objects (``{"vafm": {"heads": 4}}``); both map onto the same
:class:`RunConfig` fields, and CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError


@dataclass
class RunConfig:
    """Everything a training, evaluation, or inference run depends on."""

    seed: int = 0
    epochs: int = 4
    batch_size: int = 8
    learning_rate: float = 1e-3
    output_dir: str = "runs/default"

    # module toggles: the four ablation switches
    use_lfs: bool = True
    use_rsfdm: bool = True
    use_dctam: bool = True
    use_vafm: bool = True

    # dataset
    data_kind: str = "synthetic"  # synthetic | manifest
    synth_count: int = 240
    clip_len: int = 8
    frame_size: int = 32
    frame_rate: float = 25.0
    frame_stride: int = 1
    manifest: str | None = None
    data_root: str | None = None

    # visual trunk
    trunk_width: int = 16
    trunk_cap: int = 16

    # discrepancy attention
    dctam_k_fraction: float = 0.5
    dctam_heads: int = 1

    # audio-visual fusion
    vafm_heads: int = 4
    vafm_width: int = 64
    vafm_divisor: str | float = "sqrt_dim"

    # audio stream
    audio_adapter: str = "logmel"
    audio_pretrained_path: str | None = None
    audio_res_dim: int = 256
    audio_map_channels: int = 16

    # frequency statistics
    lfs_window: int = 10
    lfs_stride: int = 2
    lfs_bands: int = 6

    # detection head and loss
    head_width: int = 128
    head_kernel: int = 3
    loss_audio_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.dctam_heads != 1:
            raise DataError("dctam.heads must be 1: the attention is per pixel over time")
        if self.data_kind not in ("synthetic", "manifest"):
            raise DataError(f"data.kind must be synthetic or manifest, got {self.data_kind!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


# dotted external key -> RunConfig field
KEY_MAP = {
    "seed": "seed",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "output_dir": "output_dir",
    "modules.lfs": "use_lfs",
    "modules.rsfdm": "use_rsfdm",
    "modules.dctam": "use_dctam",
    "modules.vafm": "use_vafm",
    "data.kind": "data_kind",
    "data.count": "synth_count",
    "data.T": "clip_len",
    "data.size": "frame_size",
    "data.frame_rate": "frame_rate",
    "data.manifest": "manifest",
    "data.root": "data_root",
    "frame_stride": "frame_stride",
    "model.trunk_width": "trunk_width",
    "model.trunk_cap": "trunk_cap",
    "dctam.k_fraction": "dctam_k_fraction",
    "dctam.heads": "dctam_heads",
    "vafm.heads": "vafm_heads",
    "vafm.width": "vafm_width",
    "vafm.divisor": "vafm_divisor",
    "audio.adapter": "audio_adapter",
    "audio.pretrained_path": "audio_pretrained_path",
    "audio.res_dim": "audio_res_dim",
    "audio.map_channels": "audio_map_channels",
    "lfs.window": "lfs_window",
    "lfs.stride": "lfs_stride",
    "lfs.bands": "lfs_bands",
    "head.width": "head_width",
    "head.kernel": "head_kernel",
    "loss.audio_weight": "loss_audio_weight",
}

_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def _flatten(obj: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus overrides.

    Override keys may be dotted external names or RunConfig field names.
    """
    values: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise DataError(f"config {path} must hold a JSON object")
        for key, value in _flatten(raw).items():
            field_name = KEY_MAP.get(key, key if key in _FIELD_NAMES else None)
            if field_name is None:
                raise DataError(f"unknown config key {key!r}")
            values[field_name] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        field_name = KEY_MAP.get(key, key if key in _FIELD_NAMES else None)
        if field_name is None:
            raise DataError(f"unknown config key {key!r}")
        values[field_name] = value
    return RunConfig(**values)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
