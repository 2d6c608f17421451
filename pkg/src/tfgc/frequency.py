"""Block-DCT band statistics over frames.

Each frame is converted to luma, cut into sliding windows, transformed
with an orthonormal type-II 2-D DCT, and summarized as log-scaled mean
absolute coefficient magnitudes over radial frequency bands (grouped by
u+v index).  The resulting per-frame maps complement the spatial streams
with structure that survives pixel-domain noise.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn, idctn

from .errors import ShapeError

LOG_EPS = 1e-8
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

DEFAULT_WINDOW = 10
DEFAULT_STRIDE = 2
DEFAULT_BANDS = 6


def to_gray(frame: np.ndarray) -> np.ndarray:
    """Collapse a (C, H, W) frame to (H, W) luma."""
    if frame.ndim != 3:
        raise ShapeError(f"frame must be (C, H, W), got {frame.shape}")
    c = frame.shape[0]
    if c == 1:
        return frame[0]
    if c == 3:
        return np.tensordot(LUMA_WEIGHTS, frame, axes=([0], [0]))
    raise ShapeError(f"channel count must be 1 or 3, got {c}")


def block_dct(frame: np.ndarray, window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> np.ndarray:
    """Orthonormal 2-D DCT of every sliding window of a frame.

    Returns (blocks_y, blocks_x, window, window).
    """
    gray = to_gray(np.asarray(frame, dtype=np.float64))
    h, w = gray.shape
    if window > h or window > w:
        raise ShapeError(f"window {window} exceeds frame size {h}x{w}")
    blocks = sliding_window_view(gray, (window, window))[::stride, ::stride]
    return dctn(np.ascontiguousarray(blocks), axes=(-2, -1), norm="ortho")


def idct_block(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`block_dct` on the trailing two axes."""
    return idctn(np.asarray(coeffs, dtype=np.float64), axes=(-2, -1), norm="ortho")


def band_index_table(window: int, n_bands: int) -> np.ndarray:
    """Band id per (u, v) coefficient: equal-width partition of u+v."""
    if n_bands < 2:
        raise ValueError(f"need at least 2 bands, got {n_bands}")
    u = np.arange(window)
    radial = u[:, None] + u[None, :]
    return (radial * n_bands) // (2 * window - 1)


def band_stats(coeffs: np.ndarray, n_bands: int = DEFAULT_BANDS) -> np.ndarray:
    """Log-scaled mean |coefficient| per radial band.

    ``coeffs`` is (..., window, window); the result is (n_bands, ...),
    every entry >= log10(LOG_EPS).  Accumulation runs in (u, v) scan
    order via an unbuffered scatter-add, so the result is bit-identical
    to a sequential double-loop computation.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    window = coeffs.shape[-1]
    if coeffs.shape[-2] != window:
        raise ShapeError(f"coefficient blocks must be square, got {coeffs.shape[-2:]}")
    table = band_index_table(window, n_bands).reshape(-1)
    lead = coeffs.shape[:-2]
    mags = np.moveaxis(np.abs(coeffs).reshape(*lead, window * window), -1, 0)
    sums = np.zeros((n_bands,) + lead)
    np.add.at(sums, table, mags)
    counts = np.bincount(table, minlength=n_bands).reshape((n_bands,) + (1,) * len(lead))
    return np.log10(sums / counts + LOG_EPS)


def clip_band_features(
    frames: np.ndarray,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    n_bands: int = DEFAULT_BANDS,
) -> np.ndarray:
    """Band statistics for every frame of a clip.

    ``frames`` is (T, C, H, W); the result is (T, n_bands, blocks_y, blocks_x).
    """
    maps = []
    for frame in frames:
        coeffs = block_dct(frame, window=window, stride=stride)
        maps.append(band_stats(coeffs, n_bands=n_bands))
    return np.stack(maps).astype(np.float32)
