"""Log-mel feature frontend.

Pipeline: frame the signal (25 ms window, 10 ms hop at 16 kHz), pre-emphasize
and Hamming-window each frame, take the power spectrum of a zero-padded FFT,
project through a triangular mel filterbank, and log with a floor. Classifier
inputs are context windows: each analysis frame stacked with its neighbours,
replicating edge frames where the context runs off either end.

All intermediate math is float64; emitted features are float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform
from .errors import InsufficientAudioError, KwsError, ShapeError

__all__ = [
    "FrameConfig",
    "Context",
    "hz_to_mel",
    "mel_to_hz",
    "frame_count",
    "frame_signal",
    "build_mel_filterbank",
    "mel_filter_centers",
    "log_mel",
    "log_mel_frames",
    "stack_context",
    "write_feature_dump",
    "read_feature_dump",
]


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FrameConfig:
    """Frontend hyperparameters; defaults give 40-dim log-mel every 10 ms."""

    window_length: int = 400
    hop: int = 160
    fft_size: int = 512
    preemphasis: float = 0.97
    mel_filters: int = 40
    fmin: float = 20.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if not (0 < self.hop <= self.window_length <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= window_length <= fft_size, got "
                f"hop={self.hop} window={self.window_length} fft={self.fft_size}"
            )
        if not (0.0 <= self.preemphasis < 1.0):
            raise ValueError(f"preemphasis must be in [0, 1), got {self.preemphasis}")
        if self.mel_filters < 1:
            raise ValueError(f"need at least one mel filter, got {self.mel_filters}")
        if not (0.0 <= self.fmin < self.fmax):
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin} fmax={self.fmax}")
        if self.log_floor <= 0.0:
            raise ValueError(f"log floor must be positive, got {self.log_floor}")


@dataclass(frozen=True)
class Context:
    """Frames stacked to the left and right of the centre frame."""

    left: int
    right: int

    def __post_init__(self):
        if self.left < 0 or self.right < 0:
            raise ValueError(f"context sizes must be >= 0, got {self}")

    @property
    def size(self) -> int:
        return self.left + 1 + self.right


def frame_count(n_samples: int, cfg: FrameConfig) -> int:
    """Number of full analysis windows that fit: floor((n - win) / hop) + 1."""
    if n_samples < cfg.window_length:
        return 0
    return (n_samples - cfg.window_length) // cfg.hop + 1


def frame_signal(w: Waveform, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """Slice a waveform into pre-emphasized, Hamming-windowed frames.

    Returns a float64 array (n_frames, window_length). Trailing samples that
    do not fill a window are dropped; a signal shorter than one window raises
    InsufficientAudioError.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    n = frame_count(len(x), cfg)
    if n == 0:
        raise InsufficientAudioError(
            f"insufficient audio: {len(x)} samples < one {cfg.window_length}-sample window"
        )
    idx = np.arange(cfg.window_length)[None, :] + cfg.hop * np.arange(n)[:, None]
    frames = x[idx]
    # pre-emphasis inside each frame; the first sample has no predecessor
    emphasized = frames.copy()
    emphasized[:, 1:] -= cfg.preemphasis * frames[:, :-1]
    return emphasized * np.hamming(cfg.window_length)


def build_mel_filterbank(cfg: FrameConfig = FrameConfig(), sample_rate: int = 16000) -> np.ndarray:
    """Triangular filters, rows (mel_filters, fft_size // 2 + 1).

    Filter centres are equally spaced on the mel scale between fmin and fmax;
    each triangle rises from the previous centre and falls to the next one,
    evaluated at the FFT bin frequencies.
    """
    n_bins = cfg.fft_size // 2 + 1
    if cfg.mel_filters > n_bins:
        raise KwsError(
            f"cannot fit {cfg.mel_filters} filters into {n_bins} FFT bins"
        )
    if cfg.fmax > sample_rate / 2:
        raise ValueError(f"fmax {cfg.fmax} exceeds Nyquist {sample_rate / 2}")

    mel_points = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * sample_rate / cfg.fft_size

    weights = np.zeros((cfg.mel_filters, n_bins), dtype=np.float64)
    for m in range(cfg.mel_filters):
        lo, centre, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / (centre - lo)
        falling = (hi - bin_freqs) / (hi - centre)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not weights[m].any():
            raise KwsError(f"mel filter {m} covers no FFT bin; increase fft_size")
    return weights


def mel_filter_centers(cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """Centre frequency in Hz of each triangular filter."""
    mel_points = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_filters + 2)
    return mel_to_hz(mel_points)[1:-1]


def log_mel(frames: np.ndarray, melbank: np.ndarray, log_floor: float = 1e-10) -> np.ndarray:
    """Log filterbank energies for pre-windowed frames.

    The FFT length is implied by the filterbank width: melbank has
    fft_size // 2 + 1 columns. Energies are floored before the log so silence
    maps to log(log_floor) instead of -inf.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError(f"frames must be 2-D (n_frames, window), got {frames.shape}")
    fft_size = 2 * (melbank.shape[1] - 1)
    if frames.shape[1] > fft_size:
        raise ShapeError(
            f"frame length {frames.shape[1]} exceeds FFT size {fft_size}", axis="time"
        )
    spectrum = np.fft.rfft(frames, n=fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ melbank.T
    return np.log(np.maximum(energies, log_floor)).astype(np.float32)


def log_mel_frames(w: Waveform, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """Waveform straight to (n_frames, mel_filters) float32 features."""
    melbank = build_mel_filterbank(cfg, w.sample_rate)
    return log_mel(frame_signal(w, cfg), melbank, cfg.log_floor)


def stack_context(frames: np.ndarray, context: Context) -> np.ndarray:
    """Stack left/right context around every frame, replicating the edges.

    Returns (n_frames, context.size, n_features) float32; row j holds frames
    j-left .. j+right with out-of-range indices clamped to the first or last
    frame. Every input frame yields exactly one window.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ShapeError(f"frames must be 2-D (n_frames, n_features), got {frames.shape}")
    n = frames.shape[0]
    if n == 0:
        raise InsufficientAudioError("cannot stack context around zero frames")
    offsets = np.arange(-context.left, context.right + 1)
    idx = np.clip(np.arange(n)[:, None] + offsets[None, :], 0, n - 1)
    return frames[idx].astype(np.float32)


def write_feature_dump(path: str | Path, windows: np.ndarray) -> None:
    """Write stacked windows as an ASCII header line `t f count` then raw
    little-endian float32 values in C order."""
    windows = np.asarray(windows, dtype=np.float32)
    if windows.ndim != 3:
        raise ShapeError(f"feature dump expects (count, t, f) windows, got {windows.shape}")
    count, t, f = windows.shape
    with open(path, "wb") as fh:
        fh.write(f"{t} {f} {count}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(windows, dtype="<f4").tobytes())


def read_feature_dump(path: str | Path) -> np.ndarray:
    """Inverse of write_feature_dump; validates the payload length."""
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    try:
        t, f, count = (int(part) for part in header.split())
    except ValueError as exc:
        raise KwsError(f"{path}: malformed feature dump header {header!r}") from exc
    expected = 4 * t * f * count
    if len(payload) != expected:
        raise KwsError(
            f"{path}: feature payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(count, t, f).copy()
