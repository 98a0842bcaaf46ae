"""
Framing, windowing, radix-2 FFT, power spectra and spectrogram rendering.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .audio_io import AudioClip  # noqa: E402

logger = logging.getLogger(__name__)

DB_EPSILON = 1e-10


@dataclass(frozen=True)
class PowerSpectrogram:
    """
    Power values, shape (n_frames, fft_size // 2 + 1).
    """

    frames: np.ndarray
    frame_len_samples: int
    hop_samples: int
    sample_rate_hz: int
    fft_size: int

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.frames.shape[1])

    def to_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.frames + DB_EPSILON)


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    if n <= 1:
        return 1
    return 1 << (int(n) - 1).bit_length()


@lru_cache(maxsize=32)
def _bit_reversed_indices(n: int) -> np.ndarray:
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(levels):
        rev |= ((idx >> b) & 1) << (levels - 1 - b)
    return rev


def fft(signal, n: int) -> np.ndarray:
    """
    n-point DFT by iterative radix-2 decimation in time.

    Operates on the last axis, so a (n_frames, frame_len) matrix is
    transformed frame by frame in one call. Shorter inputs are zero-padded.
    """
    if not is_power_of_two(n):
        raise ValueError(f"FFT size must be a positive power of two, got {n}")
    x = np.asarray(signal, dtype=np.complex128)
    if x.shape[-1] > n:
        raise ValueError(f"Signal length {x.shape[-1]} exceeds FFT size {n}")
    if x.shape[-1] < n:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
        x = np.pad(x, pad)

    batch = x.shape[:-1]
    out = x[..., _bit_reversed_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(batch + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(batch + (n,))
        size *= 2
    return out


def frame_signal(clip: AudioClip, frame_ms: float = 40.0, hop_ms: float = 20.0) -> np.ndarray:
    """
    Split a clip into overlapping frames, shape (n_frames, frame_len).

    A clip shorter than one frame gives a single zero-padded frame.
    """
    if frame_ms <= 0 or hop_ms <= 0 or hop_ms > frame_ms:
        raise ValueError(f"Invalid framing: frame_ms={frame_ms}, hop_ms={hop_ms}")
    if len(clip) == 0:
        raise ValueError("Cannot frame an empty signal")

    rate = clip.sample_rate_hz
    frame_len = max(1, int(round(frame_ms * rate / 1000.0)))
    hop = max(1, int(round(hop_ms * rate / 1000.0)))
    samples = clip.samples

    if len(samples) < frame_len:
        return np.pad(samples, (0, frame_len - len(samples)))[np.newaxis, :]

    n_frames = (len(samples) - frame_len) // hop + 1
    starts = np.arange(n_frames) * hop
    return samples[starts[:, np.newaxis] + np.arange(frame_len)]


@lru_cache(maxsize=32)
def _hann(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def hann_window(frame) -> np.ndarray:
    """
    Multiply by a periodic Hann window along the last axis.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] == 0:
        raise ValueError("Cannot window an empty frame")
    return frame * _hann(frame.shape[-1])


def power_spectrum(spectrum: np.ndarray) -> np.ndarray:
    """
    |X[k]|^2 for the non-negative frequency bins 0..n/2.
    """
    n = spectrum.shape[-1]
    half = spectrum[..., : n // 2 + 1]
    return half.real**2 + half.imag**2


def compute_spectrogram(
    clip: AudioClip, frame_ms: float = 40.0, hop_ms: float = 20.0
) -> PowerSpectrogram:
    """
    Frame, window and transform a clip into a power spectrogram.
    """
    frames = frame_signal(clip, frame_ms, hop_ms)
    frame_len = frames.shape[1]
    fft_size = next_power_of_two(frame_len)
    power = power_spectrum(fft(hann_window(frames), fft_size))
    hop = max(1, int(round(hop_ms * clip.sample_rate_hz / 1000.0)))
    return PowerSpectrogram(
        frames=power,
        frame_len_samples=frame_len,
        hop_samples=hop,
        sample_rate_hz=clip.sample_rate_hz,
        fft_size=fft_size,
    )


def render_spectrogram(
    spec: PowerSpectrogram, out_path: Union[str, Path], cmap: str = "magma"
) -> Path:
    """
    Write a PNG with one pixel column per frame and one row per bin,
    low frequencies at the bottom.
    """
    if spec.frames.size == 0:
        raise ValueError("Cannot render an empty spectrogram")
    out_path = Path(out_path)
    db = spec.to_db()
    try:
        plt.imsave(
            out_path,
            db.T,
            cmap=cmap,
            vmin=float(db.min()),
            vmax=float(db.max()),
            origin="lower",
            format="png",
            metadata={"Colormap": cmap},
        )
    except OSError as e:
        logger.error(f"Error writing spectrogram to {out_path}: {e}")
        raise
    logger.info(f"Wrote {spec.n_frames}x{spec.n_bins} spectrogram to {out_path}")
    return out_path
