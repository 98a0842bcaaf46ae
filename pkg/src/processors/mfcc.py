"""
Mel scale, triangular mel filterbank, DCT-II and MFCC aggregation.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..models.schemas import FeatureConfig
from .audio_io import AudioClip, load_clip, resample, trim
from .dsp import compute_spectrogram, is_power_of_two, next_power_of_two

logger = logging.getLogger(__name__)

LOG_EPSILON = 1e-10
MEL_CONSTANT = 2595.0
MEL_BREAK_HZ = 700.0


def hz_to_mel(f, mel_constant: float = MEL_CONSTANT):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("Frequency must be non-negative")
    mel = mel_constant * np.log10(1.0 + f / MEL_BREAK_HZ)
    return float(mel) if mel.ndim == 0 else mel


def mel_to_hz(m, mel_constant: float = MEL_CONSTANT):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("Mel value must be non-negative")
    hz = MEL_BREAK_HZ * (10.0 ** (m / mel_constant) - 1.0)
    return float(hz) if hz.ndim == 0 else hz


@dataclass(frozen=True)
class MelFilterbank:
    """
    Triangular filters, weights shape (n_mels, fft_size // 2 + 1).
    """

    weights: np.ndarray
    center_freqs_hz: np.ndarray
    edge_freqs_hz: np.ndarray

    @property
    def n_mels(self) -> int:
        return int(self.weights.shape[0])

    def apply(self, power: np.ndarray) -> np.ndarray:
        return power @ self.weights.T


def build_filterbank(config: FeatureConfig, fft_size: int, sample_rate_hz: int) -> MelFilterbank:
    """
    Build ``config.n_mels`` triangles equally spaced on the mel axis.

    Each filter rises linearly from its left vertex to its centre and falls
    to its right vertex. Weights are evaluated at FFT bin frequencies; a
    filter too narrow to contain any bin puts unit weight on its nearest bin.
    """
    if config.n_mels < 2:
        raise ValueError("Need at least two mel filters")
    if not is_power_of_two(fft_size):
        raise ValueError(f"FFT size must be a power of two, got {fft_size}")
    f_min = config.f_min_hz
    f_max = config.upper_frequency(sample_rate_hz)
    if f_max > sample_rate_hz / 2.0:
        raise ValueError(f"f_max {f_max} Hz exceeds Nyquist ({sample_rate_hz / 2.0} Hz)")
    if f_min >= f_max:
        raise ValueError(f"f_min {f_min} Hz must be below f_max {f_max} Hz")

    mel_points = np.linspace(
        hz_to_mel(f_min, config.mel_constant),
        hz_to_mel(f_max, config.mel_constant),
        config.n_mels + 2,
    )
    edges = mel_to_hz(mel_points, config.mel_constant)
    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size

    left = edges[:-2, np.newaxis]
    center = edges[1:-1, np.newaxis]
    right = edges[2:, np.newaxis]
    rising = (bin_freqs - left) / (center - left)
    falling = (right - bin_freqs) / (right - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    for row in np.flatnonzero(weights.max(axis=1) <= 0.0):
        nearest = int(np.argmin(np.abs(bin_freqs - edges[row + 1])))
        weights[row, nearest] = 1.0

    return MelFilterbank(weights=weights, center_freqs_hz=edges[1:-1], edge_freqs_hz=edges)


@lru_cache(maxsize=16)
def _dct_basis(n: int) -> np.ndarray:
    k = np.arange(n)[:, np.newaxis]
    j = np.arange(n)[np.newaxis, :]
    basis = np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    scale = np.full((n, 1), np.sqrt(2.0 / n))
    scale[0, 0] = np.sqrt(1.0 / n)
    return basis * scale


def dct_ii(v, n_out: int) -> np.ndarray:
    """
    Orthonormal DCT-II along the last axis, first ``n_out`` coefficients.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if n == 0:
        raise ValueError("Cannot transform an empty vector")
    if n_out > n:
        raise ValueError(f"n_out ({n_out}) exceeds input length ({n})")
    return v @ _dct_basis(n)[:n_out].T


def mfcc_frames(
    clip: AudioClip, config: FeatureConfig, filterbank: Optional[MelFilterbank] = None
) -> np.ndarray:
    """
    Per-frame MFCCs, shape (n_frames, n_mfcc).
    """
    if len(clip) == 0:
        raise ValueError("Cannot extract features from an empty clip")
    spectrogram = compute_spectrogram(clip, config.frame_ms, config.hop_ms)
    if filterbank is None:
        filterbank = build_filterbank(config, spectrogram.fft_size, clip.sample_rate_hz)
    energies = filterbank.apply(spectrogram.frames)
    return dct_ii(np.log(energies + LOG_EPSILON), config.n_mfcc)


def aggregate_features(frames: np.ndarray) -> np.ndarray:
    """
    Mean over frames: one fixed-length vector per clip.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("Need at least one frame to aggregate")
    return frames.mean(axis=0)


class FeatureExtractor:
    """
    Turn clips or WAV files into classifier inputs. Filterbanks are built once
    per (fft size, sample rate) and shared read-only.
    """

    def __init__(self, config: FeatureConfig):
        self.config = config
        self._filterbanks: Dict[Tuple[int, int], MelFilterbank] = {}

    def filterbank(self, fft_size: int, sample_rate_hz: int) -> MelFilterbank:
        key = (fft_size, sample_rate_hz)
        if key not in self._filterbanks:
            self._filterbanks[key] = build_filterbank(self.config, fft_size, sample_rate_hz)
        return self._filterbanks[key]

    def prepare(self, clip: AudioClip) -> AudioClip:
        """
        Bring a clip to the configured sample rate.
        """
        return resample(clip, self.config.sample_rate_hz)

    def extract(self, clip: AudioClip) -> np.ndarray:
        clip = self.prepare(clip)
        frame_len = max(1, int(round(self.config.frame_ms * clip.sample_rate_hz / 1000.0)))
        fft_size = next_power_of_two(frame_len)
        frames = mfcc_frames(clip, self.config, self.filterbank(fft_size, clip.sample_rate_hz))
        return aggregate_features(frames)

    def extract_file(self, path: Union[str, Path]) -> np.ndarray:
        """
        Featurize the first ``clip_seconds`` of a WAV file.
        """
        clip = trim(self.prepare(load_clip(path)), self.config.clip_seconds)
        return self.extract(clip)


@dataclass
class FeatureTable:
    """
    Aggregated features for a set of clips.
    """

    clip_ids: List[str]
    labels: List[str]
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.clip_ids)

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "FeatureTable":
        indices = list(indices)
        return FeatureTable(
            clip_ids=[self.clip_ids[i] for i in indices],
            labels=[self.labels[i] for i in indices],
            features=self.features[indices],
        )

    def label_indices(self, label_set: List[str]) -> np.ndarray:
        unknown = sorted(set(self.labels) - set(label_set))
        if unknown:
            raise ValueError(f"Labels not known to the model: {unknown}")
        lookup = {label: i for i, label in enumerate(label_set)}
        return np.array([lookup[label] for label in self.labels], dtype=np.int64)


def write_feature_csv(table: FeatureTable, path: Union[str, Path]) -> Path:
    """
    One row per clip: clip_id, label, c0..c{n-1}.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"c{i}" for i in range(table.features.shape[1])]
    frame = pd.DataFrame(table.features, columns=columns)
    frame.insert(0, "label", table.labels)
    frame.insert(0, "clip_id", table.clip_ids)
    frame.to_csv(path, index=False)
    return path


def read_feature_csv(path: Union[str, Path]) -> FeatureTable:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Feature file not found: {path}")
    frame = pd.read_csv(path, dtype={"clip_id": str, "label": str}, float_precision="round_trip")
    if list(frame.columns[:2]) != ["clip_id", "label"]:
        raise ValueError(f"{path} must start with clip_id,label columns")
    coeffs = [c for c in frame.columns[2:] if c.startswith("c")]
    if not coeffs:
        raise ValueError(f"{path} has no coefficient columns")
    return FeatureTable(
        clip_ids=frame["clip_id"].tolist(),
        labels=frame["label"].tolist(),
        features=frame[coeffs].to_numpy(dtype=np.float64),
    )
