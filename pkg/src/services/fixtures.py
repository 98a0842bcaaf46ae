"""
Synthetic bird-call corpus: one harmonic, amplitude-modulated signature per
class plus seeded Gaussian noise, written as 16-bit PCM WAV.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..models.schemas import DatasetManifest, ManifestEntry
from ..processors.audio_io import write_wav
from .training import write_manifest

logger = logging.getLogger(__name__)

SPECIES = [
    "common_wood_pigeon",
    "eurasian_collared_dove",
    "great_tit",
    "house_sparrow",
    "lesser_spotted_woodpecker",
]

PEAK_AMPLITUDE = 0.5
# -20 dB relative to the signature's peak
NOISE_RATIO = 0.1
MANIFEST_NAME = "manifest.csv"


@dataclass(frozen=True)
class Signature:
    fundamental_hz: float
    harmonic_decay: float
    n_harmonics: int
    am_rate_hz: float
    am_depth: float


SIGNATURES = [
    Signature(fundamental_hz=450.0, harmonic_decay=0.55, n_harmonics=4, am_rate_hz=2.0, am_depth=0.8),
    Signature(fundamental_hz=700.0, harmonic_decay=0.35, n_harmonics=3, am_rate_hz=3.5, am_depth=0.6),
    Signature(fundamental_hz=1150.0, harmonic_decay=0.6, n_harmonics=3, am_rate_hz=7.0, am_depth=0.9),
    Signature(fundamental_hz=1650.0, harmonic_decay=0.45, n_harmonics=2, am_rate_hz=11.0, am_depth=0.5),
    Signature(fundamental_hz=2300.0, harmonic_decay=0.3, n_harmonics=2, am_rate_hz=17.0, am_depth=0.7),
]


def class_signature(label_index: int, duration_seconds: float, sample_rate_hz: int) -> np.ndarray:
    """
    Noise-free waveform of one class, peak-normalized to 0.5.
    """
    sig = SIGNATURES[label_index % len(SIGNATURES)]
    t = np.arange(int(round(duration_seconds * sample_rate_hz))) / sample_rate_hz
    tone = np.zeros_like(t)
    for h in range(1, sig.n_harmonics + 1):
        freq = h * sig.fundamental_hz
        if freq >= sample_rate_hz / 2.0:
            break
        tone += sig.harmonic_decay ** (h - 1) * np.sin(2.0 * np.pi * freq * t + 0.3 * h)
    envelope = (1.0 + sig.am_depth * np.sin(2.0 * np.pi * sig.am_rate_hz * t)) / (1.0 + sig.am_depth)
    signal = tone * envelope
    peak = np.max(np.abs(signal)) if signal.size else 0.0
    return signal * (PEAK_AMPLITUDE / peak) if peak > 0 else signal


def noisy_signature(
    label_index: int, duration_seconds: float, sample_rate_hz: int, rng: np.random.Generator
) -> np.ndarray:
    clean = class_signature(label_index, duration_seconds, sample_rate_hz)
    noise = rng.normal(0.0, NOISE_RATIO * PEAK_AMPLITUDE, size=clean.shape)
    return np.clip(clean + noise, -1.0, 1.0)


def generate_fixtures(
    n_per_class: int,
    seed: int,
    out_dir: Union[str, Path],
    duration_seconds: float = 15.0,
    sample_rate_hz: int = 44100,
    labels: Sequence[str] = SPECIES,
    per_class_counts: Optional[Dict[str, int]] = None,
) -> DatasetManifest:
    """
    Write ``n_per_class`` clips for each label and a manifest CSV.

    Args:
        n_per_class: clips per class (overridden per label by ``per_class_counts``)
        seed: noise seed; equal seeds give byte-identical files
        out_dir: output directory, receives one sub-directory per label

    Returns:
        The manifest, also written to ``out_dir/manifest.csv``
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be at least 1, got {n_per_class}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Cannot create fixture directory {out_dir}: {e}")
        raise

    counts = {label: n_per_class for label in labels}
    counts.update(per_class_counts or {})

    entries: List[ManifestEntry] = []
    for k, label in enumerate(labels):
        for i in range(counts[label]):
            rng = np.random.default_rng([seed, k, i])
            samples = noisy_signature(k, duration_seconds, sample_rate_hz, rng)
            relative = Path(label) / f"{label}_{i:03d}.wav"
            write_wav(out_dir / relative, samples, sample_rate_hz)
            entries.append(ManifestEntry(path=relative.as_posix(), label=label))

    manifest = DatasetManifest(entries=entries, labels=list(labels), root=str(out_dir))
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"Wrote {len(entries)} fixture clips to {out_dir}: {manifest.class_counts()}")
    return manifest


def generate_recording(
    label_index: int,
    seconds: float,
    seed: int,
    path: Union[str, Path],
    sample_rate_hz: int = 44100,
) -> Path:
    """
    Continuous recording of one class's signature, for windowed inference.
    """
    rng = np.random.default_rng([seed, label_index, 1_000_000])
    samples = noisy_signature(label_index, seconds, sample_rate_hz, rng)
    path = write_wav(path, samples, sample_rate_hz)
    logger.info(f"Wrote {seconds:.1f}s recording of class {label_index} to {path}")
    return path
