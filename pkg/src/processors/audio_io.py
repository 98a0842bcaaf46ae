"""
WAV decoding, amplitude normalization, channel mixing, resampling and
trimming/segmentation of field recordings.
"""

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import soundfile as sf

logger = logging.getLogger(__name__)

SUPPORTED_BIT_DEPTHS = {8, 16, 24, 32}

WAV_CONTAINERS = {"WAV", "WAVEX"}
PCM_SUBTYPES = {"PCM_U8": 8, "PCM_S8": 8, "PCM_16": 16, "PCM_24": 24, "PCM_32": 32}
FLOAT_SUBTYPES = {"FLOAT", "DOUBLE"}

MIN_SAMPLE_RATE_HZ = 1000
MAX_SAMPLE_RATE_HZ = 384000


class AudioDecodeError(ValueError):
    """Audio bytes could not be decoded."""


class MalformedHeaderError(AudioDecodeError):
    pass


class UnsupportedEncodingError(AudioDecodeError):
    pass


class EmptyAudioDataError(AudioDecodeError):
    pass


class UnsupportedBitDepthError(ValueError):
    pass


@dataclass(frozen=True)
class RawAudio:
    """
    Integer PCM samples as stored in the file, shape (n_channels, n_samples).
    """

    channels: np.ndarray
    bit_depth: int
    sample_rate_hz: int

    def __post_init__(self):
        if self.bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise UnsupportedBitDepthError(f"Unsupported bit depth: {self.bit_depth}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"Sample rate must be positive: {self.sample_rate_hz}")
        if self.channels.ndim != 2 or self.channels.shape[0] == 0:
            raise ValueError("channels must be a non-empty (n_channels, n_samples) array")
        if self.channels.size:
            limit = 2 ** (self.bit_depth - 1)
            if self.channels.min() < -limit or self.channels.max() > limit - 1:
                raise ValueError(f"Sample values exceed the {self.bit_depth}-bit range")

    @property
    def n_channels(self) -> int:
        return int(self.channels.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.channels.shape[1])


@dataclass(frozen=True)
class AudioClip:
    """
    Mono waveform in [-1, 1]. ``offset_samples`` is the clip's start within the
    recording it was cut from.
    """

    samples: np.ndarray
    sample_rate_hz: int
    offset_samples: int = 0

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"Sample rate must be positive: {self.sample_rate_hz}")
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0:
            raise ValueError("AudioClip samples must lie in [-1, 1]")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def start_seconds(self) -> float:
        return self.offset_samples / self.sample_rate_hz

    @property
    def end_seconds(self) -> float:
        return (self.offset_samples + len(self)) / self.sample_rate_hz


def decode_wav(data: bytes) -> RawAudio:
    """
    Decode a WAV container holding integer PCM.

    Args:
        data: the complete file contents

    Returns:
        All channels with the declared bit depth and sample rate
    """
    if not data:
        raise MalformedHeaderError("No audio data")

    try:
        with sf.SoundFile(io.BytesIO(data)) as f:
            if f.format not in WAV_CONTAINERS:
                raise UnsupportedEncodingError(f"Not a WAV container: {f.format}")
            if f.subtype in FLOAT_SUBTYPES:
                raise UnsupportedEncodingError("Floating-point WAV is not supported")
            bit_depth = PCM_SUBTYPES.get(f.subtype)
            if bit_depth is None:
                raise UnsupportedEncodingError(f"Unsupported WAV encoding: {f.subtype}")
            if not MIN_SAMPLE_RATE_HZ <= f.samplerate <= MAX_SAMPLE_RATE_HZ:
                raise UnsupportedEncodingError(
                    f"Sample rate {f.samplerate} Hz outside "
                    f"[{MIN_SAMPLE_RATE_HZ}, {MAX_SAMPLE_RATE_HZ}]"
                )
            if f.frames == 0:
                raise EmptyAudioDataError("WAV data chunk is empty")
            sample_rate = f.samplerate
            # int32 reads are left-aligned whatever the stored width
            frames = f.read(dtype="int32", always_2d=True)
    except sf.LibsndfileError as e:
        raise MalformedHeaderError(f"Unreadable WAV: {e}") from e

    if frames.shape[0] == 0:
        raise EmptyAudioDataError("WAV data chunk is empty")
    channels = (frames.astype(np.int64) >> (32 - bit_depth)).T.copy()
    return RawAudio(channels=channels, bit_depth=bit_depth, sample_rate_hz=sample_rate)


def normalize(raw: RawAudio) -> np.ndarray:
    """
    Scale integer PCM to floats by 2^(bit_depth - 1).
    """
    if raw.bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise UnsupportedBitDepthError(f"Unsupported bit depth: {raw.bit_depth}")
    return raw.channels.astype(np.float64) / float(2 ** (raw.bit_depth - 1))


def to_mono(channels: Union[np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    """
    Average channels elementwise.
    """
    if len(channels) == 0:
        raise ValueError("No channels to mix")
    lengths = {len(channel) for channel in channels}
    if len(lengths) != 1:
        raise ValueError(f"Channel length mismatch: {sorted(lengths)}")
    stacked = np.asarray(channels, dtype=np.float64)
    if stacked.shape[0] == 1:
        return stacked[0].copy()
    return stacked.mean(axis=0)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """
    Linear-interpolation resampling.
    """
    if target_rate_hz <= 0:
        raise ValueError(f"Target sample rate must be positive: {target_rate_hz}")
    if target_rate_hz == clip.sample_rate_hz:
        return clip

    n_in = len(clip)
    n_out = int(round(n_in * target_rate_hz / clip.sample_rate_hz))
    positions = np.arange(n_out) * (clip.sample_rate_hz / target_rate_hz)
    samples = np.interp(positions, np.arange(n_in), clip.samples) if n_in else np.zeros(0)
    offset = int(round(clip.offset_samples * target_rate_hz / clip.sample_rate_hz))
    return AudioClip(samples=samples, sample_rate_hz=target_rate_hz, offset_samples=offset)


def trim(clip: AudioClip, max_seconds: float = 15.0) -> AudioClip:
    """
    Keep at most the first ``max_seconds`` of the clip.
    """
    if max_seconds <= 0:
        raise ValueError(f"max_seconds must be positive: {max_seconds}")
    limit = int(round(max_seconds * clip.sample_rate_hz))
    if len(clip) <= limit:
        return clip
    return AudioClip(
        samples=clip.samples[:limit],
        sample_rate_hz=clip.sample_rate_hz,
        offset_samples=clip.offset_samples,
    )


def segment(
    clip: AudioClip, window_seconds: float = 15.0, min_tail_seconds: float = 3.0
) -> List[AudioClip]:
    """
    Cut a clip into consecutive non-overlapping windows.

    A trailing partial window is kept only if it lasts at least
    ``min_tail_seconds``.
    """
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive: {window_seconds}")
    rate = clip.sample_rate_hz
    window_len = int(round(window_seconds * rate))
    if window_len < 1:
        raise ValueError(f"window_seconds={window_seconds} is shorter than one sample at {rate} Hz")
    min_tail = int(round(min_tail_seconds * rate))

    windows = []
    for start in range(0, len(clip), window_len):
        chunk = clip.samples[start : start + window_len]
        if len(chunk) < window_len and len(chunk) < min_tail:
            logger.debug(f"Dropping {len(chunk) / rate:.2f}s tail at {start / rate:.2f}s")
            break
        windows.append(
            AudioClip(
                samples=chunk,
                sample_rate_hz=rate,
                offset_samples=clip.offset_samples + start,
            )
        )
    return windows


def clip_from_raw(raw: RawAudio) -> AudioClip:
    return AudioClip(samples=to_mono(normalize(raw)), sample_rate_hz=raw.sample_rate_hz)


def load_clip(path: Union[str, Path]) -> AudioClip:
    """
    Read a WAV file into a normalized mono clip.
    """
    path = Path(path)
    try:
        raw = decode_wav(path.read_bytes())
    except Exception as e:
        logger.error(f"Error decoding {path}: {e}")
        raise
    logger.debug(
        f"Decoded {path.name}: {raw.n_channels} ch, {raw.bit_depth}-bit, "
        f"{raw.sample_rate_hz} Hz, {raw.n_samples} samples"
    )
    return clip_from_raw(raw)


def encode_wav(samples: np.ndarray, sample_rate_hz: int) -> bytes:
    """
    Encode float samples in [-1, 1] as 16-bit PCM mono WAV bytes.
    """
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype(np.int16)
    buffer = io.BytesIO()
    sf.write(buffer, pcm, int(sample_rate_hz), format="WAV", subtype="PCM_16")
    return buffer.getvalue()


def write_wav(path: Union[str, Path], samples: np.ndarray, sample_rate_hz: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_wav(samples, sample_rate_hz))
    return path
