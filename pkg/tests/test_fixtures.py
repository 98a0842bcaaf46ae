import numpy as np
import pytest

from src.processors.audio_io import load_clip
from src.processors.dsp import fft, next_power_of_two, power_spectrum
from src.services.fixtures import (
    MANIFEST_NAME,
    NOISE_RATIO,
    PEAK_AMPLITUDE,
    SPECIES,
    class_signature,
    generate_fixtures,
    generate_recording,
)
from src.services.training import load_manifest

RATE = 16000


class TestGenerateFixtures:
    def test_counts_and_manifest(self, tmp_path):
        manifest = generate_fixtures(10, seed=7, out_dir=tmp_path, duration_seconds=0.25, sample_rate_hz=RATE)

        assert len(manifest.entries) == 50
        assert manifest.labels == SPECIES
        assert len(list(tmp_path.rglob("*.wav"))) == 50
        assert load_manifest(tmp_path / MANIFEST_NAME).entries == manifest.entries

    def test_same_seed_gives_identical_bytes(self, tmp_path):
        generate_fixtures(2, seed=7, out_dir=tmp_path / "a", duration_seconds=0.25, sample_rate_hz=RATE)
        generate_fixtures(2, seed=7, out_dir=tmp_path / "b", duration_seconds=0.25, sample_rate_hz=RATE)

        for path in sorted((tmp_path / "a").rglob("*.wav")):
            twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
            assert path.read_bytes() == twin.read_bytes()

    def test_different_seed_changes_noise(self, tmp_path):
        generate_fixtures(1, seed=1, out_dir=tmp_path / "a", duration_seconds=0.25, sample_rate_hz=RATE)
        generate_fixtures(1, seed=2, out_dir=tmp_path / "b", duration_seconds=0.25, sample_rate_hz=RATE)
        name = f"{SPECIES[0]}/{SPECIES[0]}_000.wav"

        assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes()

    def test_written_clip_format(self, tmp_path):
        manifest = generate_fixtures(1, seed=0, out_dir=tmp_path, duration_seconds=0.5, sample_rate_hz=RATE)
        clip = load_clip(manifest.resolve(manifest.entries[0]))

        assert clip.sample_rate_hz == RATE
        assert len(clip) == RATE // 2

    def test_per_class_counts(self, tmp_path):
        manifest = generate_fixtures(
            2,
            seed=0,
            out_dir=tmp_path,
            duration_seconds=0.1,
            sample_rate_hz=RATE,
            per_class_counts={"great_tit": 5},
        )

        assert manifest.class_counts()["great_tit"] == 5
        assert manifest.class_counts()["house_sparrow"] == 2

    def test_requires_one_clip(self, tmp_path):
        with pytest.raises(ValueError):
            generate_fixtures(0, seed=0, out_dir=tmp_path)


class TestSignatures:
    def test_dominant_bins_are_distinct(self):
        n = next_power_of_two(RATE)
        peaks = []
        for k in range(len(SPECIES)):
            power = power_spectrum(fft(class_signature(k, 1.0, RATE), n))
            peaks.append(int(np.argmax(power)))

        assert len(set(peaks)) == len(SPECIES)

    def test_peak_amplitude(self):
        for k in range(len(SPECIES)):
            assert np.max(np.abs(class_signature(k, 0.5, RATE))) == pytest.approx(PEAK_AMPLITUDE)

    def test_noise_level(self, tmp_path):
        path = generate_recording(1, 2.0, seed=3, path=tmp_path / "rec.wav", sample_rate_hz=RATE)
        residual = load_clip(path).samples - class_signature(1, 2.0, RATE)

        assert np.std(residual) == pytest.approx(NOISE_RATIO * PEAK_AMPLITUDE, rel=0.05)

    def test_recording_length(self, tmp_path):
        path = generate_recording(4, 3.5, seed=0, path=tmp_path / "long.wav", sample_rate_hz=RATE)

        assert load_clip(path).duration_seconds == pytest.approx(3.5)
