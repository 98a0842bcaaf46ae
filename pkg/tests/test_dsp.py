import numpy as np
import pytest
from PIL import Image

from src.processors.audio_io import AudioClip
from src.processors.dsp import (
    PowerSpectrogram,
    compute_spectrogram,
    fft,
    frame_signal,
    hann_window,
    is_power_of_two,
    next_power_of_two,
    power_spectrum,
    render_spectrogram,
)


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n) @ np.asarray(x, dtype=np.complex128)


def circular_convolution(h, x):
    n = len(x)
    return np.array([sum(h[j] * x[(i - j) % n] for j in range(n)) for i in range(n)])


class TestFFT:
    def test_dc_signal(self):
        assert np.allclose(fft([1, 1, 1, 1], 4), [4, 0, 0, 0])

    def test_impulse(self):
        assert np.allclose(fft([1, 0, 0, 0], 4), [1, 1, 1, 1])

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(200):
            n = int(2 ** rng.integers(3, 11))
            x = rng.standard_normal(n)
            worst = max(worst, float(np.max(np.abs(fft(x, n) - naive_dft(x)))))

        assert worst < 1e-9

    def test_zero_padding(self):
        x = [0.5, -1.0, 2.0]

        assert np.allclose(fft(x, 8), naive_dft(x + [0.0] * 5))

    def test_batched_frames(self):
        rng = np.random.default_rng(1)
        frames = rng.standard_normal((6, 32))
        out = fft(frames, 32)

        for row, frame in zip(out, frames):
            assert np.allclose(row, naive_dft(frame), atol=1e-9)

    def test_convolution_theorem(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(100):
            n = 16
            h, x = rng.standard_normal(n), rng.standard_normal(n)
            lhs = fft(circular_convolution(h, x), n)
            worst = max(worst, float(np.max(np.abs(lhs - fft(h, n) * fft(x, n)))))

        assert worst < 1e-6

    def test_conjugate_symmetry(self):
        x = np.random.default_rng(3).standard_normal(64)
        X = fft(x, 64)

        assert abs(X[0].imag) < 1e-12
        for k in range(1, 64):
            assert X[k] == pytest.approx(np.conj(X[64 - k]), abs=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, y = rng.standard_normal(128), rng.standard_normal(128)

        assert np.allclose(fft(2.5 * x - 0.5 * y, 128), 2.5 * fft(x, 128) - 0.5 * fft(y, 128), atol=1e-9)

    @pytest.mark.parametrize("n", [0, 3, 12, -4])
    def test_invalid_size(self, n):
        with pytest.raises(ValueError):
            fft([1.0], n)

    def test_signal_longer_than_size(self):
        with pytest.raises(ValueError):
            fft(np.ones(16), 8)

    def test_power_of_two_helpers(self):
        assert is_power_of_two(1024)
        assert not is_power_of_two(1000)
        assert next_power_of_two(1764) == 2048
        assert next_power_of_two(640) == 1024


class TestFraming:
    def test_frame_count(self):
        clip = AudioClip(samples=np.zeros(1000), sample_rate_hz=1000)
        frames = frame_signal(clip, 40.0, 20.0)

        assert frames.shape == (49, 40)

    def test_exactly_one_frame(self):
        clip = AudioClip(samples=np.ones(40), sample_rate_hz=1000)

        assert frame_signal(clip).shape == (1, 40)

    def test_short_signal_is_padded(self):
        clip = AudioClip(samples=np.full(10, 0.25), sample_rate_hz=1000)
        frames = frame_signal(clip)

        assert frames.shape == (1, 40)
        assert np.all(frames[0, :10] == 0.25)
        assert np.all(frames[0, 10:] == 0.0)

    def test_full_rate_clip(self):
        clip = AudioClip(samples=np.zeros(15 * 44100), sample_rate_hz=44100)

        assert frame_signal(clip).shape == ((661500 - 1764) // 882 + 1, 1764)

    def test_count_formula_property(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            frame_len = int(rng.integers(1, 60))
            hop = int(rng.integers(1, frame_len + 1))
            length = int(rng.integers(frame_len, 500))
            clip = AudioClip(samples=np.zeros(length), sample_rate_hz=1000)

            frames = frame_signal(clip, float(frame_len), float(hop))

            assert frames.shape == ((length - frame_len) // hop + 1, frame_len)

    def test_empty_signal(self):
        with pytest.raises(ValueError):
            frame_signal(AudioClip(samples=np.zeros(0), sample_rate_hz=1000))

    def test_hop_longer_than_frame(self):
        clip = AudioClip(samples=np.zeros(100), sample_rate_hz=1000)

        with pytest.raises(ValueError):
            frame_signal(clip, 20.0, 40.0)


class TestWindowAndPower:
    def test_hann_closed_form(self):
        assert np.allclose(hann_window(np.ones(4)), [0.0, 0.5, 1.0, 0.5])

    def test_hann_first_sample_zero(self):
        frame = np.random.default_rng(6).standard_normal(33)

        assert hann_window(frame)[0] == 0.0
        assert np.all(hann_window(np.zeros(8)) == 0.0)

    def test_power_of_dc(self):
        power = power_spectrum(fft([1, 1, 1, 1], 4))

        assert len(power) == 3
        assert power[0] == pytest.approx(16.0)

    def test_power_of_zero_spectrum(self):
        assert np.all(power_spectrum(np.zeros(8, dtype=complex)) == 0.0)

    def test_parseval(self):
        x = np.random.default_rng(7).standard_normal(256)
        X = fft(x, 256)
        total = float(np.sum(np.abs(X) ** 2))

        assert total == pytest.approx(256 * float(np.sum(x**2)), rel=1e-9)


class TestSpectrogram:
    def test_shape(self, tone_clip):
        spec = compute_spectrogram(tone_clip)

        assert spec.fft_size == 512
        assert spec.n_bins == 257
        assert spec.n_frames == (8000 - 320) // 160 + 1
        assert np.all(spec.frames >= 0.0)

    def test_tone_peak_bin(self, tone_clip):
        spec = compute_spectrogram(tone_clip)
        expected = int(round(440.0 * spec.fft_size / tone_clip.sample_rate_hz))

        assert int(np.argmax(spec.to_db().mean(axis=0))) == expected

    def test_png_dimensions_and_colormap(self, tmp_path):
        frames = np.random.default_rng(8).uniform(0.0, 1.0, (10, 5))
        spec = PowerSpectrogram(frames, 8, 4, 16, 8)
        path = render_spectrogram(spec, tmp_path / "spec.png", cmap="viridis")

        with Image.open(path) as image:
            assert image.size == (10, 5)
            assert image.text["Colormap"] == "viridis"

    def test_uniform_power_single_color(self, tmp_path):
        spec = PowerSpectrogram(np.ones((10, 5)), 8, 4, 16, 8)
        path = render_spectrogram(spec, tmp_path / "flat.png")

        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB")).reshape(-1, 3)
        assert len(np.unique(pixels, axis=0)) == 1

    def test_empty_spectrogram(self, tmp_path):
        spec = PowerSpectrogram(np.zeros((0, 5)), 8, 4, 16, 8)

        with pytest.raises(ValueError):
            render_spectrogram(spec, tmp_path / "empty.png")

    def test_unwritable_path(self, tmp_path):
        spec = PowerSpectrogram(np.ones((4, 3)), 4, 2, 8, 4)

        with pytest.raises(OSError):
            render_spectrogram(spec, tmp_path / "missing" / "dir" / "spec.png")
