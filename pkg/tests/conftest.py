from pathlib import Path

import numpy as np
import pytest

from src.config.settings import Settings
from src.models.schemas import FeatureConfig, ModelConfig, PipelineConfig, TrainingConfig
from src.processors.audio_io import AudioClip
from src.services import ModelManager
from src.services.fixtures import generate_fixtures
from src.services.model_manager import save_model
from src.services.network import build_network
from src.services.training import featurize_manifest, train

# Small, fast front end used across the suite
SMALL_RATE = 16000
CLIP_SECONDS = 2.0
SMALL_FEATURE = FeatureConfig(
    n_mfcc=20, n_mels=40, sample_rate_hz=SMALL_RATE, clip_seconds=CLIP_SECONDS
)


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def small_feature_config():
    return SMALL_FEATURE


@pytest.fixture
def pipeline_config():
    return PipelineConfig(
        window_seconds=CLIP_SECONDS,
        min_tail_seconds=0.5,
        confidence_threshold=0.5,
        feature=SMALL_FEATURE,
    )


@pytest.fixture
def tone_clip():
    rate = 8000
    t = np.arange(rate) / rate
    return AudioClip(samples=0.5 * np.sin(2 * np.pi * 440.0 * t), sample_rate_hz=rate)


@pytest.fixture
def noise_clip():
    rng = np.random.default_rng(11)
    return AudioClip(samples=rng.uniform(-0.5, 0.5, 8000), sample_rate_hz=8000)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Six short clips per species at 16 kHz."""
    out_dir = tmp_path_factory.mktemp("corpus")
    manifest = generate_fixtures(
        6, seed=3, out_dir=out_dir, duration_seconds=CLIP_SECONDS, sample_rate_hz=SMALL_RATE
    )
    return manifest, out_dir


@pytest.fixture(scope="session")
def fixture_features(fixture_corpus):
    manifest, _ = fixture_corpus
    return featurize_manifest(manifest, SMALL_FEATURE)


@pytest.fixture(scope="session")
def trained_model_path(fixture_corpus, fixture_features, tmp_path_factory):
    manifest, _ = fixture_corpus
    net = build_network(
        ModelConfig(layer_sizes=[SMALL_FEATURE.n_mfcc, 32, 5], dropout_rate=0.2),
        seed=0,
        labels=manifest.labels,
    )
    y = fixture_features.label_indices(manifest.labels)
    net, _ = train(
        net,
        fixture_features.features,
        y,
        fixture_features.features,
        y,
        TrainingConfig(epochs=60, batch_size=8, learning_rate=0.01, seed=0),
    )
    return save_model(net, tmp_path_factory.mktemp("models") / "model.json")


@pytest.fixture
def model_manager(trained_model_path) -> ModelManager:
    return ModelManager.from_path(trained_model_path)


@pytest.fixture
def sample_data_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "sample_data"
