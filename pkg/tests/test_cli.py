import json

import pytest
from PIL import Image

from src.config.settings import AppConfig, ConfigError, load_app_config
from src.main import cli_main
from src.services.fixtures import MANIFEST_NAME, generate_recording

SMALL_CONFIG = {
    "feature": {"n_mfcc": 20, "n_mels": 40, "sample_rate_hz": 16000, "clip_seconds": 2.0},
    "model": {"layer_sizes": [20, 32, 5], "dropout_rate": 0.2},
    "training": {"epochs": 40, "batch_size": 8, "learning_rate": 0.01, "test_fraction": 0.34},
    "pipeline": {"window_seconds": 2.0, "min_tail_seconds": 0.5},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesize, featurize and train once for the whole module."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    paths = {
        "data_dir": str(root / "corpus"),
        "features_path": str(root / "features.csv"),
        "model_path": str(root / "model.json"),
        "reports_dir": str(root / "reports"),
    }
    config.write_text(json.dumps({**SMALL_CONFIG, "paths": paths}))
    base = ["--config", str(config), "--log-level", "warning"]

    # every path below comes from the config file
    assert cli_main(base + ["synth", "--per-class", "6", "--seed", "2", "--duration", "2",
                            "--sample-rate", "16000"]) == 0
    assert cli_main(base + ["featurize"]) == 0
    assert cli_main(base + ["train"]) == 0
    return root, base


class TestParser:
    @pytest.mark.parametrize(
        "command", ["synth", "featurize", "train", "evaluate", "classify", "spectrogram", "serve"]
    )
    def test_subcommand_help(self, command, capsys):
        assert cli_main([command, "--help"]) == 0
        assert "usage: birdsong" in capsys.readouterr().out

    def test_unknown_subcommand(self):
        assert cli_main(["transcribe"]) == 2

    def test_missing_subcommand(self):
        assert cli_main([]) == 2

    def test_missing_required_flag(self):
        assert cli_main(["spectrogram", "--out", "x.png"]) == 2


class TestConfigLoading:
    def test_defaults(self):
        config = load_app_config()

        assert config == AppConfig()
        assert config.model.layer_sizes == [80, 256, 256, 256, 5]
        assert config.pipeline.window_seconds == 15.0

    def test_file_values(self, config_path):
        config = load_app_config(config_path)

        assert config.feature.n_mfcc == 20
        assert config.training.epochs == 40
        assert config.pipeline_config().feature == config.feature

    def test_example_config_matches_defaults(self, sample_data_dir):
        assert load_app_config(sample_data_dir / "config.example.json") == AppConfig()

    def test_overrides_beat_file(self, config_path):
        config = load_app_config(config_path, {"training.epochs": 3, "training.seed": None})

        assert config.training.epochs == 3
        assert config.training.batch_size == 8
        assert config.training.seed == 0

    @pytest.mark.parametrize(
        "content",
        ["{not json", "[1, 2]", '{"training": {"epochs": 0}}', '{"unknown_section": {}}'],
    )
    def test_invalid_file(self, tmp_path, content):
        path = tmp_path / "bad.json"
        path.write_text(content)

        with pytest.raises(ConfigError):
            load_app_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_app_config(tmp_path / "absent.json")

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"feature": {"n_mfcc": 200}}')

        assert cli_main(["--config", str(path), "spectrogram", "--audio", "a.wav", "--out", "a.png"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_settings_defaults(self, settings):
        assert settings.MODEL_PATH is None
        assert settings.MAX_UPLOAD_SIZE == 64 * 1024 * 1024


class TestPipelineCommands:
    def test_synth_writes_corpus(self, workspace):
        root, _ = workspace

        assert len(list((root / "corpus").rglob("*.wav"))) == 30
        assert (root / "corpus" / MANIFEST_NAME).exists()

    def test_train_outputs(self, workspace):
        root, _ = workspace

        assert (root / "model.json").exists()
        assert (root / "model.test.csv").exists()
        assert (root / "model.history.csv").exists()
        assert (root / "model.history.png").exists()

    def test_evaluate(self, workspace, capsys):
        root, base = workspace
        out = root / "metrics.json"

        # model and held-out split both default from paths.model_path
        assert cli_main(base + ["evaluate", "--out", str(out)]) == 0
        assert "Accuracy:" in capsys.readouterr().out
        payload = json.loads(out.read_text())
        assert len(payload["confusion_matrix"]) == 5
        assert payload["accuracy"] >= 0.9

    def test_classify_matches_http(self, workspace, capsys):
        from fastapi.testclient import TestClient

        from src.app.api import create_app
        from src.services import ModelManager

        root, base = workspace
        audio = generate_recording(3, 6.0, seed=1, path=root / "site_12.wav", sample_rate_hz=16000)
        capsys.readouterr()

        assert cli_main(base + ["classify", "--audio", str(audio)]) == 0
        cli_body = capsys.readouterr().out

        config = load_app_config(root / "config.json")
        client = TestClient(create_app(ModelManager.from_path(root / "model.json"), config.pipeline_config()))
        response = client.post("/classify", params={"source": audio.name}, content=audio.read_bytes())

        assert response.text == cli_body

    def test_classify_directory(self, workspace):
        root, base = workspace
        drop = root / "drop"
        for k in range(2):
            generate_recording(k, 4.0, seed=k, path=drop / f"rec_{k}.wav", sample_rate_hz=16000)

        assert cli_main(base + ["classify", "--audio", str(drop), "--csv", "--threshold", "0.0"]) == 0
        report = json.loads((root / "reports" / "rec_1.json").read_text())
        assert report["config"]["confidence_threshold"] == 0.0
        assert len(report["detections"]) == 2
        assert (root / "reports" / "rec_0.csv").exists()

    def test_spectrogram(self, workspace):
        root, base = workspace
        audio = generate_recording(0, 1.0, seed=0, path=root / "short.wav", sample_rate_hz=16000)
        out = root / "short.png"

        assert cli_main(base + ["spectrogram", "--audio", str(audio), "--out", str(out)]) == 0
        with Image.open(out) as image:
            assert image.format == "PNG"

    def test_runtime_failure_exits_1(self, workspace, capsys):
        root, base = workspace
        bad = root / "bad.wav"
        bad.write_bytes(b"RIFF0000WAVEjunk")

        assert cli_main(base + ["classify", "--model", str(root / "model.json"), "--audio", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_model_exits_1(self, workspace, tmp_path):
        _, base = workspace

        assert cli_main(base + ["classify", "--model", str(tmp_path / "none.json"),
                                "--audio", str(tmp_path / "none.wav")]) == 1

    def test_flags_beat_config_paths(self, workspace):
        root, base = workspace
        out = root / "elsewhere" / "features.csv"

        assert cli_main(base + ["featurize", "--manifest", str(root / "corpus" / MANIFEST_NAME),
                                "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == len((root / "features.csv").read_text().splitlines())

    def test_missing_default_model_exits_1(self, config_path, tmp_path, monkeypatch):
        # no paths section, so the model resolves to models/model.json under the cwd
        monkeypatch.chdir(tmp_path)
        audio = generate_recording(0, 1.0, seed=0, path=tmp_path / "a.wav", sample_rate_hz=16000)

        assert cli_main(["--config", str(config_path), "classify", "--audio", str(audio)]) == 1
