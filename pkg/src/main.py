"""
Command-line entry point: one subcommand per pipeline stage.
"""

import argparse
import json
import logging
import socket
import sys
from pathlib import Path
from typing import List, Optional, Union

from pydantic import ValidationError

from .config.settings import AppConfig, ConfigError, load_app_config, settings
from .models.schemas import ModelConfig
from .processors.audio_io import load_clip
from .processors.dsp import compute_spectrogram, render_spectrogram
from .processors.mfcc import read_feature_csv, write_feature_csv
from .services import ModelManager, RecordingClassifier
from .services.fixtures import MANIFEST_NAME, generate_fixtures, generate_recording
from .services.metrics import format_metrics_table
from .services.model_manager import save_model
from .services.network import build_network, model_summary
from .services.pipeline import write_report
from .services.training import (
    evaluate_model,
    export_history,
    featurize_manifest,
    load_manifest,
    split_features,
    train,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="birdsong",
        description="Bird species classification from field recordings",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--config", help="JSON config file (defaults to $CONFIG_PATH)")
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (defaults to $LOG_LEVEL)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    synth = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    synth.add_argument("--per-class", type=int, default=10, help="clips per species")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, help="output directory (default: paths.data_dir)")
    synth.add_argument("--duration", type=float, default=15.0, help="clip length in seconds")
    synth.add_argument("--sample-rate", type=int, default=44100)
    synth.add_argument(
        "--recording-seconds",
        type=float,
        help="also write recording.wav, a continuous recording of this length",
    )
    synth.add_argument("--recording-class", type=int, default=0, help="class of recording.wav")

    featurize = sub.add_parser("featurize", help="turn a manifest into a feature CSV")
    featurize.add_argument("--manifest", type=Path, help="default: <paths.data_dir>/manifest.csv")
    featurize.add_argument("--out", type=Path, help="default: paths.features_path")
    featurize.add_argument("--workers", type=int, default=settings.WORKERS)

    train_cmd = sub.add_parser("train", help="train a model on a feature CSV")
    train_cmd.add_argument("--features", type=Path, help="default: paths.features_path")
    train_cmd.add_argument("--out", type=Path, help="model file (default: paths.model_path)")
    train_cmd.add_argument("--epochs", type=int)
    train_cmd.add_argument("--batch-size", type=int)
    train_cmd.add_argument("--seed", type=int)
    train_cmd.add_argument("--history", type=Path, help="history CSV (default <model>.history.csv)")

    evaluate = sub.add_parser("evaluate", help="metrics of a model on labelled features")
    evaluate.add_argument("--model", type=Path, help="default: paths.model_path")
    evaluate.add_argument("--features", type=Path, help="default: the held-out split <model>.test.csv")
    evaluate.add_argument("--out", type=Path, help="also write the metrics as JSON")

    classify = sub.add_parser("classify", help="detect species in a recording or directory")
    classify.add_argument("--model", type=Path, help="default: paths.model_path")
    classify.add_argument("--audio", type=Path, required=True, help="WAV file or directory")
    classify.add_argument(
        "--out", type=Path, help="report file, or directory for batch mode (default: paths.reports_dir)"
    )
    classify.add_argument("--threshold", type=float, help="minimum confidence")
    classify.add_argument("--window-seconds", type=float)
    classify.add_argument("--csv", action="store_true", help="also write detections as CSV")
    classify.add_argument("--workers", type=int, default=settings.WORKERS)

    spectrogram = sub.add_parser("spectrogram", help="render a power spectrogram PNG")
    spectrogram.add_argument("--audio", type=Path, required=True)
    spectrogram.add_argument("--out", type=Path, required=True)
    spectrogram.add_argument("--cmap", default="magma")

    serve = sub.add_parser("serve", help="start the HTTP inference service")
    serve.add_argument("--model", type=Path, help="default: $MODEL_PATH, then paths.model_path")
    serve.add_argument("--host", default=settings.HOST)
    serve.add_argument("--port", type=int, default=settings.PORT)
    return parser


def _or_default(value: Optional[Path], fallback: Union[str, Path]) -> Path:
    return value if value is not None else Path(fallback)


def _synth(args: argparse.Namespace, config: AppConfig) -> int:
    out_dir = _or_default(args.out, config.paths.data_dir)
    manifest = generate_fixtures(
        args.per_class,
        args.seed,
        out_dir,
        duration_seconds=args.duration,
        sample_rate_hz=args.sample_rate,
    )
    if args.recording_seconds:
        generate_recording(
            args.recording_class,
            args.recording_seconds,
            args.seed,
            out_dir / "recording.wav",
            sample_rate_hz=args.sample_rate,
        )
    print(f"{len(manifest.entries)} clips written to {out_dir}")
    return 0


def _featurize(args: argparse.Namespace, config: AppConfig) -> int:
    manifest_path = _or_default(args.manifest, Path(config.paths.data_dir) / MANIFEST_NAME)
    out = _or_default(args.out, config.paths.features_path)
    manifest = load_manifest(manifest_path)
    table = featurize_manifest(manifest, config.feature, workers=args.workers)
    write_feature_csv(table, out)
    logger.info(f"Wrote {len(table)} feature rows to {out}")
    return 0


def _model_config(config: AppConfig, input_dim: int, n_classes: int) -> ModelConfig:
    sizes = list(config.model.layer_sizes)
    fitted = [input_dim, *sizes[1:-1], n_classes]
    if fitted != sizes:
        logger.warning(f"Layer sizes {sizes} adjusted to the data: {fitted}")
    return config.model.model_copy(update={"layer_sizes": fitted})


def held_out_path(model_path: Path) -> Path:
    return model_path.with_suffix(".test.csv")


def _train(args: argparse.Namespace, config: AppConfig) -> int:
    features_path = _or_default(args.features, config.paths.features_path)
    out = _or_default(args.out, config.paths.model_path)
    table = read_feature_csv(features_path)
    labels = list(dict.fromkeys(table.labels))
    counts = {label: table.labels.count(label) for label in labels}
    logger.info(f"Class distribution: {counts}")

    train_table, test_table = split_features(table, labels, config.training)
    net = build_network(
        _model_config(config, table.dimension, len(labels)), seed=config.training.seed, labels=labels
    )
    logger.info(f"Model summary:\n{model_summary(net)}")

    net, history = train(
        net,
        train_table.features,
        train_table.label_indices(labels),
        test_table.features,
        test_table.label_indices(labels),
        config.training,
    )
    save_model(net, out)
    write_feature_csv(test_table, held_out_path(out))
    history_path = args.history or out.with_name(f"{out.stem}.history.csv")
    export_history(history, history_path)
    print(
        f"model {ModelManager.from_path(out).model_id}: "
        f"val_accuracy {history.val_accuracy[-1]:.4f} after {len(history)} epochs"
    )
    return 0


def _evaluate(args: argparse.Namespace, config: AppConfig) -> int:
    model_path = _or_default(args.model, config.paths.model_path)
    manager = ModelManager.from_path(model_path)
    table = read_feature_csv(_or_default(args.features, held_out_path(model_path)))
    cm, report = evaluate_model(manager.net, table.features, table.label_indices(manager.labels))
    print(format_metrics_table(report))
    if args.out:
        payload = report.model_dump(mode="json")
        payload["confusion_matrix"] = cm.tolist()
        payload["model_id"] = manager.model_id
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def _classify(args: argparse.Namespace, config: AppConfig) -> int:
    manager = ModelManager.from_path(_or_default(args.model, config.paths.model_path))
    classifier = RecordingClassifier(manager, config.pipeline_config())
    if args.audio.is_dir():
        out_dir = _or_default(args.out, config.paths.reports_dir)
        written = classifier.classify_directory(args.audio, out_dir, workers=args.workers, csv=args.csv)
        print(f"{len(written)} reports written to {out_dir}")
        return 0

    report = classifier.report_for_file(args.audio)
    if args.out:
        write_report(report, args.out, csv=args.csv)
    else:
        sys.stdout.write(report.to_json())
    return 0


def _spectrogram(args: argparse.Namespace, config: AppConfig) -> int:
    clip = load_clip(args.audio)
    spec = compute_spectrogram(clip, config.feature.frame_ms, config.feature.hop_ms)
    render_spectrogram(spec, args.out, cmap=args.cmap)
    return 0


def _port_in_use(host: str, port: int) -> bool:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        try:
            sock.bind((host, port))
        except OSError:
            return True
    return False


def _serve(args: argparse.Namespace, config: AppConfig) -> int:
    import uvicorn

    from .app.api import create_app

    if _port_in_use(args.host, args.port):
        raise OSError(f"Port {args.port} on {args.host} is already in use")
    model_path = _or_default(args.model, settings.MODEL_PATH or config.paths.model_path)
    manager = ModelManager.from_path(model_path)
    app = create_app(manager, config.pipeline_config())
    logger.info(f"Serving model {manager.model_id} on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


COMMANDS = {
    "synth": _synth,
    "featurize": _featurize,
    "train": _train,
    "evaluate": _evaluate,
    "classify": _classify,
    "spectrogram": _spectrogram,
    "serve": _serve,
}


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "training.epochs": getattr(args, "epochs", None),
        "training.batch_size": getattr(args, "batch_size", None),
        "training.seed": getattr(args, "seed", None) if args.command == "train" else None,
        "pipeline.confidence_threshold": getattr(args, "threshold", None),
        "pipeline.window_seconds": getattr(args, "window_seconds", None),
    }


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand and return its exit code.

    Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    logging.basicConfig(
        level=getattr(logging, (args.log_level or settings.LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_app_config(args.config or settings.CONFIG_PATH, _overrides(args))
    except (ConfigError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    try:
        return COMMANDS[args.command](args, config)
    except (ConfigError, ValidationError) as e:
        print(f"error: {str(e).splitlines()[0]}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e).splitlines()[0] if str(e) else type(e).__name__}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    run()
