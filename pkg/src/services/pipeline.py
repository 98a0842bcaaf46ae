import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..models.schemas import Detection, LabelSummary, PipelineConfig, Report, ReportConfig
from ..processors.audio_io import AudioClip, clip_from_raw, decode_wav, segment
from ..processors.mfcc import FeatureExtractor
from .model_manager import ModelManager
from .network import DimensionMismatchError

logger = logging.getLogger(__name__)


def _check_dimensions(model: ModelManager, config: PipelineConfig) -> None:
    if model.input_dim != config.feature.n_mfcc:
        raise DimensionMismatchError(
            f"Model expects {model.input_dim} features, "
            f"feature config produces {config.feature.n_mfcc}"
        )


def classify_clip(
    clip: AudioClip,
    model: ModelManager,
    config: PipelineConfig,
    source: str,
    extractor: Optional[FeatureExtractor] = None,
) -> List[Detection]:
    """
    Segment a decoded recording and classify each window.

    Windows whose top probability is below the confidence threshold are
    dropped.
    """
    _check_dimensions(model, config)
    extractor = extractor or FeatureExtractor(config.feature)
    clip = extractor.prepare(clip)
    windows = segment(clip, config.window_seconds, config.min_tail_seconds)

    detections: List[Detection] = []
    for index, window in enumerate(windows):
        probs = model.predict_proba(extractor.extract(window))
        best = int(np.argmax(probs))
        confidence = float(probs[best])
        logger.debug(
            f"{source} window {index} [{window.start_seconds:.1f}s, {window.end_seconds:.1f}s]: "
            f"{model.labels[best]} ({confidence:.3f})"
        )
        if confidence < config.confidence_threshold:
            continue
        detections.append(
            Detection(
                source=source,
                window=index,
                start_s=window.start_seconds,
                end_s=window.end_seconds,
                label=model.labels[best],
                confidence=confidence,
                probs=[float(p) for p in probs],
            )
        )
    logger.info(f"{source}: {len(detections)} detections from {len(windows)} windows")
    return detections


def classify_bytes(
    data: bytes,
    model: ModelManager,
    config: PipelineConfig,
    source: str,
    extractor: Optional[FeatureExtractor] = None,
) -> List[Detection]:
    clip = clip_from_raw(decode_wav(data))
    return classify_clip(clip, model, config, source, extractor)


def classify_recording(
    audio_path: Union[str, Path], model: ModelManager, config: PipelineConfig
) -> List[Detection]:
    """
    Decode, segment, featurize and classify one recording file.
    """
    audio_path = Path(audio_path)
    try:
        return classify_bytes(audio_path.read_bytes(), model, config, audio_path.name)
    except Exception as e:
        logger.error(f"Error classifying {audio_path}: {e}")
        raise


def summarize(
    detections: Sequence[Detection],
    config: PipelineConfig,
    model_id: str,
    source: str,
) -> Report:
    """
    Per-label detection counts and mean confidence, plus a config snapshot.

    Summary rows are sorted by label so the result does not depend on
    detection order.
    """
    groups: "OrderedDict[str, List[float]]" = OrderedDict()
    for detection in sorted(detections, key=lambda d: (d.label, d.window)):
        groups.setdefault(detection.label, []).append(detection.confidence)
    summary = [
        LabelSummary(label=label, count=len(values), mean_confidence=float(np.mean(values)))
        for label, values in groups.items()
    ]
    return Report(
        source=source,
        model_id=model_id,
        config=ReportConfig(
            sample_rate_hz=config.feature.sample_rate_hz,
            window_seconds=config.window_seconds,
            min_tail_seconds=config.min_tail_seconds,
            confidence_threshold=config.confidence_threshold,
            model_id=model_id,
        ),
        detections=sorted(detections, key=lambda d: (d.window, d.label)),
        summary=summary,
    )


class RecordingClassifier:
    """
    Classify recordings against one shared, read-only model.
    """

    def __init__(self, model: ModelManager, config: PipelineConfig):
        _check_dimensions(model, config)
        self.model = model
        self.config = config
        self.extractor = FeatureExtractor(config.feature)

    def report_for_bytes(self, data: bytes, source: str) -> Report:
        detections = classify_bytes(data, self.model, self.config, source, self.extractor)
        return summarize(detections, self.config, self.model.model_id, source)

    def report_for_file(self, audio_path: Union[str, Path]) -> Report:
        audio_path = Path(audio_path)
        try:
            return self.report_for_bytes(audio_path.read_bytes(), audio_path.name)
        except Exception as e:
            logger.error(f"Error classifying {audio_path}: {e}")
            raise

    def classify_directory(
        self,
        audio_dir: Union[str, Path],
        out_dir: Union[str, Path],
        workers: int = 1,
        csv: bool = False,
    ) -> List[Path]:
        """
        File-drop batch mode: one report per ``*.wav`` in ``audio_dir``.
        """
        paths = sorted(Path(audio_dir).glob("*.wav"))
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        def run(path: Path) -> Path:
            report = self.report_for_file(path)
            target = out_dir / f"{path.stem}.json"
            write_report(report, target, csv=csv)
            return target

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                written = list(pool.map(run, paths))
        else:
            written = [run(path) for path in paths]
        logger.info(f"Classified {len(written)} recordings from {audio_dir}")
        return written


def write_report(report: Report, path: Union[str, Path], csv: bool = False) -> Path:
    """
    Write the JSON report, and optionally a CSV of its detections alongside.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    if csv:
        write_report_csv(report, path.with_suffix(".csv"))
    return path


def write_report_csv(report: Report, path: Union[str, Path]) -> Path:
    """
    One row per detection; probability columns p0..p{n-1}.
    """
    columns = ["source", "window", "start_s", "end_s", "label", "confidence"]
    n_probs = len(report.detections[0].probs) if report.detections else 0
    columns += [f"p{i}" for i in range(n_probs)]
    rows = [
        [report.source, d.window, d.start_s, d.end_s, d.label, d.confidence, *d.probs]
        for d in report.detections
    ]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path
