import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = [80, 256, 256, 256, 5]


class FeatureConfig(BaseModel):
    """
    MFCC front-end parameters.
    """

    model_config = ConfigDict(extra="forbid")

    n_mfcc: int = Field(80, gt=0)
    n_mels: int = Field(128, ge=2)
    frame_ms: float = Field(40.0, gt=0)
    hop_ms: float = Field(20.0, gt=0)
    f_min_hz: float = Field(0.0, ge=0)
    # None means half the sample rate
    f_max_hz: Optional[float] = None
    mel_constant: float = Field(2595.0, gt=0)
    sample_rate_hz: int = Field(44100, gt=0)
    clip_seconds: float = Field(15.0, gt=0)

    @model_validator(mode="after")
    def check_ranges(self) -> "FeatureConfig":
        if self.n_mfcc > self.n_mels:
            raise ValueError(f"n_mfcc ({self.n_mfcc}) exceeds n_mels ({self.n_mels})")
        if self.hop_ms > self.frame_ms:
            raise ValueError("hop_ms must not exceed frame_ms")
        if self.f_max_hz is not None and self.f_max_hz <= self.f_min_hz:
            raise ValueError("f_min_hz must be below f_max_hz")
        return self

    def upper_frequency(self, sample_rate_hz: int) -> float:
        return self.f_max_hz if self.f_max_hz is not None else sample_rate_hz / 2.0


class ModelConfig(BaseModel):
    """
    Dense classifier architecture.
    """

    model_config = ConfigDict(extra="forbid")

    layer_sizes: List[int] = Field(default_factory=lambda: list(DEFAULT_LAYER_SIZES))
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    hidden_activation: Literal["relu"] = "relu"
    output_activation: Literal["softmax"] = "softmax"
    standardize_inputs: bool = True

    @field_validator("layer_sizes")
    def validate_layer_sizes(cls, v: List[int]) -> List[int]:
        if len(v) < 2:
            raise ValueError("layer_sizes needs an input and an output size")
        if any(size <= 0 for size in v):
            raise ValueError(f"layer sizes must be positive: {v}")
        return v


class TrainingConfig(BaseModel):
    """
    Training protocol and Adam hyperparameters.
    """

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(100, ge=1)
    batch_size: int = Field(32, ge=1)
    test_fraction: float = Field(0.10, gt=0.0, lt=1.0)
    seed: int = 0
    shuffle: bool = True
    learning_rate: float = Field(0.001, gt=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0)


class PipelineConfig(BaseModel):
    """
    Windowed inference over long recordings.
    """

    model_config = ConfigDict(extra="forbid")

    window_seconds: float = Field(15.0, gt=0)
    min_tail_seconds: float = Field(3.0, ge=0)
    confidence_threshold: float = Field(0.5, ge=0.0, lt=1.0)
    feature: FeatureConfig = Field(default_factory=FeatureConfig)


class ManifestEntry(BaseModel):
    path: str
    label: str = Field(..., min_length=1)


class DatasetManifest(BaseModel):
    """
    Labelled audio files. Relative paths resolve against ``root``.
    """

    entries: List[ManifestEntry]
    labels: List[str]
    root: Optional[str] = None

    @model_validator(mode="after")
    def check_consistency(self) -> "DatasetManifest":
        seen = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ValueError(f"Duplicate path in manifest: {entry.path}")
            seen.add(entry.path)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"Duplicate labels: {self.labels}")
        counts = self.class_counts()
        for label in self.labels:
            if counts.get(label, 0) == 0:
                raise ValueError(f"Label has no entries: {label}")
        unknown = set(counts) - set(self.labels)
        if unknown:
            raise ValueError(f"Entries use labels outside the label set: {sorted(unknown)}")
        return self

    def class_counts(self) -> Dict[str, int]:
        counts = Counter(entry.label for entry in self.entries)
        ordered = {label: counts[label] for label in self.labels if counts[label]}
        for label, n in counts.items():
            ordered.setdefault(label, n)
        return ordered

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        if not path.is_absolute() and self.root is not None:
            path = Path(self.root) / path
        return path

    def label_index(self, label: str) -> int:
        return self.labels.index(label)


class TrainingHistory(BaseModel):
    """
    Per-epoch curves of one training run.
    """

    train_loss: List[float] = Field(default_factory=list)
    train_accuracy: List[float] = Field(default_factory=list)
    val_loss: List[float] = Field(default_factory=list)
    val_accuracy: List[float] = Field(default_factory=list)
    pretrain_accuracy: Optional[float] = None

    def __len__(self) -> int:
        return len(self.train_loss)


class ClassMetrics(BaseModel):
    label: str
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float = Field(..., ge=0.0, le=1.0)
    specificity: float = Field(..., ge=0.0, le=1.0)
    precision: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    degenerate: bool = False


class MetricsReport(BaseModel):
    """
    One-vs-rest metrics per class plus overall accuracy.
    """

    classes: List[ClassMetrics]
    accuracy: float = Field(..., ge=0.0, le=1.0)
    total: int


class Detection(BaseModel):
    source: str
    window: int
    start_s: float
    end_s: float
    label: str
    confidence: float = Field(..., ge=0.0, le=1.0)
    probs: List[float]

    @model_validator(mode="after")
    def check_confidence(self) -> "Detection":
        if self.probs and self.confidence != max(self.probs):
            raise ValueError("confidence must equal the largest probability")
        return self


class LabelSummary(BaseModel):
    label: str
    count: int
    mean_confidence: float


class ReportConfig(BaseModel):
    sample_rate_hz: int
    window_seconds: float
    min_tail_seconds: float
    confidence_threshold: float
    model_id: str


class Report(BaseModel):
    """
    Detection report for one recording.
    """

    source: str
    model_id: str
    config: ReportConfig
    detections: List[Detection] = Field(default_factory=list)
    summary: List[LabelSummary] = Field(default_factory=list)

    def to_json(self) -> str:
        payload = self.model_dump(
            mode="json", exclude={"detections": {"__all__": {"source"}}}
        )
        return json.dumps(payload, indent=2) + "\n"


class HealthResponse(BaseModel):
    status: str = "ok"
    model_id: str
    format_version: int
    labels: List[str]


class ErrorResponse(BaseModel):
    error: str
    detail: Optional[str] = None
