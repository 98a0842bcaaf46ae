import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..models.schemas import ClassMetrics, MetricsReport

logger = logging.getLogger(__name__)


def confusion_matrix(predicted, true, n_classes: int) -> np.ndarray:
    """
    Counts with rows = true class, columns = predicted class.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if predicted.shape != true.shape:
        raise ValueError(
            f"Label sequences differ in length: {predicted.size} vs {true.size}"
        )
    for name, values in (("predicted", predicted), ("true", true)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise ValueError(f"{name} label out of range for {n_classes} classes")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, predicted), 1)
    return counts


def _ratio(num: int, den: int) -> Tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def one_vs_rest(cm: np.ndarray, c: int) -> Tuple[int, int, int, int]:
    """
    (TP, FP, TN, FN) of class ``c`` against all others.
    """
    tp = int(cm[c, c])
    fn = int(cm[c, :].sum()) - tp
    fp = int(cm[:, c].sum()) - tp
    tn = int(cm.sum()) - tp - fn - fp
    return tp, fp, tn, fn


def compute_metrics(cm: np.ndarray, labels: Optional[Sequence[str]] = None) -> MetricsReport:
    """
    Sensitivity, specificity, precision and F1 per class.

    Cells with a zero denominator are reported as 0 and the class is
    flagged ``degenerate``.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError("Confusion matrix must be square and non-empty")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("Confusion matrix holds no samples")
    n_classes = cm.shape[0]
    if labels is None:
        labels = [f"class_{i}" for i in range(n_classes)]

    classes: List[ClassMetrics] = []
    for c in range(n_classes):
        tp, fp, tn, fn = one_vs_rest(cm, c)
        sensitivity, d1 = _ratio(tp, tp + fn)
        specificity, d2 = _ratio(tn, tn + fp)
        precision, d3 = _ratio(tp, tp + fp)
        if precision + sensitivity > 0:
            f1 = 2 * precision * sensitivity / (precision + sensitivity)
            d4 = False
        else:
            f1, d4 = 0.0, True
        classes.append(
            ClassMetrics(
                label=labels[c],
                tp=tp,
                fp=fp,
                tn=tn,
                fn=fn,
                sensitivity=sensitivity,
                specificity=specificity,
                precision=precision,
                f1=f1,
                degenerate=d1 or d2 or d3 or d4,
            )
        )
    return MetricsReport(classes=classes, accuracy=float(np.trace(cm)) / total, total=total)


def format_metrics_table(report: MetricsReport) -> str:
    """
    Pretty table in the layout of a per-class results table.
    """
    frame = pd.DataFrame(
        [
            {
                "Species": m.label,
                "Sensitivity": m.sensitivity,
                "Specificity": m.specificity,
                "F1 Score": m.f1,
                "Precision": m.precision,
            }
            for m in report.classes
        ]
    )
    table = frame.to_string(index=False, float_format=lambda v: f"{v:.2f}")
    return f"{table}\n\nAccuracy: {report.accuracy:.4f} ({report.total} samples)"
