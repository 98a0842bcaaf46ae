import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..models.schemas import (  # noqa: E402
    DatasetManifest,
    FeatureConfig,
    ManifestEntry,
    MetricsReport,
    TrainingConfig,
    TrainingHistory,
)
from ..processors.mfcc import FeatureExtractor, FeatureTable  # noqa: E402
from .metrics import compute_metrics, confusion_matrix  # noqa: E402
from .network import (  # noqa: E402
    AdamState,
    DimensionMismatchError,
    Network,
    accuracy,
    adam_step,
    backward,
    cross_entropy,
    forward,
    one_hot,
    predict,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc"]


class ManifestError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """
    Read a ``path,label`` CSV. Labels keep their first-appearance order.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if list(frame.columns[:2]) != ["path", "label"]:
        raise ManifestError(f"{path}: header must be 'path,label'")

    entries: List[ManifestEntry] = []
    seen = set()
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        entry_path, label = row[0].strip(), row[1].strip()
        if not entry_path:
            raise ManifestError(f"{path}: empty path on row {line}")
        if not label:
            raise ManifestError(f"{path}: empty label on row {line}")
        if entry_path in seen:
            raise ManifestError(f"{path}: duplicate path {entry_path} on row {line}")
        seen.add(entry_path)
        entries.append(ManifestEntry(path=entry_path, label=label))
    if not entries:
        raise ManifestError(f"{path}: manifest has no entries")

    labels = list(dict.fromkeys(entry.label for entry in entries))
    manifest = DatasetManifest(entries=entries, labels=labels, root=str(path.parent))
    logger.info(f"Loaded {len(entries)} entries from {path}: {manifest.class_counts()}")
    return manifest


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([entry.model_dump() for entry in manifest.entries])
    frame.to_csv(path, index=False, columns=["path", "label"])
    return path


def stratified_split_indices(
    labels: Sequence[str], label_order: Sequence[str], config: TrainingConfig
) -> Tuple[List[int], List[int]]:
    """
    Per class, hold out floor(test_fraction * n) items (at least one).

    Returns sorted train and test index lists.
    """
    rng = np.random.default_rng(config.seed)
    labels = list(labels)
    train_idx: List[int] = []
    test_idx: List[int] = []
    for label in label_order:
        members = [i for i, value in enumerate(labels) if value == label]
        if len(members) < 2:
            raise ManifestError(f"Class {label!r} needs at least 2 entries to split")
        n_test = max(1, int(np.floor(config.test_fraction * len(members))))
        order = rng.permutation(len(members)) if config.shuffle else np.arange(len(members))
        picked = [members[j] for j in order]
        test_idx.extend(picked[:n_test])
        train_idx.extend(picked[n_test:])
    return sorted(train_idx), sorted(test_idx)


def split_dataset(
    manifest: DatasetManifest, config: TrainingConfig
) -> Tuple[DatasetManifest, DatasetManifest]:
    """
    Stratified, seeded train/test split of a manifest.
    """
    train_idx, test_idx = stratified_split_indices(
        [entry.label for entry in manifest.entries], manifest.labels, config
    )

    def pick(indices: List[int]) -> DatasetManifest:
        return DatasetManifest(
            entries=[manifest.entries[i] for i in indices],
            labels=manifest.labels,
            root=manifest.root,
        )

    return pick(train_idx), pick(test_idx)


def split_features(
    table: FeatureTable, label_order: Sequence[str], config: TrainingConfig
) -> Tuple[FeatureTable, FeatureTable]:
    train_idx, test_idx = stratified_split_indices(table.labels, label_order, config)
    return table.subset(train_idx), table.subset(test_idx)


def featurize_manifest(
    manifest: DatasetManifest, config: FeatureConfig, workers: int = 1
) -> FeatureTable:
    """
    Featurize every manifest entry; entries may be processed on a thread pool.
    """
    extractor = FeatureExtractor(config)
    paths = [manifest.resolve(entry) for entry in manifest.entries]

    def run(path: Path) -> np.ndarray:
        try:
            return extractor.extract_file(path)
        except Exception as e:
            logger.error(f"Error featurizing {path}: {e}")
            raise

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(run, paths))
    else:
        vectors = [run(path) for path in paths]

    logger.info(f"Featurized {len(vectors)} clips into {config.n_mfcc} coefficients")
    return FeatureTable(
        clip_ids=[entry.path for entry in manifest.entries],
        labels=[entry.label for entry in manifest.entries],
        features=np.vstack(vectors) if vectors else np.zeros((0, config.n_mfcc)),
    )


def _evaluate_loss(net: Network, features: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    if len(labels) == 0:
        return 0.0, 0.0
    probs, _ = forward(net, features, mode="infer")
    loss = cross_entropy(probs, one_hot(labels, net.n_classes))
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, acc


def train(
    net: Network,
    train_features: np.ndarray,
    train_labels,
    test_features: np.ndarray,
    test_labels,
    config: TrainingConfig,
) -> Tuple[Network, TrainingHistory]:
    """
    Mini-batch Adam training with per-epoch validation.

    Args:
        net: network to train in place
        train_features, train_labels: training inputs and class indices
        test_features, test_labels: held-out split, used for per-epoch validation
        config: epochs, batch size, seed and Adam hyperparameters

    Returns:
        The trained network and its history
    """
    train_features = np.asarray(train_features, dtype=np.float64)
    test_features = np.asarray(test_features, dtype=np.float64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if train_features.ndim != 2 or train_features.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"Training features have shape {train_features.shape}, "
            f"network expects {net.input_dim} inputs"
        )
    if len(train_features) == 0:
        raise ValueError("No training samples")

    rng = np.random.default_rng(config.seed)
    if net.config.standardize_inputs:
        net.fit_input_scaling(train_features)

    history = TrainingHistory()
    history.pretrain_accuracy = accuracy(net, test_features, test_labels)
    logger.info(f"Pre-training accuracy: {history.pretrain_accuracy * 100:.4f}%")

    state = AdamState.create(
        net.parameters(),
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    targets = one_hot(train_labels, net.n_classes)
    n = len(train_features)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            probs, cache = forward(net, train_features[idx], mode="train", rng=rng)
            loss = cross_entropy(probs, targets[idx])
            if not np.isfinite(loss):
                logger.error(f"Non-finite loss at epoch {epoch}, batch {batch_no}")
                raise TrainingError(f"Non-finite loss {loss} at epoch {epoch}, batch {batch_no}")
            grads = backward(net, cache, targets[idx])
            adam_step(state, net.parameters(), grads)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == train_labels[idx]))

        val_loss, val_acc = _evaluate_loss(net, test_features, test_labels)
        history.train_loss.append(loss_sum / n)
        history.train_accuracy.append(correct / n)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        logger.info(
            f"Epoch {epoch}/{config.epochs} - loss: {loss_sum / n:.4f} - "
            f"accuracy: {correct / n:.4f} - val_loss: {val_loss:.4f} - val_accuracy: {val_acc:.4f}"
        )

    return net, history


def evaluate_model(
    net: Network, features: np.ndarray, labels
) -> Tuple[np.ndarray, MetricsReport]:
    """
    Confusion matrix and metrics of ``net`` on a labelled feature matrix.
    """
    if np.asarray(features).shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"Features have {np.asarray(features).shape[1]} columns, "
            f"model expects {net.input_dim}"
        )
    predicted = predict(net, features)
    cm = confusion_matrix(predicted, labels, net.n_classes)
    return cm, compute_metrics(cm, net.labels)


def export_history(history: TrainingHistory, out_path: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write the history as CSV and as a loss/accuracy plot next to it.
    """
    if len(history) == 0:
        raise ValueError("History is empty")
    out_path = Path(out_path)
    plot_path = out_path.with_suffix(".png")
    epochs = list(range(1, len(history) + 1))
    frame = pd.DataFrame(
        {
            "epoch": epochs,
            "train_loss": history.train_loss,
            "val_loss": history.val_loss,
            "train_acc": history.train_accuracy,
            "val_acc": history.val_accuracy,
        },
        columns=HISTORY_COLUMNS,
    )
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_path, index=False)

        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(11, 4))
        ax_loss.plot(epochs, history.train_loss, label="train")
        ax_loss.plot(epochs, history.val_loss, label="validation")
        ax_loss.set_title("Train and Validation Loss")
        ax_loss.set_xlabel("epoch")
        ax_loss.legend()
        ax_acc.plot(epochs, history.train_accuracy, label="train")
        ax_acc.plot(epochs, history.val_accuracy, label="validation")
        ax_acc.set_title("Train and Validation Accuracy")
        ax_acc.set_xlabel("epoch")
        ax_acc.legend()
        fig.tight_layout()
        fig.savefig(plot_path, format="png")
        plt.close(fig)
    except OSError as e:
        logger.error(f"Error writing history to {out_path}: {e}")
        raise
    return out_path, plot_path


def read_history(path: Union[str, Path]) -> TrainingHistory:
    frame = pd.read_csv(path, float_precision="round_trip")
    return TrainingHistory(
        train_loss=frame["train_loss"].tolist(),
        train_accuracy=frame["train_acc"].tolist(),
        val_loss=frame["val_loss"].tolist(),
        val_accuracy=frame["val_acc"].tolist(),
    )
