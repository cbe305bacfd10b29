"""Diagnostics: confusion matrices, hidden correlations, weight shifts, synaptic importance"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import AnalysisError, DimensionError
from .ep_model import hidden_activity
from .models import EPHyperParams, LabeledSet, NetworkParams

logger = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """Counts indexed by (true class, predicted class)"""
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def column_share(self, classes: Sequence[int]) -> float:
        """Fraction of all predictions that fall into the given columns"""
        return float(self.counts[:, list(classes)].sum() / self.total) if self.total else 0.0


@dataclass
class CorrelationMatrix:
    classes: List[int]
    values: np.ndarray

    def mean_abs_off_diagonal(self) -> float:
        k = len(self.classes)
        if k < 2:
            return 0.0
        mask = ~np.eye(k, dtype=bool)
        return float(np.mean(np.abs(self.values[mask])))


@dataclass
class WeightHistogram:
    name: str
    counts: np.ndarray
    edges: np.ndarray
    mean: float

    @property
    def range(self) -> Tuple[float, float]:
        return float(self.edges[0]), float(self.edges[-1])


@dataclass
class ImportanceVector:
    """Per hidden-to-output connection contribution for one class"""
    c: int
    u: np.ndarray  # output x hidden, flattened row-major


def confusion(preds: Sequence[int], labels: Sequence[int], k: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.size} predictions for {labels.size} labels")
    for name, values in (('prediction', preds), ('label', labels)):
        if values.size and (values.min() < 0 or values.max() >= k):
            raise AnalysisError(f"{name} class out of range 0..{k - 1}")

    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def pearson_matrix(vectors: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """
    Pearson correlation between rows

    Rows with zero variance get all-zero correlations; their indices are
    returned so callers can report them.
    """
    centered = vectors - vectors.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    degenerate = [int(i) for i in np.flatnonzero(norms == 0)]
    safe = np.where(norms == 0, 1.0, norms)
    unit = centered / safe[:, None]
    values = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    for i in degenerate:
        values[i, :] = 0.0
        values[:, i] = 0.0
    return values, degenerate


def hidden_correlation(p: NetworkParams, h: EPHyperParams, test: LabeledSet) -> CorrelationMatrix:
    """Correlation between per-class mean hidden fixed points"""
    classes = test.present_classes()
    if not classes:
        raise AnalysisError("hidden correlation needs a non-empty test set")

    activity = hidden_activity(test.inputs, p, h)
    means = np.stack([activity[test.labels == c].mean(axis=0) for c in classes])
    values, degenerate = pearson_matrix(means)
    for i in degenerate:
        logger.warning("Class %d has a constant mean hidden activation; correlations set to 0", classes[i])
    return CorrelationMatrix(classes, values)


def weight_diff_histogram(before: NetworkParams, after: NetworkParams, bins: int) -> Dict[str, WeightHistogram]:
    """Histogram of (after - before) for each weight matrix over the observed range"""
    if not before.same_shape(after):
        raise DimensionError("snapshots have different layer shapes")

    histograms = {}
    for name, old in before.weights().items():
        diff = (after.weights()[name] - old).ravel()
        counts, edges = np.histogram(diff, bins=bins, range=(float(diff.min()), float(diff.max())))
        histograms[name] = WeightHistogram(name, counts, edges, float(diff.mean()))
    return histograms


def synaptic_importance(p: NetworkParams, h: EPHyperParams, class_samples: LabeledSet, c: int) -> ImportanceVector:
    """
    Mean presynaptic hidden activity times weight for every hidden-to-output connection

    Weights are only read; the importance of connection (o, j) is the
    average over samples of s_j * w_ho[o, j].
    """
    if len(class_samples) == 0:
        raise AnalysisError(f"no samples for class {c}")
    if np.any(class_samples.labels != c):
        raise AnalysisError(f"class_samples must contain only class {c}")

    mean_activity = hidden_activity(class_samples.inputs, p, h).mean(axis=0)
    return ImportanceVector(c, (p.w_ho * mean_activity[None, :]).ravel())


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise AnalysisError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))


def importance_cosines(
    snapshots: Dict[str, NetworkParams],
    h: EPHyperParams,
    test: LabeledSet,
    classes: Sequence[int],
    pairs: Sequence[Tuple[str, str]],
) -> List[Tuple[int, str, str, float]]:
    """Cosine between importance patterns of the same class at two phases"""
    rows = []
    for c in classes:
        samples = test.only([c])
        patterns = {}
        for phase in sorted({label for pair in pairs for label in pair}):
            patterns[phase] = synaptic_importance(snapshots[phase], h, samples, c).u
        for first, second in pairs:
            rows.append((int(c), first, second, cosine_similarity(patterns[first], patterns[second])))
    return rows
