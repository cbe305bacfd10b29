"""Dataset loading, class-incremental task splits and rehearsal memory"""

import gzip
import logging
from pathlib import Path
from typing import BinaryIO, List, Optional, Sequence

import numpy as np

from .errors import (
    CountMismatchError, DataError, DimensionError, FeatureFormatError,
    MagicError, TruncatedError, TaskSplitError,
)
from .models import InputRates, LabeledSet, RehearsalMemory, Task, TaskSequence

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
FEATURE_MAGIC = 'SOMNUS-FEAT'
FEATURE_VERSION = 'v1'

IDX_DATASETS = ('mnist', 'fmnist', 'kmnist')
FEATURE_DATASETS = ('cifar10', 'imagenet')


def _open(path: Path) -> BinaryIO:
    path = Path(path)
    if path.suffix == '.gz':
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_idx(path: Path, magic: int, ndims: int) -> np.ndarray:
    """Read one IDX file into an array of unsigned bytes"""
    with _open(path) as f:
        raw = f.read()

    header_size = 4 * (1 + ndims)
    if len(raw) < header_size:
        raise TruncatedError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")

    header = np.frombuffer(raw, dtype='>u4', count=1 + ndims)
    if int(header[0]) != magic:
        raise MagicError(f"{path}: magic number 0x{int(header[0]):08x}, expected 0x{magic:08x}")

    dims = tuple(int(d) for d in header[1:])
    expected = int(np.prod(dims))
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header_size)
    if payload.size < expected:
        raise TruncatedError(f"{path}: expected {expected} payload bytes, found {payload.size}")

    return payload[:expected].reshape(dims)


def load_idx(images_path, labels_path, num_classes: Optional[int] = None) -> LabeledSet:
    """
    Load an IDX image/label pair (MNIST, Fashion-MNIST, Kuzushiji-MNIST)

    Pixels are scaled from bytes into [0, 1] and images are flattened.
    Gzip-compressed files are read transparently.
    """
    images = _read_idx(Path(images_path), IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(Path(labels_path), IDX_LABEL_MAGIC, 1)

    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}"
        )

    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0

    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    logger.info("Loaded %d images of %d pixels from %s", inputs.shape[0], inputs.shape[1], images_path)
    return LabeledSet(inputs, labels.astype(np.int64), num_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: Sequence[int]):
    """Write images (n x rows x cols bytes) and labels as an IDX pair"""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, 'wb') as f:
        f.write(np.array([IDX_IMAGE_MAGIC, *images.shape], dtype='>u4').tobytes())
        f.write(images.tobytes())
    with open(labels_path, 'wb') as f:
        f.write(np.array([IDX_LABEL_MAGIC, labels.shape[0]], dtype='>u4').tobytes())
        f.write(labels.tobytes())


def _feature_dtype(dim: int) -> np.dtype:
    return np.dtype([('x', '<f4', (dim,)), ('y', 'u1')])


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    """Scale every column into [0, 1]; zero-range columns map to 0"""
    if values.shape[0] == 0:
        return values.astype(np.float64)
    lo = values.min(axis=0)
    span = values.max(axis=0) - lo
    out = np.zeros(values.shape, dtype=np.float64)
    varying = span > 0
    out[:, varying] = (values[:, varying] - lo[varying]) / span[varying]
    return out


def load_features(path) -> LabeledSet:
    """Load a precomputed feature file and min-max normalize each feature"""
    path = Path(path)
    with _open(path) as f:
        raw = f.read()

    newline = raw.find(b'\n')
    if newline < 0:
        raise FeatureFormatError(f"{path}: missing header line")
    tokens = raw[:newline].decode('ascii', errors='replace').split()
    if len(tokens) != 5 or tokens[0] != FEATURE_MAGIC or tokens[1] != FEATURE_VERSION:
        raise FeatureFormatError(f"{path}: bad header {raw[:newline]!r}")
    try:
        n, dim, num_classes = (int(t) for t in tokens[2:])
    except ValueError:
        raise FeatureFormatError(f"{path}: non-integer header fields {tokens[2:]}")

    dtype = _feature_dtype(dim)
    body = raw[newline + 1:]
    if len(body) != n * dtype.itemsize:
        raise FeatureFormatError(
            f"{path}: header declares {n} records of {dtype.itemsize} bytes, body holds {len(body)} bytes"
        )

    records = np.frombuffer(body, dtype=dtype, count=n)
    labels = records['y'].astype(np.int64)
    if labels.size and labels.max() >= num_classes:
        raise FeatureFormatError(f"{path}: label {labels.max()} out of range for {num_classes} classes")

    inputs = min_max_normalize(records['x'].astype(np.float64).reshape(n, dim))
    logger.info("Loaded %d feature vectors of dimension %d from %s", n, dim, path)
    return LabeledSet(inputs, labels, num_classes)


def write_features(path, inputs: np.ndarray, labels: Sequence[int], num_classes: int):
    """Write raw feature vectors in the SOMNUS-FEAT v1 format"""
    inputs = np.asarray(inputs, dtype=np.float32)
    if inputs.ndim != 2:
        inputs = inputs.reshape(inputs.shape[0], -1)
    n, dim = inputs.shape
    records = np.zeros(n, dtype=_feature_dtype(dim))
    records['x'] = inputs
    records['y'] = np.asarray(labels, dtype=np.uint8)
    with open(path, 'wb') as f:
        f.write(f"{FEATURE_MAGIC} {FEATURE_VERSION} {n} {dim} {num_classes}\n".encode('ascii'))
        f.write(records.tobytes())


def load_dataset(name: str, images=None, labels=None, features=None) -> LabeledSet:
    """Load a dataset by name from IDX files or a feature file"""
    if name in IDX_DATASETS:
        if images is None or labels is None:
            raise DataError(f"dataset '{name}' needs both an images and a labels file")
        return load_idx(images, labels, num_classes=10)
    if name in FEATURE_DATASETS:
        if features is None:
            raise DataError(f"dataset '{name}' needs a feature file")
        return load_features(features)
    raise DataError(f"unknown dataset '{name}'")


def subsample(data: LabeledSet, fraction: float, rng: np.random.Generator) -> LabeledSet:
    """Stratified per-class subsample keeping roughly `fraction` of every class"""
    keep = []
    for c in range(data.num_classes):
        idx = data.class_indices(c)
        if idx.size == 0:
            continue
        count = max(1, int(round(fraction * idx.size)))
        keep.append(rng.choice(idx, size=count, replace=False))
    if not keep:
        return LabeledSet.empty(data.dim, data.num_classes)
    return data.subset(np.sort(np.concatenate(keep)))


def label_groups(num_classes: int, labels_per_task: int) -> List[tuple]:
    if labels_per_task < 1 or num_classes % labels_per_task != 0:
        raise TaskSplitError(
            f"{num_classes} classes cannot be split into tasks of {labels_per_task} labels"
        )
    return [tuple(range(g * labels_per_task, (g + 1) * labels_per_task))
            for g in range(num_classes // labels_per_task)]


def split_tasks(
    data: LabeledSet,
    labels_per_task: int,
    order: Sequence[int],
    rng: np.random.Generator,
    test_fraction: float = 0.1,
    validation_fraction: float = 0.0,
) -> TaskSequence:
    """
    Split a dataset into class-incremental tasks

    Consecutive label groups form tasks; `order[k]` picks the group used as
    the k-th task. Every class is split on its own so the test split (and
    the optional validation split carved from the training remainder) holds
    the requested share of each class. The split depends only on the data
    and the rng, never on the order.
    """
    groups = label_groups(data.num_classes, labels_per_task)
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(len(groups))):
        raise TaskSplitError(f"order {order} is not a permutation of {len(groups)} tasks")

    parts = {}
    for c in range(data.num_classes):
        shuffled = rng.permutation(data.class_indices(c))
        n_test = int(round(test_fraction * shuffled.size))
        rest = shuffled[n_test:]
        n_val = int(round(validation_fraction * rest.size))
        parts[c] = (np.sort(rest[n_val:]), np.sort(shuffled[:n_test]), np.sort(rest[:n_val]))

    def gather(classes, which):
        return data.subset(np.concatenate([parts[c][which] for c in classes]))

    tasks = []
    for position, group_index in enumerate(order):
        group = groups[group_index]
        validation = gather(group, 2) if validation_fraction > 0 else None
        tasks.append(Task(position, group, gather(group, 0), gather(group, 1), validation))

    return TaskSequence(tasks, order)


def rehearsal_mix(current_train: LabeledSet, memory: RehearsalMemory, rng: np.random.Generator) -> LabeledSet:
    """Current task data plus every stored rehearsal sample, shuffled"""
    combined = current_train
    if memory.stored is not None and len(memory.stored):
        if memory.stored.dim != current_train.dim:
            raise DimensionError(
                f"rehearsal samples have dimension {memory.stored.dim}, task data {current_train.dim}"
            )
        combined = LabeledSet.concat([current_train, memory.stored])
    return combined.subset(rng.permutation(len(combined)))


class RunningMean:
    """Per-input mean intensity accumulated over every task seen so far"""

    def __init__(self):
        self.count = 0
        self.total: Optional[np.ndarray] = None

    def update(self, data: LabeledSet):
        if len(data) == 0:
            return
        if self.total is None:
            self.total = np.zeros(data.dim)
        elif self.total.shape[0] != data.dim:
            raise DimensionError(f"expected inputs of dimension {self.total.shape[0]}, got {data.dim}")
        self.total += data.inputs.sum(axis=0)
        self.count += len(data)

    def rates(self) -> InputRates:
        if self.count == 0:
            raise ValueError("no training inputs seen yet")
        return InputRates(np.clip(self.total / self.count, 0.0, 1.0))


def mean_input_rates(sets: Sequence[LabeledSet]) -> np.ndarray:
    """Mean intensity of every input element over the union of the sets"""
    running = RunningMean()
    for s in sets:
        running.update(s)
    return running.rates().rates
