"""Dense linear algebra and random-number helpers"""

from typing import Sequence

import numpy as np

from .errors import DimensionError

Matrix = np.ndarray
Vector = np.ndarray
Rng = np.random.Generator

DTYPE = np.float64


def make_rng(seed: int, *keys: int) -> Rng:
    """
    Create a reproducible PCG64 generator

    Keys derive independent child streams from the same seed, so every
    task order or fitness evaluation gets its own stream without
    consuming draws from a shared one.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(sequence))


def matvec(m: Matrix, v: Vector) -> Vector:
    """Matrix-vector product; also accepts a batch of row vectors"""
    m = np.asarray(m, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if m.ndim != 2 or v.shape[-1] != m.shape[1]:
        raise DimensionError(f"cannot multiply {m.shape} matrix by vector of length {v.shape[-1]}")
    return v @ m.T


def relu(v: Vector) -> Vector:
    return np.maximum(v, 0.0)


def hard_sigmoid(v: Vector) -> Vector:
    return np.clip(v, 0.0, 1.0)


def glorot_uniform(rows: int, cols: int, rng: Rng) -> Matrix:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))"""
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def one_hot(labels: Sequence[int], k: int) -> Matrix:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], k), dtype=DTYPE)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
