"""Shared fixtures: tiny synthetic datasets, networks and config files"""

import os
from pathlib import Path

import numpy as np
import pytest

from src.data import write_idx
from src.models import EPHyperParams, ExperimentPlan, LabeledSet, SleepParams, Strategy
from src.numerics import make_rng


def make_blobs(num_classes: int = 4, per_class: int = 30, dim: int = 16, seed: int = 0) -> LabeledSet:
    """Each class lights up its own block of inputs; every row is unique"""
    rng = make_rng(seed, 99)
    block = dim // num_classes
    inputs, labels = [], []
    for c in range(num_classes):
        prototype = np.full(dim, 0.1)
        prototype[c * block:(c + 1) * block] = 0.9
        noise = rng.uniform(-0.05, 0.05, size=(per_class, dim))
        inputs.append(np.clip(prototype + noise, 0.0, 1.0))
        labels.append(np.full(per_class, c))
    return LabeledSet(np.concatenate(inputs), np.concatenate(labels), num_classes)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def blobs():
    return make_blobs()


@pytest.fixture
def tiny_ep():
    return EPHyperParams(alpha1=0.1, alpha2=0.05, beta=0.5, dt=0.2, gamma=1.0,
                         free_steps=30, clamped_steps=10, batch_size=8, epochs_per_task=2)


@pytest.fixture
def tiny_sleep():
    return SleepParams(scale_ih=1.0, scale_ho=1.0, threshold_h=0.5, threshold_o=0.5,
                       inc=0.001, dec=0.0005, duration_T=20)


@pytest.fixture
def make_plan(blobs, tiny_ep, tiny_sleep):
    """Factory for small experiment plans over the blob dataset"""
    def factory(strategy=Strategy.SEQUENTIAL, **overrides):
        fields = dict(
            dataset='blobs',
            data=blobs,
            strategy=strategy,
            task_orders=[(0, 1), (1, 0)],
            ep=tiny_ep,
            hidden_size=12,
            sleep=tiny_sleep,
            seed=7,
        )
        fields.update(overrides)
        return ExperimentPlan(**fields)
    return factory


def write_tiny_idx(directory: Path, per_class: int = 10, side: int = 4, seed: int = 0):
    """Ten-class IDX pair of side x side images with class-specific bright pixels"""
    rng = make_rng(seed, 98)
    images, labels = [], []
    for c in range(10):
        for _ in range(per_class):
            image = rng.integers(0, 40, size=(side, side))
            image.flat[c % (side * side)] = 255
            image.flat[(c + 5) % (side * side)] = 200
            images.append(image)
            labels.append(c)
    images_path = directory / 'train-images-idx3-ubyte'
    labels_path = directory / 'train-labels-idx1-ubyte'
    write_idx(images_path, labels_path, np.array(images), labels)
    return images_path, labels_path


TINY_CONFIG = """\
[data]
dataset = mnist
images = {images}
labels = {labels}

[model]
hidden_size = 16

[ep]
free_steps = 10
clamped_steps = 4
batch_size = 16
epochs_per_task = 1

[sleep]
scale_ih = 1.0
scale_ho = 1.0
threshold_h = 0.5
threshold_o = 0.5
inc = 0.001
dec = 0.0005
duration_T = 10

[experiment]
strategy = {strategy}
seed = 3
num_orders = 2
output_dir = {output_dir}

[ga]
population = 4
max_stall_generations = 1
max_generations = 1
"""


@pytest.fixture
def tiny_config(tmp_path):
    """Factory writing a runnable config (plus its IDX files) under tmp_path"""
    images, labels = write_tiny_idx(tmp_path)

    def factory(strategy='src', output_dir=None, extra=''):
        output_dir = output_dir or tmp_path / 'runs' / strategy.replace('+', '_')
        path = tmp_path / f"{strategy.replace('+', '_')}.cfg"
        path.write_text(TINY_CONFIG.format(images=images.name, labels=labels.name,
                                           strategy=strategy, output_dir=output_dir) + extra)
        return path
    return factory


@pytest.fixture(scope='session')
def mnist_root():
    """Directory with the real MNIST IDX files, or skip"""
    root = os.getenv('SOMNUS_DATA_ROOT')
    if not root or not (Path(root) / 'train-images-idx3-ubyte').exists():
        pytest.skip("SOMNUS_DATA_ROOT does not hold the MNIST IDX files")
    return Path(root)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch):
    """Keep tests independent of SOMNUS_* variables in the developer's shell"""
    from src.config import config
    monkeypatch.setattr(config, 'data_root', None)
    monkeypatch.setattr(config, 'output_root', None)
    monkeypatch.setattr(config, 'workers', 1)
