"""Data models for datasets, networks, sleep and experiments"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .numerics import DTYPE


@dataclass
class LabeledSet:
    """Inputs in [0, 1] paired with integer class labels"""
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D (samples x features), got shape {self.inputs.shape}")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in 0..{self.num_classes - 1}")

    @classmethod
    def empty(cls, dim: int, num_classes: int) -> 'LabeledSet':
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64), num_classes)

    @classmethod
    def concat(cls, sets: Sequence['LabeledSet']) -> 'LabeledSet':
        """Concatenate sets that share dimensionality"""
        if not sets:
            raise ValueError("nothing to concatenate")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise ValueError(f"cannot concatenate sets of dimensionality {sorted(dims)}")
        return cls(
            np.concatenate([s.inputs for s in sets]),
            np.concatenate([s.labels for s in sets]),
            max(s.num_classes for s in sets),
        )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, indices: Iterable[int]) -> 'LabeledSet':
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledSet(self.inputs[indices], self.labels[indices], self.num_classes)

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def only(self, classes: Iterable[int]) -> 'LabeledSet':
        """Samples whose label is in `classes`"""
        mask = np.isin(self.labels, list(classes))
        return self.subset(np.flatnonzero(mask))

    def present_classes(self) -> List[int]:
        return [int(c) for c in np.unique(self.labels)]


@dataclass
class Task:
    """One class-incremental task"""
    task_id: int
    labels: Tuple[int, ...]
    train: LabeledSet
    test: LabeledSet
    validation: Optional[LabeledSet] = None

    @property
    def number(self) -> int:
        """1-based task number used in phase labels"""
        return self.task_id + 1


@dataclass
class TaskSequence:
    """Ordered tasks with disjoint label groups"""
    tasks: List[Task]
    order_permutation: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def union_train(self) -> LabeledSet:
        return LabeledSet.concat([t.train for t in self.tasks])

    def union_test(self) -> LabeledSet:
        return LabeledSet.concat([t.test for t in self.tasks])

    def with_validation_as_test(self) -> 'TaskSequence':
        """View that evaluates on the validation splits instead of test splits"""
        if any(t.validation is None for t in self.tasks):
            raise ValueError("task sequence has no validation splits")
        tasks = [Task(t.task_id, t.labels, t.train, t.validation, t.validation) for t in self.tasks]
        return TaskSequence(tasks, self.order_permutation)


@dataclass
class RehearsalMemory:
    """Fixed random subset of every past task's training data"""
    fraction: float
    stored: Optional[LabeledSet] = None
    counts: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"rehearsal fraction must lie in [0, 1], got {self.fraction}")

    def __len__(self) -> int:
        return 0 if self.stored is None else len(self.stored)

    def remember(self, task_train: LabeledSet, rng: np.random.Generator) -> int:
        """Store floor(fraction * n) samples drawn uniformly from a finished task"""
        count = int(np.floor(self.fraction * len(task_train)))
        self.counts.append(count)
        if count == 0:
            return 0
        chosen = rng.choice(len(task_train), size=count, replace=False)
        picked = task_train.subset(np.sort(chosen))
        self.stored = picked if self.stored is None else LabeledSet.concat([self.stored, picked])
        return count


@dataclass
class NetworkParams:
    """Weights and biases of the input-hidden-output convergent network"""
    w_ih: np.ndarray  # hidden x input
    w_ho: np.ndarray  # output x hidden
    b_h: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        self.w_ih = np.asarray(self.w_ih, dtype=DTYPE)
        self.w_ho = np.asarray(self.w_ho, dtype=DTYPE)
        self.b_h = np.asarray(self.b_h, dtype=DTYPE)
        self.b_o = np.asarray(self.b_o, dtype=DTYPE)
        hidden, _ = self.w_ih.shape
        output, hidden_o = self.w_ho.shape
        if hidden_o != hidden or self.b_h.shape != (hidden,) or self.b_o.shape != (output,):
            raise ValueError(
                f"inconsistent shapes: w_ih {self.w_ih.shape}, w_ho {self.w_ho.shape}, "
                f"b_h {self.b_h.shape}, b_o {self.b_o.shape}"
            )

    @property
    def n_input(self) -> int:
        return int(self.w_ih.shape[1])

    @property
    def n_hidden(self) -> int:
        return int(self.w_ih.shape[0])

    @property
    def n_output(self) -> int:
        return int(self.w_ho.shape[0])

    def copy(self) -> 'NetworkParams':
        return NetworkParams(self.w_ih.copy(), self.w_ho.copy(), self.b_h.copy(), self.b_o.copy())

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.w_ih, self.w_ho, self.b_h, self.b_o))

    def weights(self) -> Dict[str, np.ndarray]:
        return {'w_ih': self.w_ih, 'w_ho': self.w_ho}

    def same_shape(self, other: 'NetworkParams') -> bool:
        return (self.w_ih.shape == other.w_ih.shape and self.w_ho.shape == other.w_ho.shape)


@dataclass
class NeuronState:
    """Hidden and output activations; rows are samples"""
    s_h: np.ndarray
    s_o: np.ndarray
    step_norms: Optional[np.ndarray] = None  # per-sample norm of the last update

    def copy(self) -> 'NeuronState':
        norms = None if self.step_norms is None else self.step_norms.copy()
        return NeuronState(self.s_h.copy(), self.s_o.copy(), norms)


@dataclass
class EPHyperParams:
    """Equilibrium Propagation training settings"""
    alpha1: float = 0.03
    alpha2: float = 0.001
    beta: float = 1.0
    dt: float = 0.2
    gamma: float = 1.0
    free_steps: int = 100
    clamped_steps: int = 10
    batch_size: int = 256
    epochs_per_task: int = 3
    rule: str = 'predictive'  # or 'contrastive'

    def __post_init__(self):
        if not 0.0 < self.dt <= 1.0:
            raise ValueError(f"dt must lie in (0, 1], got {self.dt}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.free_steps < 1 or self.clamped_steps < 1:
            raise ValueError("free_steps and clamped_steps must be at least 1")
        if self.batch_size < 1 or self.epochs_per_task < 0:
            raise ValueError("batch_size must be >= 1 and epochs_per_task >= 0")
        if self.rule not in ('predictive', 'contrastive'):
            raise ValueError(f"unknown learning rule: {self.rule}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SleepParams:
    """Free parameters of the spiking replay phase"""
    scale_ih: float
    scale_ho: float
    threshold_h: float
    threshold_o: float
    inc: float
    dec: float
    duration_T: int
    feedback_on: bool = True

    def __post_init__(self):
        self.duration_T = int(self.duration_T)
        if self.threshold_h <= 0 or self.threshold_o <= 0:
            raise ValueError("sleep thresholds must be positive")
        if self.inc < 0 or self.dec < 0:
            raise ValueError("STDP increments must be non-negative")
        if self.duration_T < 1:
            raise ValueError("sleep duration must be at least one step")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InputRates:
    """Per-input spiking probability for one sleep step"""
    rates: np.ndarray

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=DTYPE)
        if np.any(self.rates < 0.0) or np.any(self.rates > 1.0):
            raise ValueError("input rates must lie in [0, 1]")


@dataclass
class SpikeState:
    """Membrane potentials and spikes of the spiking network"""
    v_h: np.ndarray
    v_o: np.ndarray
    spikes_in: np.ndarray
    spikes_h: np.ndarray
    spikes_o: np.ndarray

    @classmethod
    def silent(cls, n_input: int, n_hidden: int, n_output: int) -> 'SpikeState':
        return cls(
            np.zeros(n_hidden), np.zeros(n_output),
            np.zeros(n_input, dtype=bool), np.zeros(n_hidden, dtype=bool), np.zeros(n_output, dtype=bool),
        )


class Strategy(Enum):
    """Continual-learning strategies"""
    SEQUENTIAL = 'sequential'
    SRC = 'src'
    REHEARSAL = 'rehearsal'
    SRC_REHEARSAL = 'src+rehearsal'
    PARALLEL = 'parallel'

    @property
    def uses_sleep(self) -> bool:
        return self in (Strategy.SRC, Strategy.SRC_REHEARSAL)

    @property
    def uses_rehearsal(self) -> bool:
        return self in (Strategy.REHEARSAL, Strategy.SRC_REHEARSAL)


@dataclass
class ExperimentPlan:
    """Everything needed to run one strategy over several task orders"""
    dataset: str
    data: LabeledSet
    strategy: Strategy
    task_orders: List[Tuple[int, ...]]
    ep: EPHyperParams
    hidden_size: int
    sleep: Optional[SleepParams] = None
    rehearsal_fraction: float = 0.0
    seed: int = 0
    labels_per_task: int = 2
    test_fraction: float = 0.1
    workers: int = 1

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if not self.task_orders:
            raise ValueError("at least one task order is required")
        if self.strategy.uses_sleep and self.sleep is None:
            raise ValueError(f"strategy '{self.strategy.value}' requires sleep parameters")
        if not 0.0 <= self.rehearsal_fraction <= 1.0:
            raise ValueError("rehearsal_fraction must lie in [0, 1]")


@dataclass
class PhaseRecord:
    """Accuracy of every task, measured right after one phase"""
    label: str  # T1, S1, T2, ... or P for parallel training
    accuracies: np.ndarray  # indexed by task position in the order
    confusion: np.ndarray  # class x class counts over the union test set


@dataclass
class OrderResult:
    """All phases executed for one task order"""
    order_id: int
    order: Tuple[int, ...]
    phases: List[PhaseRecord] = field(default_factory=list)

    @property
    def final_average(self) -> float:
        return float(np.mean(self.phases[-1].accuracies))

    def phase(self, label: str) -> PhaseRecord:
        for record in self.phases:
            if record.label == label:
                return record
        raise KeyError(label)


@dataclass
class PhaseMetrics:
    """Accuracy grids for every task order plus the aggregate result"""
    strategy: Strategy
    orders: List[OrderResult]

    @property
    def final_averages(self) -> List[float]:
        return [o.final_average for o in self.orders]

    @property
    def final_mean(self) -> float:
        return float(np.mean(self.final_averages))

    @property
    def final_std(self) -> float:
        return float(np.std(self.final_averages))

    @property
    def phase_labels(self) -> List[str]:
        return [p.label for p in self.orders[0].phases] if self.orders else []

    def confusion(self, label: str) -> np.ndarray:
        """Confusion counts for one phase summed over all orders"""
        return sum(o.phase(label).confusion for o in self.orders)


@dataclass
class GaConfig:
    """Genetic algorithm settings"""
    bounds: List[Tuple[float, float]]
    population: int = 100
    crossover_prob: float = 0.75
    mutation_prob: float = 0.1
    elite_fraction: float = 0.01
    parent_fraction: float = 0.20
    tournament_size: int = 3
    max_stall_generations: int = 15
    max_generations: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        for name in ('crossover_prob', 'mutation_prob'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ('elite_fraction', 'parent_fraction'):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.population < 2:
            raise ValueError("population must hold at least two candidates")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"invalid bounds [{lo}, {hi}]")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.elite_fraction * self.population)))

    @property
    def n_parents(self) -> int:
        return max(2, int(round(self.parent_fraction * self.population)))


@dataclass
class Candidate:
    """GA genome with its fitness (None until evaluated)"""
    genome: np.ndarray
    fitness: Optional[float] = None

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


@dataclass
class GenerationStats:
    generation: int
    best: float
    mean: float
    best_ever: float
    stall: int
