"""Class-incremental training protocol: T1 -> S1 -> T2 -> S2 -> ..."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import confusion
from .data import RunningMean, label_groups, rehearsal_mix, split_tasks
from .ep_model import init_params, predict, train_task
from .models import (
    ExperimentPlan, NetworkParams, OrderResult, PhaseMetrics, PhaseRecord,
    RehearsalMemory, SleepParams, Strategy, TaskSequence,
)
from .numerics import make_rng
from .sleep import SleepRecord, src_phase

logger = logging.getLogger(__name__)

# Stream keys for make_rng(seed, key, ...)
SPLIT_KEY = 0
ORDER_KEY = 1
PERMUTATION_KEY = 2

PhaseHook = Callable[[int, str, NetworkParams], None]


@dataclass
class SweepPoint:
    fraction: float
    without_src: float
    with_src: float


def task_orders(num_tasks: int, count: int, seed: int) -> List[Tuple[int, ...]]:
    """Identity order first, then distinct seeded permutations while they exist"""
    identity = tuple(range(num_tasks))
    orders = [identity]
    rng = make_rng(seed, PERMUTATION_KEY)
    attempts = 0
    while len(orders) < count:
        candidate = tuple(int(i) for i in rng.permutation(num_tasks))
        attempts += 1
        if candidate not in orders or attempts > 100 * count:
            orders.append(candidate)
    return orders[:max(count, 1)]


def split_for_plan(plan: ExperimentPlan, order: Sequence[int], validation_fraction: float = 0.0) -> TaskSequence:
    """Task split shared by every order of a plan (the split ignores the order)"""
    return split_tasks(
        plan.data, plan.labels_per_task, order, make_rng(plan.seed, SPLIT_KEY),
        test_fraction=plan.test_fraction, validation_fraction=validation_fraction,
    )


def evaluate_phase(label: str, seq: TaskSequence, params: NetworkParams, plan: ExperimentPlan) -> PhaseRecord:
    """Accuracy on every task's test set plus the joint confusion matrix"""
    test = seq.union_test()
    predictions = predict(test.inputs, params, plan.ep) if len(test) else np.zeros(0, dtype=np.int64)

    accuracies = np.zeros(len(seq))
    start = 0
    for i, task in enumerate(seq.tasks):
        end = start + len(task.test)
        if end > start:
            accuracies[i] = np.mean(predictions[start:end] == test.labels[start:end])
        start = end

    counts = confusion(predictions, test.labels, plan.data.num_classes).counts
    return PhaseRecord(label, accuracies, counts)


def run_order(
    plan: ExperimentPlan,
    order_id: int,
    seq: TaskSequence,
    on_phase: Optional[PhaseHook] = None,
    sleep_params: Optional[SleepParams] = None,
    sleep_history: Optional[List[SleepRecord]] = None,
) -> OrderResult:
    """Train one task order, sleeping and rehearsing as the strategy asks"""
    rng = make_rng(plan.seed, ORDER_KEY, order_id)
    params = init_params(plan.data.dim, plan.hidden_size, plan.data.num_classes, rng)
    memory = RehearsalMemory(plan.rehearsal_fraction)
    seen = RunningMean()
    sleep_params = sleep_params or plan.sleep
    result = OrderResult(order_id, seq.order_permutation)

    def record(label: str):
        phase = evaluate_phase(label, seq, params, plan)
        result.phases.append(phase)
        logger.info("Order %d %s: %s", order_id, label,
                    ' '.join(f"{a:.3f}" for a in phase.accuracies))
        if on_phase is not None:
            on_phase(order_id, label, params)

    for task in seq.tasks:
        train = task.train
        if plan.strategy.uses_rehearsal and len(memory):
            train = rehearsal_mix(task.train, memory, rng)

        params = train_task(train, params, plan.ep, rng)
        seen.update(task.train)
        record(f"T{task.number}")

        if plan.strategy.uses_sleep:
            params = src_phase(params, seen.rates(), sleep_params, rng, sleep_history)
            record(f"S{task.number}")

        if plan.strategy.uses_rehearsal:
            memory.remember(task.train, rng)

    return result


def _run_orders(plan: ExperimentPlan, work: Callable[[int, Tuple[int, ...]], OrderResult]) -> List[OrderResult]:
    jobs = list(enumerate(plan.task_orders))
    if plan.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            return list(pool.map(lambda job: work(*job), jobs))
    return [work(order_id, order) for order_id, order in jobs]


def run_sequence(plan: ExperimentPlan, on_phase: Optional[PhaseHook] = None) -> PhaseMetrics:
    """
    Run the class-incremental protocol for every task order in the plan

    Orders are independent; with `workers` > 1 they run on a thread pool
    and results are collected in order index, so the metrics equal the
    sequential run.
    """
    if plan.strategy is Strategy.PARALLEL:
        return run_parallel(plan, on_phase)

    def work(order_id, order):
        return run_order(plan, order_id, split_for_plan(plan, order), on_phase)

    metrics = PhaseMetrics(plan.strategy, _run_orders(plan, work))
    logger.info("Strategy %s: final average %.2f%% +- %.2f%% over %d orders",
                plan.strategy.value, 100 * metrics.final_mean, 100 * metrics.final_std, len(metrics.orders))
    return metrics


def run_parallel(plan: ExperimentPlan, on_phase: Optional[PhaseHook] = None) -> PhaseMetrics:
    """Joint training on the union of all tasks: the upper bound"""
    if not label_groups(plan.data.num_classes, plan.labels_per_task):
        raise ValueError("no tasks to train on")

    def work(order_id, order):
        seq = split_for_plan(plan, order)
        rng = make_rng(plan.seed, ORDER_KEY, order_id)
        params = init_params(plan.data.dim, plan.hidden_size, plan.data.num_classes, rng)
        params = train_task(seq.union_train(), params, plan.ep, rng)
        phase = evaluate_phase('P', seq, params, plan)
        if on_phase is not None:
            on_phase(order_id, 'P', params)
        logger.info("Order %d parallel: joint accuracy %.3f",
                    order_id, np.trace(phase.confusion) / max(1, phase.confusion.sum()))
        return OrderResult(order_id, seq.order_permutation, [phase])

    return PhaseMetrics(Strategy.PARALLEL, _run_orders(plan, work))


def rehearsal_sweep(plan: ExperimentPlan, fractions: Sequence[float]) -> List[SweepPoint]:
    """Final accuracy against rehearsal fraction, with and without sleep, on one order"""
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("rehearsal fractions must lie in [0, 1]")
    if plan.sleep is None:
        raise ValueError("rehearsal sweep needs sleep parameters")

    base = replace(plan, task_orders=[plan.task_orders[0]], workers=1)
    points = []
    for fraction in fractions:
        without = run_sequence(replace(base, strategy=Strategy.REHEARSAL, rehearsal_fraction=fraction))
        with_src = run_sequence(replace(base, strategy=Strategy.SRC_REHEARSAL, rehearsal_fraction=fraction))
        points.append(SweepPoint(float(fraction), without.final_mean, with_src.final_mean))
        logger.info("Rehearsal %.1f%%: %.3f without sleep, %.3f with sleep",
                    100 * fraction, without.final_mean, with_src.final_mean)
    return points
