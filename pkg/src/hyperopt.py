"""Genetic algorithm that tunes sleep parameters on held-out validation accuracy"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .continual import run_order, split_for_plan
from .models import Candidate, ExperimentPlan, GaConfig, GenerationStats, SleepParams, Strategy
from . import reporter

logger = logging.getLogger(__name__)

GENOME_FIELDS = ('scale_ih', 'scale_ho', 'threshold_h', 'threshold_o', 'inc', 'dec', 'duration_T')
GENOME_BOUNDS: List[Tuple[float, float]] = [
    (0.1, 10.0),     # scale_ih
    (0.1, 10.0),     # scale_ho
    (0.1, 64.0),     # threshold_h
    (0.1, 64.0),     # threshold_o
    (0.0, 0.01),     # inc
    (0.0, 0.01),     # dec
    (100.0, 10000.0),  # duration_T
]
VALIDATION_FRACTION = 0.1
SEARCH_EPOCHS = 1

FitnessFn = Callable[[Candidate], float]
GenerationHook = Callable[[GenerationStats], None]


@dataclass
class TuneResult:
    params: SleepParams
    best: Candidate
    default_fitness: float  # untuned midpoint genome, full budget
    tuned_fitness: float  # best genome re-validated at full budget
    history: List[GenerationStats] = field(default_factory=list)

    @property
    def improvement(self) -> float:
        return self.tuned_fitness - self.default_fitness


def default_genome(bounds: Sequence[Tuple[float, float]] = GENOME_BOUNDS) -> np.ndarray:
    """Midpoint of every bound"""
    b = np.asarray(bounds, dtype=np.float64)
    return (b[:, 0] + b[:, 1]) / 2


def encode_genome(sp: SleepParams) -> np.ndarray:
    return np.array([float(getattr(sp, name)) for name in GENOME_FIELDS])


def decode_genome(genome: np.ndarray, feedback_on: bool = True) -> SleepParams:
    values = dict(zip(GENOME_FIELDS, (float(g) for g in genome)))
    values['duration_T'] = int(round(values['duration_T']))
    return SleepParams(**values, feedback_on=feedback_on)


def sphere_fitness(candidate: Candidate) -> float:
    """Negated squared norm; the optimum sits at the origin"""
    return -float(np.sum(candidate.genome ** 2))


def _random_genome(lo: np.ndarray, hi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(lo, hi)


def _score(fitness_fn: FitnessFn, candidate: Candidate) -> float:
    try:
        value = float(fitness_fn(candidate))
    except Exception as e:
        logger.warning("Fitness evaluation failed for genome %s: %s", np.round(candidate.genome, 4), e)
        return -math.inf
    return -math.inf if math.isnan(value) else value


def _evaluate(candidates: List[Candidate], fitness_fn: FitnessFn, workers: int):
    """Fill in fitness for unevaluated candidates; results land by index"""
    pending = [c for c in candidates if not c.evaluated]
    if workers > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda c: _score(fitness_fn, c), pending))
    else:
        scores = [_score(fitness_fn, c) for c in pending]
    for candidate, score in zip(pending, scores):
        candidate.fitness = score


def _tournament(population: List[Candidate], size: int, rng: np.random.Generator) -> Candidate:
    """Fittest of `size` candidates drawn with replacement; ties go to the earlier draw"""
    picks = rng.integers(len(population), size=size)
    return max((population[i] for i in picks), key=lambda c: c.fitness)


def _crossover(a: np.ndarray, b: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    if rng.random() >= prob:
        return a.copy()
    mask = rng.random(a.shape) < 0.5
    return np.where(mask, a, b)


def _mutate(genome: np.ndarray, lo: np.ndarray, hi: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(genome.shape) < prob
    if mask.any():
        genome = genome.copy()
        genome[mask] = rng.uniform(lo[mask], hi[mask])
    return genome


def _stats(generation: int, population: List[Candidate], best_ever: float, stall: int) -> GenerationStats:
    fitness = np.array([c.fitness for c in population])
    finite = fitness[np.isfinite(fitness)]
    mean = float(finite.mean()) if finite.size else -math.inf
    return GenerationStats(generation, float(fitness.max()), mean, best_ever, stall)


def ga_optimize(
    fitness_fn: FitnessFn,
    cfg: GaConfig,
    rng: np.random.Generator,
    on_generation: Optional[GenerationHook] = None,
    history: Optional[List[GenerationStats]] = None,
) -> Candidate:
    """
    Generational GA with elitism, tournament selection, uniform crossover
    and uniform-resampling mutation

    Runs until the best fitness has not improved for
    `max_stall_generations` generations (or `max_generations` is reached)
    and returns the best candidate ever evaluated. Elites carry their
    fitness over, so the best fitness per generation never decreases.
    """
    bounds = np.asarray(cfg.bounds, dtype=np.float64)
    lo, hi = bounds[:, 0], bounds[:, 1]

    population = [Candidate(_random_genome(lo, hi, rng)) for _ in range(cfg.population)]
    _evaluate(population, fitness_fn, cfg.workers)

    best = max(population, key=lambda c: c.fitness)
    best = Candidate(best.genome.copy(), best.fitness)
    stall = 0
    generation = 0

    def publish(stats: GenerationStats):
        logger.info("Generation %d: best %.4f, mean %.4f, best ever %.4f, stall %d",
                    stats.generation, stats.best, stats.mean, stats.best_ever, stats.stall)
        if history is not None:
            history.append(stats)
        if on_generation is not None:
            on_generation(stats)

    publish(_stats(generation, population, best.fitness, stall))

    while stall < cfg.max_stall_generations:
        if cfg.max_generations is not None and generation >= cfg.max_generations:
            logger.info("Stopping at the generation cap of %d", cfg.max_generations)
            break
        generation += 1

        ranked = sorted(population, key=lambda c: c.fitness, reverse=True)
        elites = [Candidate(c.genome.copy(), c.fitness) for c in ranked[:cfg.n_elite]]
        parents = [_tournament(population, cfg.tournament_size, rng) for _ in range(cfg.n_parents)]

        offspring = []
        while len(elites) + len(offspring) < cfg.population:
            i, j = rng.integers(len(parents), size=2)
            child = _crossover(parents[i].genome, parents[j].genome, cfg.crossover_prob, rng)
            offspring.append(Candidate(_mutate(child, lo, hi, cfg.mutation_prob, rng)))
        _evaluate(offspring, fitness_fn, cfg.workers)
        population = elites + offspring

        leader = max(population, key=lambda c: c.fitness)
        if leader.fitness > best.fitness:
            best = Candidate(leader.genome.copy(), leader.fitness)
            stall = 0
        else:
            stall += 1
        publish(_stats(generation, population, best.fitness, stall))

    return best


def validation_fitness(plan: ExperimentPlan, feedback_on: bool = True) -> FitnessFn:
    """
    Mean validation accuracy over all tasks after a full T/S sequence

    Runs on the first task order of the plan with the validation split
    standing in for the test split.
    """
    seq = split_for_plan(plan, plan.task_orders[0], VALIDATION_FRACTION).with_validation_as_test()

    def fitness(candidate: Candidate) -> float:
        sp = decode_genome(candidate.genome, feedback_on)
        return run_order(plan, 0, seq, sleep_params=sp).final_average

    return fitness


def _sleep_plan(plan: ExperimentPlan, epochs: Optional[int] = None) -> ExperimentPlan:
    """The plan with sleep switched on, one order, no order-level threads"""
    strategy = plan.strategy if plan.strategy.uses_sleep else Strategy.SRC
    sleep = plan.sleep or decode_genome(default_genome())
    ep = plan.ep if epochs is None else replace(plan.ep, epochs_per_task=epochs)
    return replace(plan, strategy=strategy, sleep=sleep, ep=ep, task_orders=plan.task_orders[:1], workers=1)


def run_tuning(
    plan: ExperimentPlan,
    cfg: GaConfig,
    rng: np.random.Generator,
    on_generation: Optional[GenerationHook] = None,
) -> TuneResult:
    """Search at a reduced training budget, then re-validate the winner at full budget"""
    feedback_on = plan.sleep.feedback_on if plan.sleep else True
    history: List[GenerationStats] = []

    search_plan = _sleep_plan(plan, epochs=min(SEARCH_EPOCHS, plan.ep.epochs_per_task))
    best = ga_optimize(validation_fitness(search_plan, feedback_on), cfg, rng, on_generation, history)

    full = validation_fitness(_sleep_plan(plan), feedback_on)
    tuned_fitness = full(Candidate(best.genome))
    default_fitness = full(Candidate(default_genome(cfg.bounds)))
    logger.info("Validation accuracy at full budget: tuned %.4f, untuned defaults %.4f",
                tuned_fitness, default_fitness)

    return TuneResult(decode_genome(best.genome, feedback_on), best, default_fitness, tuned_fitness, history)


def save_tuning(result: TuneResult, dataset: str, output_dir, meta: Optional[dict] = None) -> Tuple[Path, Path]:
    """Write `<dataset>_sleep.cfg` and `ga_log.csv` into the output directory"""
    output_dir = Path(output_dir)
    meta = dict(meta or {})
    meta.update(tuned_fitness=f"{result.tuned_fitness:.6f}", default_fitness=f"{result.default_fitness:.6f}")
    cfg_path = reporter.write_sleep_config(output_dir / f"{dataset}_sleep.cfg", result.params, meta)
    log_path = reporter.write_ga_log(output_dir / 'ga_log.csv', result.history, meta)
    return cfg_path, log_path


def tune_sleep(
    dataset: str,
    plan: ExperimentPlan,
    cfg: GaConfig,
    rng: np.random.Generator,
    output_dir=None,
) -> SleepParams:
    """Tune sleep parameters and, given an output directory, write the tuned config and GA log"""
    result = run_tuning(plan, cfg, rng)
    if output_dir is not None:
        save_tuning(result, dataset, output_dir)
    return result.params
