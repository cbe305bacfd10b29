"""Seconds-scale property checks run by `somnus.py selftest`"""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .ep_model import clamped_phase, cost, ep_weight_update, free_phase, init_params, zero_state
from .hyperopt import ga_optimize, sphere_fitness
from .models import EPHyperParams, GaConfig, GenerationStats, InputRates, NetworkParams, SleepParams
from .numerics import make_rng, one_hot
from .sleep import SleepTrace, poisson_input, sleep

logger = logging.getLogger(__name__)

POISSON_DRAWS = 10_000
POISSON_TOLERANCE = 0.02
ALIGNMENT_NETWORKS = 20
ALIGNMENT_THRESHOLD = 0.7
FD_EPSILON = 1e-5
SPHERE_NORM = 0.5


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_poisson(seed: int = 0) -> CheckResult:
    """Empirical spike frequency matches the rate for 0, 0.3 and 1"""
    targets = np.array([0.0, 0.3, 1.0])
    rng = make_rng(seed, 10)
    rates = InputRates(targets)
    counts = np.zeros(targets.size)
    for _ in range(POISSON_DRAWS):
        counts += poisson_input(rates, rng)
    freq = counts / POISSON_DRAWS
    passed = bool(np.all(np.abs(freq - targets) <= POISSON_TOLERANCE))
    return CheckResult("Poisson input rates", passed,
                       ', '.join(f"{t:g}->{f:.3f}" for t, f in zip(targets, freq)))


def check_beta_zero(seed: int = 0) -> CheckResult:
    """With no nudging the clamped relaxation is the free relaxation, bit for bit"""
    rng = make_rng(seed, 11)
    p = init_params(8, 6, 3, rng)
    p.b_h[:] = 0.1
    h = EPHyperParams(beta=0.0, free_steps=40, clamped_steps=40)
    x = rng.random((5, 8))
    y = one_hot(rng.integers(3, size=5), 3)

    start = zero_state(p, 5)
    free = free_phase(x, p, h, init=start)
    clamped = clamped_phase(x, y, p, h, init=start)
    passed = np.array_equal(free.s_h, clamped.s_h) and np.array_equal(free.s_o, clamped.s_o)
    return CheckResult("beta = 0 clamped phase equals free phase", bool(passed), "5 samples, 40 steps")


def check_sleep_trace(seed: int = 0) -> CheckResult:
    """
    Hand-traced single connection: rate-1 input, w_ih = 1 above a 0.5
    threshold, silent output. The hidden unit fires every step; STDP
    starts at step 2, so w_ih gains inc twice over three steps.
    """
    inc, dec = 0.01, 0.005
    p = NetworkParams(np.array([[1.0]]), np.array([[0.0]]), np.zeros(1), np.zeros(1))
    sp = SleepParams(scale_ih=1.0, scale_ho=1.0, threshold_h=0.5, threshold_o=0.5,
                     inc=inc, dec=dec, duration_T=3)
    trace = SleepTrace()
    out = sleep(p, InputRates([1.0]), sp, make_rng(seed, 12), trace)

    expected = {
        'hidden spikes': ([True, True, True], [bool(s.spikes_h[0]) for s in trace.steps]),
        'output spikes': ([False, False, False], [bool(s.spikes_o[0]) for s in trace.steps]),
        'v_h': ([1.0, 1.0, 1.0 + inc], [float(s.v_h[0]) for s in trace.steps]),
        'dw_ih': ([0.0, inc, inc], [float(s.dw_ih[0, 0]) for s in trace.steps]),
    }
    mismatches = [name for name, (want, got) in expected.items() if not np.allclose(want, got)]
    if not np.isclose(out.w_ih[0, 0], 1.0 + 2 * inc) or out.w_ho[0, 0] != 0.0:
        mismatches.append('final weights')
    detail = "matches hand trace" if not mismatches else "mismatch: " + ', '.join(mismatches)
    return CheckResult("Sleep STDP micro-trace (T=3)", not mismatches, detail)


def _linear_regime_network(rng: np.random.Generator) -> NetworkParams:
    """Tiny network whose fixed point stays clear of the ReLU and clip kinks"""
    n_in, n_h, n_o = (int(v) for v in (rng.integers(3, 9), rng.integers(2, 7), rng.integers(2, 4)))
    return NetworkParams(
        rng.uniform(-0.05, 0.05, (n_h, n_in)),
        rng.uniform(-0.05, 0.05, (n_o, n_h)),
        np.full(n_h, 1.0),
        np.full(n_o, 0.5),
    )


def _flat(p: NetworkParams) -> np.ndarray:
    return np.concatenate([p.w_ih.ravel(), p.w_ho.ravel()])


def finite_difference_gradient(x: np.ndarray, y: np.ndarray, p: NetworkParams, h: EPHyperParams,
                               eps: float = FD_EPSILON) -> np.ndarray:
    """Central differences of the free fixed-point cost for every weight"""
    grads = []
    for name in ('w_ih', 'w_ho'):
        weights = getattr(p, name)
        for index in np.ndindex(weights.shape):
            plus, minus = p.copy(), p.copy()
            getattr(plus, name)[index] += eps
            getattr(minus, name)[index] -= eps
            grads.append((cost(x, y, plus, h) - cost(x, y, minus, h)) / (2 * eps))
    return np.array(grads)


def gradient_alignment(seed: int = 0, networks: int = ALIGNMENT_NETWORKS, rule: str = 'contrastive') -> List[float]:
    """Cosine between the EP weight update and the negative cost gradient, one per network"""
    rng = make_rng(seed, 13)
    h = EPHyperParams(alpha1=1.0, alpha2=1.0, beta=0.01, dt=0.2, gamma=1.0,
                      free_steps=400, clamped_steps=400, batch_size=1, epochs_per_task=1, rule=rule)
    cosines = []
    for _ in range(networks):
        p = _linear_regime_network(rng)
        x = rng.random(p.n_input)
        y = one_hot([int(rng.integers(p.n_output))], p.n_output)[0]

        free = free_phase(x, p, h)
        clamped = clamped_phase(x, y, p, h, init=free)
        update = _flat(ep_weight_update(free, clamped, x, p, h)) - _flat(p)
        descent = -finite_difference_gradient(x, y, p, h)
        cosines.append(float(update @ descent / (np.linalg.norm(update) * np.linalg.norm(descent))))
    return cosines


def check_gradient_alignment(seed: int = 0) -> CheckResult:
    cosines = gradient_alignment(seed)
    mean = float(np.mean(cosines))
    return CheckResult("EP update vs finite-difference gradient", mean > ALIGNMENT_THRESHOLD,
                       f"mean cosine {mean:.3f} over {len(cosines)} networks (min {min(cosines):.3f})")


def sphere_config(max_generations: int = 300, workers: int = 1) -> GaConfig:
    return GaConfig(bounds=[(-5.0, 5.0)] * 7, max_generations=max_generations, workers=workers)


def check_ga_sphere(seed: int = 0) -> CheckResult:
    """GA reaches the sphere optimum and its best fitness never drops"""
    history: List[GenerationStats] = []
    best = ga_optimize(sphere_fitness, sphere_config(), make_rng(seed, 14), history=history)
    norm = float(np.linalg.norm(best.genome))
    bests = [s.best for s in history]
    monotone = all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    return CheckResult("GA sphere oracle", norm < SPHERE_NORM and monotone,
                       f"best norm {norm:.3f} after {history[-1].generation} generations"
                       + ("" if monotone else ", best fitness decreased"))


CHECKS: List[Callable[[int], CheckResult]] = [
    check_poisson,
    check_beta_zero,
    check_sleep_trace,
    check_gradient_alignment,
    check_ga_sphere,
]


def run_selftest(seed: int = 0) -> List[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            result = check(seed)
        except Exception as e:
            logger.exception("Self-test check crashed")
            result = CheckResult(getattr(check, '__name__', 'check'), False, f"crashed: {e}")
        logger.info("%s: %s (%s)", result.name, "pass" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results
