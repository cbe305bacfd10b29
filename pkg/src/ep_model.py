"""Convergent input-hidden-output network trained with Equilibrium Propagation"""

import logging
from typing import Optional, Tuple

import numpy as np

from .errors import DivergenceError
from .models import EPHyperParams, LabeledSet, NetworkParams, NeuronState
from .numerics import glorot_uniform, hard_sigmoid, one_hot, relu

logger = logging.getLogger(__name__)

# Free-phase diagnostic: a sample counts as settled below this step norm
CONVERGENCE_TOLERANCE = 1e-3
EVAL_CHUNK = 2048

# Default hyperparameters and hidden sizes per dataset
EP_PRESETS = {
    'mnist': EPHyperParams(0.03, 0.001, 1.0, 0.2, 1.0, 100, 10, 256, 3),
    'fmnist': EPHyperParams(0.03, 0.001, 1.0, 0.2, 1.0, 125, 15, 256, 3),
    'kmnist': EPHyperParams(0.03, 0.001, 1.0, 0.2, 1.0, 125, 15, 256, 3),
    'cifar10': EPHyperParams(0.08, 0.001, 1.0, 0.2, 1.0, 125, 15, 256, 5),
    'imagenet': EPHyperParams(0.08, 0.001, 1.0, 0.2, 1.0, 125, 15, 256, 5),
}
HIDDEN_SIZES = {'mnist': 1024, 'fmnist': 2048, 'kmnist': 2048, 'cifar10': 1024, 'imagenet': 1024}


def init_params(n_input: int, n_hidden: int, n_output: int, rng: np.random.Generator) -> NetworkParams:
    """Glorot-uniform weights and zero biases"""
    return NetworkParams(
        w_ih=glorot_uniform(n_hidden, n_input, rng),
        w_ho=glorot_uniform(n_output, n_hidden, rng),
        b_h=np.zeros(n_hidden),
        b_o=np.zeros(n_output),
    )


def zero_state(p: NetworkParams, batch: Optional[int] = None) -> NeuronState:
    if batch is None:
        return NeuronState(np.zeros(p.n_hidden), np.zeros(p.n_output))
    return NeuronState(np.zeros((batch, p.n_hidden)), np.zeros((batch, p.n_output)))


def energy(state: NeuronState, x: np.ndarray, p: NetworkParams) -> float:
    """
    Hopfield-style energy of a single state, restricted to the layered topology

    E = 1/2 sum s^2 - s_h.w_ih.x - s_o.w_ho.s_h - b_h.s_h - b_o.s_o
    Inputs are clamped units and contribute no quadratic term.
    """
    s_h = np.asarray(state.s_h, dtype=np.float64)
    s_o = np.asarray(state.s_o, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    quadratic = 0.5 * (s_h @ s_h + s_o @ s_o)
    coupling = s_h @ (p.w_ih @ x) + s_o @ (p.w_ho @ s_h)
    bias = p.b_h @ s_h + p.b_o @ s_o
    return float(quadratic - coupling - bias)


def _relax(
    x: np.ndarray,
    p: NetworkParams,
    h: EPHyperParams,
    steps: int,
    init: NeuronState,
    target: Optional[np.ndarray] = None,
) -> NeuronState:
    """Euler-integrate the layered dynamics; rows of x are independent samples"""
    drive_h = x @ p.w_ih.T + p.b_h  # constant across steps
    s_h = np.array(init.s_h, dtype=np.float64, copy=True)
    s_o = np.array(init.s_o, dtype=np.float64, copy=True)
    nudged = target is not None and h.beta != 0
    norms = np.zeros(s_h.shape[0])

    for step in range(steps):
        ds_o = -s_o + hard_sigmoid(s_h @ p.w_ho.T + p.b_o)
        if nudged:
            ds_o = ds_o + h.beta * (target - s_o)
        ds_h = -s_h + relu(drive_h + h.gamma * (s_o @ p.w_ho))

        new_o = np.clip(s_o + h.dt * ds_o, 0.0, 1.0)
        new_h = s_h + h.dt * ds_h

        if not (np.all(np.isfinite(new_h)) and np.all(np.isfinite(new_o))):
            raise DivergenceError(f"network state diverged at step {step + 1} of {steps}")

        norms = np.sqrt(np.sum((new_h - s_h) ** 2, axis=1) + np.sum((new_o - s_o) ** 2, axis=1))
        s_h, s_o = new_h, new_o

    return NeuronState(s_h, s_o, norms)


def _batched(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _unbatch(state: NeuronState, single: bool) -> NeuronState:
    if not single:
        return state
    return NeuronState(state.s_h[0], state.s_o[0], state.step_norms)


def free_phase(
    x: np.ndarray,
    p: NetworkParams,
    h: EPHyperParams,
    init: Optional[NeuronState] = None,
) -> NeuronState:
    """
    Relax to the free fixed point for one input or a batch of inputs

    The returned state carries `step_norms`, the per-sample norm of the
    last Euler update, as a convergence diagnostic.
    """
    xb, single = _batched(x)
    start = init if init is not None else zero_state(p, xb.shape[0])
    if single and init is not None:
        start = NeuronState(np.atleast_2d(init.s_h), np.atleast_2d(init.s_o))
    return _unbatch(_relax(xb, p, h, h.free_steps, start), single)


def clamped_phase(
    x: np.ndarray,
    y: np.ndarray,
    p: NetworkParams,
    h: EPHyperParams,
    init: Optional[NeuronState] = None,
) -> NeuronState:
    """Weakly clamped relaxation starting from the free fixed point"""
    xb, single = _batched(x)
    yb = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if init is None:
        start = _relax(xb, p, h, h.free_steps, zero_state(p, xb.shape[0]))
    else:
        start = NeuronState(np.atleast_2d(init.s_h), np.atleast_2d(init.s_o))
    return _unbatch(_relax(xb, p, h, h.clamped_steps, start, target=yb), single)


def ep_weight_update(
    free: NeuronState,
    clamped: NeuronState,
    x: np.ndarray,
    p: NetworkParams,
    h: EPHyperParams,
) -> NetworkParams:
    """
    Apply one averaged Equilibrium Propagation update

    The predictive rule uses dw = (alpha / beta) * s_pre_clamped * (s_post_clamped - s_post_free);
    the contrastive rule uses the difference of clamped and free
    correlations. Both coincide for input weights because inputs are
    identical in the two phases.
    """
    if h.beta == 0:
        raise ValueError("weight update requires beta > 0")

    xb, _ = _batched(x)
    free_h, free_o = np.atleast_2d(free.s_h), np.atleast_2d(free.s_o)
    clamped_h, clamped_o = np.atleast_2d(clamped.s_h), np.atleast_2d(clamped.s_o)
    n = xb.shape[0]

    rate_ih = h.alpha1 / h.beta
    rate_ho = h.alpha2 / h.beta
    delta_h = clamped_h - free_h
    delta_o = clamped_o - free_o

    dw_ih = rate_ih * (delta_h.T @ xb) / n
    if h.rule == 'predictive':
        dw_ho = rate_ho * (delta_o.T @ clamped_h) / n
    else:
        dw_ho = rate_ho * (clamped_o.T @ clamped_h - free_o.T @ free_h) / n

    return NetworkParams(
        w_ih=p.w_ih + dw_ih,
        w_ho=p.w_ho + dw_ho,
        b_h=p.b_h + rate_ih * delta_h.mean(axis=0),
        b_o=p.b_o + rate_ho * delta_o.mean(axis=0),
    )


def hidden_activity(inputs: np.ndarray, p: NetworkParams, h: EPHyperParams) -> np.ndarray:
    """Free-phase hidden fixed points for many inputs, computed in chunks"""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    out = np.zeros((inputs.shape[0], p.n_hidden))
    for start in range(0, inputs.shape[0], EVAL_CHUNK):
        chunk = inputs[start:start + EVAL_CHUNK]
        out[start:start + chunk.shape[0]] = free_phase(chunk, p, h).s_h
    return out


def predict(x: np.ndarray, p: NetworkParams, h: EPHyperParams):
    """Class with the highest output after a free phase; ties go to the lowest index"""
    xb, single = _batched(x)
    predictions = np.zeros(xb.shape[0], dtype=np.int64)
    for start in range(0, xb.shape[0], EVAL_CHUNK):
        chunk = xb[start:start + EVAL_CHUNK]
        predictions[start:start + chunk.shape[0]] = np.argmax(free_phase(chunk, p, h).s_o, axis=1)
    return int(predictions[0]) if single else predictions


def evaluate(data: LabeledSet, p: NetworkParams, h: EPHyperParams) -> Tuple[np.ndarray, float]:
    """Predictions for a labeled set and the fraction that are correct"""
    if len(data) == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    predictions = predict(data.inputs, p, h)
    return predictions, float(np.mean(predictions == data.labels))


def cost(x: np.ndarray, y: np.ndarray, p: NetworkParams, h: EPHyperParams) -> float:
    """Squared-error cost of the free fixed point, summed over outputs and samples"""
    s_o = np.atleast_2d(free_phase(x, p, h).s_o)
    return float(0.5 * np.sum((np.atleast_2d(y) - s_o) ** 2))


def train_task(
    train: LabeledSet,
    p: NetworkParams,
    h: EPHyperParams,
    rng: np.random.Generator,
) -> NetworkParams:
    """Train for `epochs_per_task` epochs over shuffled minibatches"""
    params = p.copy()
    n = len(train)
    if n == 0 or h.epochs_per_task == 0:
        return params

    targets = one_hot(train.labels, params.n_output)
    for epoch in range(h.epochs_per_task):
        order = rng.permutation(n)
        unsettled = 0
        for start in range(0, n, h.batch_size):
            batch = order[start:start + h.batch_size]
            x = train.inputs[batch]
            free = free_phase(x, params, h)
            clamped = clamped_phase(x, targets[batch], params, h, init=free)
            params = ep_weight_update(free, clamped, x, params, h)
            if not params.is_finite():
                raise DivergenceError(f"weights became non-finite in epoch {epoch + 1}")
            unsettled += int(np.sum(free.step_norms >= CONVERGENCE_TOLERANCE))

        logger.debug(
            "Epoch %d/%d over %d samples: %d free phases above tolerance",
            epoch + 1, h.epochs_per_task, n, unsettled,
        )
        if unsettled > 0.01 * n:
            logger.warning("Free phase did not settle for %d of %d samples in epoch %d",
                           unsettled, n, epoch + 1)

    return params
