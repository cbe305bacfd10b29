"""Sleep replay consolidation: spiking replay with STDP on the trained network"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .models import InputRates, NetworkParams, SleepParams, SpikeState

logger = logging.getLogger(__name__)


@dataclass
class SleepStep:
    """What happened during one sleep step (recorded only when tracing)"""
    t: int
    spikes_in: np.ndarray
    spikes_h: np.ndarray
    spikes_o: np.ndarray
    v_h: np.ndarray  # potentials before reset
    v_o: np.ndarray
    dw_ih: np.ndarray
    dw_ho: np.ndarray


@dataclass
class SleepRecord:
    """Weights on entry to and exit from one sleep phase"""
    before: NetworkParams
    after: NetworkParams
    spikes_h: int
    spikes_o: int

    def mean_deltas(self) -> dict:
        return {
            'w_ih': float(np.mean(self.after.w_ih - self.before.w_ih)),
            'w_ho': float(np.mean(self.after.w_ho - self.before.w_ho)),
        }


@dataclass
class SleepTrace:
    steps: List[SleepStep] = field(default_factory=list)


def poisson_input(rates: InputRates, rng: np.random.Generator) -> np.ndarray:
    """Each input spikes independently with probability equal to its rate"""
    return rng.random(rates.rates.shape) < rates.rates


def _stdp(w: np.ndarray, post: np.ndarray, pre: np.ndarray, inc: float, dec: float):
    """Potentiate post<-pre when pre fired, depress when post fired alone"""
    rows = np.flatnonzero(post)
    if rows.size:
        w[rows] += np.where(pre, inc, -dec)[None, :]


def _run_sleep(
    p: NetworkParams,
    rates: InputRates,
    sp: SleepParams,
    rng: np.random.Generator,
    trace: Optional[SleepTrace] = None,
) -> Tuple[NetworkParams, int, int]:
    """
    Spiking replay loop shared by `sleep` and `src_phase`

    Potentials integrate without leak. The hidden layer sums the fresh
    input spikes through w_ih and, with feedback on, the previous output
    spikes through the transpose of w_ho; the output layer sums the
    previous hidden spikes. A unit fires when its potential exceeds the
    layer threshold and is then reset to zero. STDP starts at the second
    step and compares each firing unit with the presynaptic spikes of
    the previous step. Biases are left untouched.
    """
    w_ih = p.w_ih.copy()
    w_ho = p.w_ho.copy()
    state = SpikeState.silent(p.n_input, p.n_hidden, p.n_output)
    fired_h = fired_o = 0

    for t in range(1, sp.duration_T + 1):
        spikes_in = poisson_input(rates, rng)
        prev_in, prev_h, prev_o = state.spikes_in, state.spikes_h, state.spikes_o

        drive_h = w_ih @ spikes_in
        if sp.feedback_on:
            drive_h = drive_h + w_ho.T @ prev_o
        state.v_h += sp.scale_ih * drive_h
        state.v_o += sp.scale_ho * (w_ho @ prev_h)

        spikes_h = state.v_h > sp.threshold_h
        spikes_o = state.v_o > sp.threshold_o

        if trace is not None:
            old_ih, old_ho = w_ih.copy(), w_ho.copy()
            v_h, v_o = state.v_h.copy(), state.v_o.copy()

        if t > 1:
            _stdp(w_ih, spikes_h, prev_in, sp.inc, sp.dec)
            _stdp(w_ho, spikes_o, prev_h, sp.inc, sp.dec)

        if trace is not None:
            trace.steps.append(SleepStep(
                t, spikes_in.copy(), spikes_h.copy(), spikes_o.copy(),
                v_h, v_o, w_ih - old_ih, w_ho - old_ho,
            ))

        state.v_h[spikes_h] = 0.0
        state.v_o[spikes_o] = 0.0
        state.spikes_in, state.spikes_h, state.spikes_o = spikes_in, spikes_h, spikes_o
        fired_h += int(spikes_h.sum())
        fired_o += int(spikes_o.sum())

    logger.debug("Sleep of %d steps: %d hidden spikes, %d output spikes",
                 sp.duration_T, fired_h, fired_o)
    return NetworkParams(w_ih, w_ho, p.b_h.copy(), p.b_o.copy()), fired_h, fired_o


def sleep(
    p: NetworkParams,
    rates: InputRates,
    sp: SleepParams,
    rng: np.random.Generator,
    trace: Optional[SleepTrace] = None,
) -> NetworkParams:
    """Run the spiking replay for `duration_T` steps and return updated weights"""
    return _run_sleep(p, rates, sp, rng, trace)[0]


def to_spiking(p: NetworkParams) -> NetworkParams:
    """Same architecture, same weight values"""
    return p.copy()


def to_ann(spiking: NetworkParams) -> NetworkParams:
    return spiking.copy()


def src_phase(
    p: NetworkParams,
    rates: InputRates,
    sp: SleepParams,
    rng: np.random.Generator,
    history: Optional[List[SleepRecord]] = None,
) -> NetworkParams:
    """Convert, sleep, convert back; optionally record before/after weights"""
    before = p.copy()
    spiking, fired_h, fired_o = _run_sleep(to_spiking(p), rates, sp, rng)
    after = to_ann(spiking)

    record = SleepRecord(before, after, fired_h, fired_o)
    deltas = record.mean_deltas()
    logger.info(
        "Sleep phase: mean dw_ih %+.3e, mean dw_ho %+.3e, %d hidden / %d output spikes",
        deltas['w_ih'], deltas['w_ho'], record.spikes_h, record.spikes_o,
    )
    if history is not None:
        history.append(record)
    return after
