import numpy as np
import pytest

from src.models import InputRates, NetworkParams, SleepParams
from src.numerics import make_rng
from src.selftest import check_poisson, check_sleep_trace
from src.sleep import SleepRecord, SleepTrace, poisson_input, sleep, src_phase


def _net(seed=0, n_in=6, n_h=5, n_o=3):
    rng = make_rng(seed, 50)
    return NetworkParams(rng.uniform(0, 1, (n_h, n_in)), rng.uniform(0, 1, (n_o, n_h)),
                         rng.uniform(-1, 1, n_h), rng.uniform(-1, 1, n_o))


def _params(**overrides):
    values = dict(scale_ih=1.0, scale_ho=1.0, threshold_h=0.8, threshold_o=0.8,
                  inc=0.01, dec=0.005, duration_T=30)
    values.update(overrides)
    return SleepParams(**values)


RATES = InputRates(np.full(6, 0.5))


def test_poisson_input_extreme_rates_are_exact():
    rng = make_rng(0)
    rates = InputRates([0.0, 1.0, 0.0, 1.0])
    for _ in range(50):
        assert poisson_input(rates, rng).tolist() == [False, True, False, True]


def test_poisson_input_frequency():
    assert check_poisson(seed=1).passed


def test_hand_traced_single_connection():
    result = check_sleep_trace(seed=0)
    assert result.passed, result.detail


def test_no_plasticity_leaves_weights_unchanged():
    p = _net()
    out = sleep(p, RATES, _params(inc=0.0, dec=0.0), make_rng(1))
    assert np.array_equal(out.w_ih, p.w_ih)
    assert np.array_equal(out.w_ho, p.w_ho)


def test_silent_network_never_fires():
    p = NetworkParams(np.zeros((5, 6)), np.zeros((3, 5)), np.ones(5), np.ones(3))
    trace = SleepTrace()
    out = sleep(p, RATES, _params(), make_rng(1), trace)
    assert not any(s.spikes_h.any() or s.spikes_o.any() for s in trace.steps)
    assert np.array_equal(out.w_ih, p.w_ih)
    assert np.array_equal(out.w_ho, p.w_ho)


def test_sleep_is_deterministic_per_seed():
    p = _net()
    a = sleep(p, RATES, _params(), make_rng(7))
    b = sleep(p, RATES, _params(), make_rng(7))
    assert np.array_equal(a.w_ih, b.w_ih)
    assert np.array_equal(a.w_ho, b.w_ho)


def test_biases_and_input_are_untouched():
    p = _net()
    original = p.copy()
    out = sleep(p, RATES, _params(), make_rng(2))
    assert np.array_equal(out.b_h, p.b_h) and np.array_equal(out.b_o, p.b_o)
    assert np.array_equal(p.w_ih, original.w_ih)


def test_without_depression_no_weight_decreases():
    p = _net()
    out = sleep(p, RATES, _params(dec=0.0), make_rng(3))
    assert np.all(out.w_ih >= p.w_ih)
    assert np.all(out.w_ho >= p.w_ho)


def test_larger_increment_never_lowers_a_weight():
    # Every input spike drives its hidden units over threshold, so the spike
    # pattern is fixed by the input draws and only the step size differs.
    p = NetworkParams(np.ones((3, 4)), np.zeros((2, 3)), np.zeros(3), np.zeros(2))
    rates = InputRates(np.full(4, 0.5))
    small = sleep(p, rates, _params(threshold_h=0.5, inc=0.001, dec=0.002), make_rng(4))
    large = sleep(p, rates, _params(threshold_h=0.5, inc=0.005, dec=0.002), make_rng(4))
    assert np.all(large.w_ih >= small.w_ih)
    assert np.any(large.w_ih > small.w_ih)


def test_stdp_only_touches_synapses_of_firing_units():
    sp = _params()
    trace = SleepTrace()
    sleep(_net(), RATES, sp, make_rng(5), trace)
    assert any(s.spikes_h.any() for s in trace.steps)

    assert not trace.steps[0].dw_ih.any() and not trace.steps[0].dw_ho.any()
    for prev, step in zip(trace.steps, trace.steps[1:]):
        assert not step.dw_ih[~step.spikes_h].any()
        assert not step.dw_ho[~step.spikes_o].any()
        expected_ih = np.where(prev.spikes_in, sp.inc, -sp.dec)
        for i in np.flatnonzero(step.spikes_h):
            assert np.allclose(step.dw_ih[i], expected_ih)
        expected_ho = np.where(prev.spikes_h, sp.inc, -sp.dec)
        for o in np.flatnonzero(step.spikes_o):
            assert np.allclose(step.dw_ho[o], expected_ho)


def test_potentials_reset_after_a_spike_and_never_leak():
    p = _net()
    sp = _params(inc=0.0, dec=0.0, feedback_on=False)
    trace = SleepTrace()
    sleep(p, RATES, sp, make_rng(6), trace)
    for prev, step in zip(trace.steps, trace.steps[1:]):
        drive = sp.scale_ih * (p.w_ih @ step.spikes_in)
        carried = np.where(prev.spikes_h, 0.0, prev.v_h)
        assert np.allclose(step.v_h, carried + drive)
        assert np.array_equal(step.spikes_h, step.v_h > sp.threshold_h)


def test_feedback_off_decouples_hidden_from_output():
    a = _net(seed=1)
    b = NetworkParams(a.w_ih, a.w_ho * 3.0, a.b_h, a.b_o)
    sp = _params(inc=0.0, dec=0.0, feedback_on=False)
    trace_a, trace_b = SleepTrace(), SleepTrace()
    sleep(a, RATES, sp, make_rng(8), trace_a)
    sleep(b, RATES, sp, make_rng(8), trace_b)
    for sa, sb in zip(trace_a.steps, trace_b.steps):
        assert np.array_equal(sa.spikes_h, sb.spikes_h)


def test_src_phase_records_history():
    p = _net()
    history = []
    out = src_phase(p, RATES, _params(), make_rng(9), history)
    assert len(history) == 1
    record: SleepRecord = history[0]
    assert np.array_equal(record.before.w_ih, p.w_ih)
    assert np.array_equal(record.after.w_ih, out.w_ih)
    assert record.spikes_h > 0
    assert set(record.mean_deltas()) == {'w_ih', 'w_ho'}


def test_sleep_params_validation():
    with pytest.raises(ValueError):
        _params(threshold_h=0.0)
    with pytest.raises(ValueError):
        _params(inc=-0.1)
    with pytest.raises(ValueError):
        _params(duration_T=0)


def test_input_stdp_uses_the_previous_input_draw(monkeypatch):
    # Input silent at steps 1 and 2, active at step 3: the hidden unit first
    # fires at step 3, when the input of step 2 was silent, so w_ih is depressed.
    draws = iter([np.array([False]), np.array([False]), np.array([True])])
    monkeypatch.setattr('src.sleep.poisson_input', lambda rates, rng: next(draws))
    p = NetworkParams(np.array([[1.0]]), np.array([[0.0]]), np.zeros(1), np.zeros(1))
    sp = SleepParams(1.0, 1.0, 0.5, 0.5, inc=0.01, dec=0.005, duration_T=3)
    out = sleep(p, InputRates([0.5]), sp, make_rng(0))
    assert np.isclose(out.w_ih[0, 0], 0.995)
