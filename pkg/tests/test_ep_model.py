from dataclasses import replace

import numpy as np
import pytest

from src.ep_model import (
    CONVERGENCE_TOLERANCE, EP_PRESETS, HIDDEN_SIZES, clamped_phase, energy, ep_weight_update,
    evaluate, free_phase, init_params, predict, train_task, zero_state,
)
from src.errors import DivergenceError
from src.models import EPHyperParams, NetworkParams, NeuronState
from src.numerics import make_rng, one_hot
from src.selftest import _linear_regime_network, check_beta_zero, gradient_alignment
from tests.conftest import make_blobs


@pytest.fixture
def linear_net():
    return _linear_regime_network(make_rng(0))


def test_init_params_shapes_and_zero_biases():
    p = init_params(784, 32, 10, make_rng(0))
    assert p.w_ih.shape == (32, 784)
    assert p.w_ho.shape == (10, 32)
    assert not p.b_h.any() and not p.b_o.any()
    assert np.abs(p.w_ih).max() <= np.sqrt(6.0 / (32 + 784))


def test_presets():
    assert EP_PRESETS['mnist'].free_steps == 100
    assert EP_PRESETS['mnist'].clamped_steps == 10
    assert EP_PRESETS['fmnist'].free_steps == 125
    assert EP_PRESETS['cifar10'].alpha1 == 0.08
    assert EP_PRESETS['imagenet'].epochs_per_task == 5
    assert HIDDEN_SIZES['kmnist'] == 2048


def test_free_phase_settles_and_stays_bounded(linear_net):
    h = EPHyperParams(free_steps=100)
    x = make_rng(1).random((4, linear_net.n_input))
    state = free_phase(x, linear_net, h)
    assert state.s_h.shape == (4, linear_net.n_hidden)
    assert np.all(state.s_o >= 0) and np.all(state.s_o <= 1)
    assert np.all(state.s_h >= 0)
    assert np.all(state.step_norms < CONVERGENCE_TOLERANCE)

    single = free_phase(x[0], linear_net, h)
    assert single.s_h.shape == (linear_net.n_hidden,)
    assert np.allclose(single.s_h, state.s_h[0])


def test_free_dynamics_descend_the_energy(linear_net):
    h = EPHyperParams(free_steps=1)
    x = make_rng(2).random(linear_net.n_input)
    state = zero_state(linear_net)
    energies = [energy(state, x, linear_net)]
    for _ in range(40):
        state = free_phase(x, linear_net, h, init=state)
        energies.append(energy(state, x, linear_net))
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
    assert energies[-1] < 0


def test_beta_zero_clamped_phase_equals_free_phase():
    assert check_beta_zero(seed=3).passed


def test_clamped_phase_moves_outputs_toward_target(linear_net):
    h = EPHyperParams(beta=1.0, free_steps=100, clamped_steps=30)
    x = make_rng(3).random(linear_net.n_input)
    y = one_hot([0], linear_net.n_output)[0]
    free = free_phase(x, linear_net, h)
    clamped = clamped_phase(x, y, linear_net, h, init=free)
    assert np.linalg.norm(y - clamped.s_o) < np.linalg.norm(y - free.s_o)


def test_weight_update_needs_positive_beta(linear_net):
    h = EPHyperParams(beta=0.0)
    state = zero_state(linear_net, 1)
    with pytest.raises(ValueError):
        ep_weight_update(state, state, np.zeros((1, linear_net.n_input)), linear_net, h)


@pytest.mark.parametrize('rule', ['predictive', 'contrastive'])
def test_identical_phases_leave_weights_unchanged(linear_net, rule):
    h = EPHyperParams(rule=rule)
    x = make_rng(4).random((3, linear_net.n_input))
    free = free_phase(x, linear_net, h)
    updated = ep_weight_update(free, free, x, linear_net, h)
    assert np.array_equal(updated.w_ih, linear_net.w_ih)
    assert np.array_equal(updated.w_ho, linear_net.w_ho)


def test_contrastive_update_follows_the_gradient():
    cosines = gradient_alignment(seed=0, networks=3)
    assert min(cosines) > 0.7


@pytest.mark.slow
def test_mean_gradient_alignment_over_twenty_networks():
    assert np.mean(gradient_alignment(seed=0, networks=20)) > 0.7


def test_predict_breaks_ties_toward_lowest_index():
    p = NetworkParams(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2), np.zeros(4))
    h = EPHyperParams(free_steps=5)
    assert predict(np.ones(3), p, h) == 0
    assert predict(np.ones((2, 3)), p, h).tolist() == [0, 0]


def test_non_finite_input_is_a_divergence():
    p = init_params(3, 4, 2, make_rng(0))
    with pytest.raises(DivergenceError):
        free_phase(np.array([np.nan, 0.0, 0.0]), p, EPHyperParams(free_steps=5))


def test_train_task_learns_separable_classes():
    data = make_blobs(num_classes=2, per_class=40, dim=8)
    h = EPHyperParams(alpha1=0.1, alpha2=0.1, beta=0.5, dt=0.2, gamma=1.0, free_steps=40,
                      clamped_steps=20, batch_size=8, epochs_per_task=15)
    p = init_params(8, 16, 2, make_rng(0))
    trained = train_task(data, p, h, make_rng(1))
    _, accuracy = evaluate(data, trained, h)
    assert accuracy >= 0.9


def test_train_task_is_deterministic(blobs, tiny_ep):
    p = init_params(blobs.dim, 8, blobs.num_classes, make_rng(0))
    a = train_task(blobs, p, tiny_ep, make_rng(5))
    b = train_task(blobs, p, tiny_ep, make_rng(5))
    assert np.array_equal(a.w_ih, b.w_ih)
    assert np.array_equal(a.w_ho, b.w_ho)
    assert not np.array_equal(a.w_ih, p.w_ih)


def test_train_task_without_epochs_returns_a_copy(blobs):
    p = init_params(blobs.dim, 8, blobs.num_classes, make_rng(0))
    h = EPHyperParams(epochs_per_task=0)
    out = train_task(blobs, p, h, make_rng(0))
    assert out is not p
    assert np.array_equal(out.w_ih, p.w_ih)


def test_evaluate_empty_set(blobs):
    p = init_params(blobs.dim, 8, blobs.num_classes, make_rng(0))
    predictions, accuracy = evaluate(blobs.subset([]), p, EPHyperParams(free_steps=5))
    assert predictions.size == 0
    assert accuracy == 0.0


def _unit_net(w_ih=0.0, w_ho=0.0, b_h=0.0, b_o=0.0):
    """One input, one hidden and one output unit"""
    return NetworkParams([[w_ih]], [[w_ho]], [b_h], [b_o])


def test_energy_hand_values():
    zero = zero_state(_unit_net())
    assert energy(zero, np.zeros(1), _unit_net()) == 0.0

    lone = NeuronState(np.array([1.0]), np.array([0.0]))
    assert energy(lone, np.zeros(1), _unit_net(b_h=0.5)) == pytest.approx(0.0)

    coupled = NeuronState(np.array([1.0]), np.array([1.0]))
    assert energy(coupled, np.zeros(1), _unit_net(w_ho=0.5)) == pytest.approx(0.5)


def test_zero_network_stays_at_rest():
    state = free_phase(np.ones(1), _unit_net(), EPHyperParams(free_steps=20))
    assert not state.s_h.any() and not state.s_o.any()


@pytest.mark.parametrize('steps', [1, 5, 30])
def test_free_phase_without_feedback_follows_the_closed_form(steps):
    c, dt = 0.7, 0.2
    p = _unit_net(w_ih=c, w_ho=0.9)
    state = free_phase(np.ones(1), p, EPHyperParams(dt=dt, gamma=0.0, free_steps=steps))
    assert state.s_h[0] == pytest.approx(c * (1 - (1 - dt) ** steps))


def test_predictive_update_hand_value():
    # alpha / beta = 0.1 for both layers
    h = EPHyperParams(alpha1=0.1, alpha2=0.1, beta=1.0)
    free = NeuronState(np.array([[0.6]]), np.array([[0.5]]))
    clamped = NeuronState(np.array([[1.0]]), np.array([[0.8]]))
    updated = ep_weight_update(free, clamped, np.ones((1, 1)), _unit_net(), h)
    # hidden -> output uses the clamped hidden state as the presynaptic factor
    assert updated.w_ho[0, 0] == pytest.approx(0.03)
    assert updated.b_o[0] == pytest.approx(0.03)
    assert updated.w_ih[0, 0] == pytest.approx(0.04)


def test_silent_presynaptic_unit_gets_no_update():
    h = EPHyperParams(alpha1=0.1, alpha2=0.1, beta=1.0)
    free = NeuronState(np.array([[0.2]]), np.array([[0.5]]))
    clamped = NeuronState(np.array([[0.7]]), np.array([[0.8]]))
    updated = ep_weight_update(free, clamped, np.zeros((1, 1)), _unit_net(), h)
    assert updated.w_ih[0, 0] == 0.0


def test_predict_follows_a_dominant_output_bias():
    p = NetworkParams(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2), [0.0, 0.0, 5.0, 0.0])
    assert predict(np.ones(3), p, EPHyperParams(free_steps=30)) == 2


def test_overflowing_update_is_a_divergence(blobs, tiny_ep):
    h = replace(tiny_ep, alpha1=1e308, beta=1e-3)
    p = init_params(blobs.dim, 8, blobs.num_classes, make_rng(0))
    with np.errstate(over='ignore', invalid='ignore'):
        with pytest.raises(DivergenceError, match='non-finite'):
            train_task(blobs, p, h, make_rng(1))
