import numpy as np
import pytest
from qvpo.critic import TwinCritic, mse_loss
from qvpo.diffusion import NoisePredictor, build_schedule
from qvpo.errors import ConfigurationError, ContractViolation
from qvpo.neural import gradient_check, init_mlp
from qvpo.replay import TransitionBatch
from common import bandit_bounds, constant_critic, constant_network, linear_critic, zero_predictor


def _transitions(rewards, dones):
    n = len(rewards)
    return TransitionBatch(np.zeros((n, 1)), np.zeros((n, 2)), np.asarray(rewards, dtype=np.float64),
                           np.zeros((n, 1)), np.asarray(dones, dtype=bool))


def test_q_min_takes_smaller_network():
    critic = TwinCritic(constant_network(3, 1, 1.0), constant_network(3, 1, 3.0))
    assert critic.q_min(np.zeros(1), np.zeros(2)) == 1.0
    assert np.array_equal(critic.q_min(np.zeros((4, 1)), np.zeros((4, 2))), np.ones(4))
    v1, v2 = critic.q_values(np.zeros(1), np.zeros(2))
    assert (v1, v2) == (1.0, 3.0)


def test_q_values_reject_mismatched_inputs():
    critic = constant_critic(0.0)
    with pytest.raises(ContractViolation):
        critic.q_min(np.zeros((2, 1)), np.zeros((3, 2)))
    with pytest.raises(ContractViolation):
        critic.q_min(np.zeros(1), np.zeros(3))


def test_shadows_start_as_copies():
    critic = TwinCritic.create(1, 2, np.random.default_rng(0), hidden=(8, 8))
    for online, shadow in [(critic.q1, critic.shadow1), (critic.q2, critic.shadow2)]:
        for a, b in zip(online.arrays(), shadow.arrays()):
            assert np.array_equal(a, b)
            assert a is not b
    # the two networks are initialized independently
    assert not np.array_equal(critic.q1.weights[0], critic.q2.weights[0])


@pytest.mark.parametrize('kwargs', [{"tau": 0.0}, {"tau": 1.5}, {"gamma": 1.0}, {"gamma": -0.1}])
def test_critic_rejects_settings(kwargs):
    with pytest.raises(ConfigurationError):
        TwinCritic(constant_network(3, 1), constant_network(3, 1), **kwargs)


def test_td_target_terminal_transitions_draw_nothing():
    critic = constant_critic(5.0)
    rng = np.random.default_rng(11)
    targets = critic.td_target(zero_predictor(), build_schedule(5), _transitions([1.0, -2.0], [True, True]), 2, rng,
                               bandit_bounds())
    assert np.array_equal(targets, np.array([1.0, -2.0]))
    assert rng.bit_generator.state == np.random.default_rng(11).bit_generator.state


def test_td_target_bootstraps_from_shadow_minimum():
    critic = TwinCritic(constant_network(3, 1, 2.0), constant_network(3, 1, 7.0), gamma=0.99)
    targets = critic.td_target(zero_predictor(), build_schedule(5), _transitions([1.0, 1.0], [False, True]), 2,
                               np.random.default_rng(0), bandit_bounds())
    assert targets == pytest.approx([2.98, 1.0])


def test_td_target_uses_shadow_networks():
    critic = constant_critic(2.0)
    critic.q1 = constant_network(3, 1, 100.0)
    critic.q2 = constant_network(3, 1, 100.0)
    targets = critic.td_target(zero_predictor(), build_schedule(5), _transitions([0.0], [False]), 1,
                               np.random.default_rng(0), bandit_bounds())
    assert targets == pytest.approx([0.99 * 2.0])


def test_td_target_grows_with_selection_count():
    critic = linear_critic([1.0, 0.5])
    batch = _transitions(np.zeros(1000), np.zeros(1000, dtype=bool))
    predictor = NoisePredictor.create(1, 2, np.random.default_rng(2), hidden=(16, 16))
    means = [critic.td_target(predictor, build_schedule(5), batch, k, np.random.default_rng(3), bandit_bounds()).mean()
             for k in (1, 4)]
    assert means[1] >= means[0]


def test_update_at_targets_has_zero_loss():
    critic = constant_critic(2.0)
    before = critic.q1.copy()
    loss = critic.update(np.zeros((5, 1)), np.zeros((5, 2)), np.full(5, 2.0))
    assert loss == 0.0
    for a, b in zip(before.arrays(), critic.q1.arrays()):
        assert np.array_equal(a, b)
    assert critic.adam1.step == 1


def test_update_reports_loss_before_step():
    critic = constant_critic(2.0)
    loss = critic.update(np.zeros((3, 1)), np.zeros((3, 2)), np.full(3, 5.0))
    assert loss == pytest.approx(9.0)
    assert critic.loss(np.zeros((3, 1)), np.zeros((3, 2)), np.full(3, 5.0)) < 9.0


def test_update_target_count_mismatch():
    with pytest.raises(ContractViolation):
        constant_critic(0.0).update(np.zeros((3, 1)), np.zeros((3, 2)), np.zeros(2))


def test_update_fits_a_regression():
    rng = np.random.default_rng(0)
    critic = TwinCritic.create(1, 2, rng, hidden=(64, 64), lr=1e-3)
    states = np.zeros((256, 1))
    actions = rng.uniform(-2, 2, size=(256, 2))
    targets = actions[:, 0] - 0.5 * actions[:, 1]
    first = critic.update(states, actions, targets)
    for _ in range(500):
        last = critic.update(states, actions, targets)
    assert last < 0.1 * first


def test_update_fits_a_single_transition():
    critic = TwinCritic.create(1, 2, np.random.default_rng(5), hidden=(16, 16))
    state, action, target = np.array([[0.3]]), np.array([[-0.5, 1.2]]), np.array([1.5])
    for _ in range(5000):
        critic.update(state, action, target)
    v1, _ = critic.q_values(state, action)
    assert abs(v1[0] - 1.5) < 1e-2


def test_polyak_update_converges_geometrically():
    critic = constant_critic(1.0)
    critic.shadow1 = constant_network(3, 1, 0.0)
    critic.shadow2 = constant_network(3, 1, 0.0)
    for _ in range(10):
        critic.polyak_update(0.1)
    v1, v2 = critic.q_values(np.zeros(1), np.zeros(2), shadow=True)
    assert v1 == pytest.approx(1.0 - 0.9 ** 10)
    assert v2 == pytest.approx(1.0 - 0.9 ** 10)


def test_polyak_update_default_rate():
    critic = constant_critic(1.0, tau=0.005)
    critic.shadow1 = constant_network(3, 1, 0.0)
    critic.polyak_update()
    assert critic.shadow1.biases[-1][0] == pytest.approx(0.005)


def test_mse_loss_gradient():
    rng = np.random.default_rng(3)
    params = init_mlp(3, 1, rng, hidden=(16, 16))
    inputs = rng.standard_normal((12, 3))
    targets = rng.standard_normal(12)
    assert gradient_check(lambda p: mse_loss(p, inputs, targets), params) < 1e-4
