import math
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers
from qvpo.errors import ContractViolation, NumericalError
from qvpo.neural import (MlpParams, AdamState, init_mlp, forward, backward, adam_step,
                         polyak_average, gradient_check, mish)


def _scalar_forward(params, x):
    # plain-python evaluation of the same network, one unit at a time
    h = list(x)
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for j in range(w.shape[1]):
            z = b[j] + sum(h[i] * w[i, j] for i in range(w.shape[0]))
            if layer != last:
                softplus = math.log1p(math.exp(z)) if z < 30 else z
                z = z * math.tanh(softplus)
            out.append(z)
        h = out
    return np.array(h)


def test_forward_zero_network():
    params = MlpParams([np.zeros((3, 5)), np.zeros((5, 2))], [np.zeros(5), np.zeros(2)])
    assert np.array_equal(forward(params, np.array([0.3, -2.0, 7.0])), np.zeros(2))


def test_forward_identity_layer():
    params = MlpParams([np.eye(2)], [np.zeros(2)], activation="identity")
    assert np.array_equal(forward(params, np.array([1.0, 2.0])), np.array([1.0, 2.0]))


def test_forward_matches_scalar_evaluation():
    rng = np.random.default_rng(11)
    params = init_mlp(3, 2, rng, hidden=(5, 4))
    x = np.array([0.5, -1.25, 2.0])
    assert np.allclose(forward(params, x), _scalar_forward(params, x), rtol=1e-12, atol=1e-14)


def test_forward_batch_matches_rows():
    rng = np.random.default_rng(3)
    params = init_mlp(4, 3, rng, hidden=(8, 8))
    x = rng.standard_normal((6, 4))
    batch = forward(params, x)
    for i in range(6):
        assert np.allclose(batch[i], forward(params, x[i]), rtol=1e-13, atol=1e-15)


def test_forward_is_pure():
    rng = np.random.default_rng(5)
    params = init_mlp(4, 2, rng)
    x = rng.standard_normal(4)
    assert np.array_equal(forward(params, x), forward(params, x))


@pytest.mark.parametrize('x', [np.zeros(2), np.zeros(4), np.zeros((3, 2))])
def test_forward_dimension_mismatch(x):
    params = MlpParams([np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ContractViolation):
        forward(params, x)


def test_mish_values():
    assert mish(np.array(0.0)) == 0.0
    assert mish(np.array(1.0)) == pytest.approx(1.0 * math.tanh(math.log1p(math.e)))
    # large inputs pass through, large negative inputs vanish
    assert mish(np.array(50.0)) == pytest.approx(50.0)
    assert abs(mish(np.array(-50.0))) < 1e-15


def test_init_bounds():
    rng = np.random.default_rng(0)
    params = init_mlp(19, 2, rng)
    assert [w.shape for w in params.weights] == [(19, 256), (256, 256), (256, 2)]
    for w, b in zip(params.weights, params.biases):
        bound = 1.0 / math.sqrt(w.shape[0])
        assert np.all(np.abs(w) <= bound)
        assert np.all(np.abs(b) <= bound)


def test_layer_dimensions_must_chain():
    with pytest.raises(ContractViolation):
        MlpParams([np.zeros((3, 4)), np.zeros((5, 2))], [np.zeros(4), np.zeros(2)])


def test_backward_zero_upstream():
    rng = np.random.default_rng(1)
    params = init_mlp(3, 2, rng, hidden=(6, 6))
    grads, input_grad = backward(params, rng.standard_normal(3), np.zeros(2))
    assert all(not np.any(a) for a in grads.arrays())
    assert not np.any(input_grad)


def test_backward_linear_scalar():
    w, x = 1.7, -0.4
    params = MlpParams([np.array([[w]])], [np.zeros(1)], activation="identity")
    grads, input_grad = backward(params, np.array([x]), np.array([1.0]))
    assert grads.weights[0][0, 0] == x
    assert grads.biases[0][0] == 1.0
    assert input_grad[0] == w


def test_backward_upstream_shape_mismatch():
    params = MlpParams([np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ContractViolation):
        backward(params, np.zeros(3), np.zeros(3))


@pytest.mark.parametrize('seed', range(5))
def test_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = init_mlp(4, 3, rng, hidden=(16, 16))
    x = rng.standard_normal((5, 4))
    upstream = rng.standard_normal((5, 3))

    def closure(p):
        return float(np.sum(upstream * forward(p, x))), backward(p, x, upstream)[0]

    assert gradient_check(closure, params, np.random.default_rng(seed), n_samples=64, h=1e-5) < 1e-4


def test_backward_input_gradient_finite_differences():
    rng = np.random.default_rng(8)
    params = init_mlp(3, 2, rng, hidden=(8, 8))
    x = rng.standard_normal(3)
    upstream = np.array([0.7, -1.1])
    _, input_grad = backward(params, x, upstream)
    h = 1e-5
    for i in range(3):
        shift = np.zeros(3)
        shift[i] = h
        numeric = (upstream @ forward(params, x + shift) - upstream @ forward(params, x - shift)) / (2 * h)
        assert numeric == pytest.approx(input_grad[i], rel=1e-5, abs=1e-8)


def test_gradient_check_quadratic_linear_net():
    rng = np.random.default_rng(2)
    params = init_mlp(3, 2, rng, hidden=(), activation="identity")
    x = rng.standard_normal((10, 3))
    y = rng.standard_normal((10, 2))

    def closure(p):
        residual = forward(p, x) - y
        return 0.5 * float(np.sum(residual ** 2)), backward(p, x, residual)[0]

    assert gradient_check(closure, params) < 1e-8


def test_gradient_check_catches_wrong_gradients():
    rng = np.random.default_rng(4)
    params = init_mlp(3, 1, rng, hidden=(4,))
    x = rng.standard_normal((4, 3))

    def closure(p):
        grads = backward(p, x, np.ones((4, 1)))[0]
        grads.weights[0] *= 2.0
        return float(np.sum(forward(p, x))), grads

    assert gradient_check(closure, params, n_samples=1000) > 0.1


def test_gradient_check_catches_missing_gradients_under_a_large_loss():
    rng = np.random.default_rng(9)
    params = init_mlp(3, 1, rng, hidden=(4,))
    params = MlpParams([w * 1e-3 for w in params.weights], [b * 1e-3 for b in params.biases], params.activation)

    def closure(p):
        # true gradient is 2 * p, reported as zero
        return 1e4 + sum(float(np.sum(a ** 2)) for a in p.arrays()), p.zeros_like()

    assert gradient_check(closure, params, n_samples=1000) == pytest.approx(1.0)


def test_gradient_check_resolves_small_gradients_under_a_large_loss():
    rng = np.random.default_rng(9)
    params = init_mlp(3, 1, rng, hidden=(4,))
    params = MlpParams([np.abs(w) * 1e-3 + 1e-3 for w in params.weights], [np.abs(b) + 1e-3 for b in params.biases],
                       params.activation)

    def closure(p):
        arrays = p.arrays()
        grads = [2.0 * a for a in arrays]
        return 1e4 + sum(float(np.sum(a ** 2)) for a in arrays), MlpParams(grads[0::2], grads[1::2], p.activation)

    assert gradient_check(closure, params, n_samples=1000) < 1e-4


def test_adam_zero_grads_leave_params_unchanged():
    rng = np.random.default_rng(6)
    params = init_mlp(3, 2, rng, hidden=(4, 4))
    state = AdamState.for_params(params)
    new_params, new_state = adam_step(state, params, params.zeros_like())
    for before, after in zip(params.arrays(), new_params.arrays()):
        assert np.array_equal(before, after)
    assert new_state.step == 1


def test_adam_zero_grads_decay_moments():
    params = MlpParams([np.array([[1.0]])], [np.zeros(1)], activation="identity")
    state = AdamState.for_params(params)
    state.first.weights[0][0, 0] = 0.5
    state.second.weights[0][0, 0] = 0.25
    _, new_state = adam_step(state, params, params.zeros_like())
    assert new_state.first.weights[0][0, 0] == pytest.approx(0.45)
    assert new_state.second.weights[0][0, 0] == pytest.approx(0.24975)
    # the input state is untouched
    assert state.first.weights[0][0, 0] == 0.5


def test_adam_first_step_size():
    params = MlpParams([np.array([[1.0]])], [np.zeros(1)], activation="identity")
    state = AdamState.for_params(params, lr=3e-4)
    grads = MlpParams([np.array([[1.0]])], [np.zeros(1)], activation="identity")
    new_params, new_state = adam_step(state, params, grads)
    assert new_params.weights[0][0, 0] - 1.0 == pytest.approx(-3e-4 / (1.0 + 1e-8), rel=1e-9)
    assert new_state.step == 1


def test_adam_step_counter_increments():
    params = MlpParams([np.array([[1.0]])], [np.zeros(1)], activation="identity")
    state = AdamState.for_params(params)
    for expected in range(1, 6):
        params, state = adam_step(state, params, params.zeros_like())
        assert state.step == expected


def test_adam_descends_quadratic():
    params = MlpParams([np.array([[1.0]])], [np.zeros(1)], activation="identity")
    state = AdamState.for_params(params)
    history = []
    for _ in range(100):
        w = params.weights[0][0, 0]
        history.append(abs(w))
        grads = MlpParams([np.array([[2.0 * w]])], [np.zeros(1)], activation="identity")
        params, state = adam_step(state, params, grads)
    assert all(later < earlier for earlier, later in zip(history, history[1:]))


def test_adam_non_finite_gradient_names_layer():
    rng = np.random.default_rng(7)
    params = init_mlp(2, 1, rng, hidden=(3,))
    grads = params.zeros_like()
    grads.biases[1][0] = np.nan
    with pytest.raises(NumericalError, match="layer 1"):
        adam_step(AdamState.for_params(params), params, grads)


@pytest.mark.parametrize('tau,expected', [
    (1.0, 2.0),
    (0.0, 0.0),
    (0.5, 1.0),
    ])
def test_polyak_average_scalar(tau, expected):
    online = MlpParams([np.array([[2.0]])], [np.array([2.0])], activation="identity")
    shadow = MlpParams([np.array([[0.0]])], [np.array([0.0])], activation="identity")
    result = polyak_average(shadow, online, tau)
    assert result.weights[0][0, 0] == expected
    assert result.biases[0][0] == expected


@given(integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_adam_zero_grads_property(seed):
    rng = np.random.default_rng(seed)
    params = init_mlp(3, 2, rng, hidden=(5,))
    new_params, _ = adam_step(AdamState.for_params(params), params, params.zeros_like())
    assert all(np.array_equal(a, b) for a, b in zip(params.arrays(), new_params.arrays()))
