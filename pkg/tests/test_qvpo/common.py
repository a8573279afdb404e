import numpy as np
from qvpo.critic import TwinCritic
from qvpo.diffusion import NoisePredictor
from qvpo.neural import MlpParams


def constant_network(input_dim: int, output_dim: int, value: float = 0.0, hidden: int = 4) -> MlpParams:
    """ A network that ignores its input and returns ``value`` in every output. """
    weights = [np.zeros((input_dim, hidden)), np.zeros((hidden, output_dim))]
    biases = [np.zeros(hidden), np.full(output_dim, float(value))]
    return MlpParams(weights, biases)


def zero_predictor(state_dim: int = 1, action_dim: int = 2) -> NoisePredictor:
    """ A noise model that always predicts zero noise. """
    return NoisePredictor(constant_network(action_dim + state_dim + 16, action_dim), state_dim, action_dim)


def constant_critic(value: float, state_dim: int = 1, action_dim: int = 2, gamma: float = 0.99, tau: float = 0.005) -> TwinCritic:
    return TwinCritic(constant_network(state_dim + action_dim, 1, value),
                      constant_network(state_dim + action_dim, 1, value), gamma=gamma, tau=tau)


def linear_critic(coefficients, state_dim: int = 1) -> TwinCritic:
    """ Both networks return ``coefficients . action`` (one hidden identity layer). """
    coefficients = np.asarray(coefficients, dtype=np.float64)
    action_dim = coefficients.size
    w0 = np.zeros((state_dim + action_dim, 1))
    w0[state_dim:, 0] = coefficients
    params = MlpParams([w0, np.ones((1, 1))], [np.zeros(1), np.zeros(1)], activation="identity")
    return TwinCritic(params, params.copy())


def bandit_bounds():
    return np.array([-2.0, -2.0]), np.array([2.0, 2.0])
