"""
DDPM machinery for the diffusion policy: the variance schedule, forward
noising, state-conditioned reverse sampling and the per-sample weighted
denoising loss.
"""
import logging
from typing import Optional, Sequence, Tuple
import numpy as np
from qvpo.errors import ConfigurationError, ContractViolation, NumericalError
from qvpo.neural import MlpParams, init_mlp, forward, backward

logger = logging.getLogger(__name__)

SCHEDULE_KINDS = ["linear", "vp"]

# bounds of the continuous-time noise rate used by the "vp" schedule
VP_BETA_MIN = 0.1
VP_BETA_MAX = 10.0


class DiffusionSchedule(object):
    """
    Per-step tables of the forward process. Steps are 1-based: ``beta(1)`` is
    the first noising step and ``beta(T)`` the last. The arrays themselves are
    0-based, so ``betas[t - 1] == beta(t)``.
    """

    def __init__(self, betas: Sequence[float]):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ConfigurationError("A schedule needs at least one step")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ConfigurationError("Every beta must lie strictly between 0 and 1")
        self.betas = betas
        self.alphas = 1.0 - betas
        alpha_bars = np.empty_like(self.alphas)
        running = 1.0
        for i, alpha in enumerate(self.alphas):
            running = running * alpha
            alpha_bars[i] = running
        self.alpha_bars = alpha_bars
        self.sigmas = np.sqrt(betas)

    @property
    def T(self) -> int:
        return self.betas.size

    def _index(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ContractViolation("Diffusion step {} is outside [1, {}]".format(t, self.T))
        return int(t) - 1

    def beta(self, t: int) -> float:
        return float(self.betas[self._index(t)])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._index(t)])

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[self._index(t)])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[self._index(t)])

    def __repr__(self) -> str:
        return "<DiffusionSchedule T={} beta={:.3g}..{:.3g}>".format(self.T, self.betas[0], self.betas[-1])


def build_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02, kind: str = "linear") -> DiffusionSchedule:
    """
    Builds the variance schedule.

    Args:
        T (int): Number of diffusion steps.
        beta_min (float): First beta of the linear schedule.
        beta_max (float): Last beta of the linear schedule.
        kind (str): "linear" interpolates from ``beta_min`` to ``beta_max``.
            "vp" uses the discretized variance-preserving schedule, which noises
            actions almost completely by step T; the beta range is then unused.

    Returns:
        DiffusionSchedule
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigurationError("Diffusion step count must be a positive integer, got {}".format(T))
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigurationError("Beta range must satisfy 0 < beta_min <= beta_max < 1, got {}..{}".format(beta_min, beta_max))
    if kind == "linear":
        betas = np.linspace(beta_min, beta_max, T)
    elif kind == "vp":
        t = np.arange(1, T + 1, dtype=np.float64)
        betas = 1.0 - np.exp(-VP_BETA_MIN / T - 0.5 * (VP_BETA_MAX - VP_BETA_MIN) * (2.0 * t - 1.0) / T ** 2)
    else:
        raise ConfigurationError("Beta schedule '{}' not recognized".format(kind))
    return DiffusionSchedule(betas)


def timestep_embedding(t: np.ndarray, dim: int = 16, max_period: float = 10000.0) -> np.ndarray:
    """ Sinusoidal embedding of integer diffusion steps: one row of ``dim``
    features (sines then cosines) per entry of ``t``. """
    assert dim % 2 == 0
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    freqs = np.exp(-np.arange(0, dim, 2, dtype=np.float64) * np.log(max_period) / dim)
    angles = t[:, np.newaxis] * freqs[np.newaxis, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class NoisePredictor(object):
    """
    The noise model of the diffusion policy. The network sees the noisy
    action, the state and an embedding of the step, concatenated in that
    order, and predicts the noise that was added to the action.
    """

    def __init__(self, params: MlpParams, state_dim: int, action_dim: int, embed_dim: int = 16):
        if params.input_dim != action_dim + state_dim + embed_dim:
            raise ContractViolation("Network input of {} does not fit action {} + state {} + embedding {}".format(
                                    params.input_dim, action_dim, state_dim, embed_dim))
        if params.output_dim != action_dim:
            raise ContractViolation("Network output of {} does not match action dimension {}".format(
                                    params.output_dim, action_dim))
        self.params = params
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.embed_dim = embed_dim

    @classmethod
    def create(cls, state_dim: int, action_dim: int, rng: np.random.Generator,
               hidden: Sequence[int] = (256, 256), embed_dim: int = 16) -> 'NoisePredictor':
        params = init_mlp(action_dim + state_dim + embed_dim, action_dim, rng, hidden=hidden)
        return cls(params, state_dim, action_dim, embed_dim)

    def with_params(self, params: MlpParams) -> 'NoisePredictor':
        return NoisePredictor(params, self.state_dim, self.action_dim, self.embed_dim)

    def inputs(self, noisy_actions: np.ndarray, states: np.ndarray, t: np.ndarray) -> np.ndarray:
        """ Assembles the 2-D network input for a batch. ``t`` holds one step per row. """
        noisy_actions = np.asarray(noisy_actions, dtype=np.float64)
        states = np.asarray(states, dtype=np.float64)
        if noisy_actions.ndim != 2 or noisy_actions.shape[1] != self.action_dim:
            raise ContractViolation("Expected actions of dimension {}, got shape {}".format(self.action_dim, noisy_actions.shape))
        if states.shape != (noisy_actions.shape[0], self.state_dim):
            raise ContractViolation("Expected {} states of dimension {}, got shape {}".format(
                                    noisy_actions.shape[0], self.state_dim, states.shape))
        t = np.broadcast_to(np.asarray(t), (noisy_actions.shape[0],))
        return np.concatenate([noisy_actions, states, timestep_embedding(t, self.embed_dim)], axis=1)

    def predict(self, noisy_actions: np.ndarray, states: np.ndarray, t: np.ndarray) -> np.ndarray:
        return forward(self.params, self.inputs(noisy_actions, states, t))

    def __repr__(self) -> str:
        return "<NoisePredictor state={} action={} {}>".format(self.state_dim, self.action_dim, self.params)


def forward_noise(schedule: DiffusionSchedule, a0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
    """ Samples ``q(a_t | a_0)`` given the noise: ``sqrt(abar_t) a0 + sqrt(1 - abar_t) eps``. """
    a0 = np.asarray(a0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if a0.shape != eps.shape:
        raise ContractViolation("Noise shape {} does not match action shape {}".format(eps.shape, a0.shape))
    alpha_bar = schedule.alpha_bar(t)
    return np.sqrt(alpha_bar) * a0 + np.sqrt(1.0 - alpha_bar) * eps


def sample_reverse(schedule: DiffusionSchedule,
                   predictor: NoisePredictor,
                   state: np.ndarray,
                   rng: np.random.Generator,
                   action_bounds: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """
    Draws actions from the diffusion policy by running the reverse chain from
    standard normal noise.

    ``state`` may be a single observation, giving one action, or a 2-D batch
    of observations, giving one action per row. The random draws are
    ``a_T`` for the whole batch followed by one noise batch per step from T
    down to 2; the last step adds no noise.

    Args:
        schedule (DiffusionSchedule): The forward-process tables.
        predictor (NoisePredictor): The noise model.
        state (numpy.ndarray): Observation(s) to condition on.
        rng (numpy.random.Generator): Source of the chain's noise.
        action_bounds (tuple): Per-coordinate ``(low, high)`` the result is clamped to.

    Returns:
        numpy.ndarray: The denoised action(s).
    """
    states = np.asarray(state, dtype=np.float64)
    single = states.ndim == 1
    if single:
        states = states[np.newaxis, :]
    if states.ndim != 2 or states.shape[1] != predictor.state_dim:
        raise ContractViolation("Expected states of dimension {}, got shape {}".format(predictor.state_dim, states.shape))
    n = states.shape[0]
    a = rng.standard_normal((n, predictor.action_dim))
    for t in range(schedule.T, 0, -1):
        beta = schedule.beta(t)
        eps_hat = predictor.predict(a, states, t)
        a = (a - (beta / np.sqrt(1.0 - schedule.alpha_bar(t))) * eps_hat) / np.sqrt(schedule.alpha(t))
        if t > 1:
            a = a + schedule.sigma(t) * rng.standard_normal((n, predictor.action_dim))
        if not np.all(np.isfinite(a)):
            logger.error("Reverse diffusion produced a non-finite action at step %d of %d", t, schedule.T)
            raise NumericalError("Non-finite action in reverse diffusion at step {}".format(t))
    low, high = action_bounds
    a = np.clip(a, low, high)
    return a[0] if single else a


def weighted_ddpm_loss(schedule: DiffusionSchedule,
                       predictor: NoisePredictor,
                       batch,
                       rng: np.random.Generator,
                       params: Optional[MlpParams] = None) -> Tuple[float, MlpParams]:
    """
    The Q-weighted denoising loss and its gradient.

    For every sample a step ``t`` is drawn uniformly from ``[1, T]`` and noise
    ``eps`` from a standard normal (all steps first, then all noise). The loss
    is the batch mean of ``weight * |eps - eps_theta(a_t, s, t)|^2``.

    Args:
        schedule (DiffusionSchedule): The forward-process tables.
        predictor (NoisePredictor): The noise model.
        batch: Anything with ``states``, ``actions`` and ``weights`` arrays, such
            as :class:`qvpo.policy.WeightedBatch`.
        rng (numpy.random.Generator): Source of ``t`` and ``eps``.
        params (MlpParams): Evaluate at these parameters instead of the predictor's own.

    Returns:
        tuple: The scalar loss and its gradient with respect to the network parameters.
    """
    params = predictor.params if params is None else params
    states = np.asarray(batch.states, dtype=np.float64)
    actions = np.asarray(batch.actions, dtype=np.float64)
    weights = np.asarray(batch.weights, dtype=np.float64)
    n = weights.shape[0]
    if n == 0:
        raise ContractViolation("Cannot compute the loss of an empty batch")
    if np.any(weights < 0.0):
        raise ContractViolation("Training weights must be nonnegative")
    if actions.shape != (n, predictor.action_dim):
        raise ContractViolation("Expected {} actions of dimension {}, got shape {}".format(n, predictor.action_dim, actions.shape))

    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal((n, predictor.action_dim))
    alpha_bar = schedule.alpha_bars[t - 1][:, np.newaxis]
    noisy = np.sqrt(alpha_bar) * actions + np.sqrt(1.0 - alpha_bar) * eps
    x = predictor.inputs(noisy, states, t)
    residual = forward(params, x) - eps
    per_sample = np.sum(residual * residual, axis=1)
    loss = float(np.mean(weights * per_sample))
    upstream = (2.0 / n) * weights[:, np.newaxis] * residual
    grads, _ = backward(params, x, upstream)
    return loss, grads
