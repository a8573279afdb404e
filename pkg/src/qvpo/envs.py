"""
The two built-in tasks: a three-peak continuous bandit (one step per
episode) and pendulum swing-up (200 steps per episode).
"""
import math
import logging
from typing import NamedTuple, Tuple, Union
import numpy as np
from qvpo.errors import ConfigurationError, NumericalError
from qvpo.utils import wrap_angle

logger = logging.getLogger(__name__)

ENVIRONMENTS = ["bandit", "pendulum"]


class EnvSpec(NamedTuple):
    obs_dim: int
    act_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int

    @property
    def action_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.action_low, self.action_high


class BanditParams(object):
    """
    Reward landscape of the bandit: three weighted bumps.

    With ``strict_gaussian`` off, the exponent divides the squared distance by
    ``2 * sigma``, which gives wider bumps than the Gaussian normalizer
    implies. Turning it on divides by ``2 * sigma ** 2`` instead.
    The narrow bumps underflow to exactly zero far from the peaks, so the
    reward is strictly positive everywhere only in the default form.
    """

    def __init__(self,
                 weights=(1.5, 1.5, 1.5),
                 sigmas=(0.1, 0.1, 0.1),
                 means=((-1.35, 0.65), (-0.65, 1.35), (-1.61, 1.61)),
                 strict_gaussian: bool = False):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)
        self.strict_gaussian = strict_gaussian
        assert self.weights.shape == self.sigmas.shape == (3,)
        assert self.means.shape == (3, 2)
        self.action_low = np.array([-2.0, -2.0])
        self.action_high = np.array([2.0, 2.0])


def bandit_reward(params: BanditParams, x: np.ndarray) -> Union[float, np.ndarray]:
    """ Reward of one 2-D action, or of every row of a 2-D batch. """
    x = np.asarray(x, dtype=np.float64)
    points = x.reshape(-1, 2)
    sq_dist = np.sum((points[:, np.newaxis, :] - params.means[np.newaxis, :, :]) ** 2, axis=2)
    spread = 2.0 * params.sigmas ** 2 if params.strict_gaussian else 2.0 * params.sigmas
    norm = params.weights / (2.0 * math.pi * params.sigmas ** 2)
    reward = np.sum(norm * np.exp(-sq_dist / spread), axis=1)
    return float(reward[0]) if x.ndim == 1 else reward


class ContinuousBandit(object):
    """ Every episode is one step: the observation is always ``[0]`` and the
    reward is :func:`bandit_reward` of the (clamped) action. """

    def __init__(self, params: BanditParams = None):
        self.params = BanditParams() if params is None else params
        self.spec = EnvSpec(1, 2, self.params.action_low, self.params.action_high, 1)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def step(self, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        action = np.clip(action, self.spec.action_low, self.spec.action_high)
        return np.zeros(1), bandit_reward(self.params, action), True


# pendulum constants
GRAVITY = 10.0
MASS = 1.0
LENGTH = 1.0
DT = 0.05
MAX_SPEED = 8.0
MAX_TORQUE = 2.0
HORIZON = 200


class PendulumState(NamedTuple):
    theta: float
    theta_dot: float
    steps: int = 0

    @property
    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])


def pendulum_reset(rng: np.random.Generator) -> PendulumState:
    """ Random start: angle uniform in [-pi, pi], angular velocity uniform in [-1, 1]. """
    theta = rng.uniform(-math.pi, math.pi)
    theta_dot = rng.uniform(-1.0, 1.0)
    return PendulumState(float(theta), float(theta_dot), 0)


def pendulum_step(state: PendulumState, torque: float) -> Tuple[PendulumState, float, bool]:
    """
    Advances the pendulum by one time step. The reward is computed on the
    state before the step; angle 0 is upright.

    Returns:
        tuple: The next state, the reward, and whether the horizon was reached.
    """
    u = float(np.clip(torque, -MAX_TORQUE, MAX_TORQUE))
    theta, theta_dot = state.theta, state.theta_dot
    reward = -(wrap_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2)
    theta_ddot = 3.0 * GRAVITY / (2.0 * LENGTH) * math.sin(theta) + 3.0 / (MASS * LENGTH ** 2) * u
    theta_dot = min(max(theta_dot + theta_ddot * DT, -MAX_SPEED), MAX_SPEED)
    theta = theta + theta_dot * DT
    if not (math.isfinite(theta) and math.isfinite(theta_dot)):
        logger.error("Pendulum state (%r, %r) is not finite", theta, theta_dot)
        raise NumericalError("Pendulum state became non-finite at step {}".format(state.steps + 1))
    steps = state.steps + 1
    return PendulumState(theta, theta_dot, steps), reward, steps >= HORIZON


class PendulumSwingUp(object):
    """ Swing-up task with observation ``[cos theta, sin theta, theta_dot]``
    and a single torque in ``[-2, 2]``. """

    def __init__(self):
        self.spec = EnvSpec(3, 1, np.array([-MAX_TORQUE]), np.array([MAX_TORQUE]), HORIZON)
        self.state = None  # type: PendulumState

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = pendulum_reset(rng)
        return self.state.observation

    def step(self, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        assert self.state is not None, "reset() must be called before step()"
        self.state, reward, done = pendulum_step(self.state, float(np.asarray(action).reshape(-1)[0]))
        return self.state.observation, reward, done


def make_env(name: str, strict_gaussian: bool = False):
    """ Builds a fresh environment by name ("bandit" or "pendulum"). """
    if name == "bandit":
        return ContinuousBandit(BanditParams(strict_gaussian=strict_gaussian))
    if name == "pendulum":
        return PendulumSwingUp()
    raise ConfigurationError("Environment '{}' not recognized".format(name))
