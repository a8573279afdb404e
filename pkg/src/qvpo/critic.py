"""
Twin critics with shadow copies. Everywhere the engine needs a value it
takes the smaller of the two networks' outputs.
"""
import logging
from typing import Optional, Sequence, Tuple
import numpy as np
from qvpo.diffusion import DiffusionSchedule, NoisePredictor
from qvpo.errors import ConfigurationError, ContractViolation, NumericalError
from qvpo.neural import MlpParams, AdamState, init_mlp, forward, backward, adam_step, polyak_average
from qvpo.policy import behavior_select

logger = logging.getLogger(__name__)


def mse_loss(params: MlpParams, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, MlpParams]:
    """ Mean squared error of one critic network against ``targets`` and its gradient. """
    n = targets.shape[0]
    residual = forward(params, inputs)[:, 0] - targets
    loss = float(np.mean(residual * residual))
    grads, _ = backward(params, inputs, ((2.0 / n) * residual)[:, np.newaxis])
    return loss, grads


class TwinCritic(object):
    """
    Two independently initialized Q networks mapping ``(state, action)`` to a
    scalar, their shadow copies, and one Adam state per online network.
    """

    def __init__(self, q1: MlpParams, q2: MlpParams, gamma: float = 0.99, tau: float = 0.005, lr: float = 3e-4):
        if not 0.0 < tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1], got {}".format(tau))
        if not 0.0 <= gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1), got {}".format(gamma))
        if q1.output_dim != 1 or q2.output_dim != 1 or q1.input_dim != q2.input_dim:
            raise ContractViolation("Critic networks must share an input size and return a scalar")
        self.q1 = q1
        self.q2 = q2
        # shadow copies start equal to the online networks
        self.shadow1 = q1.copy()
        self.shadow2 = q2.copy()
        self.adam1 = AdamState.for_params(q1, lr)
        self.adam2 = AdamState.for_params(q2, lr)
        self.gamma = gamma
        self.tau = tau

    @classmethod
    def create(cls, state_dim: int, action_dim: int, rng: np.random.Generator,
               hidden: Sequence[int] = (256, 256), gamma: float = 0.99, tau: float = 0.005,
               lr: float = 3e-4) -> 'TwinCritic':
        q1 = init_mlp(state_dim + action_dim, 1, rng, hidden=hidden)
        q2 = init_mlp(state_dim + action_dim, 1, rng, hidden=hidden)
        return cls(q1, q2, gamma=gamma, tau=tau, lr=lr)

    @property
    def input_dim(self) -> int:
        return self.q1.input_dim

    def _inputs(self, states: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, bool]:
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        single = states.ndim == 1
        if single:
            states, actions = states[np.newaxis, :], actions[np.newaxis, :]
        if states.ndim != 2 or actions.ndim != 2 or states.shape[0] != actions.shape[0] \
                or states.shape[1] + actions.shape[1] != self.input_dim:
            raise ContractViolation("States {} and actions {} do not fit a critic with {} inputs".format(
                                    states.shape, actions.shape, self.input_dim))
        return np.concatenate([states, actions], axis=1), single

    def q_values(self, states: np.ndarray, actions: np.ndarray, shadow: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """ Outputs of both networks (online, or shadow if ``shadow``). """
        x, single = self._inputs(states, actions)
        first, second = (self.shadow1, self.shadow2) if shadow else (self.q1, self.q2)
        v1, v2 = forward(first, x)[:, 0], forward(second, x)[:, 0]
        if single:
            return v1[0], v2[0]
        return v1, v2

    def q_min(self, states: np.ndarray, actions: np.ndarray, shadow: bool = False) -> np.ndarray:
        """ Pointwise minimum of the two networks for one pair or a batch of pairs. """
        v1, v2 = self.q_values(states, actions, shadow=shadow)
        return np.minimum(v1, v2)

    def td_target(self,
                  predictor: NoisePredictor,
                  schedule: DiffusionSchedule,
                  batch,
                  k_t: int,
                  rng: np.random.Generator,
                  action_bounds: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """
        Bootstrapped targets ``r + gamma * Q'(s', a')`` where ``a'`` is picked
        from ``k_t`` diffusion samples by the shadow critics and ``Q'`` is the
        shadow minimum. Terminal transitions get ``r`` alone and draw nothing
        from ``rng``.

        Args:
            predictor (NoisePredictor): The diffusion policy's noise model.
            schedule (DiffusionSchedule): The forward-process tables.
            batch: Anything with ``rewards``, ``next_states`` and ``dones`` arrays,
                such as :class:`qvpo.replay.TransitionBatch`.
            k_t (int): Candidates drawn per next state.
            rng (numpy.random.Generator): Source of the candidate draws.
            action_bounds (tuple): Per-coordinate ``(low, high)``.

        Returns:
            numpy.ndarray: One target per transition.
        """
        if k_t < 1:
            raise ContractViolation("Target selection count must be at least 1, got {}".format(k_t))
        rewards = np.asarray(batch.rewards, dtype=np.float64)
        dones = np.asarray(batch.dones, dtype=bool)
        targets = rewards.copy()
        live = np.flatnonzero(~dones)
        if live.size:
            next_states = np.asarray(batch.next_states, dtype=np.float64)[live]
            next_actions = behavior_select(predictor, schedule, self, next_states, k_t, rng, action_bounds, shadow=True)
            targets[live] = rewards[live] + self.gamma * self.q_min(next_states, next_actions, shadow=True)
        return targets

    def loss(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
        """ Mean of the two networks' squared errors, without updating anything. """
        x, _ = self._inputs(states, actions)
        targets = np.asarray(targets, dtype=np.float64)
        return 0.5 * (mse_loss(self.q1, x, targets)[0] + mse_loss(self.q2, x, targets)[0])

    def update(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
        """
        Takes one Adam step on each network toward ``targets`` and returns the
        mean of the two networks' squared errors before the step.
        """
        x, _ = self._inputs(states, actions)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if targets.shape[0] != x.shape[0]:
            raise ContractViolation("Got {} targets for {} transitions".format(targets.shape[0], x.shape[0]))
        loss1, grads1 = mse_loss(self.q1, x, targets)
        loss2, grads2 = mse_loss(self.q2, x, targets)
        loss = 0.5 * (loss1 + loss2)
        if not np.isfinite(loss):
            logger.error("Critic loss became %s", loss)
            raise NumericalError("Non-finite critic loss {}".format(loss))
        self.q1, self.adam1 = adam_step(self.adam1, self.q1, grads1)
        self.q2, self.adam2 = adam_step(self.adam2, self.q2, grads2)
        return loss

    def polyak_update(self, tau: Optional[float] = None):
        """ Moves each shadow network toward its online network by ``tau``. """
        tau = self.tau if tau is None else tau
        self.shadow1 = polyak_average(self.shadow1, self.q1, tau)
        self.shadow2 = polyak_average(self.shadow2, self.q2, tau)

    def __repr__(self) -> str:
        return "<TwinCritic {} gamma={} tau={}>".format(self.q1, self.gamma, self.tau)
