from typing import Iterator, NamedTuple
import numpy as np
from qvpo.errors import ContractViolation


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class TransitionBatch(object):
    """ A mini-batch of transitions held as parallel arrays. Indexing yields :class:`Transition`. """

    def __init__(self, states, actions, rewards, next_states, dones):
        self.states = states
        self.actions = actions
        self.rewards = rewards
        self.next_states = next_states
        self.dones = dones

    def __len__(self) -> int:
        return self.rewards.shape[0]

    def __getitem__(self, i: int) -> Transition:
        return Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]),
                          self.next_states[i].copy(), bool(self.dones[i]))

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]


class ReplayBuffer(object):
    """
    Fixed-capacity ring buffer. Storage is allocated up front and every push
    copies the transition in, so callers can reuse their arrays freely.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ContractViolation("Buffer capacity must be positive, got {}".format(capacity))
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._states = np.zeros((capacity, obs_dim))
        self._actions = np.zeros((capacity, act_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, obs_dim))
        self._dones = np.zeros(capacity, dtype=bool)
        # next slot to write
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def cursor(self) -> int:
        return self._cursor

    def push(self, transition: Transition):
        """ Stores a copy of ``transition``, overwriting the oldest entry once full. """
        state = np.asarray(transition.state, dtype=np.float64)
        action = np.asarray(transition.action, dtype=np.float64)
        next_state = np.asarray(transition.next_state, dtype=np.float64)
        if state.shape != (self.obs_dim,) or next_state.shape != (self.obs_dim,) or action.shape != (self.act_dim,):
            raise ContractViolation("Transition shapes {}, {}, {} do not match observation {} and action {}".format(
                                    state.shape, action.shape, next_state.shape, self.obs_dim, self.act_dim))
        if not np.isfinite(transition.reward):
            raise ContractViolation("Reward must be finite, got {}".format(transition.reward))
        i = self._cursor
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = transition.reward
        self._next_states[i] = next_state
        self._dones[i] = bool(transition.done)
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_batch(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """ Draws ``n`` stored transitions uniformly with replacement. """
        if self._size == 0:
            raise ContractViolation("Cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, size=n)
        return self.gather(idx)

    def gather(self, idx: np.ndarray) -> TransitionBatch:
        # fancy indexing copies
        return TransitionBatch(self._states[idx], self._actions[idx], self._rewards[idx],
                               self._next_states[idx], self._dones[idx])

    def transitions(self) -> Iterator[Transition]:
        """ Stored transitions from oldest to newest. """
        start = self._cursor if self._size == self.capacity else 0
        batch = self.gather((start + np.arange(self._size)) % self.capacity)
        return iter(batch)
