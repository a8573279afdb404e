"""
The policy layer: drawing actions from the diffusion policy, turning critic
values into nonnegative training weights, building the weighted training
batch (best diffusion sample plus uniform entropy samples for each state),
the combined policy update, and K-sample action selection.
"""
import math
import logging
from typing import Iterator, List, NamedTuple, Optional, Tuple, TYPE_CHECKING
import numpy as np
from qvpo.diffusion import DiffusionSchedule, NoisePredictor, sample_reverse, weighted_ddpm_loss
from qvpo.errors import ConfigurationError, ContractViolation, NumericalError
from qvpo.neural import AdamState, adam_step

if TYPE_CHECKING:
    from qvpo.critic import TwinCritic

logger = logging.getLogger(__name__)

TRANSFORMS = ["qadv", "qcut"]
ENTROPY_WEIGHTINGS = ["best", "mean"]


class PolicyConfig(object):
    """
    Settings of the policy layer.

    Args:
        action_low (array): Lower action bound per coordinate.
        action_high (array): Upper action bound per coordinate.
        n_d (int): Diffusion samples drawn per state when building a batch.
        n_e (int): Uniform samples injected per state.
        k_b (int): Candidates drawn when acting.
        k_t (int): Candidates drawn when building TD targets.
        omega_ent (float): Scale of the uniform samples' weight.
        transform (str): "qadv" or "qcut".
        qcut_epsilon (float): Weight given to the best action by qcut when every value is negative.
        n_selected (int): Diffusion samples kept per state, best weights first.
        entropy_weighting (str): "best" scales the uniform weight by the best
            sample's weight; "mean" by the mean weight of the kept samples.
    """

    def __init__(self, action_low, action_high, n_d: int = 64, n_e: int = 10, k_b: int = 4, k_t: int = 2,
                 omega_ent: float = 0.01, transform: str = "qadv", qcut_epsilon: float = 1e-6,
                 n_selected: int = 1, entropy_weighting: str = "best"):
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.n_d = n_d
        self.n_e = n_e
        self.k_b = k_b
        self.k_t = k_t
        self.omega_ent = omega_ent
        self.transform = transform
        self.qcut_epsilon = qcut_epsilon
        self.n_selected = n_selected
        self.entropy_weighting = entropy_weighting
        self._validate()

    def _validate(self):
        if self.action_low.shape != self.action_high.shape or not np.all(self.action_low < self.action_high):
            raise ConfigurationError("Action bounds must satisfy low < high in every coordinate")
        if self.n_d < 1 or self.n_e < 0 or self.k_b < 1:
            raise ConfigurationError("Sample counts must satisfy n_d >= 1, n_e >= 0, k_b >= 1")
        if not 1 <= self.k_t <= self.k_b:
            raise ConfigurationError("Target selection count must satisfy 1 <= k_t <= k_b")
        if not 1 <= self.n_selected <= self.n_d:
            raise ConfigurationError("Kept sample count must satisfy 1 <= n_selected <= n_d")
        if self.omega_ent < 0 or self.qcut_epsilon <= 0:
            raise ConfigurationError("omega_ent must be nonnegative and qcut_epsilon positive")
        if self.transform not in TRANSFORMS:
            raise ConfigurationError("Weight transform '{}' not recognized".format(self.transform))
        if self.entropy_weighting not in ENTROPY_WEIGHTINGS:
            raise ConfigurationError("Entropy weighting '{}' not recognized".format(self.entropy_weighting))

    @property
    def action_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.action_low, self.action_high


class WeightedSample(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    weight: float


class WeightedBatch(object):
    """
    Training pairs for the weighted denoising loss, stored column-wise.
    Indexing or iterating yields :class:`WeightedSample` rows.

    ``from_policy`` marks the rows that came from the diffusion policy (as
    opposed to uniform injection) and ``best_weights`` holds the largest
    transform weight seen for each state.
    """

    def __init__(self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray,
                 from_policy: Optional[np.ndarray] = None, best_weights: Optional[np.ndarray] = None):
        self.states = np.asarray(states, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        n = self.weights.shape[0]
        self.from_policy = np.ones(n, dtype=bool) if from_policy is None else np.asarray(from_policy, dtype=bool)
        self.best_weights = best_weights
        assert self.states.shape[0] == self.actions.shape[0] == n

    @classmethod
    def from_samples(cls, samples: List[WeightedSample]) -> 'WeightedBatch':
        if not samples:
            raise ContractViolation("A batch needs at least one sample")
        return cls(np.stack([s.state for s in samples]),
                   np.stack([s.action for s in samples]),
                   np.array([s.weight for s in samples]))

    def scaled(self, factor: float) -> 'WeightedBatch':
        return WeightedBatch(self.states, self.actions, self.weights * factor, self.from_policy, self.best_weights)

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, i: int) -> WeightedSample:
        return WeightedSample(self.states[i], self.actions[i], float(self.weights[i]))

    def __iter__(self) -> Iterator[WeightedSample]:
        for i in range(len(self)):
            yield self[i]


def sample_actions(predictor: NoisePredictor,
                   schedule: DiffusionSchedule,
                   state: np.ndarray,
                   n: int,
                   rng: np.random.Generator,
                   action_bounds: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """ Draws ``n`` independent actions for one state. Returns an ``(n, action_dim)`` array. """
    if n < 1:
        raise ContractViolation("Need at least one sample, got {}".format(n))
    states = np.repeat(np.asarray(state, dtype=np.float64)[np.newaxis, :], n, axis=0)
    return sample_reverse(schedule, predictor, states, rng, action_bounds)


def qadv_weights(q_values) -> np.ndarray:
    """ Advantage weights ``max(q - mean(q), 0)``, with the mean standing in for V(s).
    Equal values give all-zero weights. """
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise ContractViolation("Cannot weight an empty set of values")
    if q.max() == q.min():
        # a rounded mean can land just below the common value
        return np.zeros_like(q)
    return np.maximum(q - math.fsum(q) / q.size, 0.0)


def qcut_weights(q_values, epsilon: float = 1e-6) -> np.ndarray:
    """
    Keeps only the best action: it gets its value if that is nonnegative and
    ``epsilon`` otherwise. Everything else gets 0. The lowest index wins ties.
    """
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise ContractViolation("Cannot weight an empty set of values")
    if epsilon <= 0:
        raise ContractViolation("qcut epsilon must be positive, got {}".format(epsilon))
    weights = np.zeros_like(q)
    best = int(np.argmax(q))
    weights[best] = q[best] if q[best] >= 0.0 else epsilon
    return weights


def transform_weights(q_values, config: PolicyConfig) -> np.ndarray:
    if config.transform == "qadv":
        return qadv_weights(q_values)
    if config.transform == "qcut":
        return qcut_weights(q_values, config.qcut_epsilon)
    raise ConfigurationError("Weight transform '{}' not recognized".format(config.transform))


def build_training_batch(predictor: NoisePredictor,
                         schedule: DiffusionSchedule,
                         critic: 'TwinCritic',
                         states: np.ndarray,
                         config: PolicyConfig,
                         rng: np.random.Generator) -> WeightedBatch:
    """
    Builds the weighted batch for one policy update.

    For every state, ``n_d`` actions are drawn from the diffusion policy and
    scored with the smaller of the two critic values. The transform turns the
    scores into weights and the ``n_selected`` best samples are kept. Then
    ``n_e`` actions are drawn uniformly over the action box, each carrying the
    entropy weight ``omega_ent`` times the best sample's weight (or the mean
    weight of the kept samples). Rows are grouped by state: kept samples
    first, then the uniform ones.

    Args:
        predictor (NoisePredictor): The diffusion policy's noise model.
        schedule (DiffusionSchedule): The forward-process tables.
        critic (TwinCritic): Scores candidate actions.
        states (numpy.ndarray): A 2-D batch of observations.
        config (PolicyConfig): Sample counts, transform and entropy settings.
        rng (numpy.random.Generator): Source of all samples. Diffusion draws
            for the whole batch come first, then the uniform draws.

    Returns:
        WeightedBatch
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ContractViolation("Need a nonempty 2-D batch of states, got shape {}".format(states.shape))
    n_states = states.shape[0]
    action_dim = predictor.action_dim
    repeated = np.repeat(states, config.n_d, axis=0)
    candidates = sample_reverse(schedule, predictor, repeated, rng, config.action_bounds)
    scores = critic.q_min(repeated, candidates).reshape(n_states, config.n_d)
    candidates = candidates.reshape(n_states, config.n_d, action_dim)
    uniform = rng.uniform(config.action_low, config.action_high, size=(n_states, config.n_e, action_dim))

    per_state = config.n_selected + config.n_e
    out_states = np.repeat(states, per_state, axis=0)
    out_actions = np.empty((n_states * per_state, action_dim))
    out_weights = np.empty(n_states * per_state)
    from_policy = np.tile(np.arange(per_state) < config.n_selected, n_states)
    best_weights = np.empty(n_states)
    for i in range(n_states):
        weights = transform_weights(scores[i], config)
        # stable sort keeps the lowest index first among equal weights
        kept = np.argsort(-weights, kind="stable")[:config.n_selected]
        best_weights[i] = weights[kept[0]]
        if config.entropy_weighting == "best":
            entropy_weight = config.omega_ent * weights[kept[0]]
        else:
            entropy_weight = config.omega_ent * float(np.mean(weights[kept]))
        start = i * per_state
        stop = start + config.n_selected
        out_actions[start:stop] = candidates[i, kept]
        out_weights[start:stop] = weights[kept]
        out_actions[stop:start + per_state] = uniform[i]
        out_weights[stop:start + per_state] = entropy_weight
    return WeightedBatch(out_states, out_actions, out_weights, from_policy, best_weights)


def selection_statistics(batch: WeightedBatch) -> Tuple[Optional[float], Optional[float]]:
    """ Mean of the positive best-sample weights and the fraction of states
    whose best weight is zero. Either is ``None`` when undefined. """
    if batch.best_weights is None or len(batch.best_weights) == 0:
        return None, None
    best = batch.best_weights
    positive = best[best > 0.0]
    mean_positive = float(positive.mean()) if positive.size else None
    return mean_positive, float(np.mean(best == 0.0))


def policy_update(predictor: NoisePredictor,
                  adam_state: AdamState,
                  schedule: DiffusionSchedule,
                  batch: WeightedBatch,
                  rng: np.random.Generator) -> Tuple[float, NoisePredictor, AdamState]:
    """
    Takes one Adam step on the weighted denoising loss over the whole batch,
    diffusion-sourced and uniform rows alike.

    Returns:
        tuple: The loss before the step, the updated predictor and the updated
        optimizer state. A batch whose weights are all zero leaves both unchanged.
    """
    if len(batch) == 0:
        raise ContractViolation("Cannot update on an empty batch")
    loss, grads = weighted_ddpm_loss(schedule, predictor, batch, rng)
    if not np.isfinite(loss):
        logger.error("Policy loss became %s", loss)
        raise NumericalError("Non-finite policy loss {}".format(loss))
    if not np.any(batch.weights > 0.0):
        return loss, predictor, adam_state
    params, adam_state = adam_step(adam_state, predictor.params, grads)
    return loss, predictor.with_params(params), adam_state


def behavior_select(predictor: NoisePredictor,
                    schedule: DiffusionSchedule,
                    critic: 'TwinCritic',
                    state: np.ndarray,
                    k: int,
                    rng: np.random.Generator,
                    action_bounds: Tuple[np.ndarray, np.ndarray],
                    shadow: bool = False) -> np.ndarray:
    """
    Draws ``k`` candidate actions per state and returns the one with the
    largest twin-minimum value (lowest index on ties).

    ``state`` may be one observation or a 2-D batch; the result has one action
    per state. With ``shadow`` the candidates are scored by the shadow critics.
    """
    if k < 1:
        raise ContractViolation("Selection count must be at least 1, got {}".format(k))
    states = np.asarray(state, dtype=np.float64)
    single = states.ndim == 1
    if single:
        states = states[np.newaxis, :]
    n = states.shape[0]
    repeated = np.repeat(states, k, axis=0)
    candidates = sample_reverse(schedule, predictor, repeated, rng, action_bounds)
    if k > 1:
        scores = critic.q_min(repeated, candidates, shadow=shadow).reshape(n, k)
        best = np.argmax(scores, axis=1)
        chosen = candidates.reshape(n, k, -1)[np.arange(n), best]
    else:
        chosen = candidates
    return chosen[0] if single else chosen
