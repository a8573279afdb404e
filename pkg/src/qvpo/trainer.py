"""
The online training loop, policy evaluation, and end-of-run agent files.
"""
import os
import logging
from typing import Dict, List, NamedTuple, Optional, Tuple
import numpy as np
from qvpo.critic import TwinCritic
from qvpo.diffusion import DiffusionSchedule, NoisePredictor, build_schedule
from qvpo.envs import ContinuousBandit, make_env
from qvpo.errors import ContractViolation, NumericalError
from qvpo.neural import AdamState, MlpParams
from qvpo.option_handling import TrainConfig
from qvpo.output_writers import CSVWriter, MetricsRow
from qvpo.policy import behavior_select, build_training_batch, policy_update, sample_actions, selection_statistics
from qvpo.replay import ReplayBuffer, Transition
from qvpo.utils import seed_stream, spawn_generators
from qvpo_analyzer.verify import mode_coverage

logger = logging.getLogger(__name__)


class Agent(NamedTuple):
    predictor: NoisePredictor
    schedule: DiffusionSchedule
    critic: TwinCritic


def evaluate(predictor: NoisePredictor,
             schedule: DiffusionSchedule,
             critic: TwinCritic,
             env,
             episodes: int,
             k_eval: int,
             rng: np.random.Generator) -> Tuple[float, float]:
    """
    Runs ``episodes`` full episodes acting with the best of ``k_eval``
    diffusion samples. Nothing is learned. Each episode gets its own child
    generator split from ``rng``.

    Returns:
        tuple: Mean and (population) standard deviation of the episode returns.
    """
    if episodes < 1:
        raise ContractViolation("Need at least one evaluation episode, got {}".format(episodes))
    returns = []
    for episode_rng in spawn_generators(rng, episodes):
        obs = env.reset(episode_rng)
        total, done = 0.0, False
        while not done:
            action = behavior_select(predictor, schedule, critic, obs, k_eval, episode_rng, env.spec.action_bounds)
            obs, reward, done = env.step(action)
            total += reward
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


def uniform_baseline(env, episodes: int, rng: np.random.Generator) -> Tuple[float, float]:
    """ Mean and standard deviation of the return of a policy that acts uniformly at random. """
    returns = []
    for episode_rng in spawn_generators(rng, episodes):
        env.reset(episode_rng)
        total, done = 0.0, False
        while not done:
            action = episode_rng.uniform(env.spec.action_low, env.spec.action_high)
            _, reward, done = env.step(action)
            total += reward
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


def _store_params(arrays: Dict[str, np.ndarray], prefix: str, params: MlpParams):
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays["{}_w{}".format(prefix, i)] = w
        arrays["{}_b{}".format(prefix, i)] = b


def _restore_params(data, prefix: str, activation: str) -> MlpParams:
    weights, biases = [], []
    i = 0
    while "{}_w{}".format(prefix, i) in data.files:
        weights.append(data["{}_w{}".format(prefix, i)])
        biases.append(data["{}_b{}".format(prefix, i)])
        i += 1
    return MlpParams(weights, biases, activation)


def save_agent(path: str, agent: Agent):
    """ Writes the predictor, the schedule and both critics (online and shadow) to an ``.npz`` file. """
    predictor, schedule, critic = agent
    arrays = {
        "dims": np.array([predictor.state_dim, predictor.action_dim, predictor.embed_dim]),
        "betas": schedule.betas,
        "critic_coefficients": np.array([critic.gamma, critic.tau]),
        "activation": np.array(predictor.params.activation),
    }
    _store_params(arrays, "predictor", predictor.params)
    _store_params(arrays, "q1", critic.q1)
    _store_params(arrays, "q2", critic.q2)
    _store_params(arrays, "shadow1", critic.shadow1)
    _store_params(arrays, "shadow2", critic.shadow2)
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)


def load_agent(path: str) -> Agent:
    """ Reads an agent written by :func:`save_agent`. """
    with np.load(path) as data:
        state_dim, action_dim, embed_dim = (int(v) for v in data["dims"])
        activation = str(data["activation"])
        gamma, tau = (float(v) for v in data["critic_coefficients"])
        predictor = NoisePredictor(_restore_params(data, "predictor", activation), state_dim, action_dim, embed_dim)
        schedule = DiffusionSchedule(data["betas"])
        critic = TwinCritic(_restore_params(data, "q1", activation), _restore_params(data, "q2", activation),
                            gamma=gamma, tau=tau)
        critic.shadow1 = _restore_params(data, "shadow1", activation)
        critic.shadow2 = _restore_params(data, "shadow2", activation)
    return Agent(predictor, schedule, critic)


class Trainer:
    """
    Runs the online loop for one configuration: act, store the transition,
    and once warm-up is over, update the policy, the critics and the shadow
    critics once per environment step. A metrics row is written every
    ``eval_interval`` steps and once more at the end.
    """

    def __init__(self, config: TrainConfig):
        """
        Args:
            config (TrainConfig): A validated configuration.
        """
        self.config = config
        self.env = make_env(config.env, strict_gaussian=config.strict_gaussian)
        self.spec = self.env.spec
        self.policy_config = config.policy_config(self.spec)

        # every random draw of a run comes from one of these streams
        init_rng = seed_stream(config.seed, 0)
        self._env_rng = seed_stream(config.seed, 1)
        self._act_rng = seed_stream(config.seed, 2)
        self._learn_rng = seed_stream(config.seed, 5)

        self.schedule = build_schedule(config.diffusion_steps, config.beta_min, config.beta_max, config.beta_schedule)
        self.predictor = NoisePredictor.create(self.spec.obs_dim, self.spec.act_dim, init_rng, hidden=config.hidden)
        self.actor_adam = AdamState.for_params(self.predictor.params, config.actor_lr)
        self.critic = TwinCritic.create(self.spec.obs_dim, self.spec.act_dim, init_rng, hidden=config.hidden,
                                        gamma=config.gamma, tau=config.tau, lr=config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, self.spec.obs_dim, self.spec.act_dim)

        # progress, updated as the loop runs
        self.step = 0
        self.episodes = 0
        self._eval_round = 0

        # learning statistics since the last metrics row
        self._policy_losses = []  # type: List[float]
        self._critic_losses = []  # type: List[float]
        self._positive_weights = []  # type: List[float]
        self._zero_fractions = []  # type: List[float]

    @property
    def agent(self) -> Agent:
        return Agent(self.predictor, self.schedule, self.critic)

    def run(self) -> str:
        """
        Trains for ``total_steps`` environment steps and writes the metrics file.
        If a loss or state stops being finite the run stops with
        :class:`qvpo.errors.NumericalError`; rows written so far stay on disk.

        Returns:
            str: Path of the metrics file.
        """
        config = self.config
        os.makedirs(config.output_dir, exist_ok=True)
        logger.info("Training on %s for %d steps (seed %d), writing %s",
                    config.env, config.total_steps, config.seed, config.metrics_path)
        last_row = None  # type: Optional[MetricsRow]
        with CSVWriter(config.metrics_path) as writer:
            obs = self.env.reset(self._env_rng)
            for step in range(1, config.total_steps + 1):
                self.step = step
                try:
                    obs = self._interact(obs)
                    if step > config.warmup_steps:
                        self._learn()
                except NumericalError:
                    logger.error("Numerical failure at step %d; metrics up to step %d are in %s",
                                 step, last_row.step if last_row else 0, config.metrics_path)
                    raise
                if step == config.warmup_steps:
                    logger.info("Warm-up finished after %d steps", step)
                if step % config.eval_interval == 0:
                    last_row = self._metrics_row()
                    writer.write_row(last_row)
            if config.total_steps > 0:
                # the end-of-run row; it repeats the last interval row when the step count lines up
                if last_row is None or last_row.step != config.total_steps:
                    last_row = self._metrics_row()
                writer.write_row(last_row)
        save_agent(config.agent_path, self.agent)
        return config.metrics_path

    def _interact(self, obs: np.ndarray) -> np.ndarray:
        if self.step <= self.config.warmup_steps:
            action = self._env_rng.uniform(self.spec.action_low, self.spec.action_high)
        else:
            action = behavior_select(self.predictor, self.schedule, self.critic, obs, self.config.k_b,
                                     self._act_rng, self.spec.action_bounds)
        next_obs, reward, done = self.env.step(action)
        self.buffer.push(Transition(obs, action, reward, next_obs, done))
        if done:
            self.episodes += 1
            return self.env.reset(self._env_rng)
        return next_obs

    def _learn(self):
        config = self.config
        batch = self.buffer.sample_batch(config.batch_size, self._learn_rng)
        weighted = build_training_batch(self.predictor, self.schedule, self.critic, batch.states,
                                        self.policy_config, self._learn_rng)
        policy_loss, self.predictor, self.actor_adam = policy_update(self.predictor, self.actor_adam, self.schedule,
                                                                     weighted, self._learn_rng)
        targets = self.critic.td_target(self.predictor, self.schedule, batch, config.k_t, self._learn_rng,
                                        self.spec.action_bounds)
        critic_loss = self.critic.update(batch.states, batch.actions, targets)
        self.critic.polyak_update()

        mean_positive, zero_fraction = selection_statistics(weighted)
        self._policy_losses.append(policy_loss)
        self._critic_losses.append(critic_loss)
        if mean_positive is not None:
            self._positive_weights.append(mean_positive)
        if zero_fraction is not None:
            self._zero_fractions.append(zero_fraction)
        logger.debug("step %d: policy loss %g, critic loss %g", self.step, policy_loss, critic_loss)

    def _metrics_row(self) -> MetricsRow:
        config = self.config
        eval_env = make_env(config.env, strict_gaussian=config.strict_gaussian)
        mean, std = evaluate(self.predictor, self.schedule, self.critic, eval_env, config.eval_episodes,
                             config.k_eval, seed_stream(config.seed, 3, self._eval_round))
        coverage = [None, None, None]  # type: List[Optional[float]]
        if isinstance(eval_env, ContinuousBandit):
            samples = sample_actions(self.predictor, self.schedule, eval_env.reset(None), config.coverage_samples,
                                     seed_stream(config.seed, 4, self._eval_round), self.spec.action_bounds)
            coverage = [float(c) for c in mode_coverage(samples, eval_env.params.means, config.coverage_radius)]
        self._eval_round += 1

        row = MetricsRow(self.step, self.episodes, mean, std,
                         _mean_or_none(self._policy_losses), _mean_or_none(self._critic_losses),
                         _mean_or_none(self._positive_weights), _mean_or_none(self._zero_fractions),
                         *coverage)
        self._policy_losses, self._critic_losses = [], []
        self._positive_weights, self._zero_fractions = [], []
        logger.info("step %d: %d episodes, eval return %.4g +/- %.4g", row.step, row.episodes, mean, std)
        return row


def _mean_or_none(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def train(config: TrainConfig) -> str:
    """ Runs a full training job and returns the path of its metrics file. """
    return Trainer(config).run()
