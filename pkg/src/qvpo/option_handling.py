"""
Training configuration: the :class:`TrainConfig` record, reading it from a
flat ``key = value`` file (or a YAML mapping), and applying command line
overrides.
"""
import os
import logging
from dataclasses import dataclass, fields, asdict
from typing import Any, Dict, IO, Optional
import yaml
from qvpo.envs import ENVIRONMENTS, EnvSpec
from qvpo.diffusion import SCHEDULE_KINDS
from qvpo.errors import ConfigurationError
from qvpo.policy import PolicyConfig, TRANSFORMS, ENTROPY_WEIGHTINGS

logger = logging.getLogger(__name__)

INT_OPTIONS = ['total_steps', 'seed', 'n_d', 'n_e', 'k_b', 'k_t', 'n_selected',
               'batch_size', 'buffer_capacity', 'diffusion_steps', 'hidden_size',
               'eval_interval', 'eval_episodes', 'k_eval', 'warmup_steps', 'coverage_samples']

FLOAT_OPTIONS = ['omega_ent', 'qcut_epsilon', 'gamma', 'tau', 'actor_lr', 'critic_lr',
                 'beta_min', 'beta_max', 'coverage_radius']

STRING_OPTIONS = ['env', 'transform', 'entropy_weighting', 'beta_schedule', 'output_dir', 'run_id']

FLAGS = ['strict_gaussian']


@dataclass
class TrainConfig:
    """
    Everything a training run depends on. Identical configs give identical
    metrics files.

    Args:
        env (str): "bandit" or "pendulum".
        total_steps (int): Environment steps to run; each one after warm-up
            is followed by one policy and one critic update.
        seed (int): Master seed for every random stream of the run.
        n_d, n_e, k_b, k_t, omega_ent, transform, qcut_epsilon, n_selected,
            entropy_weighting: Policy settings, see :class:`qvpo.policy.PolicyConfig`.
        gamma (float): Discount.
        tau (float): Shadow network averaging coefficient.
        batch_size (int): Transitions per update.
        buffer_capacity (int): Replay buffer size.
        actor_lr, critic_lr (float): Adam learning rates.
        diffusion_steps (int): T.
        beta_min, beta_max (float): Linear schedule range.
        beta_schedule (str): "linear" or "vp".
        hidden_size (int): Width of both hidden layers of every network.
        eval_interval (int): Steps between metrics rows.
        eval_episodes (int): Episodes per evaluation.
        k_eval (int): Candidates drawn per action during evaluation.
        warmup_steps (int): Initial steps taken with uniform random actions and no learning.
        coverage_samples (int): Policy samples used to measure bandit mode coverage.
        coverage_radius (float): Distance from a peak that counts as covering it.
        strict_gaussian (bool): Use the Gaussian exponent in the bandit reward.
        output_dir (str): Where the metrics file and agent are written.
        run_id (str): Prefix of the output file names.
    """
    env: str = "bandit"
    total_steps: int = 20000
    seed: int = 0
    n_d: int = 64
    n_e: int = 10
    k_b: int = 4
    k_t: int = 2
    omega_ent: float = 0.01
    transform: str = "qadv"
    qcut_epsilon: float = 1e-6
    n_selected: int = 1
    entropy_weighting: str = "best"
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    buffer_capacity: int = 1000000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    diffusion_steps: int = 20
    beta_min: float = 1e-4
    beta_max: float = 0.02
    beta_schedule: str = "linear"
    hidden_size: int = 256
    eval_interval: int = 1000
    eval_episodes: int = 10
    k_eval: int = 32
    warmup_steps: int = 1000
    coverage_samples: int = 1000
    coverage_radius: float = 0.3
    strict_gaussian: bool = False
    output_dir: str = "."
    run_id: str = "qvpo"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigurationError("Environment '{}' not recognized".format(self.env))
        if self.transform not in TRANSFORMS:
            raise ConfigurationError("Weight transform '{}' not recognized".format(self.transform))
        if self.entropy_weighting not in ENTROPY_WEIGHTINGS:
            raise ConfigurationError("Entropy weighting '{}' not recognized".format(self.entropy_weighting))
        if self.beta_schedule not in SCHEDULE_KINDS:
            raise ConfigurationError("Beta schedule '{}' not recognized".format(self.beta_schedule))
        for name in ['n_d', 'k_b', 'k_t', 'n_selected', 'batch_size', 'buffer_capacity', 'diffusion_steps',
                     'hidden_size', 'eval_interval', 'eval_episodes', 'k_eval', 'coverage_samples']:
            if getattr(self, name) < 1:
                raise ConfigurationError("{} must be positive, got {}".format(name, getattr(self, name)))
        for name in ['total_steps', 'n_e', 'warmup_steps']:
            if getattr(self, name) < 0:
                raise ConfigurationError("{} must not be negative, got {}".format(name, getattr(self, name)))
        if self.k_t > self.k_b:
            raise ConfigurationError("k_t ({}) must not exceed k_b ({})".format(self.k_t, self.k_b))
        if self.n_selected > self.n_d:
            raise ConfigurationError("n_selected ({}) must not exceed n_d ({})".format(self.n_selected, self.n_d))
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1], got {}".format(self.tau))
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1), got {}".format(self.gamma))
        if not 0.0 < self.beta_min <= self.beta_max < 1.0:
            raise ConfigurationError("Beta range must satisfy 0 < beta_min <= beta_max < 1")
        if self.beta_schedule == "vp" and (self.beta_min, self.beta_max) != (1e-4, 0.02):
            raise ConfigurationError("The vp schedule does not take a beta range")
        if self.omega_ent < 0 or self.qcut_epsilon <= 0:
            raise ConfigurationError("omega_ent must be nonnegative and qcut_epsilon positive")
        if self.actor_lr <= 0 or self.critic_lr <= 0 or self.coverage_radius <= 0:
            raise ConfigurationError("Learning rates and the coverage radius must be positive")

    def policy_config(self, spec: EnvSpec) -> PolicyConfig:
        return PolicyConfig(spec.action_low, spec.action_high, n_d=self.n_d, n_e=self.n_e, k_b=self.k_b,
                            k_t=self.k_t, omega_ent=self.omega_ent, transform=self.transform,
                            qcut_epsilon=self.qcut_epsilon, n_selected=self.n_selected,
                            entropy_weighting=self.entropy_weighting)

    @property
    def hidden(self):
        return (self.hidden_size, self.hidden_size)

    @property
    def metrics_path(self) -> str:
        return os.path.join(self.output_dir, "{}_metrics.csv".format(self.run_id))

    @property
    def agent_path(self) -> str:
        return os.path.join(self.output_dir, "{}_agent.npz".format(self.run_id))

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


CONFIG_KEYS = [f.name for f in fields(TrainConfig)]


def parse_value(text: str) -> Any:
    """ Types a raw config value the way YAML would (``true``, ``12``, ``0.5``, ``qadv``). """
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError("Could not parse config value '{}': {}".format(text, e))


def _coerce(key: str, value: Any) -> Any:
    if key in FLAGS:
        if not isinstance(value, bool):
            raise ConfigurationError("{} must be true or false, got '{}'".format(key, value))
        return value
    if key in STRING_OPTIONS:
        return str(value)
    if isinstance(value, bool):
        raise ConfigurationError("{} must be a number, got '{}'".format(key, value))
    if isinstance(value, str):
        # PyYAML reads exponent notation without a dot ("1e-4") as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError("{} must be a number, got '{}'".format(key, value))
    if key in INT_OPTIONS:
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigurationError("{} must be an integer, got {}".format(key, value))
            value = int(value)
        if not isinstance(value, int):
            raise ConfigurationError("{} must be an integer, got '{}'".format(key, value))
        return value
    if not isinstance(value, (int, float)):
        raise ConfigurationError("{} must be a number, got '{}'".format(key, value))
    return float(value)


def read_config(handle: IO[str], yaml_format: bool = False) -> Dict[str, Any]:
    """
    Reads raw config values from an open file.

    The default format is one ``key = value`` pair per line; ``#`` starts a
    comment and blank lines are skipped. With ``yaml_format`` the file must
    hold a single flat YAML mapping.
    """
    if yaml_format:
        try:
            data = yaml.safe_load(handle)
        except yaml.YAMLError as e:
            raise ConfigurationError("Could not parse YAML config: {}".format(e))
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigurationError("A YAML config must be a mapping of option names to values")
        return data
    values = {}
    for lineno, line in enumerate(handle, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError("Line {} of the config is not a 'key = value' pair".format(lineno))
        key, value = line.split("=", 1)
        key = key.strip()
        if key in values:
            raise ConfigurationError("Option '{}' is set twice (line {})".format(key, lineno))
        values[key] = parse_value(value.strip())
    return values


def load_config_file(path: str) -> Dict[str, Any]:
    """ Opens and reads a config file; ``.yaml``/``.yml`` files are read as YAML. """
    with open(path) as handle:
        values = read_config(handle, yaml_format=path.endswith((".yaml", ".yml")))
    logger.info("Read %d options from %s", len(values), path)
    return values


def build_config(values: Optional[Dict[str, Any]] = None, **overrides) -> TrainConfig:
    """
    Creates a validated :class:`TrainConfig` from raw values, with ``overrides``
    taking precedence. Keys must be exactly the option names.
    """
    merged = dict(values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError("Option '{}' not recognized".format(unknown[0]))
    config = TrainConfig(**{key: _coerce(key, value) for key, value in merged.items()})
    logger.debug("Configuration: %s", config.as_dict())
    return config
