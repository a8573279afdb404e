"""
Self-checks of the engine against independent reference computations.
An :class:`OracleSuite` collects :class:`Oracle` objects with builder methods
and evaluates them into :class:`Result` records, which
:func:`qvpo_analyzer.analyze.analyze` writes out as pass/fail lines.
"""
import math
from typing import Callable, List, Optional, Sequence
import numpy as np
import more_itertools
from qvpo.critic import TwinCritic, mse_loss
from qvpo.diffusion import NoisePredictor, build_schedule, forward_noise, weighted_ddpm_loss
from qvpo.envs import BanditParams, bandit_reward
from qvpo.neural import gradient_check
from qvpo.policy import WeightedBatch, behavior_select, qadv_weights, qcut_weights
from qvpo.utils import seed_stream
from qvpo_analyzer.verify import GridPolicy, optimal_one_step_policy, total_variation

# An oracle function receives a generator plus its own arguments and returns
# None when the check holds, or a short description of what went wrong.
OracleFunction = Callable[..., Optional[str]]


class Oracle(object):
    """ One named check with fixed arguments. """

    def __init__(self, name: str, function: OracleFunction, *args):
        self._name = name
        self._function = function
        self._args = args

    def run(self, rng: np.random.Generator) -> Optional[str]:
        return self._function(rng, *self._args)

    def __repr__(self) -> str:
        return "{name}:{args}".format(name=self._name, args="-".join(map(_format_arg, self._args)))


def _format_arg(arg) -> str:
    # sequences print as 1+10+20 so a repr never contains a comma
    if isinstance(arg, (tuple, list)):
        return "+".join(map(str, arg))
    return str(arg)


class Result(object):
    """ The outcome of one oracle. """

    def __init__(self, oracle: Oracle, failure: Optional[str] = None):
        self.oracle = oracle
        self.failure = failure

    @property
    def is_passing(self) -> bool:
        return self.failure is None


class OracleSuite(object):
    """ An ordered set of oracles. Builder methods return the suite so calls can be chained. """

    def __init__(self):
        self._oracles = []  # type: List[Oracle]

    def schedule_invariants(self, trials: int = 200):
        """ Random valid schedules keep 0 < beta < 1, a strictly decreasing running
        product that equals the product of alphas step by step, and sigma^2 = beta. """
        self._oracles.append(Oracle('schedule-invariants', _schedule_invariants, trials))
        return self

    def forward_noise_moments(self, draws: int = 100000, steps: Sequence[int] = (1, 10, 20)):
        """ Monte-Carlo mean and variance of forward noising match the closed form within 3 standard errors. """
        self._oracles.append(Oracle('forward-noise-moments', _forward_noise_moments, draws, tuple(steps)))
        return self

    def gradient_integrity(self, points: int = 10, hidden: int = 256):
        """ Backprop agrees with finite differences for the noise predictor's weighted
        loss and for both critics' squared error. """
        self._oracles.append(Oracle('gradient-integrity', _gradient_integrity, points, hidden))
        return self

    def optimum_equivalence(self, grid: int = 100):
        """ The grid optimum matches an exhaustive loop-based normalization, in the
        positive branch and in the all-negative branch. """
        self._oracles.append(Oracle('optimum-equivalence', _optimum_equivalence, grid))
        return self

    def transform_properties(self, trials: int = 10000):
        """ qadv is nonnegative and shift-invariant, qcut has one nonzero entry, and the
        positive branch of the grid optimum ignores positive rescaling of Q. """
        self._oracles.append(Oracle('transform-properties', _transform_properties, trials))
        return self

    def selection_monotonicity(self, trials: int = 1000, ks: Sequence[int] = (1, 2, 4, 8), hidden: int = 64):
        """ The mean value of the selected action does not drop as more candidates are drawn. """
        self._oracles.append(Oracle('selection-monotonicity', _selection_monotonicity, trials, tuple(ks), hidden))
        return self

    def bandit_reward_positive(self, samples: int = 10000):
        """ The bandit reward is strictly positive across the action box. """
        self._oracles.append(Oracle('bandit-reward-positive', _bandit_reward_positive, samples))
        return self

    def custom(self, oracle: Oracle):
        self._oracles.append(oracle)
        return self

    def evaluate(self, seed: int = 0) -> List[Result]:
        """ Runs every oracle, each with its own generator derived from ``seed``. """
        results = []
        for i, oracle in enumerate(self._oracles):
            results.append(Result(oracle, oracle.run(seed_stream(seed, 100, i))))
        return results

    def __repr__(self) -> str:
        return ",".join(str(oracle) for oracle in self._oracles)


def default_suite(quick: bool = False) -> OracleSuite:
    """ Every oracle at full size, or with reduced sample counts when ``quick``. """
    if quick:
        return OracleSuite() \
            .schedule_invariants(20) \
            .forward_noise_moments(20000) \
            .gradient_integrity(2, 32) \
            .optimum_equivalence(20) \
            .transform_properties(500) \
            .selection_monotonicity(300, (1, 4), 16) \
            .bandit_reward_positive(1000)
    return OracleSuite() \
        .schedule_invariants() \
        .forward_noise_moments() \
        .gradient_integrity() \
        .optimum_equivalence() \
        .transform_properties() \
        .selection_monotonicity() \
        .bandit_reward_positive()


def _schedule_invariants(rng: np.random.Generator, trials: int) -> Optional[str]:
    for _ in range(trials):
        T = int(rng.integers(1, 51))
        beta_min = float(rng.uniform(1e-5, 0.1))
        beta_max = float(rng.uniform(beta_min, 0.5))
        for kind in ("linear", "vp"):
            schedule = build_schedule(T, beta_min, beta_max, kind)
            if not np.all((schedule.betas > 0) & (schedule.betas < 1)):
                return "{} schedule T={} has a beta outside (0, 1)".format(kind, T)
            if np.any(np.diff(schedule.alpha_bars) >= 0):
                return "{} schedule T={} has a running product that does not decrease".format(kind, T)
            if schedule.alpha_bars[0] != schedule.alphas[0]:
                return "{} schedule T={} starts its running product at the wrong value".format(kind, T)
            for t in range(2, T + 1):
                if schedule.alpha_bar(t) != schedule.alpha_bar(t - 1) * schedule.alpha(t):
                    return "{} schedule T={} breaks the running product at step {}".format(kind, T, t)
            if not np.allclose(schedule.sigmas ** 2, schedule.betas, rtol=1e-12, atol=0):
                return "{} schedule T={} has sigma^2 != beta".format(kind, T)
    return None


def _forward_noise_moments(rng: np.random.Generator, draws: int, steps: Sequence[int]) -> Optional[str]:
    schedule = build_schedule(20)
    a0 = 0.7
    eps = rng.standard_normal(draws)
    for t in steps:
        samples = forward_noise(schedule, np.full(draws, a0), t, eps)
        mean_expected = math.sqrt(schedule.alpha_bar(t)) * a0
        var_expected = 1.0 - schedule.alpha_bar(t)
        mean_se = math.sqrt(var_expected / draws)
        var_se = var_expected * math.sqrt(2.0 / (draws - 1))
        if abs(samples.mean() - mean_expected) > 3 * mean_se:
            return "step {}: mean {:.6g} vs {:.6g}".format(t, samples.mean(), mean_expected)
        if abs(samples.var(ddof=1) - var_expected) > 3 * var_se:
            return "step {}: variance {:.6g} vs {:.6g}".format(t, samples.var(ddof=1), var_expected)
    return None


def _gradient_integrity(rng: np.random.Generator, points: int, hidden: int) -> Optional[str]:
    schedule = build_schedule(20)
    for point in range(points):
        state_dim, action_dim, n = 3, 2, 8
        predictor = NoisePredictor.create(state_dim, action_dim, rng, hidden=(hidden, hidden))
        batch = WeightedBatch(rng.standard_normal((n, state_dim)), rng.uniform(-1, 1, (n, action_dim)),
                              rng.uniform(0, 2, n))
        loss_seed = int(rng.integers(2 ** 31))
        error = gradient_check(
            lambda p: weighted_ddpm_loss(schedule, predictor, batch, np.random.default_rng(loss_seed), params=p),
            predictor.params, rng)
        if error >= 1e-4:
            return "noise predictor at point {}: relative error {:.3g}".format(point, error)

        critic = TwinCritic.create(state_dim, action_dim, rng, hidden=(hidden, hidden))
        x = np.concatenate([rng.standard_normal((n, state_dim)), rng.uniform(-1, 1, (n, action_dim))], axis=1)
        targets = rng.standard_normal(n)
        for name, params in (("q1", critic.q1), ("q2", critic.q2)):
            error = gradient_check(lambda p: mse_loss(p, x, targets), params, rng)
            if error >= 1e-4:
                return "critic {} at point {}: relative error {:.3g}".format(name, point, error)
    return None


def brute_force_optimal(prior: np.ndarray, q: np.ndarray) -> np.ndarray:
    """ Cell-by-cell evaluation of the one-step optimum, written without array operations. """
    flat_prior = [float(v) for v in np.ravel(prior)]
    flat_q = [float(v) for v in np.ravel(q)]
    out = [0.0] * len(flat_q)
    if any(v > 0.0 for v in flat_q):
        products = [p * v if v > 0.0 else 0.0 for p, v in zip(flat_prior, flat_q)]
        normalizer = math.fsum(products)
        out = [v / normalizer for v in products]
    else:
        best = flat_q[0]
        for v in flat_q:
            if v > best:
                best = v
        cells = [i for i, (p, v) in enumerate(zip(flat_prior, flat_q)) if v == best and p > 0.0]
        for i in cells:
            out[i] = 1.0 / len(cells)
    return np.array(out).reshape(np.shape(q))


def _optimum_equivalence(rng: np.random.Generator, grid: int) -> Optional[str]:
    prior = GridPolicy.uniform((grid, grid))
    q = bandit_reward(BanditParams(), prior.cell_centers()).reshape(grid, grid)
    shifted = q - q.max() - 1.0
    random_prior = GridPolicy(rng.dirichlet(np.ones(grid * grid)).reshape(grid, grid))
    for label, p, values in (("positive", prior, q), ("negative", prior, shifted),
                             ("positive/random prior", random_prior, q),
                             ("negative/random prior", random_prior, shifted)):
        distance = total_variation(optimal_one_step_policy(p, values).masses, brute_force_optimal(p.masses, values))
        if distance >= 1e-12:
            return "{} branch: total variation {:.3g}".format(label, distance)
    return None


def _transform_properties(rng: np.random.Generator, trials: int) -> Optional[str]:
    for trial in range(trials):
        n = int(rng.integers(1, 65))
        scale = 10.0 ** rng.uniform(-3, 3)
        q = rng.standard_normal(n) * scale
        shift = float(rng.standard_normal() * scale * 10)

        adv = qadv_weights(q)
        if np.any(adv < 0):
            return "trial {}: negative qadv weight".format(trial)
        if not np.allclose(qadv_weights(q + shift), adv, rtol=1e-9, atol=1e-9 * (scale + abs(shift))):
            return "trial {}: qadv changed under a shift of {:.3g}".format(trial, shift)

        cut = qcut_weights(q, 1e-6)
        if np.any(cut < 0) or np.count_nonzero(cut) > 1:
            return "trial {}: qcut weights {} are not single-support and nonnegative".format(trial, cut)

        cells = int(rng.integers(2, 17))
        prior = GridPolicy(rng.dirichlet(np.ones(cells)), low=(0.0,), high=(1.0,))
        values = rng.standard_normal(cells)
        values[int(rng.integers(cells))] = abs(values[0]) + 0.1
        factor = 10.0 ** rng.uniform(-3, 3)
        if not np.allclose(optimal_one_step_policy(prior, values * factor).masses,
                           optimal_one_step_policy(prior, values).masses, rtol=1e-12, atol=1e-15):
            return "trial {}: grid optimum changed under scaling by {:.3g}".format(trial, factor)
    return None


def _selection_monotonicity(rng: np.random.Generator, trials: int, ks: Sequence[int], hidden: int) -> Optional[str]:
    params = BanditParams()
    bounds = (params.action_low, params.action_high)
    schedule = build_schedule(20)
    predictor = NoisePredictor.create(1, 2, rng, hidden=(hidden, hidden))
    critic = TwinCritic.create(1, 2, rng, hidden=(hidden, hidden))
    states = np.zeros((trials, 1))
    stats = []
    for k in ks:
        chosen = behavior_select(predictor, schedule, critic, states, k, rng, bounds)
        values = critic.q_min(states, chosen)
        stats.append((k, values.mean(), values.std(ddof=1) / math.sqrt(trials)))
    for (k1, m1, se1), (k2, m2, se2) in more_itertools.windowed(stats, 2):
        if m2 < m1 - 3.0 * math.hypot(se1, se2):
            return "mean selected value fell from {:.4g} (K={}) to {:.4g} (K={})".format(m1, k1, m2, k2)
    return None


def _bandit_reward_positive(rng: np.random.Generator, samples: int) -> Optional[str]:
    params = BanditParams()
    points = rng.uniform(params.action_low, params.action_high, size=(samples, 2))
    rewards = bandit_reward(params, points)
    if np.any(rewards <= 0):
        worst = points[int(np.argmin(rewards))]
        return "reward {:.3g} at {}".format(rewards.min(), worst)
    return None
