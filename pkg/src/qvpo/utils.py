import math
from typing import List
import numpy as np


def seed_stream(seed: int, *key: int) -> np.random.Generator:
    """
    Returns the generator for one named random stream of a run.

    Streams are derived from the master seed with an explicit spawn key, so
    the draws made by one part of the trainer never shift the draws of
    another. The trainer uses these keys:

        (0,)      network initialization
        (1,)      environment resets and warm-up actions
        (2,)      behavior-policy sampling
        (3, r)    evaluation round r (split further per episode)
        (4, r)    mode-coverage samples for evaluation round r
        (5,)      policy and critic learning

    ``qvpo eval`` uses ``(3, 0)`` for the agent and ``(6,)`` for the uniform
    baseline; the oracle suite gives oracle ``i`` the key ``(100, i)``.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def spawn_generators(rng: np.random.Generator, n: int) -> List[np.random.Generator]:
    """ Splits ``rng`` into ``n`` independent child generators, one per episode. """
    return rng.spawn(n)


def wrap_angle(theta: float) -> float:
    """ Maps an angle into the half-open interval (-pi, pi]. """
    return -((-theta + math.pi) % (2.0 * math.pi) - math.pi)
