"""
Reference computations the trained engine is checked against: the optimal
one-step policy improvement on a discretized action grid, and the fraction
of sampled actions that land near each reward peak.
"""
from typing import Sequence, Tuple
import numpy as np
from qvpo.errors import ContractViolation, DegenerateInputError


class GridPolicy(object):
    """
    A probability mass function over the cells of a regular grid covering an
    action box. ``masses`` may have any shape; for the 2-D bandit it is
    ``(n, n)`` with axis 0 running along the first action coordinate.
    """

    def __init__(self, masses: np.ndarray, low: Sequence[float] = (-2.0, -2.0), high: Sequence[float] = (2.0, 2.0)):
        masses = np.asarray(masses, dtype=np.float64)
        if np.any(masses < 0.0) or abs(masses.sum() - 1.0) > 1e-9:
            raise ContractViolation("Grid masses must be nonnegative and sum to 1 (sum is {})".format(masses.sum()))
        self.masses = masses
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)

    @classmethod
    def uniform(cls, shape: Tuple[int, ...], low=(-2.0, -2.0), high=(2.0, 2.0)) -> 'GridPolicy':
        masses = np.full(shape, 1.0 / int(np.prod(shape)))
        return cls(masses, low, high)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.masses.shape

    def cell_centers(self) -> np.ndarray:
        """ Centers of a 2-D grid as an ``(n * m, 2)`` array in the same order as ``masses.ravel()``. """
        assert self.masses.ndim == 2
        xs = [self.low[i] + (np.arange(self.shape[i]) + 0.5) * (self.high[i] - self.low[i]) / self.shape[i]
              for i in range(2)]
        gx, gy = np.meshgrid(xs[0], xs[1], indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def optimal_one_step_policy(grid_prior: GridPolicy, q_on_grid: np.ndarray) -> GridPolicy:
    """
    The policy that maximizes the expected value in one improvement step,
    restricted to the grid.

    If some cell has a positive value, mass is proportional to ``prior * Q``
    on those cells and zero elsewhere. If no value is positive, mass is spread
    evenly over the cells that attain the maximum value (by exact equality)
    and have positive prior.

    Raises:
        DegenerateInputError: The prior has no mass where the result would need it.
    """
    prior = grid_prior.masses
    q = np.asarray(q_on_grid, dtype=np.float64)
    if q.shape != prior.shape:
        raise ContractViolation("Value grid shape {} does not match prior shape {}".format(q.shape, prior.shape))
    positive = q > 0.0
    if np.any(positive):
        unnormalized = np.where(positive, prior * q, 0.0)
        total = unnormalized.sum()
        if total <= 0.0:
            raise DegenerateInputError("The prior puts no mass on any cell with a positive value")
        return GridPolicy(unnormalized / total, grid_prior.low, grid_prior.high)
    best = q.max()
    support = (q == best) & (prior > 0.0)
    count = int(support.sum())
    if count == 0:
        raise DegenerateInputError("The prior puts no mass on the best-valued cells")
    return GridPolicy(np.where(support, 1.0 / count, 0.0), grid_prior.low, grid_prior.high)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def mode_coverage(actions: np.ndarray, peaks: np.ndarray, radius: float) -> np.ndarray:
    """ Fraction of ``actions`` within Euclidean distance ``radius`` of each peak. """
    if radius <= 0:
        raise ContractViolation("Coverage radius must be positive, got {}".format(radius))
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, 2) if len(actions) else np.empty((0, 2))
    if actions.shape[0] == 0:
        raise ContractViolation("Cannot measure coverage of an empty action list")
    peaks = np.asarray(peaks, dtype=np.float64)
    distances = np.linalg.norm(actions[:, np.newaxis, :] - peaks[np.newaxis, :, :], axis=2)
    return np.mean(distances <= radius, axis=0)
