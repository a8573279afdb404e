import numpy as np
import pytest
from qvpo_analyzer.oracles import Oracle, OracleSuite, brute_force_optimal, default_suite


def _always_fails(rng, message):
    return message


def _passes_on_even_draw(rng):
    return None if rng.integers(2) == 0 else "odd"


def test_oracle_repr():
    assert str(Oracle("check", _always_fails, 3, (1, 10, 20))) == "check:3-1+10+20"
    assert str(Oracle("plain", _always_fails)) == "plain:"


def test_suite_repr_is_comma_separated():
    suite = OracleSuite().schedule_invariants(5).bandit_reward_positive(10)
    assert str(suite) == "schedule-invariants:5,bandit-reward-positive:10"


def test_default_suite_covers_every_check():
    names = [s.split(":")[0] for s in str(default_suite()).split(",")]
    assert names == ["schedule-invariants", "forward-noise-moments", "gradient-integrity", "optimum-equivalence",
                     "transform-properties", "selection-monotonicity", "bandit-reward-positive"]
    assert len(str(default_suite(quick=True)).split(",")) == 7


def test_custom_failure_is_reported():
    results = OracleSuite().custom(Oracle("broken", _always_fails, "went wrong")).evaluate()
    assert len(results) == 1
    assert not results[0].is_passing
    assert results[0].failure == "went wrong"


def test_evaluate_is_deterministic():
    suite = OracleSuite()
    for _ in range(30):
        suite.custom(Oracle("coin", _passes_on_even_draw))
    first = [r.failure for r in suite.evaluate(seed=4)]
    second = [r.failure for r in suite.evaluate(seed=4)]
    assert first == second
    # each oracle has its own stream
    assert len(set(first)) == 2


def test_brute_force_positive():
    prior = np.full((2, 2), 0.25)
    q = np.array([[1.0, 0.0], [3.0, -1.0]])
    assert np.allclose(brute_force_optimal(prior, q), [[0.25, 0.0], [0.75, 0.0]])


def test_brute_force_negative():
    prior = np.array([[0.0, 0.5], [0.25, 0.25]])
    q = np.array([[-1.0, -2.0], [-1.0, -1.0]])
    assert np.allclose(brute_force_optimal(prior, q), [[0.0, 0.0], [0.5, 0.5]])


@pytest.mark.parametrize('suite', [
    OracleSuite().schedule_invariants(20),
    OracleSuite().optimum_equivalence(10),
    OracleSuite().transform_properties(200),
    OracleSuite().gradient_integrity(1, 16),
    OracleSuite().selection_monotonicity(200, (1, 4), 16),
    OracleSuite().bandit_reward_positive(500),
    ])
def test_oracles_pass(suite):
    result = suite.evaluate(seed=0)[0]
    assert result.is_passing, result.failure


def test_forward_noise_moments_mostly_pass():
    # a 3-standard-error check fails now and then by chance
    passed = sum(OracleSuite().forward_noise_moments(5000).evaluate(seed)[0].is_passing for seed in range(10))
    assert passed >= 8


@pytest.mark.slow
def test_full_suite_passes():
    failures = [(str(r.oracle), r.failure) for r in default_suite().evaluate(seed=0) if not r.is_passing]
    assert failures == []
