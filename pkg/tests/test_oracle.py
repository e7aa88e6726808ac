"""Checks on the reference implementations themselves."""

import numpy as np
import pytest

from safe_mdp import fixtures as F
from safe_mdp.mdp import Policy, return_of
from safe_mdp.oracle import (ball_extremes, brute_force_coupled_min, brute_force_robust_return,
                             brute_force_worst_response, enumerate_optimal_policy)
from safe_mdp.uncertainty import ErrorFunction, UncertaintySet


def test_constant_values_ignore_budget():
    assert brute_force_worst_response([0.2, 0.5, 0.3], 1.5, [4.0, 4.0, 4.0]) == pytest.approx(4.0)


def test_zero_budget_is_nominal():
    assert brute_force_worst_response([0.2, 0.8], 0.0, [1.0, -1.0]) == pytest.approx(-0.6)


def test_grid_guard():
    with pytest.raises(ValueError):
        brute_force_worst_response(np.full(5, 0.2), 0.1, np.arange(5.0))


def test_ball_extremes_stay_in_ball(rng):
    for _ in range(50):
        p = rng.dirichlet(np.ones(4))
        e = float(rng.uniform(0, 2))
        pts = ball_extremes(p, e)
        assert np.allclose(pts.sum(axis=1), 1.0) and np.all(pts >= -1e-15)
        assert np.all(np.abs(pts - p).sum(axis=1) <= e + 1e-12)


def test_enumerate_picks_first_of_ties():
    m = F.chain().replace(reward=[[0.0], [1.0]])
    pi, val = enumerate_optimal_policy(m)
    assert pi == Policy.deterministic([0, 0], 1) and val == pytest.approx(1.0)


def test_enumerate_guard(rng):
    with pytest.raises(ValueError):
        enumerate_optimal_policy(F.random_mdp(rng, 21, 2))


def test_robust_return_zero_budget(rng):
    m = F.random_mdp(rng, 3, 2)
    u = UncertaintySet(m, ErrorFunction.constant(0.0, 3, 2))
    pi = F.random_policy(rng, 3, 2)
    assert brute_force_robust_return(u, pi) == pytest.approx(return_of(m, pi), abs=1e-12)


def test_robust_return_monotone_in_budget(rng):
    m = F.random_mdp(rng, 3, 2)
    pi = F.random_policy(rng, 3, 2)
    vals = [brute_force_robust_return(UncertaintySet(m, ErrorFunction.constant(c, 3, 2)), pi)
            for c in (0.0, 0.2, 0.6, 2.0)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_coupled_min_of_baseline_is_zero(rng):
    u = F.random_uset(rng, 3, 2, e_max=0.5)
    base = F.random_policy(rng, 3, 2)
    assert brute_force_coupled_min(u, base, base) == 0.0


def test_dominance_right_constant_improvement():
    fx = F.dominance_right()
    m = fx.simulator
    best = max(brute_force_coupled_min(fx.uset, Policy.deterministic(acts, m.n_actions), fx.baseline)
               for acts in np.ndindex(*[m.n_actions] * m.n_states))
    assert best == pytest.approx(10.0 * m.initial_dist[0], abs=1e-9)
