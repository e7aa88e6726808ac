import numpy as np
import pytest
from hypothesis import given, strategies as st

from safe_mdp import fixtures as F
from safe_mdp.bounds import (bellman_residual, bound_report_set, corollary_bound, lemma1_bound,
                             lemma2_bounds, nominal_norm_term, performance_loss, robust_norm_term,
                             thm1_bound, thm2_4_bound, thm5_bound, thm5_first_branch,
                             weighted_error_norm)
from safe_mdp.mdp import (Mdp, Policy, all_deterministic_policies, evaluate_policy, induced_kernel,
                          return_of)
from safe_mdp.oracle import bellman_residual_loops, enumerate_optimal_policy
from safe_mdp.robust import robust_policy_values
from safe_mdp.safe import adjust_rewards, solve_rbc
from safe_mdp.uncertainty import ErrorFunction, UncertaintySet, row_distances, sample_member


def single_state(gamma=0.9):
    return Mdp([[1.0]], [[[1.0]]], [1.0], gamma, 1.0)


# closed forms

def test_lemma1_single_state():
    pi = Policy.deterministic([0], 1)
    assert lemma1_bound(single_state(), np.array([[0.1]]), pi) == pytest.approx(9.0, rel=1e-12)


def test_thm1_value():
    assert thm1_bound(0.9, 1.0, np.array([[0.1]])) == pytest.approx(18.0, rel=1e-12)


def test_weighted_norm_value():
    pi = Policy.deterministic([0, 0], 1)
    assert weighted_error_norm(np.array([[0.1], [0.3]]), pi, [0.5, 0.5]) == pytest.approx(0.2)


def test_corollary_value_and_validation():
    assert corollary_bound(0.1, 0.5, 0.0, 10.0) == pytest.approx(0.2)
    assert corollary_bound(10.0, 0.5, 0.0, 3.0) == 3.0
    with pytest.raises(ValueError):
        corollary_bound(-1.0, 0.5, 0.0, 1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_lemma1_uniform_error_closed_form(seed, c):
    rng = np.random.default_rng(seed)
    m = F.random_mdp(rng, 4, 2)
    pi = F.random_policy(rng, 4, 2, deterministic=False)
    e = np.full((4, 2), c)
    g = m.discount
    assert lemma1_bound(m, e, pi) == pytest.approx(g * m.r_max * c / (1 - g) ** 2, rel=1e-10, abs=1e-12)


# value-difference bounds against sampled members

def test_lemma1_holds_for_members():
    rng = np.random.default_rng(21)
    for _ in range(100):
        u = F.random_uset(rng, 4, 2, e_max=0.5)
        pi = F.random_policy(rng, 4, 2, deterministic=bool(rng.integers(2)))
        tm = u.nominal.replace(transition=sample_member(u, rng))
        gap = abs(return_of(tm, pi) - return_of(u.nominal, pi))
        assert gap <= lemma1_bound(tm, u.budget, pi) + 1e-9


def test_lemma2_sandwich():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        m1 = F.random_mdp(rng, 4, 2)
        m2 = m1.replace(transition=rng.dirichlet(np.ones(4), size=(4, 2)))
        pi1 = F.random_policy(rng, 4, 2)
        pi2 = F.random_policy(rng, 4, 2)
        P1, _ = induced_kernel(m1, pi1)
        P2, _ = induced_kernel(m2, pi2)
        lo, hi = lemma2_bounds(m1, m2, pi1, pi2, row_distances(P1, P2))
        d = evaluate_policy(m1, pi1) - evaluate_policy(m2, pi2)
        assert np.all(lo <= d + 1e-9) and np.all(d <= hi + 1e-9)


def test_lemma2_rejects_small_gap(rng):
    m1 = F.random_mdp(rng, 3, 1)
    m2 = m1.replace(transition=rng.dirichlet(np.ones(3), size=(3, 1)))
    pi = Policy.deterministic([0, 0, 0], 1)
    with pytest.raises(ValueError):
        lemma2_bounds(m1, m2, pi, pi, np.zeros(3))


# performance loss and loss bounds

def test_performance_loss_matches_enumeration(rng):
    for _ in range(20):
        m = F.random_mdp(rng, 3, 3)
        pi = F.random_policy(rng, 3, 3)
        _, best = enumerate_optimal_policy(m)
        assert performance_loss(m, pi) == pytest.approx(best - return_of(m, pi), abs=1e-10)
        assert performance_loss(m, pi) >= -1e-10


@given(st.integers(0, 2**32 - 1))
def test_thm5_dominates_thm2_4_first_branch(seed):
    rng = np.random.default_rng(seed)
    u = F.random_uset(rng, 3, 2, e_max=0.5)
    base = F.random_policy(rng, 3, 2)
    tm = u.nominal
    assert thm5_first_branch(tm, u.budget, base) >= thm2_4_bound(tm, u.budget, np.inf) - 1e-12
    assert 0.0 <= thm5_bound(tm, u.budget, base) <= performance_loss(tm, base) + 1e-12


def test_zero_error_bounds_vanish(rng):
    m = F.random_mdp(rng, 3, 2)
    e = np.zeros((3, 2))
    base = F.random_policy(rng, 3, 2)
    assert thm1_bound(0.9, 1.0, e) == 0.0
    assert thm2_4_bound(m, e, 5.0) == 0.0
    assert thm5_bound(m, e, base) == 0.0


def test_tightness_fixture():
    fx = F.tight_regret()
    res = solve_rbc(fx.uset, fx.baseline)
    loss = performance_loss(fx.true_mdp, res.policy)
    assert loss == pytest.approx(thm5_first_branch(fx.true_mdp, fx.error, fx.baseline), abs=1e-9)
    assert loss == pytest.approx(1.0, abs=1e-12)


# residuals and norm terms

@pytest.mark.parametrize("c", [0.0, 0.3, -2.0])
def test_residual_of_shifted_fixed_point(rng, c):
    m = F.random_mdp(rng, 4, 2)
    pi, _ = enumerate_optimal_policy(m)
    v = evaluate_policy(m, pi)
    assert bellman_residual("adjusted_nominal", m, v + c) == pytest.approx((1 - m.discount) * abs(c),
                                                                           abs=1e-12)


def test_residuals_match_loops(rng):
    for _ in range(20):
        u = F.random_uset(rng, 3, 2, e_max=0.6)
        adj = adjust_rewards(u.nominal, u.error)
        v = rng.normal(size=3)
        w = rng.normal(size=9)
        lam = tuple(rng.uniform(0, 2, size=2))
        for op, ctx, vec in (("adjusted_nominal", adj, v), ("robust", u, v),
                             ("augmented_robust", u, w)):
            assert abs(bellman_residual(op, ctx, vec, lam)
                       - bellman_residual_loops(op, ctx, vec, lam)) <= 1e-12


def test_unknown_operator(rng):
    with pytest.raises(ValueError):
        bellman_residual("nope", F.random_mdp(rng, 2, 1), np.zeros(2))


def test_norm_terms_against_enumeration(rng):
    u = F.random_uset(rng, 3, 2, e_max=0.4)
    m = u.nominal
    scale = 2 * m.discount * m.r_max / (1 - m.discount) ** 2
    nt1, exact1 = nominal_norm_term(m, u.budget)
    nt2, exact2 = robust_norm_term(u)
    assert exact1 and exact2
    assert nt2 <= nt1 + 1e-12 <= scale * u.budget.max() + 2e-12
    # robust term: explicit min over the worst member for each policy
    best = 0.0
    em = m.replace(reward=u.budget, r_max=float(u.budget.max()), reward_bounded=False)
    for acts in all_deterministic_policies(3, 2):
        pi = Policy.deterministic(acts, 2)
        v, _ = robust_policy_values(UncertaintySet(em, u.error), pi)
        best = max(best, (1 - m.discount) * float(m.initial_dist @ v))
    assert nt2 == pytest.approx(scale * best, abs=1e-12)


def test_norm_term_relaxes_on_large_models(rng):
    m = F.random_mdp(rng, 8, 2)
    e = ErrorFunction.constant(0.1, 8, 2)
    val, exact = nominal_norm_term(m, e)
    assert not exact and val == pytest.approx(2 * 0.9 * 0.1 / 0.01)


# report sets

@pytest.mark.parametrize("make", [F.dominance_left, F.dominance_right, F.two_component,
                                  F.tight_regret, F.flat_penalty])
def test_report_set_holds_on_fixtures(make):
    fx = make()
    reports = bound_report_set(fx.true_mdp, fx.simulator, fx.error, fx.baseline)
    names = [r.bound_name for r in reports]
    assert names == ["lemma1", "thm1", "thm2", "thm3", "thm4", "thm5", "cor1", "cor2", "cor3"]
    for r in reports:
        assert r.holds, r.to_dict()
        assert r.inputs_digest["assumption_holds"]
