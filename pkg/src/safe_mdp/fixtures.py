"""Small hand-built instances and seeded random instances used by tests and the CLI."""

from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Policy
from .uncertainty import ErrorFunction, UncertaintySet, sample_member


@dataclass(frozen=True, eq=False)
class Fixture:
    simulator: Mdp
    error: ErrorFunction
    true_transition: np.ndarray
    baseline: Policy

    @property
    def uset(self):
        return UncertaintySet(self.simulator, self.error)

    @property
    def true_mdp(self):
        return self.simulator.replace(transition=self.true_transition)


def _onehot(n, k):
    v = np.zeros(n)
    v[k] = 1.0
    return v


def chain():
    """s0 -> s1 (reward 0), s1 self-loop (reward 1), discount 0.5."""
    P = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    return Mdp(np.array([[0.0], [1.0]]), P, [1.0, 0.0], 0.5, 1.0)


def chain_with_choice():
    """chain() plus action b at s0: self-loop with reward 0.9."""
    P = np.array([[[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]])
    R = np.array([[0.0, 0.9], [1.0, 1.0]])
    return Mdp(R, P, [1.0, 0.0], 0.5, 1.0)


def robust_pair():
    """g absorbing with reward 1 and budget 0.2, b absorbing with reward 0."""
    P = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
    m = Mdp(np.array([[1.0], [0.0]]), P, [1.0, 0.0], 0.5, 1.0)
    return UncertaintySet(m, ErrorFunction(np.array([[0.2], [0.0]])))


def dominance_left():
    """Both s0 actions lead to the same uncertain gamble at s1; a2 earns one extra
    unit first, so it dominates under every model, yet its worst case is poor.

    States: s0, s1, win, lose. Baseline takes a1.
    """
    n, A = 4, 2
    P = np.zeros((n, A, n))
    P[0, :, 1] = 1.0
    P[1, :] = [0.0, 0.0, 0.5, 0.5]
    P[2, :, 2] = 1.0
    P[3, :, 3] = 1.0
    R = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 1.0], [-1.0, -1.0]])
    sim = Mdp(R, P, _onehot(n, 0), 0.9, 1.0)
    e = np.zeros((n, A))
    e[1, :] = 0.8
    Pt = P.copy()
    Pt[1, :] = [0.0, 0.0, 0.8, 0.2]
    return Fixture(sim, ErrorFunction(e), Pt, Policy.deterministic([0, 0, 0, 0], A))


def dominance_right():
    """s0: a2 collects 10 and stops, a1 collects nothing. s1: an uncertain
    +10/-10 gamble shared by every policy. Start uniform on s0, s1.

    States: s0, s1, win, lose, end. Baseline takes a1.
    """
    n, A = 5, 2
    P = np.zeros((n, A, n))
    P[0, :, 4] = 1.0
    P[1, :] = [0.0, 0.0, 0.5, 0.5, 0.0]
    P[2, :, 4] = 1.0
    P[3, :, 4] = 1.0
    P[4, :, 4] = 1.0
    R = np.array([[0.0, 10.0], [0.0, 0.0], [10.0, 10.0], [-10.0, -10.0], [0.0, 0.0]])
    sim = Mdp(R, P, [0.5, 0.5, 0.0, 0.0, 0.0], 0.9, 10.0)
    e = np.zeros((n, A))
    e[1, :] = 1.0
    Pt = P.copy()
    Pt[1, :] = [0.0, 0.0, 0.9, 0.1, 0.0]
    return Fixture(sim, ErrorFunction(e), Pt, Policy.deterministic([0] * n, A))


def two_component():
    """A precisely known component (a0) and an imprecise one (b0, bg, bb).

    a0: a1 self-loop reward 0, a2 self-loop reward 0.5, no error.
    b0: a1 self-loop reward 0.5, a2 gamble to bg (+1) or bb (-1), budget 1.
    Baseline takes a1 everywhere.
    """
    n, A = 4, 2
    P = np.zeros((n, A, n))
    P[0, :, 0] = 1.0
    P[1, 0, 1] = 1.0
    P[1, 1] = [0.0, 0.0, 0.8, 0.2]
    P[2, :, 2] = 1.0
    P[3, :, 3] = 1.0
    R = np.array([[0.0, 0.5], [0.5, 0.0], [1.0, 1.0], [-1.0, -1.0]])
    sim = Mdp(R, P, [0.5, 0.5, 0.0, 0.0], 0.9, 1.0)
    e = np.zeros((n, A))
    e[1, 1] = 1.0
    return Fixture(sim, ErrorFunction(e), P.copy(), Policy.deterministic([0] * n, A))


def tight_regret():
    """Instance where the regret method's loss meets its bound with equality.

    s0 picks between two gambles onto absorbing h (+1) and l (-1), discount 0.5.
    a1 (baseline): simulator 0.5 to h, truth 0.375. a2: simulator 0.75, truth
    0.875. Both budgets 0.25, so the worst-case improvement of a2 is exactly 0.
    """
    n, A = 3, 2
    P = np.zeros((n, A, n))
    P[0, 0] = [0.0, 0.5, 0.5]
    P[0, 1] = [0.0, 0.75, 0.25]
    P[1, :, 1] = 1.0
    P[2, :, 2] = 1.0
    R = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, -1.0]])
    sim = Mdp(R, P, [1.0, 0.0, 0.0], 0.5, 1.0)
    e = np.zeros((n, A))
    e[0, :] = 0.25
    Pt = P.copy()
    Pt[0, 0] = [0.0, 0.375, 0.625]
    Pt[0, 1] = [0.0, 0.875, 0.125]
    return Fixture(sim, ErrorFunction(e), Pt, Policy.deterministic([0, 0, 0], A))


def flat_penalty():
    """Reward adjustment charges for an error that cannot change the outcome,
    so the adjusted model rejects while the robust model accepts.

    a1 earns 0.5 and mixes s0 and s1 (budget 0.1); both states are worth the
    same, so the error is harmless. a2 self-loops for 0.2 with no error and is
    the baseline.
    """
    n, A = 2, 2
    P = np.zeros((n, A, n))
    P[:, 0] = [0.5, 0.5]
    P[0, 1, 0] = 1.0
    P[1, 1, 1] = 1.0
    R = np.array([[0.5, 0.2], [0.5, 0.2]])
    sim = Mdp(R, P, [1.0, 0.0], 0.9, 1.0)
    e = np.array([[0.1, 0.0], [0.1, 0.0]])
    return Fixture(sim, ErrorFunction(e), P.copy(), Policy.deterministic([1, 1], A))


def random_mdp(rng, n, na, gamma=0.9, r_max=1.0):
    R = rng.uniform(-r_max, r_max, size=(n, na))
    P = rng.dirichlet(np.ones(n), size=(n, na))
    p0 = rng.dirichlet(np.ones(n))
    return Mdp(R, P, p0, gamma, r_max)


def random_uset(rng, n, na, e_max=0.2, gamma=0.9):
    m = random_mdp(rng, n, na, gamma)
    return UncertaintySet(m, ErrorFunction(rng.uniform(0.0, e_max, size=(n, na))))


def random_policy(rng, n, na, deterministic=True):
    if deterministic:
        return Policy.deterministic(rng.integers(0, na, size=n), na)
    return Policy.stochastic(rng.dirichlet(np.ones(na), size=n))


@dataclass(frozen=True, eq=False)
class SuiteCase:
    uset: UncertaintySet
    baseline: Policy
    true_models: list


def safety_suite(seed=2024, n_instances=100, n_true=5):
    """Seeded (simulator, budget, baseline, true models) cases: 3-4 states,
    2-3 actions, discount 0.9, budgets up to 0.2."""
    out = []
    for k in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        n = int(rng.integers(3, 5))
        na = int(rng.integers(2, 4))
        uset = random_uset(rng, n, na)
        base = random_policy(rng, n, na)
        trues = [sample_member(uset, rng) for _ in range(n_true)]
        out.append(SuiteCase(uset, base, trues))
    return out
