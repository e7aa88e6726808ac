"""Finite discounted MDPs: representation, evaluation, optimal control, occupancy."""

from dataclasses import dataclass, field

import numpy as np

STOCH_TOL = 1e-9
POLICY_TOL = 1e-12
DIRECT_SOLVE_MAX = 2000
VI_EPS = 1e-8
ROUND_TOL = 4 * np.finfo(float).eps  # row sums this close to 1 are kept as is


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def normalize_rows(p, tol=STOCH_TOL, what="row"):
    """Check that the last axis holds distributions within tol and renormalize.

    Rows already within ROUND_TOL of 1 are left untouched, so applying this
    twice is a no-op. Other rows are rescaled and the largest entry absorbs the
    rounding.
    """
    p = np.array(p, dtype=float, copy=True)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{what}: non-finite entries")
    if np.any(p < -tol):
        raise ValueError(f"{what}: negative probability")
    p = np.clip(p, 0.0, None)
    s = p.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > tol):
        raise ValueError(f"{what}: does not sum to 1 (max deviation {np.max(np.abs(s - 1.0)):.3g})")
    flat = p.reshape(-1, p.shape[-1])
    for row in flat:
        if abs(row.sum() - 1.0) <= ROUND_TOL:
            continue
        row /= row.sum()
        for _ in range(4):
            d = 1.0 - row.sum()
            if d == 0.0:
                break
            k = int(np.argmax(row))
            row[k] += d
    return flat.reshape(p.shape)


@dataclass(frozen=True, eq=False)
class Mdp:
    """Tabular discounted MDP.

    Args:
        reward: (n, A) rewards, |r| <= r_max unless reward_bounded is False.
        transition: (n, A, n) next-state distributions.
        initial_dist: (n,) start distribution.
        discount: gamma in (0, 1).
        r_max: reward bound used by the error-based penalties and bounds.
        reward_bounded: False for reward-adjusted models whose rewards may
            drop below -r_max.
    """

    reward: np.ndarray
    transition: np.ndarray
    initial_dist: np.ndarray
    discount: float
    r_max: float
    reward_bounded: bool = True

    def __post_init__(self):
        r = np.asarray(self.reward, dtype=float)
        if r.ndim != 2:
            raise ValueError("reward must be (n_states, n_actions)")
        n, na = r.shape
        if n < 1 or na < 1:
            raise ValueError("need at least one state and one action")
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (n, na, n):
            raise ValueError(f"transition shape {P.shape} != {(n, na, n)}")
        p0 = np.asarray(self.initial_dist, dtype=float)
        if p0.shape != (n,):
            raise ValueError(f"initial_dist shape {p0.shape} != {(n,)}")
        g = float(self.discount)
        if not 0.0 < g < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        rmax = float(self.r_max)
        if not (rmax > 0 and np.isfinite(rmax)):
            raise ValueError("r_max must be positive")
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite reward")
        if self.reward_bounded and np.any(np.abs(r) > rmax * (1 + 1e-12)):
            raise ValueError("reward exceeds r_max")
        object.__setattr__(self, "reward", _frozen(r))
        object.__setattr__(self, "transition", _frozen(normalize_rows(P, what="transition")))
        object.__setattr__(self, "initial_dist", _frozen(normalize_rows(p0, what="initial_dist")))
        object.__setattr__(self, "discount", g)
        object.__setattr__(self, "r_max", rmax)

    @property
    def n_states(self):
        return self.reward.shape[0]

    @property
    def n_actions(self):
        return self.reward.shape[1]

    @property
    def value_scale(self):
        return self.r_max / (1.0 - self.discount)

    def replace(self, **kw):
        d = dict(reward=self.reward, transition=self.transition, initial_dist=self.initial_dist,
                 discount=self.discount, r_max=self.r_max, reward_bounded=self.reward_bounded)
        d.update(kw)
        return Mdp(**d)

    def __eq__(self, other):
        if not isinstance(other, Mdp):
            return NotImplemented
        return (self.discount == other.discount and self.r_max == other.r_max
                and self.reward_bounded == other.reward_bounded
                and np.array_equal(self.reward, other.reward)
                and np.array_equal(self.transition, other.transition)
                and np.array_equal(self.initial_dist, other.initial_dist))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary Markov policy stored as an (n, A) action distribution."""

    action_dist: np.ndarray
    kind: str = field(default="stochastic")

    def __post_init__(self):
        d = np.asarray(self.action_dist, dtype=float)
        if d.ndim != 2:
            raise ValueError("action_dist must be (n_states, n_actions)")
        if np.any(d < 0) or np.any(np.abs(d.sum(axis=1) - 1.0) > POLICY_TOL):
            raise ValueError("policy rows must be distributions")
        if self.kind not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "deterministic":
            if not np.all((d == 0.0) | (d == 1.0)) or not np.all(d.sum(axis=1) == 1.0):
                raise ValueError("deterministic rows must be one-hot")
        object.__setattr__(self, "action_dist", _frozen(d))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 1 or np.any(actions < 0) or np.any(actions >= n_actions):
            raise ValueError("actions out of range")
        d = np.zeros((actions.size, n_actions))
        d[np.arange(actions.size), actions] = 1.0
        return cls(d, "deterministic")

    @classmethod
    def stochastic(cls, dist):
        return cls(dist, "stochastic")

    @property
    def n_states(self):
        return self.action_dist.shape[0]

    @property
    def n_actions(self):
        return self.action_dist.shape[1]

    @property
    def actions(self):
        """Greedy action per state (the action itself for deterministic policies)."""
        return np.argmax(self.action_dist, axis=1)

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.action_dist, other.action_dist)

    __hash__ = None


def _check(mdp, pi):
    if pi.action_dist.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.action_dist.shape} does not match mdp "
                         f"{(mdp.n_states, mdp.n_actions)}")


def induced_kernel(mdp, pi, transition=None):
    """Marginalize transitions and rewards over the policy's action choice.

    Returns (P_pi, r_pi) with P_pi of shape (n, n).
    """
    _check(mdp, pi)
    P = mdp.transition if transition is None else transition
    d = pi.action_dist
    P_pi = np.einsum("sa,sat->st", d, P)
    r_pi = np.einsum("sa,sa->s", d, mdp.reward)
    return P_pi, r_pi


def solve_linear_value(P_pi, r_pi, gamma, scale=1.0):
    """V = (I - gamma P_pi)^{-1} r_pi; value iteration past DIRECT_SOLVE_MAX states."""
    n = P_pi.shape[0]
    if n <= DIRECT_SOLVE_MAX:
        return np.linalg.solve(np.eye(n) - gamma * P_pi, r_pi)
    tol = 1e-10 * scale
    v = np.zeros(n)
    while True:
        v_new = r_pi + gamma * (P_pi @ v)
        # residual of v_new is at most gamma * step
        if gamma * np.max(np.abs(v_new - v)) <= tol:
            return v_new
        v = v_new


def evaluate_policy(mdp, pi, transition=None):
    P_pi, r_pi = induced_kernel(mdp, pi, transition)
    return solve_linear_value(P_pi, r_pi, mdp.discount, mdp.value_scale)


def return_of(mdp, pi, transition=None):
    return float(mdp.initial_dist @ evaluate_policy(mdp, pi, transition))


def q_values(mdp, v, transition=None):
    P = mdp.transition if transition is None else transition
    return mdp.reward + mdp.discount * (P @ v)


def greedy(q):
    """Deterministic greedy policy; np.argmax already picks the lowest index on ties."""
    return Policy.deterministic(np.argmax(q, axis=1), q.shape[1])


def solve_optimal(mdp, eps=VI_EPS, v0=None):
    """Value iteration; the greedy policy is eps-optimal at termination.

    Returns (policy, V) with V the final iterate; the policy is greedy for V.
    """
    g = mdp.discount
    thresh = eps * (1.0 - g) / (2.0 * g)
    v = np.zeros(mdp.n_states) if v0 is None else np.array(v0, dtype=float)
    while True:
        v_new = q_values(mdp, v).max(axis=1)
        diff = np.max(np.abs(v_new - v))
        v = v_new
        if diff <= thresh:
            break
    return greedy(q_values(mdp, v)), v


def occupancy(mdp, pi, transition=None):
    """Normalized discounted state occupancy u = (1-g)(I - g P_pi^T)^{-1} p0."""
    P_pi, _ = induced_kernel(mdp, pi, transition)
    n = mdp.n_states
    g = mdp.discount
    u = (1.0 - g) * np.linalg.solve(np.eye(n) - g * P_pi.T, mdp.initial_dist)
    return np.clip(u, 0.0, None)


def all_deterministic_policies(n_states, n_actions):
    """Every deterministic policy as an (A^n, n) array of action indices."""
    grids = np.meshgrid(*[np.arange(n_actions)] * n_states, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def policy_iteration(mdp, pi0=None, max_iters=1000):
    """Exact optimal policy by Howard iteration; switches action only on strict gain.

    Returns (policy, V) with V the exact value of the policy.
    """
    if pi0 is None:
        pi0, _ = solve_optimal(mdp, eps=1e-6)
    pi = pi0
    for _ in range(max_iters):
        v = evaluate_policy(mdp, pi)
        q = q_values(mdp, v)
        cur = np.einsum("sa,sa->s", pi.action_dist, q)
        best = q.max(axis=1)
        improve = best > cur + 1e-12 * (1.0 + np.abs(cur))
        if not np.any(improve):
            return pi, v
        acts = np.where(improve, np.argmax(q, axis=1), pi.actions)
        pi = Policy.deterministic(acts, mdp.n_actions)
    return pi, evaluate_policy(mdp, pi)
