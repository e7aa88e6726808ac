"""L1 uncertainty sets around a simulator, the worst-case row response, and
error budgets derived from transition counts."""

from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, _frozen

MEMBER_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ErrorFunction:
    """Per-(state, action) L1 budget e(x, a), clipped to the simplex diameter 2."""

    budget: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.budget, dtype=float)
        if b.ndim != 2:
            raise ValueError("error budget must be (n_states, n_actions)")
        if not np.all(np.isfinite(b)) or np.any(b < 0) or np.any(b > 2.0):
            raise ValueError("error budget entries must lie in [0, 2]")
        object.__setattr__(self, "budget", _frozen(b))

    @classmethod
    def constant(cls, value, n_states, n_actions):
        return cls(np.full((n_states, n_actions), float(value)))

    @property
    def sup(self):
        return float(self.budget.max())

    def for_policy(self, pi):
        """e_pi(x) = sum_a pi(a|x) e(x, a)."""
        return np.einsum("sa,sa->s", pi.action_dist, self.budget)


def as_budget(e):
    return e.budget if isinstance(e, ErrorFunction) else np.asarray(e, dtype=float)


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """All transition functions whose (x, a) rows lie within e(x, a) of the
    simulator's rows in L1."""

    nominal: Mdp
    error: ErrorFunction

    def __post_init__(self):
        if not isinstance(self.error, ErrorFunction):
            object.__setattr__(self, "error", ErrorFunction(self.error))
        if self.error.budget.shape != (self.nominal.n_states, self.nominal.n_actions):
            raise ValueError("error dimensions do not match the nominal MDP")

    @property
    def budget(self):
        return self.error.budget

    def with_nominal(self, nominal):
        return UncertaintySet(nominal, self.error)


@dataclass(frozen=True, eq=False)
class CountTable:
    """Observed transition counts N(x, a, x')."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 3 or c.shape[0] != c.shape[2]:
            raise ValueError("counts must be (n_states, n_actions, n_states)")
        if np.any(c < 0) or not np.all(np.asarray(c) == np.round(c)):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "counts", _frozen(c, dtype=np.int64))

    @property
    def visits(self):
        return self.counts.sum(axis=2)

    @property
    def unvisited(self):
        return self.visits == 0

    @property
    def empirical(self):
        """Normalized counts; unvisited rows default to uniform."""
        n = self.counts.shape[2]
        N = self.visits
        emp = np.full(self.counts.shape, 1.0 / n)
        seen = N > 0
        emp[seen] = self.counts[seen] / N[seen][:, None]
        return emp


def _log_union_term(n_states, n_actions, delta):
    # ln(|X||A|(2^|X| - 2)/delta) without overflowing 2^|X|
    log_two_pow = n_states * np.log(2.0) + np.log1p(-2.0 ** (1 - n_states))
    return np.log(n_states * n_actions) + log_two_pow - np.log(delta)


def error_from_counts(counts, delta, n_states=None, n_actions=None):
    """L1 deviation budget of empirical rows that holds w.p. 1 - delta overall.

    e(x, a) = sqrt(2/N(x, a) * ln(|X||A|(2^|X| - 2)/delta)), clipped to 2;
    unvisited pairs get 2. With a single state every row is the point mass, so e = 0.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not isinstance(counts, CountTable):
        counts = CountTable(counts)
    ns, na, _ = counts.counts.shape
    if (n_states is not None and n_states != ns) or (n_actions is not None and n_actions != na):
        raise ValueError("counts do not match the given dimensions")
    N = counts.visits.astype(float)
    e = np.full((ns, na), 2.0)
    seen = N > 0
    if ns == 1:
        e[seen] = 0.0
        return ErrorFunction(e)
    log_term = _log_union_term(ns, na, delta)
    e[seen] = np.sqrt(2.0 / N[seen] * log_term)
    return ErrorFunction(np.minimum(e, 2.0))


def worst_case_response(nominal, budget, values):
    """Minimize p . v over {p in simplex : ||p - nominal||_1 <= budget}.

    Broadcasts over leading axes. Mass min(budget/2, 1 - p[i_min]) moves onto the
    lowest-value state, taken from the others in descending value order; ties go
    to the lowest index. Returns (p, p . v).
    """
    p_hat = np.asarray(nominal, dtype=float)
    v = np.asarray(values, dtype=float)
    e = np.asarray(budget, dtype=float)
    if np.any(e < 0):
        raise ValueError("negative budget")
    if np.any(p_hat < 0) or np.any(np.abs(p_hat.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("nominal row is not a distribution")
    shape = np.broadcast_shapes(p_hat.shape, v.shape)
    n = shape[-1]
    ph = np.broadcast_to(p_hat, shape).reshape(-1, n)
    vv = np.broadcast_to(v, shape).reshape(-1, n)
    ee = np.broadcast_to(e, shape[:-1]).reshape(-1)
    p, val = wcr_rows(ph, ee, vv)
    return p.reshape(shape), val.reshape(shape[:-1])


def wcr_rows(ph, ee, vv):
    """Unchecked worst-case response on 2-D row stacks (hot loops)."""
    rows = np.arange(ph.shape[0])
    i_min = np.argmin(vv, axis=1)
    recv_mass = ph[rows, i_min]
    eps = np.maximum(np.minimum(np.minimum(ee, 2.0) / 2.0, 1.0 - recv_mass), 0.0)

    order = np.argsort(-vv, axis=1, kind="stable")
    avail = ph.copy()
    avail[rows, i_min] = 0.0
    m = avail[rows[:, None], order]
    before = np.cumsum(m, axis=1) - m
    taken = np.clip(eps[:, None] - before, 0.0, m)

    p = ph.copy()
    p[rows[:, None], order] -= taken
    p[rows, i_min] = recv_mass + eps
    np.maximum(p, 0.0, out=p)
    return p, np.einsum("ij,ij->i", p, vv)


def best_case_response(nominal, budget, values):
    """Maximize p . v over the same ball (worst case against -v)."""
    p, val = worst_case_response(nominal, budget, -np.asarray(values, dtype=float))
    return p, -val


def row_distances(P, Q):
    return np.abs(np.asarray(P) - np.asarray(Q)).sum(axis=-1)


def contains(uset, P, tol=MEMBER_TOL):
    P = np.asarray(P, dtype=float)
    nom = uset.nominal.transition
    if P.shape != nom.shape:
        raise ValueError("transition shape mismatch")
    if np.any(P < -tol) or np.any(np.abs(P.sum(axis=-1) - 1.0) > 1e-9):
        return False
    return bool(np.all(row_distances(P, nom) <= uset.budget + tol))


def mirror_membership_bound(uset, P1, P2):
    """Largest row-wise L1 gap between two members; at most twice the largest budget."""
    if not (contains(uset, P1) and contains(uset, P2)):
        raise ValueError("both transition functions must belong to the set")
    return float(row_distances(P1, P2).max())


def sample_member(uset, rng, vertex_prob=0.5):
    """Random transition function in the set.

    Each row is either a budget-saturating response to random values (an extreme
    point of its ball) or a random interior point on a segment towards a
    Dirichlet draw.
    """
    P_hat = uset.nominal.transition
    e = uset.budget
    n = P_hat.shape[-1]
    q = rng.dirichlet(np.ones(n), size=P_hat.shape[:-1])
    dist = row_distances(q, P_hat)
    t = rng.uniform(size=e.shape) * np.minimum(1.0, e / np.maximum(dist, 1e-300))
    interior = P_hat + t[..., None] * (q - P_hat)
    extreme, _ = worst_case_response(P_hat, e * (1 - 1e-12), rng.normal(size=P_hat.shape))
    pick = rng.uniform(size=e.shape) < vertex_prob
    P = np.where(pick[..., None], extreme, interior)
    P = np.maximum(P, 0.0)
    P /= P.sum(axis=-1, keepdims=True)
    # guard against rounding past the budget
    over = row_distances(P, P_hat) > e
    P[over] = P_hat[over]
    return P
