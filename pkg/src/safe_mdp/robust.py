"""Robust and optimistic dynamic programming over rectangular L1 sets."""

from dataclasses import dataclass

import numpy as np

from .mdp import Policy, greedy, induced_kernel, solve_linear_value
from .uncertainty import best_case_response, wcr_rows, worst_case_response

DEFAULT_TOL = 1e-8
MAX_NATURE_ITERS = 500


@dataclass(frozen=True, eq=False)
class RobustSolution:
    value: np.ndarray
    policy: Policy
    worst_model: np.ndarray
    iterations: int
    residual: float


def robust_q(uset, v):
    """Q(x, a) = r(x, a) + g min_{p in ball(x, a)} p . v, with the minimizing rows."""
    m = uset.nominal
    n, na = m.n_states, m.n_actions
    vv = np.broadcast_to(v, (n * na, n))
    P, worst = wcr_rows(m.transition.reshape(-1, n), uset.budget.reshape(-1), vv)
    return m.reward + m.discount * worst.reshape(n, na), P.reshape(n, na, n)


def robust_bellman_apply(uset, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (uset.nominal.n_states,):
        raise ValueError("value vector has the wrong length")
    q, _ = robust_q(uset, v)
    return q.max(axis=1)


def robust_value_iteration(uset, tol=DEFAULT_TOL, v0=None, max_iters=None):
    """Iterate the robust Bellman operator until successive sup-norm change is
    at most tol (1 - g) / (2 g); the greedy policy is then tol-optimal."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = uset.nominal
    g = m.discount
    thresh = tol * (1.0 - g) / (2.0 * g)
    v = np.zeros(m.n_states) if v0 is None else np.array(v0, dtype=float)
    it = 0
    while True:
        q, _ = robust_q(uset, v)
        v_new = q.max(axis=1)
        it += 1
        diff = np.max(np.abs(v_new - v))
        v = v_new
        if diff <= thresh or (max_iters is not None and it >= max_iters):
            break
    # one more sweep so the reported minimizers and policy match v
    q, P = robust_q(uset, v)
    residual = float(np.max(np.abs(q.max(axis=1) - v)))
    return RobustSolution(value=v, policy=greedy(q), worst_model=P, iterations=it, residual=residual)


def _nature_iteration(uset, pi, respond, sign):
    """Exact evaluation of min (sign=+1) or max (sign=-1) over the set for a
    fixed policy by policy iteration on nature's row choices."""
    m = uset.nominal
    g = m.discount
    d = pi.action_dist
    P = np.array(m.transition)
    v = None
    for _ in range(MAX_NATURE_ITERS):
        P_pi, r_pi = induced_kernel(m, pi, P)
        v_new = solve_linear_value(P_pi, r_pi, g, m.value_scale)
        P_next, _ = respond(m.transition, uset.budget, v_new[None, None, :])
        if v is not None and sign * np.max(v - v_new) <= 1e-13 * m.value_scale:
            v = v_new
            break
        v = v_new
        # keep the current row wherever the response does not strictly help
        cur = P @ v
        nxt = P_next @ v
        better = sign * (cur - nxt) > 1e-15 * (1.0 + np.abs(cur))
        if not np.any(better & (d > 0)):
            break
        P = np.where(better[..., None], P_next, P)
    _, vals = respond(m.transition, uset.budget, v[None, None, :])
    tv = np.einsum("sa,sa->s", d, m.reward + g * vals)
    residual = float(np.max(np.abs(tv - v)))
    return v, P, residual


def robust_evaluate_policy(uset, pi, tol=DEFAULT_TOL):
    """Worst-case return min_P rho(pi, M(P)) over the set and a minimizing P.

    The value is lowered by residual / (1 - g) so it never exceeds the true
    minimum even with rounding in the final linear solve.
    """
    v, P, residual = _nature_iteration(uset, pi, worst_case_response, +1)
    m = uset.nominal
    lower = float(m.initial_dist @ v) - residual / (1.0 - m.discount)
    return lower, P


def robust_policy_values(uset, pi):
    v, P, residual = _nature_iteration(uset, pi, worst_case_response, +1)
    return v - residual / (1.0 - uset.nominal.discount), P


def best_case_evaluate(uset, pi, tol=DEFAULT_TOL, return_model=False):
    """Optimistic return max_P rho(pi, M(P)), raised by the residual slack."""
    v, P, residual = _nature_iteration(uset, pi, best_case_response, -1)
    m = uset.nominal
    upper = float(m.initial_dist @ v) + residual / (1.0 - m.discount)
    return (upper, P) if return_model else upper
