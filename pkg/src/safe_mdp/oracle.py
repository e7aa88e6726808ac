"""Slow, independent references for the solvers. Nothing here calls the
operations it is used to check."""

import functools
import itertools

import numpy as np

from .mdp import Policy

GRID_MAX_DIM = 4
MAX_COMBOS = 2_000_000


@functools.lru_cache(maxsize=8)
def _simplex_grid(n, step):
    """All points of the simplex whose coordinates are multiples of step."""
    k = int(round(1.0 / step))
    if n == 1:
        return np.ones((1, 1))
    axes = np.meshgrid(*[np.arange(k + 1)] * (n - 1), indexing="ij")
    head = np.stack([a.ravel() for a in axes], axis=1)
    head = head[head.sum(axis=1) <= k]
    pts = np.column_stack([head, k - head.sum(axis=1)]).astype(float) / k
    pts.setflags(write=False)
    return pts


def _receiver_points(p_hat, e, values):
    """For every receiver i, move min(e/2, 1 - p_i) onto i, taking it from the
    other states in descending value order."""
    n = len(p_hat)
    out = []
    for i in range(n):
        p = [float(x) for x in p_hat]
        give = min(e / 2.0, 1.0 - p[i])
        donors = sorted((k for k in range(n) if k != i), key=lambda k: (-values[k], k))
        left = give
        for k in donors:
            t = min(left, p[k])
            p[k] -= t
            left -= t
        p[i] += give - left
        out.append(p)
    return out


def brute_force_worst_response(nominal_row, budget, values, grid_step=None):
    """Minimum of p . v over the L1 ball around nominal_row intersected with
    the simplex, from a simplex grid and from per-receiver greedy points.

    Default grid step: 1e-3 up to 3 states, 1e-2 for 4.
    """
    p_hat = np.asarray(nominal_row, dtype=float)
    v = np.asarray(values, dtype=float)
    n = p_hat.size
    if n > GRID_MAX_DIM:
        raise ValueError("grid mode supports at most 4 states")
    e = min(float(budget), 2.0)
    if grid_step is None:
        grid_step = 1e-3 if n <= 3 else 1e-2
    best = float(p_hat @ v)
    grid = _simplex_grid(n, grid_step)
    ok = np.abs(grid - p_hat).sum(axis=1) <= e + 1e-12
    if np.any(ok):
        best = min(best, float((grid[ok] @ v).min()))
    for p in _receiver_points(p_hat, e, v):
        val = sum(pi * vi for pi, vi in zip(p, v))
        best = min(best, val)
    return best


def _evaluate(P_pi, r_pi, p0, gamma):
    n = len(r_pi)
    return float(p0 @ np.linalg.solve(np.eye(n) - gamma * P_pi, r_pi))


def enumerate_optimal_policy(mdp):
    """Best deterministic policy by exhaustive search; ties keep the first found
    in lexicographic action order."""
    n, na = mdp.n_states, mdp.n_actions
    if na ** n > 1_000_000:
        raise ValueError("instance too large to enumerate")
    best, best_acts = -np.inf, None
    idx = np.arange(n)
    for acts in itertools.product(range(na), repeat=n):
        acts = np.array(acts)
        val = _evaluate(mdp.transition[idx, acts], mdp.reward[idx, acts],
                        mdp.initial_dist, mdp.discount)
        if val > best + 1e-12:
            best, best_acts = val, acts
    return Policy.deterministic(best_acts, na), best


def ball_extremes(p_hat, e):
    """Every vertex of the ball-simplex intersection plus the center: pick a
    receiver, then empty the other states in each possible order."""
    n = len(p_hat)
    pts = [list(map(float, p_hat))]
    for i in range(n):
        give = min(e / 2.0, 1.0 - p_hat[i])
        if give <= 0:
            continue
        for order in itertools.permutations([k for k in range(n) if k != i]):
            p = list(map(float, p_hat))
            left = give
            for k in order:
                t = min(left, p[k])
                p[k] -= t
                left -= t
            p[i] += give
            pts.append(p)
    uniq = []
    for p in pts:
        if not any(np.allclose(p, q, atol=1e-15, rtol=0) for q in uniq):
            uniq.append(p)
    return np.array(uniq)


def _candidate_product(uset, rows):
    P_hat = uset.nominal.transition
    e = uset.budget
    cands = [ball_extremes(P_hat[x, a], e[x, a]) for x, a in rows]
    total = int(np.prod([len(c) for c in cands])) if cands else 1
    if total > MAX_COMBOS:
        raise ValueError(f"{total} candidate models exceed the enumeration guard")
    return cands, total


def _models(uset, rows, cands, chunk=20000):
    """Yield batches of full transition tensors over the candidate product."""
    P_hat = uset.nominal.transition
    batch = []
    for choice in itertools.product(*[range(len(c)) for c in cands]):
        P = P_hat.copy()
        for (x, a), c, k in zip(rows, cands, choice):
            P[x, a] = c[k]
        batch.append(P)
        if len(batch) == chunk:
            yield np.array(batch)
            batch = []
    if batch:
        yield np.array(batch)


def _batch_returns(m, dist, Ps):
    P_pi = np.einsum("sa,bsat->bst", dist, Ps)
    r_pi = np.einsum("sa,sa->s", dist, m.reward)
    A = np.eye(m.n_states)[None] - m.discount * P_pi
    V = np.linalg.solve(A, np.broadcast_to(r_pi, (Ps.shape[0], m.n_states))[..., None])[..., 0]
    return V @ m.initial_dist


def brute_force_robust_return(uset, pi, per_row_candidates=None):
    """min_P rho(pi, M(P)) over the product of per-row extreme points."""
    m = uset.nominal
    dist = pi.action_dist
    rows = [(x, a) for x in range(m.n_states) for a in range(m.n_actions) if dist[x, a] > 0]
    cands, _ = _candidate_product(uset, rows)
    if per_row_candidates is not None:
        cands = [c[:per_row_candidates] for c in cands]
    best = np.inf
    for Ps in _models(uset, rows, cands):
        best = min(best, float(_batch_returns(m, dist, Ps).min()))
    return best


def brute_force_coupled_min(uset, pi, baseline):
    """min_P rho(pi, P) - rho(pi_B, P) over the product of per-row extreme points
    (a candidate-set minimum)."""
    m = uset.nominal
    rows = [(x, a) for x in range(m.n_states) for a in range(m.n_actions)
            if pi.action_dist[x, a] > 0 or baseline.action_dist[x, a] > 0]
    cands, _ = _candidate_product(uset, rows)
    best = np.inf
    for Ps in _models(uset, rows, cands):
        d = _batch_returns(m, pi.action_dist, Ps) - _batch_returns(m, baseline.action_dist, Ps)
        best = min(best, float(d.min()))
    return best


def _row_min(p_hat, e, v):
    return min(sum(pi * vi for pi, vi in zip(p, v)) for p in _receiver_points(p_hat, e, v))


def robust_operator_loops(uset, v):
    """Robust Bellman operator with explicit loops."""
    m = uset.nominal
    out = np.empty(m.n_states)
    for x in range(m.n_states):
        out[x] = max(m.reward[x, a] + m.discount * _row_min(m.transition[x, a], uset.budget[x, a], v)
                     for a in range(m.n_actions))
    return out


def adjusted_operator_loops(adjusted, v):
    out = np.empty(adjusted.n_states)
    for x in range(adjusted.n_states):
        out[x] = max(adjusted.reward[x, a] + adjusted.discount * float(adjusted.transition[x, a] @ v)
                     for a in range(adjusted.n_actions))
    return out


def augmented_operator_loops(uset, v, l1, l2):
    m = uset.nominal
    n = m.n_states
    V = np.asarray(v).reshape(n, n)
    out = np.empty((n, n))
    for x in range(n):
        for y in range(n):
            best = -np.inf
            for a in range(m.n_actions):
                # expected value over y' for each x'
                h = [sum(m.transition[y, a, yp] * V[xp, yp] for yp in range(n)) for xp in range(n)]
                val = l1 * m.reward[x, a] + l2 * m.reward[y, a] + m.discount * _row_min(
                    m.transition[x, a], uset.budget[x, a], h)
                best = max(best, val)
            out[x, y] = best
    return out.ravel()


def bellman_residual_loops(operator, context, v, lambdas=(1.0, 0.0)):
    if operator == "adjusted_nominal":
        tv = adjusted_operator_loops(context, v)
    elif operator == "robust":
        tv = robust_operator_loops(context, v)
    elif operator == "augmented_robust":
        tv = augmented_operator_loops(context, v, *lambdas)
    else:
        raise ValueError(f"unknown operator {operator!r}")
    return float(np.max(np.abs(tv - np.asarray(v))))
