"""Safe policy search against a baseline: reward-adjusted MDP, robust MDP,
augmented robust MDP (Lagrangian saddle point), and robust baseline regret."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .mdp import Mdp, Policy, evaluate_policy, greedy, return_of, solve_optimal
from .robust import best_case_evaluate, robust_evaluate_policy, robust_value_iteration
from .uncertainty import (UncertaintySet, as_budget, contains, sample_member, wcr_rows,
                          worst_case_response)

METHODS = ("ramdp", "rmdp", "armdp", "rbc")


@dataclass(eq=False)
class SafePolicyResult:
    policy: Policy
    certified_value: float
    accepted: bool
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "accepted": bool(self.accepted),
            "certified_value": float(self.certified_value),
            "policy": self.policy.action_dist.tolist(),
            "policy_kind": self.policy.kind,
            "diagnostics": _plain(self.diagnostics),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _fallback(baseline, certified, method, diag):
    return SafePolicyResult(baseline, float(certified), False, method, diag)


# reward-adjusted MDP

def adjust_rewards(simulator, e):
    """Penalize every (x, a) by g Rmax e(x, a) / (1 - g)."""
    b = as_budget(e)
    if b.shape != (simulator.n_states, simulator.n_actions):
        raise ValueError("error dimensions do not match the simulator")
    g = simulator.discount
    penalty = g * simulator.r_max / (1.0 - g) * b
    return simulator.replace(reward=simulator.reward - penalty, reward_bounded=False)


def solve_ramdp(simulator, e, baseline, baseline_return):
    if not np.isfinite(baseline_return):
        raise ValueError("baseline_return must be finite")
    adjusted = adjust_rewards(simulator, e)
    pi0, _ = solve_optimal(adjusted)
    rho0 = return_of(adjusted, pi0)
    diag = {"baseline_return": float(baseline_return), "adjusted_return": rho0}
    if rho0 > baseline_return:
        return SafePolicyResult(pi0, rho0, True, "ramdp", diag)
    return _fallback(baseline, rho0, "ramdp", diag)


# robust MDP

def solve_rmdp_safe(uset, baseline, baseline_return, tol=1e-10):
    if not np.isfinite(baseline_return):
        raise ValueError("baseline_return must be finite")
    sol = robust_value_iteration(uset, tol=tol)
    rho0, _ = robust_evaluate_policy(uset, sol.policy)
    diag = {"baseline_return": float(baseline_return), "robust_return": rho0,
            "iterations": sol.iterations, "residual": sol.residual}
    if rho0 > baseline_return:
        return SafePolicyResult(sol.policy, rho0, True, "rmdp", diag)
    return _fallback(baseline, rho0, "rmdp", diag)


# augmented robust MDP

@dataclass(frozen=True, eq=False)
class AugmentedMdp:
    """Product of an uncertain chain x (transition P) and the simulator chain y
    (transition P_hat) driven by one action; state (x, y) has index x * n + y."""

    base: Mdp
    lambda1: float
    lambda2: float
    n: int
    reward_x: np.ndarray
    reward_y: np.ndarray

    def index(self, x, y):
        return x * self.n + y

    def pair(self, s):
        return divmod(s, self.n)


def _product_transition(P_x, P_y):
    n, na, _ = P_x.shape
    T = np.einsum("xau,yav->xyauv", P_x, P_y)
    return T.reshape(n * n, na, n * n)


def build_augmented(simulator, uncertain_transition, lambda1, lambda2):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("multipliers must be nonnegative")
    n, na = simulator.n_states, simulator.n_actions
    P = np.asarray(uncertain_transition, dtype=float)
    if P.shape != simulator.transition.shape:
        raise ValueError("transition shape mismatch")
    r = simulator.reward
    rx = np.repeat(r, n, axis=0)          # r(x, a) at (x, y)
    ry = np.tile(r, (n, 1))               # r(y, a) at (x, y)
    p0 = np.outer(simulator.initial_dist, simulator.initial_dist).ravel()
    scale = max(lambda1 + lambda2, 1e-12) * simulator.r_max
    base = Mdp(lambda1 * rx + lambda2 * ry, _product_transition(P, simulator.transition), p0,
               simulator.discount, scale, reward_bounded=simulator.reward_bounded)
    return AugmentedMdp(base, float(lambda1), float(lambda2), n, rx, ry)


def lift_policy(pi, n):
    """Augmented policy that reads only the x component."""
    return Policy(np.repeat(pi.action_dist, n, axis=0), pi.kind)


def lagrangian_value(aug, pi, lam, baseline_return):
    """L(pi, lam) = lam * rho_x + rho_y - lam * rho_B on the stored product chain."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    b = aug.base
    rho_x = return_of(b.replace(reward=aug.reward_x, r_max=b.r_max, reward_bounded=False), pi)
    rho_y = return_of(b.replace(reward=aug.reward_y, reward_bounded=False), pi)
    return lam * rho_x + rho_y - lam * baseline_return


def augmented_true_return(simulator, true_transition, pi):
    """Return of an augmented policy when x follows the true model and y the simulator."""
    aug = build_augmented(simulator, true_transition, 1.0, 0.0)
    return return_of(aug.base, pi)


def subgradient_step(lam, alpha, violation):
    if alpha <= 0 or lam < 0:
        raise ValueError("need alpha > 0 and lambda >= 0")
    return max(0.0, lam - alpha * violation)


@dataclass(frozen=True)
class SubgradientSchedule:
    alpha0: float
    max_iters: int = 200
    lambda_cap: float = 1e3
    lambda_init: float = 1.0

    def __post_init__(self):
        if self.alpha0 <= 0 or self.max_iters < 1 or self.lambda_cap <= 0 or self.lambda_init < 0:
            raise ValueError("invalid subgradient schedule")

    @classmethod
    def default(cls, simulator):
        scale = simulator.r_max / (1.0 - simulator.discount)
        return cls(alpha0=scale, max_iters=200, lambda_cap=1e3 * scale, lambda_init=1.0)

    def alpha(self, j):
        return self.alpha0 / (j + 1)


def _aug_backup(uset, V, weights_x, weights_y):
    """Per-(x, y, a) robust backup for the augmented chain.

    Only the x row is uncertain; the y row is the simulator's. Returns
    (Q, x rows attaining the minimum), rows shaped (x, y, a, x').
    """
    m = uset.nominal
    n, na = m.n_states, m.n_actions
    Vm = V.reshape(n, n)
    # G[y, a, x'] = sum_y' P_hat(y'|y, a) V(x', y')
    G = np.einsum("yav,uv->yau", m.transition, Vm)
    ph = np.broadcast_to(m.transition[:, None], (n, n, na, n)).reshape(-1, n)
    ee = np.broadcast_to(uset.budget[:, None], (n, n, na)).reshape(-1)
    vv = np.broadcast_to(G[None], (n, n, na, n)).reshape(-1, n)
    Px, worst = wcr_rows(ph, ee, vv)
    r = weights_x * m.reward[:, None, :] + weights_y * m.reward[None, :, :]
    Q = r + m.discount * worst.reshape(n, n, na)
    return Q.reshape(n * n, na), Px.reshape(n, n, na, n)


def augmented_robust_vi(uset, lam, tol=1e-8, v0=None):
    """Robust value iteration for max_pi min_P of lam * rho_x + rho_y."""
    m = uset.nominal
    g = m.discount
    thresh = tol * (1.0 - g) / (2.0 * g)
    V = np.zeros(m.n_states ** 2) if v0 is None else np.array(v0, dtype=float)
    while True:
        Q, _ = _aug_backup(uset, V, lam, 1.0)
        V_new = Q.max(axis=1)
        diff = np.max(np.abs(V_new - V))
        V = V_new
        if diff <= thresh:
            break
    Q, _ = _aug_backup(uset, V, lam, 1.0)
    return greedy(Q), V


def augmented_robust_x_values(uset, pi):
    """Lower bound on min_P of the x-side values of an augmented policy.

    Nature may pick the x row per (x, y, a), a relaxation of the rectangular set,
    so the values never exceed the true minimum. Exact policy iteration on
    nature's choices, then lowered by the residual slack.
    """
    m = uset.nominal
    n, na, g = m.n_states, m.n_actions, m.discount
    d = pi.action_dist.reshape(n, n, na)
    rx = np.einsum("xya,xa->xy", d, m.reward).ravel()
    Px = np.broadcast_to(m.transition[:, None], (n, n, na, n)).copy()
    V = None
    for _ in range(500):
        T = np.einsum("xyau,yav,xya->xyuv", Px, m.transition, d).reshape(n * n, n * n)
        V = np.linalg.solve(np.eye(n * n) - g * T, rx)
        _, Pnew = _aug_backup(uset, V, 1.0, 0.0)
        G = np.einsum("yav,uv->yau", m.transition, V.reshape(n, n))
        cur = np.einsum("xyau,yau->xya", Px, G)
        nxt = np.einsum("xyau,yau->xya", Pnew, G)
        better = (cur - nxt > 1e-15 * (1.0 + np.abs(cur))) & (d > 0)
        if not np.any(better):
            break
        Px = np.where(better[..., None], Pnew, Px)
    Q, _ = _aug_backup(uset, V, 1.0, 0.0)
    TV = np.einsum("sa,sa->s", pi.action_dist, Q)
    residual = float(np.max(np.abs(TV - V)))
    return V - residual / (1.0 - g)


def augmented_robust_x_return(uset, pi):
    m = uset.nominal
    p0 = np.outer(m.initial_dist, m.initial_dist).ravel()
    return float(p0 @ augmented_robust_x_values(uset, pi))


def solve_augmented_rmdp(uset, baseline, baseline_return, sched=None, tol=1e-8,
                         window=10, dual_tol=1e-6, lambda_window=20, lambda_tol=1e-3):
    """Projected subgradient descent on the multiplier with best-dual tracking.

    The run is converged when the best dual value has stopped improving and the
    multiplier has settled; hitting the multiplier cap means no saddle point.
    A policy is returned only if its certified x-side worst case beats the
    baseline return.
    """
    if not np.isfinite(baseline_return):
        raise ValueError("baseline_return must be finite")
    m = uset.nominal
    n = m.n_states
    sched = sched or SubgradientSchedule.default(m)
    p0 = np.outer(m.initial_dist, m.initial_dist).ravel()
    cache = {}

    def solve_at(lam, v0):
        if lam not in cache:
            pi, V = augmented_robust_vi(uset, lam, tol=tol, v0=v0)
            f = float(p0 @ V) - lam * baseline_return
            cert = augmented_robust_x_return(uset, pi)
            cache[lam] = (pi, V, f, cert)
        return cache[lam]

    # The x-side certificate of any augmented policy is at most the plain robust
    # optimum, so when that optimum cannot beat an attainable baseline return
    # the search would end in the fallback anyway.
    if baseline_return <= m.value_scale:
        rob = robust_value_iteration(uset, tol=tol)
        best = float(m.initial_dist @ rob.value) + tol * m.value_scale
        if best < baseline_return:
            diag = {"baseline_return": float(baseline_return), "lambda": None, "iterations": 0,
                    "converged": False, "cap_hit": False, "robust_optimum": best - tol * m.value_scale,
                    "reason": "robust optimum below baseline return"}
            return _fallback(baseline, best - tol * m.value_scale, "armdp", diag)

    lam = float(sched.lambda_init)
    pi, V, f, cert = solve_at(lam, None)
    f_min = f
    lambdas, f_mins, certs = [lam], [f_min], [cert]
    converged = cap_hit = False
    it = 0
    for j in range(sched.max_iters):
        it = j + 1
        trial = subgradient_step(lam, sched.alpha(j), cert - baseline_return)
        if trial > sched.lambda_cap:
            cap_hit = True
            lambdas.append(trial)
            break
        t_pi, t_V, t_f, t_cert = solve_at(trial, V)
        if t_f <= f_min:
            lam, pi, V, f, cert = trial, t_pi, t_V, t_f, t_cert
            f_min = t_f
        lambdas.append(lam)
        f_mins.append(f_min)
        certs.append(cert)
        if len(f_mins) > window and f_mins[-window - 1] - f_mins[-1] < dual_tol:
            recent = np.abs(np.diff(lambdas[-lambda_window - 1:]))
            if len(lambdas) > lambda_window and np.all(recent < lambda_tol):
                converged = True
                break

    diag = {"baseline_return": float(baseline_return), "lambda": lam, "iterations": it,
            "converged": converged, "cap_hit": cap_hit, "lambda_trace": lambdas,
            "f_min_trace": f_mins, "certified_trace": certs}
    # a capped multiplier means the constraint cannot be met; an uncapped run
    # that has not settled still yields certified policies, so only the cap
    # forces the fallback
    if cap_hit:
        return _fallback(baseline, cert, "armdp", diag)
    if cert > baseline_return:
        return SafePolicyResult(pi, cert, True, "armdp", diag)
    # the multiplier's own policy misses the constraint; try the feasible
    # iterate whose multiplier is closest
    feasible = [(abs(k - lam), k) for k, (_, _, _, c) in cache.items() if c > baseline_return]
    if not feasible:
        # harmonic steps raise the multiplier only logarithmically; one solve at
        # the cap puts the constraint first
        cap = float(sched.lambda_cap)
        *_, cap_cert = solve_at(cap, V)
        diag["cap_probe"] = True
        # still violated at the cap: the next step would leave it
        diag["cap_hit"] = bool(cap_cert <= baseline_return)
        feasible = [(abs(k - lam), k) for k, (_, _, _, c) in cache.items() if c > baseline_return]
    if feasible:
        _, k = min(feasible)
        diag["selected_lambda"] = k
        return SafePolicyResult(cache[k][0], cache[k][3], True, "armdp", diag)
    return _fallback(baseline, cert, "armdp", diag)


# robust baseline regret

def _pair_structure(pi, baseline):
    same = np.all(pi.action_dist == baseline.action_dist, axis=1)
    return same


def coupled_certificate(uset, pi, baseline, max_iters=500):
    """Certified lower bound on min_P rho(pi, P) - rho(pi_B, P).

    Both chains start from the same state and move together while they sit on a
    common state where the two policies coincide. Elsewhere x moves first, then
    y, and nature may choose each row knowing the other chain's state. That
    only enlarges nature's options, so the game value lower-bounds the regret
    objective. Solved by policy iteration on nature's choices.
    """
    m = uset.nominal
    n, na, g = m.n_states, m.n_actions, m.discount
    P_hat, e = m.transition, uset.budget
    dx, db = pi.action_dist, baseline.action_dist
    merged = _pair_structure(pi, baseline)
    r_pi = np.einsum("sa,sa->s", dx, m.reward)
    r_b = np.einsum("sa,sa->s", db, m.reward)
    R = r_pi[:, None] - r_b[None, :]
    R[merged, merged] = 0.0
    R = R.ravel()
    diag_idx = np.arange(n) * (n + 1)
    mi = np.flatnonzero(merged)

    # nature's choices: px[x, y, a], py[x', y, b], pm[x, a]
    px = np.broadcast_to(P_hat[:, None], (n, n, na, n)).copy()
    py = np.broadcast_to(P_hat[None], (n, n, na, n)).copy()
    pm = P_hat.copy()

    def respond(W):
        Wm = W.reshape(n, n)
        qy, wy = worst_case_response(P_hat[None], e[None], Wm[:, None, None, :])  # (x', y, b)
        Hq = np.einsum("yb,uyb->uy", db, wy)
        qx, wx = worst_case_response(P_hat[:, None], e[:, None], Hq.T[None, :, None, :])  # (x, y, a)
        qm, wm = worst_case_response(P_hat, e, np.diag(Wm)[None, None, :])
        return qy, wy, Hq, qx, wx, qm, wm

    def backup(W):
        _, _, _, _, wx, _, wm = respond(W)
        TW = R.reshape(n, n) + g * np.einsum("xa,xya->xy", dx, wx)
        TW[mi, mi] = g * np.einsum("xa,xa->x", dx[mi], wm[mi])
        return TW.ravel()

    W = None
    for _ in range(max_iters):
        Qy = np.einsum("yb,uybv->uyv", db, py)
        T = np.einsum("xa,xyau,uyv->xyuv", dx, px, Qy).reshape(n * n, n * n)
        if mi.size:
            rows = T.reshape(n, n, n * n)
            rows[mi, mi, :] = 0.0
            Tm = np.einsum("xa,xau->xu", dx[mi], pm[mi])
            rows[mi[:, None], mi[:, None], diag_idx[None, :]] = Tm
        W = np.linalg.solve(np.eye(n * n) - g * T, R)
        qy, wy, Hq, qx, wx, qm, wm = respond(W)
        Wm = W.reshape(n, n)
        # keep a choice unless the response is strictly better
        cy = np.einsum("uybv,uv->uyb", py, Wm)
        by = (cy - wy > 1e-15 * (1.0 + np.abs(cy))) & (db[None] > 0)
        cx = np.einsum("xyau,uy->xya", px, Hq)
        bx = (cx - wx > 1e-15 * (1.0 + np.abs(cx))) & (dx[:, None] > 0)
        cm = pm @ np.diag(Wm)
        bm = (cm - wm > 1e-15 * (1.0 + np.abs(cm))) & (dx > 0) & merged[:, None]
        if not (by.any() or bx.any() or bm.any()):
            break
        py = np.where(by[..., None], qy, py)
        px = np.where(bx[..., None], qx, px)
        pm = np.where(bm[..., None], qm, pm)
    residual = float(np.max(np.abs(backup(W) - W)))
    value = float(m.initial_dist @ W[diag_idx])
    return value - residual / (1.0 - g)


def decoupled_certificate(uset, pi, baseline):
    """Weaker bound min_P rho(pi, P) - max_P rho(pi_B, P)."""
    lo, _ = robust_evaluate_policy(uset, pi)
    return lo - best_case_evaluate(uset, baseline)


def _ball_vertices(p_hat, e):
    """Extreme points of {p in simplex : ||p - p_hat||_1 <= e}: one receiver
    takes mass from donors emptied in some order."""
    n = p_hat.size
    out = [p_hat.copy()]
    for i in range(n):
        eps = min(e / 2.0, 1.0 - p_hat[i])
        if eps <= 0:
            continue
        others = [k for k in range(n) if k != i]
        for order in itertools.permutations(others):
            p = p_hat.copy()
            left = eps
            for k in order:
                t = min(left, p[k])
                p[k] -= t
                left -= t
            p[i] += eps
            out.append(p)
    return np.unique(np.array(out), axis=0)


def _chain_parts(m, pi, P):
    dist = pi.action_dist
    P_pi = np.einsum("sa,sat->st", dist, P)
    r_pi = np.einsum("sa,sa->s", dist, m.reward)
    Minv = np.linalg.inv(np.eye(m.n_states) - m.discount * P_pi)
    V = Minv @ r_pi
    d = m.initial_dist @ Minv
    return Minv, V, d, float(m.initial_dist @ V)


def _row_update(g, w, d_x, V, Mcol, delta):
    """Return change after adding w * delta to row x of P_pi (Sherman-Morrison)."""
    if w == 0.0:
        return np.zeros(delta.shape[0])
    return g * w * d_x * (delta @ V) / (1.0 - g * w * (delta @ Mcol))


def coupled_worstcase(uset, pi, baseline, init, max_sweeps=50, improve_tol=1e-9, full_vertices=4):
    """Row-wise coordinate descent for min_P rho(pi, P) - rho(pi_B, P).

    Returns (P, D) with P in the set and D the objective at P, an upper bound on
    the true minimum.
    """
    P = np.array(init, dtype=float)
    if not contains(uset, P):
        raise ValueError("init must belong to the uncertainty set")
    m = uset.nominal
    n, na, g = m.n_states, m.n_actions, m.discount
    P_hat, e = m.transition, uset.budget
    dx, db = pi.action_dist, baseline.action_dist
    rows = [(x, a) for x in range(n) for a in range(na) if dx[x, a] > 0 or db[x, a] > 0]
    verts = {}
    if n <= full_vertices:
        verts = {(x, a): _ball_vertices(P_hat[x, a], e[x, a]) for x, a in rows}
    Mp, Vp, dp, rho_p = _chain_parts(m, pi, P)
    Mb, Vb, dbv, rho_b = _chain_parts(m, baseline, P)
    D = rho_p - rho_b
    for _ in range(max_sweeps):
        changed = False
        for x, a in rows:
            wp, wb = dx[x, a], db[x, a]
            grad = g * (wp * dp[x] * Vp - wb * dbv[x] * Vb)
            cands = [worst_case_response(P_hat[x, a], e[x, a], grad)[0],
                     worst_case_response(P_hat[x, a], e[x, a], Vp)[0],
                     worst_case_response(P_hat[x, a], e[x, a], -Vb)[0]]
            if (x, a) in verts:
                cands.append(verts[(x, a)])
            C = np.vstack(cands)
            delta = C - P[x, a]
            change = (_row_update(g, wp, dp[x], Vp, Mp[:, x], delta)
                      - _row_update(g, wb, dbv[x], Vb, Mb[:, x], delta))
            k = int(np.argmin(change))
            if change[k] < -improve_tol:
                P[x, a] = C[k]
                Mp, Vp, dp, rho_p = _chain_parts(m, pi, P)
                Mb, Vb, dbv, rho_b = _chain_parts(m, baseline, P)
                D = rho_p - rho_b
                changed = True
        if not changed:
            break
    P = np.maximum(P, 0.0)
    P /= P.sum(axis=-1, keepdims=True)
    return P, float(return_of(m, pi, P) - return_of(m, baseline, P))


@dataclass
class RbcOptions:
    restarts: int = 5
    rounds: int = 20
    seed: int = 0
    certified: bool = True
    margin: float = 1e-10


def solve_rbc(uset, baseline, opts=None):
    """Maximize the worst-case improvement over the baseline.

    Candidate policies come from alternating between the optimal policy of a
    fixed model and a coupled worst-case model for that policy, started from
    several models. Each candidate is scored by the certified coupled bound and
    the best one is kept if it beats zero (the baseline's own score).
    """
    opts = opts or RbcOptions()
    m = uset.nominal
    rng = np.random.default_rng(opts.seed)
    pi_nom, _ = solve_optimal(m)
    pi_rob = robust_value_iteration(uset).policy
    _, P_worst_nom = robust_evaluate_policy(uset, pi_nom)
    _, P_worst_b = robust_evaluate_policy(uset, baseline)
    inits = [np.array(m.transition), P_worst_nom, P_worst_b]
    inits += [sample_member(uset, rng) for _ in range(max(opts.restarts - 3, 0))]
    inits = inits[:opts.restarts]

    pool = [baseline, pi_rob, pi_nom]
    estimates = [0.0, None, None]

    def add(p, est=None):
        for k, q in enumerate(pool):
            if p == q:
                if est is not None and (estimates[k] is None or est < estimates[k]):
                    estimates[k] = est
                return k
        pool.append(p)
        estimates.append(est)
        return len(pool) - 1

    for P in inits:
        seen = []
        for _ in range(opts.rounds):
            pi, _ = solve_optimal(m.replace(transition=P))
            if any(pi == s for s in seen):
                break
            seen.append(pi)
            P, D = coupled_worstcase(uset, pi, baseline, P)
            add(pi, D)

    scores = []
    for k, p in enumerate(pool):
        if k == 0:
            scores.append(0.0)
        elif opts.certified:
            scores.append(coupled_certificate(uset, p, baseline))
        else:
            est = estimates[k]
            if est is None:
                _, est = coupled_worstcase(uset, p, baseline, m.transition)
            scores.append(est)
    best = int(np.argmax(scores))
    threshold = opts.margin * m.value_scale
    diag = {"candidates": len(pool), "scores": scores, "certified": opts.certified,
            "decoupled_bound": None}
    if best == 0 or scores[best] <= threshold:
        return _fallback(baseline, 0.0, "rbc", diag)
    diag["decoupled_bound"] = decoupled_certificate(uset, pool[best], baseline)
    return SafePolicyResult(pool[best], scores[best], True, "rbc", diag)
