"""Performance-loss bounds as computable numbers.

Anything that needs the optimal policy of the true model takes the true model
as an explicit argument; these are diagnostics for harnesses, not runtime
quantities.
"""

from dataclasses import dataclass, field

import numpy as np

from .mdp import (all_deterministic_policies, evaluate_policy, induced_kernel, occupancy,
                  policy_iteration, Policy, q_values, return_of, solve_optimal)
from .robust import robust_policy_values, robust_q
from .uncertainty import UncertaintySet, as_budget, row_distances
from .safe import (_aug_backup, adjust_rewards, augmented_robust_x_values, augmented_true_return,
                   lift_policy, solve_augmented_rmdp, solve_ramdp, solve_rbc, solve_rmdp_safe)

ENUM_MAX_STATES = 6
ENUM_MAX_ACTIONS = 3


@dataclass
class BoundReport:
    bound_name: str
    value: float
    inputs_digest: dict = field(default_factory=dict)
    holds: bool | None = None

    def to_dict(self):
        return {"bound_name": self.bound_name, "value": float(self.value),
                "inputs_digest": self.inputs_digest, "holds": self.holds}


def _loss_scale(gamma, r_max):
    return 2.0 * gamma * r_max / (1.0 - gamma) ** 2


def optimal_return(true_mdp):
    pi, v = policy_iteration(true_mdp)
    return pi, float(true_mdp.initial_dist @ v)


def performance_loss(true_mdp, pi, value=None):
    """Phi(pi) = rho(pi*, M*) - rho(pi, M*); pass value for policies that are not
    plain policies of true_mdp (augmented ones)."""
    _, best = optimal_return(true_mdp)
    rho = return_of(true_mdp, pi) if value is None else value
    return best - rho


def lemma1_bound(true_mdp, e, pi):
    """g Rmax / (1 - g) * p0^T (I - g P*_pi)^{-1} e_pi."""
    b = as_budget(e)
    g = true_mdp.discount
    P_pi, _ = induced_kernel(true_mdp, pi)
    e_pi = np.einsum("sa,sa->s", pi.action_dist, b)
    w = np.linalg.solve(np.eye(true_mdp.n_states) - g * P_pi.T, true_mdp.initial_dist)
    return float(g * true_mdp.r_max / (1.0 - g) * (w @ e_pi))


def lemma2_bounds(m1, m2, pi1, pi2, g_vec, tol=1e-9):
    """Entrywise lower and upper bounds on V1 - V2 given per-state L1 gaps g."""
    P1, r1 = induced_kernel(m1, pi1)
    P2, r2 = induced_kernel(m2, pi2)
    g_vec = np.asarray(g_vec, dtype=float)
    if np.any(row_distances(P1, P2) > g_vec + tol):
        raise ValueError("g does not bound the row distances")
    gam = m1.discount
    r_max = max(m1.r_max, m2.r_max)
    slack = gam * r_max / (1.0 - gam) * g_vec
    A = np.eye(m1.n_states) - gam * P1
    return np.linalg.solve(A, r1 - r2 - slack), np.linalg.solve(A, r1 - r2 + slack)


def thm1_bound(gamma, r_max, e):
    return float(_loss_scale(gamma, r_max) * np.max(as_budget(e)))


def weighted_error_norm(e, pi, u):
    """||e_pi||_{1,u} = sum_x u(x) e_pi(x)."""
    e_pi = np.einsum("sa,sa->s", pi.action_dist, as_budget(e))
    return float(np.asarray(u) @ e_pi)


def _optimal_norm(true_mdp, e):
    pi_star, _ = optimal_return(true_mdp)
    return weighted_error_norm(e, pi_star, occupancy(true_mdp, pi_star))


def thm2_4_bound(true_mdp, e, baseline_loss):
    first = _loss_scale(true_mdp.discount, true_mdp.r_max) * _optimal_norm(true_mdp, e)
    return max(float(min(first, baseline_loss)), 0.0)


def thm5_first_branch(true_mdp, e, baseline):
    nb = weighted_error_norm(e, baseline, occupancy(true_mdp, baseline))
    return float(_loss_scale(true_mdp.discount, true_mdp.r_max) * (_optimal_norm(true_mdp, e) + nb))


def thm5_bound(true_mdp, e, baseline):
    base_loss = performance_loss(true_mdp, baseline)
    return max(float(min(thm5_first_branch(true_mdp, e, baseline), base_loss)), 0.0)


def apply_operator(operator, context, v, lambdas=(1.0, 0.0)):
    """One application of the chosen Bellman operator.

    operator: "adjusted_nominal" (context: reward-adjusted Mdp), "robust"
    (context: UncertaintySet) or "augmented_robust" (context: UncertaintySet,
    lambdas=(l1, l2), v over the product space).
    """
    v = np.asarray(v, dtype=float)
    if operator == "adjusted_nominal":
        return q_values(context, v).max(axis=1)
    if operator == "robust":
        q, _ = robust_q(context, v)
        return q.max(axis=1)
    if operator == "augmented_robust":
        l1, l2 = lambdas
        q, _ = _aug_backup(context, v, l1, l2)
        return q.max(axis=1)
    raise ValueError(f"unknown operator {operator!r}")


def bellman_residual(operator, context, v, lambdas=(1.0, 0.0)):
    return float(np.max(np.abs(apply_operator(operator, context, v, lambdas) - v)))


def corollary_bound(br, gamma, norm_term, baseline_loss):
    if br < 0 or norm_term < 0:
        raise ValueError("residual and norm term must be nonnegative")
    return max(float(min(br / (1.0 - gamma) + norm_term, baseline_loss)), 0.0)


def _enumerable(m):
    return m.n_states <= ENUM_MAX_STATES and m.n_actions <= ENUM_MAX_ACTIONS


def nominal_norm_term(simulator, e):
    """max over deterministic pi of 2 g Rmax/(1-g)^2 ||e_pi||_{1,u_pi} with the
    simulator's occupancy. Returns (value, exact flag); larger models fall back
    to the ||e||_inf relaxation."""
    scale = _loss_scale(simulator.discount, simulator.r_max)
    if not _enumerable(simulator):
        return scale * np.max(as_budget(e)), False
    best = 0.0
    for acts in all_deterministic_policies(simulator.n_states, simulator.n_actions):
        pi = Policy.deterministic(acts, simulator.n_actions)
        best = max(best, weighted_error_norm(e, pi, occupancy(simulator, pi)))
    return scale * best, True


def robust_norm_term(uset):
    """max over deterministic pi of min over P in the set of
    2 g Rmax/(1-g)^2 ||e_pi||_{1,u_pi(P)}.

    The inner minimum is the worst-case return of pi when e_pi is the reward,
    scaled by (1 - g)."""
    m = uset.nominal
    scale = _loss_scale(m.discount, m.r_max)
    if not _enumerable(m):
        return scale * uset.budget.max(), False
    b = uset.budget
    em = m.replace(reward=b, r_max=max(float(b.max()), 1e-12), reward_bounded=False)
    es = UncertaintySet(em, uset.error)
    best = 0.0
    for acts in all_deterministic_policies(m.n_states, m.n_actions):
        pi = Policy.deterministic(acts, m.n_actions)
        v, _ = robust_policy_values(es, pi)
        best = max(best, (1.0 - m.discount) * float(m.initial_dist @ v))
    return scale * best, True


def ramdp_residual(simulator, e, pi):
    adjusted = adjust_rewards(simulator, e)
    v = evaluate_policy(adjusted, pi)
    return bellman_residual("adjusted_nominal", adjusted, v)


def rmdp_residual(uset, pi):
    v, _ = robust_policy_values(uset, pi)
    return bellman_residual("robust", uset, v)


def armdp_residual(uset, pi_aug):
    v = augmented_robust_x_values(uset, pi_aug)
    return bellman_residual("augmented_robust", uset, v, (1.0, 0.0))


def bound_report_set(true_mdp, simulator, e, baseline, tol=1e-9):
    """Every bound for the policies each method returns on (simulator, e),
    checked against the true model. The baseline return is taken from the
    true model, as the constrained methods assume it is known."""
    b = as_budget(e)
    uset = UncertaintySet(simulator, b)
    g, r_max = true_mdp.discount, true_mdp.r_max
    n = simulator.n_states
    rho_b = return_of(true_mdp, baseline)
    phi_b = performance_loss(true_mdp, baseline)
    member = bool(np.all(row_distances(true_mdp.transition, simulator.transition) <= b + 1e-12))
    reports = []

    def add(name, value, lhs, **digest):
        digest.update(lhs=float(lhs), assumption_holds=member)
        reports.append(BoundReport(name, float(value), digest, bool(lhs <= value + tol)))

    gap = abs(rho_b - return_of(simulator, baseline))
    add("lemma1", lemma1_bound(true_mdp, b, baseline), gap, policy="baseline")

    pi_s, _ = solve_optimal(simulator)
    add("thm1", thm1_bound(g, r_max, b), performance_loss(true_mdp, pi_s), policy="simulator_optimal")

    t24 = thm2_4_bound(true_mdp, b, phi_b)
    ra = solve_ramdp(simulator, b, baseline, rho_b)
    rm = solve_rmdp_safe(uset, baseline, rho_b)
    ar = solve_augmented_rmdp(uset, baseline, rho_b)
    if ar.policy.n_states == n:
        ar_aug = lift_policy(ar.policy, n)
        ar_loss = performance_loss(true_mdp, ar.policy)
    else:
        ar_aug = ar.policy
        ar_loss = performance_loss(true_mdp, None,
                                   augmented_true_return(simulator, true_mdp.transition, ar.policy))
    ra_loss = performance_loss(true_mdp, ra.policy)
    rm_loss = performance_loss(true_mdp, rm.policy)
    add("thm2", t24, ra_loss, policy="ramdp", accepted=ra.accepted)
    add("thm3", t24, rm_loss, policy="rmdp", accepted=rm.accepted)
    add("thm4", t24, ar_loss, policy="armdp", accepted=ar.accepted)
    rb = solve_rbc(uset, baseline)
    add("thm5", thm5_bound(true_mdp, b, baseline), performance_loss(true_mdp, rb.policy),
        policy="rbc", accepted=rb.accepted)

    nt1, exact1 = nominal_norm_term(simulator, b)
    nt2, exact2 = robust_norm_term(uset)
    add("cor1", corollary_bound(ramdp_residual(simulator, b, ra.policy), g, nt1, phi_b), ra_loss,
        policy="ramdp", norm_exact=exact1)
    add("cor2", corollary_bound(rmdp_residual(uset, rm.policy), g, nt2, phi_b), rm_loss,
        policy="rmdp", norm_exact=exact2)
    add("cor3", corollary_bound(armdp_residual(uset, ar_aug), g, nt2, phi_b), ar_loss,
        policy="armdp", norm_exact=exact2)
    return reports
