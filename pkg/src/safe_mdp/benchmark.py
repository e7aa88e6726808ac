"""Synthetic two-dimensional benchmark and the sample-size experiment harness.

States are grid cells (i, j). Rewards grow with i only; j only changes how often
a move succeeds. The baseline ignores j: it is optimal for the model averaged
over j and never uses the j moves.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .mdp import Mdp, Policy, return_of, solve_optimal, policy_iteration
from .safe import RbcOptions, solve_ramdp, solve_rbc, solve_rmdp_safe
from .uncertainty import CountTable, UncertaintySet, contains, error_from_counts

ACTIONS = ("inc1", "dec1", "inc2", "dec2")
METHODS = ("EXP", "RWA", "ROB", "RBC")


@dataclass
class BenchmarkConfig:
    dim1: int = 5
    dim2: int = 3
    success_base: float = 0.1
    success_slope: float = 0.9
    gamma: float = 0.95
    r_max: float = 1.0
    seed: int = 0
    sample_sizes: list = field(default_factory=lambda: [200, 2_000, 200_000, 2_000_000,
                                                        50_000_000, 10_000_000_000])
    delta: float = 0.05
    behavior: str = "uniform"
    behavior_eps: float = 0.0
    n_trials: int = 20

    def __post_init__(self):
        if self.dim1 < 1 or self.dim2 < 1:
            raise ValueError("grid dimensions must be at least 1")
        if not 0.0 < self.success_base <= 1.0:
            raise ValueError("success_base must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0 or self.r_max <= 0:
            raise ValueError("invalid discount or reward bound")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.behavior not in ("uniform", "baseline_mix"):
            raise ValueError("behavior must be uniform or baseline_mix")
        if not 0.0 <= self.behavior_eps <= 1.0:
            raise ValueError("behavior_eps must lie in [0, 1]")
        if self.n_trials < 1 or any(int(s) < 0 for s in self.sample_sizes):
            raise ValueError("need at least one trial and nonnegative sample sizes")
        self.sample_sizes = [int(s) for s in self.sample_sizes]

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def success_prob(cfg, j):
    span = max(cfg.dim2 - 1, 1)
    return float(np.clip(cfg.success_base + cfg.success_slope * j / span, 0.05, 1.0))


def make_grid_benchmark(cfg):
    """True MDP over the (i, j) grid and the dimension-1 baseline."""
    n1, n2 = cfg.dim1, cfg.dim2
    n = n1 * n2
    idx = lambda i, j: i * n2 + j  # noqa: E731
    P = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    moves = ((1, 0), (-1, 0), (0, 1), (0, -1))
    for i in range(n1):
        for j in range(n2):
            s = idx(i, j)
            q = success_prob(cfg, j)
            R[s, :] = cfg.r_max * i / max(n1 - 1, 1)
            for a, (di, dj) in enumerate(moves):
                t = idx(min(max(i + di, 0), n1 - 1), min(max(j + dj, 0), n2 - 1))
                P[s, a, t] += q
                P[s, a, s] += 1.0 - q
    p0 = np.zeros(n)
    p0[[idx(0, j) for j in range(n2)]] = 1.0 / n2
    true_mdp = Mdp(R, P, p0, cfg.gamma, cfg.r_max)
    return true_mdp, _projected_baseline(cfg)


def _projected_baseline(cfg):
    n1, n2 = cfg.dim1, cfg.dim2
    qbar = np.mean([success_prob(cfg, j) for j in range(n2)])
    P = np.zeros((n1, 2, n1))
    R = np.zeros((n1, 2))
    for i in range(n1):
        R[i, :] = cfg.r_max * i / max(n1 - 1, 1)
        for a, di in enumerate((1, -1)):
            t = min(max(i + di, 0), n1 - 1)
            P[i, a, t] += qbar
            P[i, a, i] += 1.0 - qbar
    proj = Mdp(R, P, np.full(n1, 1.0 / n1), cfg.gamma, cfg.r_max)
    pi1, _ = policy_iteration(proj)
    acts = np.repeat(pi1.actions, n2)  # projected actions 0, 1 are inc1, dec1
    return Policy.deterministic(acts, 4)


def behavior_dist(true_mdp, baseline, behavior="uniform", eps=0.0):
    """Probability of sampling each (state, action) pair."""
    n, na = true_mdp.n_states, true_mdp.n_actions
    uniform = np.full((n, na), 1.0 / (n * na))
    if behavior == "uniform":
        return uniform
    mix = (1.0 - eps) * baseline.action_dist / n + eps * uniform
    return mix / mix.sum()


def sample_model(true_mdp, n_samples, behavior, seed, baseline=None, eps=0.0):
    """Count table from n_samples transitions; (x, a) drawn from the behavior
    distribution and x' from the true model.

    Counts are drawn as multinomials, which has the same law as drawing the
    samples one at a time.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    rng = np.random.default_rng(seed)
    w = behavior_dist(true_mdp, baseline, behavior, eps) if isinstance(behavior, str) else np.asarray(behavior)
    n, na = true_mdp.n_states, true_mdp.n_actions
    visits = rng.multinomial(int(n_samples), w.ravel()).reshape(n, na)
    counts = np.zeros((n, na, n), dtype=np.int64)
    for x in range(n):
        for a in range(na):
            if visits[x, a]:
                counts[x, a] = rng.multinomial(visits[x, a], true_mdp.transition[x, a])
    return CountTable(counts)


@dataclass
class ExperimentResult:
    rows: list                      # (method, sample_size, trial, improvement_pct)
    meta: dict = field(default_factory=dict)

    def table(self, method):
        out = {}
        for m, size, trial, pct in self.rows:
            if m == method:
                out.setdefault(size, []).append(pct)
        return out

    def mean(self, method, size):
        return float(np.mean(self.table(method)[size]))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["method", "sample_size", "trial", "improvement_pct"])
            for m, size, trial, pct in self.rows:
                w.writerow([m, size, trial, repr(float(pct))])

    def write_meta(self, path):
        with open(path, "w") as f:
            json.dump(self.meta, f, indent=2, sort_keys=True)


def _improvement(true_mdp, pi, rho_b, gap):
    if gap <= 1e-12 * true_mdp.value_scale:
        return 0.0
    return 100.0 * (return_of(true_mdp, pi) - rho_b) / gap


def run_trial(cfg, trial):
    """All methods at every sample size for one trial.

    Returns (rows, membership flags per sample size)."""
    true_mdp, baseline = make_grid_benchmark(cfg)
    rho_b = return_of(true_mdp, baseline)
    _, v_star = policy_iteration(true_mdp)
    gap = abs(float(true_mdp.initial_dist @ v_star) - rho_b)
    rows, member = [], []
    for k, size in enumerate(cfg.sample_sizes):
        seed = np.random.SeedSequence([cfg.seed, trial, k])
        counts = sample_model(true_mdp, size, cfg.behavior, seed, baseline, cfg.behavior_eps)
        sim = true_mdp.replace(transition=counts.empirical)
        e = error_from_counts(counts, cfg.delta)
        uset = UncertaintySet(sim, e)
        member.append(contains(uset, true_mdp.transition))
        pi_exp, _ = solve_optimal(sim)
        policies = {
            "EXP": pi_exp,
            "RWA": solve_ramdp(sim, e, baseline, rho_b).policy,
            "ROB": solve_rmdp_safe(uset, baseline, rho_b).policy,
            "RBC": solve_rbc(uset, baseline, RbcOptions(seed=int(seed.generate_state(1)[0]))).policy,
        }
        for m in METHODS:
            rows.append((m, size, trial, _improvement(true_mdp, policies[m], rho_b, gap)))
    return rows, member


def thread_count():
    raw = os.environ.get("SAFE_MDP_THREADS", "0").strip() or "0"
    k = int(raw)
    return k if k > 0 else (os.cpu_count() or 1)


def run_experiment(cfg, threads=None):
    threads = thread_count() if threads is None else max(int(threads), 1)
    trials = range(cfg.n_trials)
    if threads > 1 and cfg.n_trials > 1:
        with ProcessPoolExecutor(max_workers=min(threads, cfg.n_trials)) as ex:
            results = list(ex.map(run_trial, [cfg] * cfg.n_trials, trials))
    else:
        results = [run_trial(cfg, t) for t in trials]
    rows, member = [], []
    for r, mb in results:
        rows.extend(r)
        member.append(mb)
    member = np.array(member, dtype=bool)  # (trial, size)
    meta = {
        "config": cfg.to_dict(),
        "methods": list(METHODS),
        "optimal_reference_pct": {str(s): 100.0 for s in cfg.sample_sizes},
        "membership": {str(s): member[:, k].tolist() for k, s in enumerate(cfg.sample_sizes)},
        "membership_violation_rate": float(1.0 - member.mean()),
    }
    return ExperimentResult(rows, meta)
