"""JSON model and policy documents.

Floats are written with repr, the shortest string that parses back to the same
double, so documents round-trip bit for bit.
"""

import json
from dataclasses import dataclass

import numpy as np

from .mdp import Mdp, Policy
from .uncertainty import CountTable, ErrorFunction

REQUIRED = ("n_states", "n_actions", "gamma", "r_max", "reward", "transition", "initial_dist")


class DocumentError(ValueError):
    """A model or policy file that does not parse or validate."""


@dataclass(frozen=True, eq=False)
class ModelDocument:
    mdp: Mdp
    counts: CountTable | None = None
    error: ErrorFunction | None = None

    def to_json(self):
        m = self.mdp
        d = {
            "n_states": m.n_states,
            "n_actions": m.n_actions,
            "gamma": m.discount,
            "r_max": m.r_max,
            "reward": m.reward.tolist(),
            "transition": m.transition.tolist(),
            "initial_dist": m.initial_dist.tolist(),
        }
        if self.counts is not None:
            d["counts"] = self.counts.counts.tolist()
        if self.error is not None:
            d["error"] = self.error.budget.tolist()
        return d


def _array(d, key, ndim, shape):
    try:
        a = np.array(d[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DocumentError(f"{key}: not a numeric array") from exc
    if a.ndim != ndim or a.shape != shape:
        raise DocumentError(f"{key}: expected shape {shape}, got {a.shape}")
    return a


def parse_model(d):
    if not isinstance(d, dict):
        raise DocumentError("model document must be a JSON object")
    missing = [k for k in REQUIRED if k not in d]
    if missing:
        raise DocumentError(f"missing fields: {missing}")
    n, na = d["n_states"], d["n_actions"]
    if not (isinstance(n, int) and isinstance(na, int)) or n < 1 or na < 1:
        raise DocumentError("n_states and n_actions must be positive integers")
    reward = _array(d, "reward", 2, (n, na))
    transition = _array(d, "transition", 3, (n, na, n))
    p0 = _array(d, "initial_dist", 1, (n,))
    try:
        mdp = Mdp(reward, transition, p0, float(d["gamma"]), float(d["r_max"]))
        counts = error = None
        if d.get("counts") is not None:
            c = _array(d, "counts", 3, (n, na, n))
            counts = CountTable(c.astype(np.int64) if np.all(c == np.round(c)) else c)
        if d.get("error") is not None:
            error = ErrorFunction(_array(d, "error", 2, (n, na)))
    except DocumentError:
        raise
    except (TypeError, ValueError) as exc:
        raise DocumentError(str(exc)) from exc
    return ModelDocument(mdp, counts, error)


def load_model(path):
    return parse_model(_load_json(path))


def dump_model(doc, path=None):
    text = json.dumps(doc.to_json(), indent=1)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON ({exc.msg})") from exc


def parse_policy(d, n_actions):
    """Accepts {"actions": [...]}, {"action_dist": [[...]]} or a bare list of
    either form."""
    if isinstance(d, dict):
        if "actions" in d:
            d = d["actions"]
        elif "action_dist" in d:
            d = d["action_dist"]
        else:
            raise DocumentError("policy needs 'actions' or 'action_dist'")
    try:
        a = np.array(d, dtype=float)
        if a.ndim == 1:
            if not np.all(a == np.round(a)) or np.any(a < 0) or np.any(a >= n_actions):
                raise DocumentError("actions must be integers in [0, n_actions)")
            return Policy.deterministic(a.astype(int), n_actions)
        if a.ndim == 2 and a.shape[1] == n_actions:
            return Policy.stochastic(a)
    except DocumentError:
        raise
    except (TypeError, ValueError) as exc:
        raise DocumentError(f"invalid policy: {exc}") from exc
    raise DocumentError("policy does not match the model's action count")


def load_policy(path, n_actions):
    return parse_policy(_load_json(path), n_actions)


def policy_json(pi):
    if pi.kind == "deterministic":
        return {"actions": pi.actions.tolist()}
    return {"action_dist": pi.action_dist.tolist()}
