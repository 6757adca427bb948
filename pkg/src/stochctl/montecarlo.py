"""Seeded path simulation and Monte-Carlo estimators.

Random numbers come from a counter-based SplitMix64 construction: path ``p``
gets the key ``mix(seed ^ p)`` and its ``c``-th uniform is
``mix(key + (c + 1) * GAMMA) >> 11`` scaled by ``2**-53``. Counter 0 draws
the initial state and counter ``t + 1`` the transition at step ``t``, so
every path is reproducible on its own regardless of batch layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automata import BoundedReach, Reach
from .errors import UnsupportedError, ValidationError
from .mdp import MarkovPolicy, as_mask
from .product import compose, project_policy

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def path_keys(seed, path_ids):
    seed = np.uint64(int(seed) & _MASK64)
    with np.errstate(over="ignore"):
        return _mix(np.asarray(path_ids, dtype=np.uint64) ^ seed)


def uniforms(keys, counter):
    """One uniform in ``[0, 1)`` per key for the given counter."""
    with np.errstate(over="ignore"):
        z = _mix(keys + np.uint64(counter + 1) * _GAMMA)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class SimConfig:
    seed: int
    num_paths: int
    horizon: int
    x0: int | None = None
    initial: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be at least 1")
        if self.num_paths < 1:
            raise ValidationError("num_paths must be at least 1")
        if (self.x0 is None) == (self.initial is None):
            raise ValidationError("give exactly one of x0 or an initial distribution")


@dataclass
class PathBatch:
    states: np.ndarray  # (paths, horizon + 1)
    actions: np.ndarray  # (paths, horizon)


class _MarkovController:
    def __init__(self, policy):
        self.policy = policy
        self.x = None

    def reset(self, x0):
        self.x = x0

    def act(self, t):
        return self.policy.at(t)[self.x]

    def observe(self, x_next):
        self.x = x_next


def _inverse_cdf(cdf_rows, u):
    """Smallest index with cumulative mass above ``u``; rounding falls back to the last positive entry."""
    idx = (cdf_rows <= u[:, None]).sum(axis=1)
    over = idx >= cdf_rows.shape[1]
    if over.any():
        last = cdf_rows.shape[1] - 1 - np.argmax(np.diff(cdf_rows[over], prepend=0.0)[:, ::-1] > 0, axis=1)
        idx[over] = last
    return idx


def _draw_next(model, states, actions, u):
    n_act = model.n_actions
    pairs = states * n_act + actions
    uniq, inv = np.unique(pairs, return_inverse=True)
    out = np.empty_like(states)
    rows = model.kernel.rows(uniq // n_act, uniq % n_act)
    cdf = np.cumsum(rows, axis=1)
    for k in range(len(uniq)):
        sel = np.flatnonzero(inv == k)
        out[sel] = _inverse_cdf(np.broadcast_to(cdf[k], (len(sel), cdf.shape[1])), u[sel])
    return out


def sample_paths(model, cfg, policy):
    """Simulate ``cfg.num_paths`` paths of length ``cfg.horizon``.

    ``policy`` is a :class:`MarkovPolicy`, an action array, or a controller
    with ``reset``/``act``/``observe`` methods (see ``project_policy``).
    """
    if hasattr(policy, "act"):
        ctrl = policy
    else:
        pol = policy if isinstance(policy, MarkovPolicy) else MarkovPolicy(policy)
        pol.check_feasible(model)
        ctrl = _MarkovController(pol)
    n_paths = cfg.num_paths
    keys = path_keys(cfg.seed, np.arange(n_paths))
    if cfg.x0 is not None:
        if not 0 <= cfg.x0 < model.n_states:
            raise ValidationError(f"initial state {cfg.x0} out of range")
        x = np.full(n_paths, cfg.x0, dtype=np.int64)
    else:
        alpha = np.asarray(cfg.initial, dtype=float)
        if alpha.shape != (model.n_states,) or alpha.min() < 0 or abs(alpha.sum() - 1) > 1e-9:
            raise ValidationError("initial distribution must be a probability vector over the states")
        cdf = np.cumsum(alpha)
        x = _inverse_cdf(np.broadcast_to(cdf, (n_paths, len(cdf))), uniforms(keys, 0)).astype(np.int64)

    states = np.empty((n_paths, cfg.horizon + 1), dtype=np.int64)
    actions = np.empty((n_paths, cfg.horizon), dtype=np.int64)
    states[:, 0] = x
    ctrl.reset(x)
    for t in range(cfg.horizon):
        u = np.asarray(ctrl.act(t), dtype=np.int64)
        if not model.feasible[x, u].all():
            bad = int(np.flatnonzero(~model.feasible[x, u])[0])
            raise ValidationError(f"policy chose infeasible action {u[bad]} at state {x[bad]}")
        x = _draw_next(model, x, u, uniforms(keys, t + 1))
        ctrl.observe(x)
        actions[:, t] = u
        states[:, t + 1] = x
    return PathBatch(states, actions)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    num_paths: int


def _estimate(hits):
    p = float(np.mean(hits))
    return Estimate(p, float(np.sqrt(p * (1 - p) / len(hits))), len(hits))


def until_hits(states, safe, goal, n):
    """Per-path indicator of hitting ``goal`` within ``n`` steps through ``safe``."""
    safe = safe & ~goal
    in_goal = goal[states[:, : n + 1]]
    in_safe = safe[states[:, : n + 1]]
    first_goal = np.where(in_goal.any(axis=1), in_goal.argmax(axis=1), n + 1)
    left = ~(in_safe | in_goal)
    first_bad = np.where(left.any(axis=1), left.argmax(axis=1), n + 1)
    return (first_goal <= n) & (first_goal < first_bad)


def estimate_until(model, safe, goal, n, policy, cfg):
    if n > cfg.horizon:
        raise ValidationError("n exceeds the simulated horizon")
    safe = as_mask(safe, model.n_states)
    goal = as_mask(goal, model.n_states)
    batch = sample_paths(model, cfg, policy)
    return _estimate(until_hits(batch.states, safe, goal, n))


def accepted_within(automaton, labels, states, n):
    """Per-path indicator of the automaton reaching a final state within ``n`` letters."""
    acc = automaton.acceptance
    trans = np.asarray(automaton.trans, dtype=np.int64)
    final = np.zeros(automaton.n_states, dtype=bool)
    final[list(acc.final)] = True
    if isinstance(acc, BoundedReach):
        n = min(n, acc.horizon)
    q = np.full(states.shape[0], automaton.initial, dtype=np.int64)
    hit = final[q].copy()
    for k in range(n):
        q = trans[q, labels[states[:, k]]]
        hit |= final[q]
    return hit


def estimate_dfa_acceptance(model, automaton, product_policy, n, cfg):
    """Fraction of simulated traces accepted within ``n`` letters.

    The product policy is run on the base model through the automaton-tracking
    controller.
    """
    if not isinstance(automaton.acceptance, (Reach, BoundedReach)):
        raise UnsupportedError("only reach-type acceptance can be estimated from finite paths")
    if n > cfg.horizon:
        raise ValidationError("n exceeds the simulated horizon")
    prod = compose(model, automaton)
    ctrl = project_policy(prod, product_policy)
    batch = sample_paths(model, cfg, ctrl)
    return _estimate(accepted_within(automaton, model.labeling.labels, batch.states, n))
