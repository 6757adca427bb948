"""Persistence (eventually always in S) and repeated reachability.

The maximal persistence probability is the limit of ``(T*)^n`` applied to
the maximal safety probability of ``S``. Starting from a safety value ``s``
we have ``T* s >= s``, so the iterates grow point-wise; any decrease beyond
float slack (plus the phase-1 stopping residual) signals a bug and aborts.
"""

from __future__ import annotations

import numpy as np

from .automata import Buchi
from .errors import ConvergenceError, UnsupportedError, ValidationError
from .mdp import MarkovPolicy, as_mask, bellman_max, bellman_selector
from .product import target_sets
from .reachability import (
    CONVERGED,
    DEFAULT_CAP,
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    DIVERGED,
    MONOTONE_SLACK,
    ReachSpec,
    ValueResult,
    absorbing_analysis,
    reach_unbounded,
    verify_excessive,
)


def _max_op(model):
    return lambda f, restrict=None: bellman_max(model, f, restrict_to=restrict)


def _policy_op(model, policy):
    policy = np.asarray(policy.actions if isinstance(policy, MarkovPolicy) else policy, dtype=np.int64)
    if policy.ndim != 1:
        raise ValidationError("single-policy evaluation needs a stationary policy")
    MarkovPolicy(policy).check_feasible(model)

    def op(f, restrict=None):
        return bellman_selector(model, f, policy, restrict_to=restrict), policy

    return op


def _persistence(op, n, safe, tol, max_iters, keep_history):
    # phase 1: safety
    v = safe.astype(float)
    res1 = []
    ok1 = False
    for _ in range(max_iters):
        vals, _ = op(v, safe)
        w = np.clip(np.where(safe, vals, 0.0), 0.0, 1.0)
        r = float(np.max(np.abs(w - v))) if n else 0.0
        res1.append(r)
        v = w
        if r < tol:
            ok1 = True
            break
    safety = v.copy()
    # phase 1 stops with v above the true safety by at most its last residual
    # r; T* is monotone and nonexpansive, so no later sweep can drop more than r
    slack = MONOTONE_SLACK + (res1[-1] if res1 else 0.0)

    # phase 2: unrestricted iteration of the Bellman operator
    history = [v.copy()] if keep_history else None
    res2 = []
    ok2 = False
    acts = None
    for _ in range(max_iters):
        vals, acts = op(v)
        w = np.clip(vals, 0.0, 1.0)
        drop = float(np.max(v - w)) if n else 0.0
        if drop > slack:
            x = int(np.argmax(v - w))
            raise ConvergenceError(f"persistence iterate decreased by {drop:.3g} at state {x}")
        r = float(np.max(np.abs(w - v))) if n else 0.0
        res2.append(r)
        v = w
        if keep_history:
            history.append(v.copy())
        if r < tol:
            ok2 = True
            break
    invariance = float(np.max(np.abs(np.clip(op(v)[0], 0, 1) - v))) if n else 0.0
    if acts is None:
        acts = op(v)[1]
    status = CONVERGED if ok1 and ok2 else DIVERGED
    info = {
        "safety": safety,
        "phase1_residuals": res1,
        "phase2_residuals": res2,
        "phase1_converged": ok1,
        "phase2_converged": ok2,
        "invariance_residual": invariance,
    }
    return ValueResult(v, MarkovPolicy(np.asarray(acts)), len(res1) + len(res2), res1 + res2,
                       None, status, history, info)


def persistence_value(model, safe, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS,
                      direction="max", keep_history=False):
    """Maximal probability of eventually staying in ``safe`` forever."""
    if direction != "max":
        raise UnsupportedError("only maximal persistence is supported")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    safe = as_mask(safe, model.n_states)
    return _persistence(_max_op(model), model.n_states, safe, tol, max_iters, keep_history)


def policy_persistence(model, safe, policy, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Persistence probability under a fixed stationary policy."""
    safe = as_mask(safe, model.n_states)
    return _persistence(_policy_op(model, policy), model.n_states, safe, tol, max_iters, False)


def buchi_value(product, direction="max", policy=None, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Probability of visiting the Büchi set infinitely often on a product model.

    With ``policy`` the value under that policy is exact:
    ``1 - P(eventually always outside F)``. The minimum over policies is
    exact by the same complement. The maximum is bracketed: below by the
    larger of the persistence value of ``F`` and the value of the greedy
    policy for reaching ``F``, above by the maximal probability of reaching
    ``F`` pushed down by repeated Bellman steps (the value is a fixpoint of
    the operator, so ``v <= u`` implies ``v <= T* u``). ``info['lower']`` and ``info['upper']`` hold the bracket and
    ``error_bound`` its width.
    """
    if not isinstance(product.automaton.acceptance, Buchi):
        raise ValidationError("buchi_value needs a Büchi automaton")
    model = product.model
    final = target_sets(product).buchi
    n = model.n_states
    if not final.any():
        zero = np.zeros(n)
        return ValueResult(zero, MarkovPolicy(np.argmax(model.feasible, axis=1)), 0, [], 0.0,
                           CONVERGED, info={"lower": zero, "upper": zero})

    if policy is not None:
        res = policy_persistence(model, ~final, policy, tol, max_iters)
        res.values = 1.0 - res.values
        res.error_bound = 0.0 if res.status == CONVERGED else None
        return res
    if direction == "min":
        res = persistence_value(model, ~final, tol, max_iters)
        res.values = 1.0 - res.values
        res.error_bound = 0.0 if res.status == CONVERGED else None
        return res
    if direction != "max":
        raise ValidationError(f"direction must be 'max' or 'min', got {direction!r}")

    upper = reach_unbounded(model, ReachSpec(np.ones(n, bool), final), tol=tol, max_iters=max_iters)
    u = upper.values
    for _ in range(max_iters):
        w = np.minimum(u, np.clip(bellman_max(model, u)[0], 0.0, 1.0))
        r = float(np.max(u - w))
        u = w
        if r < tol:
            break
    lower_p = persistence_value(model, final, tol, max_iters)
    greedy = policy_persistence(model, ~final, upper.policy, tol, max_iters)
    greedy_val = 1.0 - greedy.values
    lower = np.maximum(lower_p.values, greedy_val)
    policy_out = np.where(greedy_val >= lower_p.values, upper.policy.actions, lower_p.policy.actions)
    width = float(np.max(u - lower))
    ok = all(r.status == CONVERGED for r in (upper, lower_p, greedy))
    status = CONVERGED if ok and width < tol else ("bracket" if ok else DIVERGED)
    info = {"lower": lower, "upper": u}
    return ValueResult(lower, MarkovPolicy(policy_out), upper.iterations + lower_p.iterations,
                       upper.residuals, max(width, 0.0), status, info=info)


def persistence_truncated(model, safe, cert, avoid, eps, sup_avoid_bound, tol=DEFAULT_TOL,
                          max_iters=DEFAULT_MAX_ITERS, cap=DEFAULT_CAP):
    """Approximate maximal persistence by the reach problem ``A U B``.

    ``B = {g <= eps}`` and ``A`` is everything outside ``B`` and the set
    ``avoid``. The returned bound is ``max(eps, sup_avoid_bound)`` where the
    second term is a caller-supplied bound on the persistence value over
    ``avoid``.
    """
    if not 0 < eps <= 1:
        raise ValidationError("eps must lie in (0, 1]")
    if cert.mode != "selector":
        raise ValidationError("persistence truncation needs a selector-mode certificate")
    n = model.n_states
    safe = as_mask(safe, n)
    avoid = as_mask(avoid, n)
    g = np.asarray(cert.g, dtype=float)
    verdict = verify_excessive(model, cert, cap=cap)
    if not verdict.passed:
        raise ValidationError(f"certificate rejected (worst state {verdict.worst_state})")
    clash = avoid & (g <= 1.0)
    if clash.any():
        raise ValidationError(f"avoid set meets {{g <= 1}} at state {int(np.flatnonzero(clash)[0])}")
    s_rep = absorbing_analysis(model, safe, cap=cap, beta_cap=1)
    e_rep = absorbing_analysis(model, ~avoid, cap=cap, beta_cap=1)
    if not np.array_equal(s_rep.s_inf, e_rep.s_inf):
        diff = int(np.flatnonzero(s_rep.s_inf ^ e_rep.s_inf)[0])
        raise ValidationError(f"absorbing parts of S and of the complement of the avoid set differ at state {diff}")
    goal = g <= eps
    transit = ~(goal | avoid)
    report = absorbing_analysis(model, transit, cap=cap)
    res = reach_unbounded(model, ReachSpec(transit, goal), tol=tol, max_iters=max_iters,
                          certificate=report if report.verdict == "contractive" else None)
    res.error_bound = max(eps, float(sup_avoid_bound))
    res.info["report"] = report
    return res
