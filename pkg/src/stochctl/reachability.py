"""Constrained reachability and safety by dynamic programming.

Values are computed by iterating ``R f = 1_G + 1_S * T f`` from ``1_G``
(reach) or ``V <- 1_S * T V`` from ``1_S`` (safety), where ``T`` is the
sup- or inf-Bellman operator. Contraction of the unbounded iteration is
analysed through the chain of absorbing sets ``S_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mdp import MarkovPolicy, as_mask, bellman_max, bellman_min, bellman_selector

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 10**4
DEFAULT_CAP = 10**4
MASS_TOL = 1e-12
MONOTONE_SLACK = 1e-12
EXCESSIVE_SLACK = 1e-12

CONVERGED = "converged"
LOWER_ESTIMATE = "lower-estimate"
DIVERGED = "diverged"
BOUNDED = "bounded"


@dataclass(frozen=True)
class ReachSpec:
    """Safe set, goal set, horizon (``None`` for unbounded) and direction.

    The safe set is normalised to ``S \\ G``; the unsafe set is whatever is
    left over.
    """

    safe: np.ndarray
    goal: np.ndarray
    horizon: int | None = None
    direction: str = "max"

    def __post_init__(self):
        safe = np.asarray(self.safe, dtype=bool)
        goal = np.asarray(self.goal, dtype=bool)
        if safe.shape != goal.shape or safe.ndim != 1:
            raise ValidationError("safe and goal masks must be 1-D and of equal length")
        if self.direction not in ("max", "min"):
            raise ValidationError(f"direction must be 'max' or 'min', got {self.direction!r}")
        if self.horizon is not None and self.horizon < 0:
            raise ValidationError("horizon must be non-negative")
        object.__setattr__(self, "safe", safe & ~goal)
        object.__setattr__(self, "goal", goal)

    @classmethod
    def build(cls, n_states, safe, goal, horizon=None, direction="max"):
        return cls(as_mask(safe, n_states), as_mask(goal, n_states), horizon, direction)

    @property
    def unsafe(self):
        return ~(self.safe | self.goal)


@dataclass
class ValueResult:
    values: np.ndarray
    policy: MarkovPolicy
    iterations: int
    residuals: list
    error_bound: float | None
    status: str
    history: list | None = None
    info: dict = field(default_factory=dict)


def _operator(direction):
    if direction == "max":
        return bellman_max
    if direction == "min":
        return bellman_min
    raise ValidationError(f"direction must be 'max' or 'min', got {direction!r}")


def _sweep(model, spec, f):
    vals, acts = _operator(spec.direction)(model, f)
    out = np.where(spec.goal, 1.0, np.where(spec.safe, vals, 0.0))
    return np.clip(out, 0.0, 1.0), acts


def _check_unit(f, n):
    f = np.asarray(f, dtype=float)
    if f.shape != (n,):
        raise ValidationError(f"value vector has shape {f.shape}, expected ({n},)")
    if f.min() < -1e-12 or f.max() > 1 + 1e-12:
        raise ValidationError("value vector must lie in [0, 1]")
    return f


def dp_step(model, spec, f):
    """One application of ``1_G + 1_S * T f``."""
    return _sweep(model, spec, _check_unit(f, model.n_states))[0]


def _default_policy(model):
    return MarkovPolicy(np.argmax(model.feasible, axis=1))


def reach_bounded(model, spec, keep_history=False):
    """``n``-step constrained reachability with the time-varying optimal policy.

    The decision map used at time ``t`` comes from sweep ``n - t``.
    """
    n = spec.horizon
    if n is None:
        raise ValidationError("reach_bounded needs a finite horizon")
    f = spec.goal.astype(float)
    history = [f.copy()] if keep_history else None
    maps, residuals = [], []
    for _ in range(n):
        g, acts = _sweep(model, spec, f)
        if np.any(g < f - MONOTONE_SLACK):
            raise ValidationError("bounded reach values decreased between sweeps")
        residuals.append(float(np.max(np.abs(g - f))) if g.size else 0.0)
        maps.append(acts)
        f = g
        if keep_history:
            history.append(f.copy())
    policy = MarkovPolicy(np.array(maps[::-1])) if maps else _default_policy(model)
    return ValueResult(f, policy, n, residuals, None, BOUNDED, history)


def _certificate_matches(cert, safe):
    return cert is not None and cert.verdict == "contractive" and np.array_equal(cert.safe, safe)


def reach_unbounded(model, spec, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS, certificate=None):
    """Iterate the reach operator from ``1_G`` to a sup-norm residual below ``tol``.

    ``certificate`` is an :class:`AbsorbenceReport` for the same safe set. With
    a contractive certificate the result carries the bound ``beta**(k // m)``;
    for the min direction the absence of one marks the result as a lower
    estimate, since the limit can fall short of the true value.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    f = spec.goal.astype(float)
    residuals = []
    acts = np.argmax(model.feasible, axis=1)
    converged = False
    k = 0
    while k < max_iters:
        g, acts = _sweep(model, spec, f)
        k += 1
        res = float(np.max(np.abs(g - f))) if g.size else 0.0
        residuals.append(res)
        f = g
        if res < tol:
            converged = True
            break
    contractive = _certificate_matches(certificate, spec.safe)
    bound = contraction_error_bound(certificate, k) if contractive else None
    fix_res = float(np.max(np.abs(_sweep(model, spec, f)[0] - f))) if f.size else 0.0
    if not converged:
        status = DIVERGED
    elif spec.direction == "min" and not (contractive and fix_res < tol):
        status = LOWER_ESTIMATE
    else:
        status = CONVERGED
    info = {"fixpoint_residual": fix_res}
    return ValueResult(f, MarkovPolicy(acts), k, residuals, bound, status, info=info)


# ---------------------------------------------------------------------------
# safety


def _safety_sweep(model, safe, direction, v):
    vals, acts = _operator(direction)(model, v, restrict_to=safe)
    return np.clip(np.where(safe, vals, 0.0), 0.0, 1.0), acts


def safety_bounded(model, safe, direction="max", horizon=0, keep_history=False):
    """``V_n`` with ``V_0 = 1_S`` and ``V_{k+1} = 1_S * T(1_S V_k)``."""
    safe = as_mask(safe, model.n_states)
    v = safe.astype(float)
    history = [v.copy()] if keep_history else None
    maps, residuals = [], []
    for _ in range(horizon):
        w, acts = _safety_sweep(model, safe, direction, v)
        if np.any(w > v + MONOTONE_SLACK):
            raise ValidationError("safety values increased between sweeps")
        residuals.append(float(np.max(np.abs(w - v))) if w.size else 0.0)
        maps.append(acts)
        v = w
        if keep_history:
            history.append(v.copy())
    policy = MarkovPolicy(np.array(maps[::-1])) if maps else _default_policy(model)
    return ValueResult(v, policy, horizon, residuals, None, BOUNDED, history)


def safety_unbounded(model, safe, direction="max", tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS,
                     certificate=None):
    if tol <= 0:
        raise ValidationError("tol must be positive")
    safe = as_mask(safe, model.n_states)
    v = safe.astype(float)
    residuals = []
    acts = np.argmax(model.feasible, axis=1)
    converged = False
    k = 0
    while k < max_iters:
        w, acts = _safety_sweep(model, safe, direction, v)
        k += 1
        if np.any(w > v + MONOTONE_SLACK):
            raise ValidationError("safety values increased between sweeps")
        res = float(np.max(np.abs(w - v))) if w.size else 0.0
        residuals.append(res)
        v = w
        if res < tol:
            converged = True
            break
    bound = contraction_error_bound(certificate, k) if _certificate_matches(certificate, safe) else None
    status = CONVERGED if converged else DIVERGED
    return ValueResult(v, MarkovPolicy(acts), k, residuals, bound, status)


# ---------------------------------------------------------------------------
# absorbing sets and contraction


@dataclass
class AbsorbenceReport:
    safe: np.ndarray
    chain: list
    s_inf: np.ndarray
    stabilized: bool
    betas: list
    m: int | None
    beta: float | None
    verdict: str  # contractive | non-contractive | cap-reached
    consistent: bool
    mass_tol: float


def absorbing_analysis(model, safe, cap=DEFAULT_CAP, mass_tol=MASS_TOL, beta_cap=None):
    """Chain ``S_{n+1} = {x in S : some feasible u keeps T(S_n|x,u) = 1}`` and ``m(S)``.

    Mass is tested as ``T(S_n^c|x,u) <= mass_tol``. ``m(S)`` is the first
    ``n`` with ``max_S V_n < 1 - mass_tol`` for the max-safety sweeps ``V_n``;
    the two computations are independent and cross-checked.
    """
    if cap < 1:
        raise ValidationError("cap must be at least 1")
    safe = as_mask(safe, model.n_states)
    beta_cap = cap if beta_cap is None else beta_cap
    if not safe.any():
        return AbsorbenceReport(safe, [safe], safe.copy(), True, [0.0], 0, 0.0,
                                "contractive", True, mass_tol)

    feas = model.feasible
    chain = [safe.copy()]
    cur = safe.copy()
    stabilized = False
    for _ in range(cap):
        leak = model.kernel.expect((~cur).astype(float))
        keep = safe & np.any(feas & (leak <= mass_tol), axis=1)
        chain.append(keep)
        if np.array_equal(keep, cur):
            stabilized = True
            break
        cur = keep
    s_inf = chain[-1]

    v = safe.astype(float)
    betas = [1.0]
    m = None
    for n in range(1, beta_cap + 1):
        v, _ = _safety_sweep(model, safe, "max", v)
        b = float(v[safe].max())
        betas.append(b)
        if b < 1.0 - mass_tol:
            m = n
            break
    beta = betas[m] if m is not None else None

    empty = not s_inf.any()
    if stabilized and not empty:
        verdict = "non-contractive"
    elif stabilized and empty and m is not None:
        verdict = "contractive"
    else:
        verdict = "cap-reached"
    consistent = (stabilized and empty) == (m is not None) if stabilized else True
    return AbsorbenceReport(safe, chain, s_inf, stabilized, betas, m, beta, verdict, consistent, mass_tol)


def contraction_error_bound(report, n):
    """``beta ** (n // m)``: sup-distance between ``n``-sweep and unbounded values on ``S``."""
    if report is None or report.verdict != "contractive":
        raise ValidationError("contraction bound needs a contractive absorbence report")
    if report.m == 0:
        return 0.0
    if n < report.m:
        return 1.0
    return float(report.beta ** (n // report.m))


# ---------------------------------------------------------------------------
# excessive-function certificates


@dataclass(frozen=True)
class ExcessiveCertificate:
    """Function ``g >= 0`` claimed to drift down on ``{g <= 1}`` inside ``target``.

    ``mode`` is ``uniform`` (every feasible action) or ``selector`` (the
    actions of ``selector``).
    """

    g: np.ndarray
    target: np.ndarray
    mode: str = "uniform"
    selector: np.ndarray | None = None


@dataclass
class ExcessiveVerdict:
    passed: bool
    drift_ok: bool
    sublevel_in_target: bool
    absorbing_ok: bool
    degenerate: bool
    worst_state: int | None
    worst_slack: float
    notes: tuple = ()


def verify_excessive(model, cert, slack=EXCESSIVE_SLACK, cap=DEFAULT_CAP):
    """Check the drift inequality on ``{g <= 1}`` and the set conditions.

    The open-sublevel-set requirement has no meaning on a finite grid and is
    reported as unchecked.
    """
    g = np.asarray(cert.g, dtype=float)
    if g.shape != (model.n_states,) or not np.all(np.isfinite(g)) or g.min() < 0:
        raise ValidationError("certificate g must be a finite non-negative vector over the states")
    target = as_mask(cert.target, model.n_states)
    low = g <= 1.0
    q = model.kernel.expect(g)
    if cert.mode == "uniform":
        drift = np.where(model.feasible, q, -np.inf).max(axis=1)
    elif cert.mode == "selector":
        if cert.selector is None:
            raise ValidationError("selector mode needs a selector policy")
        drift = bellman_selector(model, g, cert.selector)
    else:
        raise ValidationError(f"unknown certificate mode {cert.mode!r}")
    excess = np.where(low, drift - g, -np.inf)
    worst = int(np.argmax(excess)) if low.any() else None
    worst_slack = float(excess[worst]) if worst is not None else float("-inf")
    drift_ok = worst is None or worst_slack <= slack

    sub_ok = bool(np.all(target[low]))
    report = absorbing_analysis(model, target, cap=cap, beta_cap=1)
    absorbing_ok = bool(np.all(g[report.s_inf] == 0))
    notes = ["open sublevel sets: not machine-checked on a finite grid"]
    degenerate = not low.any()
    if degenerate:
        notes.append("degenerate: {g <= 1} is empty, drift condition holds vacuously")
    if not report.stabilized:
        notes.append("absorbing chain hit the cap; last set used")
    return ExcessiveVerdict(drift_ok and sub_ok and absorbing_ok, drift_ok, sub_ok, absorbing_ok,
                            degenerate, worst, worst_slack, tuple(notes))


def truncated_reach(model, spec, cert, eps, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS,
                    cap=DEFAULT_CAP):
    """Solve on ``S \\ {g < eps}``; the result differs from the true value by at most
    ``eps`` plus the contraction bound of the truncated run."""
    if not 0 < eps <= 1:
        raise ValidationError("eps must lie in (0, 1]")
    g = np.asarray(cert.g, dtype=float)
    clash = spec.goal & (g <= 1.0)
    if clash.any():
        raise ValidationError(f"goal meets {{g <= 1}} at state {int(np.flatnonzero(clash)[0])}")
    verdict = verify_excessive(model, cert, cap=cap)
    if not verdict.passed:
        raise ValidationError(f"certificate rejected (worst state {verdict.worst_state})")
    safe = spec.safe & ~(g < eps)
    report = absorbing_analysis(model, safe, cap=cap)
    if report.verdict != "contractive":
        raise ValidationError("truncated safe set is not contractive; certificate inconsistent with model")
    inner = ReachSpec(safe, spec.goal, None, spec.direction)
    res = reach_unbounded(model, inner, tol=tol, max_iters=max_iters, certificate=report)
    res.error_bound = eps + res.error_bound
    res.info["truncation"] = eps
    res.info["report"] = report
    return res
