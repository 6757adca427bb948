"""Two-subnetwork power network with storage, on a uniform grid.

Each subnetwork ``i`` evolves as
``x' = min(max(c * (x + u_i * v * p + r_i - d_i), 0), M)`` with
``u_1 = u``, ``u_2 = 1 - u``, deterministic plant output ``p`` and
independent truncated-Gaussian renewable production ``r_i`` and demand
``d_i``. Because noise and clamp act per coordinate, each transition row is
the outer product of two one-dimensional rows.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .kernels import KroneckerKernel
from .mdp import ActionSet, GridModel, Labeling, StateGrid

ROW_DEFECT_TOL = 1e-6
TAIL_SIGMAS = 40.0
QUAD_PANELS = 60
QUAD_ORDER = 8
_CHUNK = 4096


def truncated_gaussian_cdf(mu, sigma, lo, hi, x):
    """CDF of N(mu, sigma^2) conditioned on [lo, hi]."""
    if not lo < hi or sigma <= 0:
        raise ValidationError("need lo < hi and sigma > 0")
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    z = (np.clip(x, lo, hi) - mu) / sigma
    # lower-tail differences keep relative precision below the mean,
    # upper-tail differences above it
    low = (ndtr(z) - ndtr(a)) / (ndtr(b) - ndtr(a))
    high = 1.0 - (ndtr(-z) - ndtr(-b)) / (ndtr(-a) - ndtr(-b))
    return np.clip(np.where(z <= 0, low, high), 0.0, 1.0)


def truncated_gaussian_sf(mu, sigma, lo, hi, x):
    """Survival function ``1 - CDF`` evaluated without cancellation in the upper tail."""
    if not lo < hi or sigma <= 0:
        raise ValidationError("need lo < hi and sigma > 0")
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    z = (np.clip(x, lo, hi) - mu) / sigma
    high = (ndtr(-z) - ndtr(-b)) / (ndtr(-a) - ndtr(-b))
    low = 1.0 - (ndtr(z) - ndtr(a)) / (ndtr(b) - ndtr(a))
    return np.clip(np.where(z > 0, high, low), 0.0, 1.0)


def truncated_gaussian_pdf(mu, sigma, lo, hi, x):
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    z = (x - mu) / sigma
    dens = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * sigma * (ndtr(b) - ndtr(a)))
    return np.where((x >= lo) & (x <= hi), dens, 0.0)


@dataclass(frozen=True)
class Noise:
    mu: float
    sigma: float
    lo: float = 0.0
    hi: float = 2.0

    def __post_init__(self):
        if self.sigma <= 0 or not self.lo < self.hi:
            raise ValidationError("noise needs sigma > 0 and lo < hi")


@dataclass(frozen=True)
class PowerNetParams:
    M: float = 2.0
    c: float = 0.93
    p: float = 0.7
    v_min: float = 0.8
    renewable: tuple = (Noise(0.1, 0.03), Noise(0.05, 0.01))
    demand: tuple = (Noise(0.2, 0.05), Noise(0.4, 0.07))
    cells: int = 64
    v_levels: int = 5
    u_levels: int = 11

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise ValidationError("reserve rate c must lie in (0, 1]")
        if not 0 < self.v_min <= 1:
            raise ValidationError("v_min must lie in (0, 1]")
        if self.M <= 0:
            raise ValidationError("storage bound M must be positive")
        if self.cells < 2 or self.v_levels < 1 or self.u_levels < 1:
            raise ValidationError("grid and action resolutions must be positive")

    def grid(self):
        return StateGrid((0.0, 0.0), (self.M, self.M), (self.cells, self.cells))

    def action_vectors(self):
        """``(v, u1)`` pairs: ``v`` from 1 down to ``v_min``, then ``u1`` from 0 up to 1.

        Lowest-index tie breaking therefore prefers the full load ``v = 1``.
        """
        vs = np.linspace(1.0, self.v_min, self.v_levels) if self.v_levels > 1 else np.array([1.0])
        us = np.linspace(0.0, 1.0, self.u_levels) if self.u_levels > 1 else np.array([0.0])
        return np.array([(v, u) for v in vs for u in us])


def _gauss_legendre_nodes(lo, hi, panels=QUAD_PANELS, order=QUAD_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class Difference:
    """Distribution of ``r - d`` for independent truncated Gaussians."""

    def __init__(self, r, d):
        self.r, self.d = r, d
        lo = max(r.lo, r.mu - TAIL_SIGMAS * r.sigma)
        hi = min(r.hi, r.mu + TAIL_SIGMAS * r.sigma)
        self.nodes, w = _gauss_legendre_nodes(lo, hi)
        self.weights = w * truncated_gaussian_pdf(r.mu, r.sigma, r.lo, r.hi, self.nodes)
        self.mean = r.mu - d.mu

    def _integrate(self, z, kernel):
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        out = np.empty_like(flat)
        d = self.d
        for i in range(0, len(flat), _CHUNK):
            s = self.nodes[None, :] - flat[i:i + _CHUNK, None]
            out[i:i + _CHUNK] = kernel(d.mu, d.sigma, d.lo, d.hi, s) @ self.weights
        return np.clip(out, 0.0, 1.0).reshape(z.shape)

    def cdf(self, z):
        """P(r - d <= z) = E_r[P(d >= r - z)]."""
        return self._integrate(z, truncated_gaussian_sf)

    def sf(self, z):
        """P(r - d > z) = E_r[P(d < r - z)]."""
        return self._integrate(z, truncated_gaussian_cdf)


def axis_rows(diff, centers, edges, shift, c):
    """One-dimensional transition rows ``(len(centers), cells)`` for a fixed drift ``shift``.

    Cell ``j`` receives ``P(e_j <= c (x + shift + w) < e_{j+1})`` with the
    outer cells absorbing the clamped mass.
    """
    inner = edges[1:-1]
    z = inner[None, :] / c - centers[:, None] - shift  # (n, cells - 1)
    upper = z > diff.mean
    F = np.zeros_like(z)
    S = np.zeros_like(z)
    F[~upper] = diff.cdf(z[~upper])
    S[upper] = diff.sf(z[upper])
    n, cells = len(centers), len(edges) - 1
    rows = np.empty((n, cells))
    lo_F = np.concatenate([np.zeros((n, 1)), F], axis=1)
    hi_F = np.concatenate([F, np.ones((n, 1))], axis=1)
    lo_S = np.concatenate([np.ones((n, 1)), S], axis=1)
    hi_S = np.concatenate([S, np.zeros((n, 1))], axis=1)
    lo_up = np.concatenate([np.zeros((n, 1), bool), upper], axis=1)
    hi_up = np.concatenate([upper, np.ones((n, 1), bool)], axis=1)
    # below the mean use CDF differences, above it survival differences
    both_low = ~lo_up & ~hi_up
    both_high = lo_up & hi_up
    mixed = ~lo_up & hi_up
    rows[both_low] = (hi_F - lo_F)[both_low]
    rows[both_high] = (lo_S - hi_S)[both_high]
    lo_F_full = np.where(lo_up, 1.0 - lo_S, lo_F)
    rows[mixed] = (1.0 - hi_S - lo_F_full)[mixed]
    return np.clip(rows, 0.0, None)


def _renormalize(rows):
    sums = rows.sum(axis=-1, keepdims=True)
    defect = float(np.max(np.abs(sums - 1.0)))
    if defect > ROW_DEFECT_TOL:
        raise ValidationError(f"row mass defect {defect:.3g} exceeds {ROW_DEFECT_TOL}; refine the grid")
    return rows / sums


def powernet_factors(params, grid=None, vectors=None):
    grid = grid or params.grid()
    vectors = params.action_vectors() if vectors is None else np.asarray(vectors, dtype=float)
    factors = []
    for dim in range(2):
        diff = Difference(params.renewable[dim], params.demand[dim])
        share = vectors[:, 1] if dim == 0 else 1.0 - vectors[:, 1]
        shifts = share * vectors[:, 0] * params.p
        uniq, inv = np.unique(np.round(shifts, 15), return_inverse=True)
        centers, edges = grid.axis_centers(dim), grid.edges(dim)
        table = np.stack([axis_rows(diff, centers, edges, s, params.c) for s in uniq])
        factors.append(_renormalize(table)[inv])
    return factors


def build_powernet(params, labeling=None, grid=None, vectors=None):
    grid = grid or params.grid()
    if grid.dims != 2 or grid.lower != (0.0, 0.0) or grid.upper != (params.M, params.M):
        raise ValidationError("power-network grid must be [0, M]^2")
    vectors = params.action_vectors() if vectors is None else np.asarray(vectors, dtype=float)
    kernel = KroneckerKernel(powernet_factors(params, grid, vectors))
    actions = ActionSet.full(vectors, grid.total_states, names=("v", "u1"))
    return GridModel(kernel, actions, grid=grid, labeling=labeling)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; each side is closed unless listed as open."""

    lower: tuple
    upper: tuple
    open_lower: tuple = field(default=())
    open_upper: tuple = field(default=())

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        ok = np.ones(len(pts), dtype=bool)
        for d, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            ok &= pts[:, d] > lo if d in self.open_lower else pts[:, d] >= lo
            ok &= pts[:, d] < hi if d in self.open_upper else pts[:, d] <= hi
        return ok


def box_labeling(grid, boxes, default):
    """Label cells by centre; later boxes override earlier ones."""
    alphabet = tuple(name for name, _ in boxes) + (default,)
    centers = grid.centers()
    labels = np.full(grid.total_states, len(alphabet) - 1, dtype=np.int64)
    for i, (_, box) in enumerate(boxes):
        labels[box.contains(centers)] = i
    return Labeling(alphabet, labels)


SCENARIOS = ("safety", "reachavoid")


def case_study_labels(params, scenario, grid=None):
    grid = grid or params.grid()
    M = params.M
    if scenario == "safety":
        return box_labeling(grid, [("S", Box((0.2, 0.2), (1.5, 1.5)))], "BOT")
    if scenario == "reachavoid":
        boxes = [
            ("S", Box((0.2, 0.2), (1.8, 1.8))),
            ("G1", Box((1.8, 0.2), (M, 1.8), open_lower=(0,))),
            ("G2", Box((0.2, 1.8), (1.8, M), open_lower=(1,))),
            ("G", Box((1.8, 1.8), (M, M), open_lower=(0, 1))),
        ]
        return box_labeling(grid, boxes, "BOT")
    raise ValidationError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")


# ---------------------------------------------------------------------------
# case study


@dataclass
class CaseStudyResult:
    scenario: str
    model: object
    values: np.ndarray
    policy: np.ndarray  # decision map at the reported step, -1 where all actions tie
    step: int
    result: object
    report: object = None
    product: object = None
    files: dict = field(default_factory=dict)


def bundled_path(name):
    from importlib.resources import files

    return str(files("stochctl") / "data" / name)


def _tied_policy(model, prev, actions, goal, safe, rows=None):
    from .io import tie_mask
    from .mdp import action_values

    q = action_values(model, prev)
    out = np.where(goal[:, None], 1.0, np.where(safe[:, None], q, 0.0))
    pol = np.where(tie_mask(out, model.feasible), -1, actions)
    return pol if rows is None else pol[rows]


def run_case_study(scenario, horizon=100, out_dir=None, step=None, analyze=True, cap=10**4,
                   mass_tol=0.0, config=None):
    """Solve one scenario on the bundled model and optionally write its CSVs.

    ``safety`` maximises the probability of staying in ``S`` for ``horizon``
    steps; ``reachavoid`` composes the model with the bundled reach-avoid
    automaton and maximises the bounded acceptance probability. The reported
    policy is the decision map at time ``step`` (default ``horizon // 2``).
    The absorbing-set analysis of ``S`` uses an exact mass test by default
    because the Gaussian tails put only ~1e-20 of mass outside ``S`` from
    its centre.
    """
    from . import io
    from .automata import load_automaton
    from .config import load_model
    from .product import compose, target_sets
    from .reachability import ReachSpec, absorbing_analysis, reach_bounded, safety_bounded

    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    step = horizon // 2 if step is None else step
    if not 0 <= step < max(horizon, 1):
        raise ValidationError("step must lie in [0, horizon)")
    model = load_model(config or bundled_path(f"powernet_{scenario}.cfg"))
    sweep = horizon - step  # the sweep whose argmax is used at time `step`

    if scenario == "safety":
        safe = model.labeling.mask("S")
        res = safety_bounded(model, safe, "max", horizon, keep_history=True)
        values = res.values
        acts = res.policy.at(step) if horizon else np.zeros(model.n_states, np.int64)
        prev = np.where(safe, res.history[sweep - 1], 0.0)
        policy = _tied_policy(model, prev, acts, np.zeros_like(safe), safe)
        report = absorbing_analysis(model, safe, cap=cap, mass_tol=mass_tol) if analyze else None
        out = CaseStudyResult(scenario, model, values, policy, step, res, report)
        q = 0
    else:
        aut = load_automaton(bundled_path("task2.aut"))
        prod = compose(model, aut)
        sets = target_sets(prod)
        spec = ReachSpec(sets.safe, sets.goal, horizon, "max")
        res = reach_bounded(prod.model, spec, keep_history=True)
        init = prod.initial_states()
        values = res.values[init]
        acts = res.policy.at(step)
        policy = _tied_policy(prod.model, res.history[sweep - 1], acts, spec.goal, spec.safe, rows=init)
        out = CaseStudyResult(scenario, model, values, policy, step, res, product=prod)
        q = aut.initial

    if out_dir is not None:
        base = os.path.join(out_dir, scenario)
        out.files["values"] = f"{base}_values.csv"
        out.files["policy"] = f"{base}_policy_step{step}.csv"
        out.files["residuals"] = f"{base}_residuals.csv"
        io.write_values(out.files["values"], model, values, q=q)
        io.write_policy(out.files["policy"], model, policy, q=q)
        io.write_residuals(out.files["residuals"], res.residuals)
        if out.report is not None:
            out.files["sets"] = f"{base}_absorbing_sets.csv"
            io.write_sets(out.files["sets"], model, out.report)
    return out
