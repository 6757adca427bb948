"""Finite controlled Markov processes and their one-step Bellman operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import DenseKernel, make_kernel

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class StateGrid:
    """Uniform rectangular grid; states are cells indexed in C order."""

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        cells = tuple(int(v) for v in self.cells)
        if not (len(lower) == len(upper) == len(cells)) or not cells:
            raise ValidationError("lower, upper and cells must have the same positive length")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValidationError("every dimension needs lower < upper")
        if any(c < 1 for c in cells):
            raise ValidationError("cell counts must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @property
    def dims(self):
        return len(self.cells)

    @property
    def total_states(self):
        return int(np.prod(self.cells))

    @property
    def widths(self):
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    def to_multi(self, flat):
        return np.unravel_index(flat, self.cells)

    def to_flat(self, multi):
        return np.ravel_multi_index(tuple(multi), self.cells)

    def edges(self, d):
        return np.linspace(self.lower[d], self.upper[d], self.cells[d] + 1)

    def axis_centers(self, d):
        e = self.edges(d)
        return 0.5 * (e[:-1] + e[1:])

    def centers(self, flat=None):
        """Cell-centre coordinates, shape ``(n, dims)``."""
        if flat is None:
            flat = np.arange(self.total_states)
        multi = self.to_multi(np.asarray(flat))
        return np.stack([self.axis_centers(d)[m] for d, m in enumerate(multi)], axis=-1)

    def nearest(self, point):
        idx = []
        for d, p in enumerate(point):
            i = int(np.floor((p - self.lower[d]) / self.widths[d]))
            idx.append(min(max(i, 0), self.cells[d] - 1))
        return int(self.to_flat(idx))


@dataclass(frozen=True)
class ActionSet:
    """Finite action list plus a ``(n_states, n_actions)`` feasibility table."""

    vectors: np.ndarray
    feasible: np.ndarray
    names: tuple = ()

    @classmethod
    def full(cls, vectors, n_states, names=()):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        return cls(vectors, np.ones((n_states, len(vectors)), dtype=bool), tuple(names))

    def __post_init__(self):
        feasible = np.asarray(self.feasible, dtype=bool)
        if feasible.ndim != 2 or feasible.shape[1] != len(self.vectors):
            raise ValidationError("feasibility table must be (n_states, n_actions)")
        if not feasible.any(axis=1).all():
            bad = int(np.flatnonzero(~feasible.any(axis=1))[0])
            raise ValidationError(f"state {bad} has an empty feasible action set")
        object.__setattr__(self, "feasible", feasible)

    @property
    def n_actions(self):
        return len(self.vectors)


@dataclass(frozen=True)
class Labeling:
    """Total map from states to letters of an ordered alphabet."""

    alphabet: tuple
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        alphabet = tuple(self.alphabet)
        if len(set(alphabet)) != len(alphabet):
            raise ValidationError("alphabet letters must be distinct")
        if labels.size and (labels.min() < 0 or labels.max() >= len(alphabet)):
            raise ValidationError("label index out of alphabet range")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "labels", labels)

    def mask(self, *letters):
        """Boolean mask of states whose letter is one of ``letters``."""
        unknown = [s for s in letters if s not in self.alphabet]
        if unknown:
            raise ValidationError(f"unknown letter(s): {', '.join(unknown)}")
        idx = [self.alphabet.index(s) for s in letters]
        return np.isin(self.labels, idx)

    def letter(self, x):
        return self.alphabet[self.labels[x]]


@dataclass(frozen=True)
class GridModel:
    """A finite controlled Markov process, optionally with a grid and labels.

    The kernel rows are validated at construction: non-negative entries,
    feasible rows summing to one (renormalised when the defect is below
    ``ROW_SUM_TOL``), infeasible rows empty.
    """

    kernel: object
    actions: ActionSet
    grid: StateGrid | None = None
    labeling: Labeling | None = None
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        n, a = self.kernel.n_states, self.kernel.n_actions
        if self.actions.feasible.shape != (n, a):
            raise ValidationError(
                f"feasibility table {self.actions.feasible.shape} does not match kernel ({n}, {a})"
            )
        if self.grid is not None and self.grid.total_states != n:
            raise ValidationError("grid size does not match kernel state count")
        if self.labeling is not None and len(self.labeling.labels) != n:
            raise ValidationError("labeling must assign a letter to every state")
        if self.validate:
            object.__setattr__(self, "kernel", self._checked_kernel())

    def _checked_kernel(self):
        kernel = self.kernel
        if kernel.min_entry() < 0:
            raise ValidationError("kernel has negative entries")
        sums = kernel.expect(np.ones(kernel.n_states))
        feas = self.actions.feasible
        if np.any(sums[~feas] != 0):
            raise ValidationError("infeasible (state, action) pairs must have empty rows")
        defect = np.abs(sums[feas] - 1.0)
        worst = float(defect.max()) if defect.size else 0.0
        if worst > ROW_SUM_TOL:
            xs, us = np.nonzero(feas)
            i = int(np.argmax(defect))
            raise ValidationError(
                f"row ({xs[i]}, {us[i]}) sums to {sums[xs[i], us[i]]!r}, "
                f"outside tolerance {ROW_SUM_TOL}"
            )
        if worst > 0:
            kernel = kernel.renormalized()
        return kernel

    @classmethod
    def from_array(cls, probs, feasible=None, vectors=None, labeling=None, grid=None):
        """Build from an ``(A, X, X)`` probability array (rows of infeasible pairs zero)."""
        probs = np.asarray(probs, dtype=float)
        n_act, n = probs.shape[0], probs.shape[1]
        if feasible is None:
            feasible = np.ones((n, n_act), dtype=bool)
        if vectors is None:
            vectors = np.arange(n_act, dtype=float)[:, None]
        acts = ActionSet(np.atleast_2d(np.asarray(vectors, dtype=float)).reshape(n_act, -1), feasible)
        return cls(make_kernel(probs), acts, grid=grid, labeling=labeling)

    @property
    def n_states(self):
        return self.kernel.n_states

    @property
    def n_actions(self):
        return self.kernel.n_actions

    @property
    def feasible(self):
        return self.actions.feasible

    def with_labeling(self, labeling):
        return GridModel(self.kernel, self.actions, self.grid, labeling, validate=False)

    def dense(self):
        """``(A, X, X)`` array of all rows; intended for small models."""
        if isinstance(self.kernel, DenseKernel):
            return np.asarray(self.kernel.probs)
        n, a = self.n_states, self.n_actions
        out = np.zeros((a, n, n))
        for u in range(a):
            out[u] = self.kernel.rows(np.arange(n), np.full(n, u))
        return out


@dataclass(frozen=True)
class MarkovPolicy:
    """Deterministic Markov policy: one action per state, or one map per time step."""

    actions: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.actions, dtype=np.int64)
        if arr.ndim not in (1, 2):
            raise ValidationError("policy must be a (X,) or (T, X) integer array")
        object.__setattr__(self, "actions", arr)

    @property
    def stationary(self):
        return self.actions.ndim == 1

    @property
    def horizon(self):
        return None if self.stationary else self.actions.shape[0]

    def at(self, t):
        """Decision map used at time ``t``; time-varying policies repeat their last map."""
        if self.stationary:
            return self.actions
        return self.actions[min(t, self.actions.shape[0] - 1)]

    def check_feasible(self, model):
        maps = [self.actions] if self.stationary else list(self.actions)
        for t, m in enumerate(maps):
            if m.shape != (model.n_states,):
                raise ValidationError(f"policy map {t} has wrong length {m.shape}")
            if m.min() < 0 or m.max() >= model.n_actions:
                raise ValidationError(f"policy map {t} uses an unknown action index")
            ok = model.feasible[np.arange(model.n_states), m]
            if not ok.all():
                x = int(np.flatnonzero(~ok)[0])
                raise ValidationError(f"policy map {t} assigns infeasible action {m[x]} at state {x}")


def as_mask(states, n):
    """Normalise a boolean mask or an iterable of indices into a boolean mask."""
    if states is None:
        return np.zeros(n, dtype=bool)
    arr = np.asarray(states)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise ValidationError(f"mask has shape {arr.shape}, expected ({n},)")
        return arr.copy()
    mask = np.zeros(n, dtype=bool)
    idx = arr.astype(np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError("state index out of range")
    mask[idx] = True
    return mask


def _check_vector(model, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (model.n_states,):
        raise ValidationError(f"value vector has shape {f.shape}, expected ({model.n_states},)")
    return f


def action_values(model, f, restrict_to=None):
    """Expected next value for every (state, action): ``(X, A)`` array.

    With ``restrict_to`` the integral runs over that set only.
    """
    f = _check_vector(model, f)
    if restrict_to is not None:
        f = np.where(as_mask(restrict_to, model.n_states), f, 0.0)
    return model.kernel.expect(f)


def _optimize(model, f, restrict_to, maximize):
    q = action_values(model, f, restrict_to)
    fill = -np.inf if maximize else np.inf
    q = np.where(model.feasible, q, fill)
    # argmax/argmin return the first optimum: ties go to the lowest action index
    best = np.argmax(q, axis=1) if maximize else np.argmin(q, axis=1)
    return q[np.arange(model.n_states), best], best


def bellman_max(model, f, restrict_to=None):
    """Sup-operator: returns ``(values, argmax actions)``."""
    return _optimize(model, f, restrict_to, True)


def bellman_min(model, f, restrict_to=None):
    """Inf-operator: returns ``(values, argmin actions)``."""
    return _optimize(model, f, restrict_to, False)


def bellman_selector(model, f, policy, restrict_to=None):
    """Expectation of ``f`` under the decision map ``policy`` (one action per state)."""
    policy = np.asarray(policy, dtype=np.int64)
    MarkovPolicy(policy).check_feasible(model)
    q = action_values(model, f, restrict_to)
    return q[np.arange(model.n_states), policy]


def value_under_initial_distribution(alpha, v):
    alpha = np.asarray(alpha, dtype=float)
    v = np.asarray(v, dtype=float)
    if alpha.shape != v.shape:
        raise ValidationError("distribution and value vector lengths differ")
    if alpha.min() < 0 or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValidationError("initial distribution must be non-negative and sum to 1")
    return float(alpha @ v)
