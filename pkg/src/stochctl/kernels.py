"""Transition kernel storage.

Every kernel exposes the same small surface used by the Bellman operators:
``expect(f)`` returns the one-step expectations ``sum_x' T(x'|x,u) f(x')`` for
all state/action pairs at once, and ``rows(states, actions)`` materialises
individual probability rows (simulation, CSV export, tests).

Infeasible (state, action) pairs are stored as all-zero rows; callers mask
them with the model's feasibility table.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

DENSE_STATE_LIMIT = 4096


def _as_columns(f):
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        return f[:, None], True
    if f.ndim == 2:
        return f, False
    raise ValueError("value array must be 1-D or 2-D")


class DenseKernel:
    """Kernel held as a dense ``(n_actions, n_states, n_states)`` array."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 3 or probs.shape[1] != probs.shape[2]:
            raise ValueError("dense kernel must have shape (A, X, X)")
        self.probs = probs
        self.probs.setflags(write=False)

    @property
    def n_states(self):
        return self.probs.shape[1]

    @property
    def n_actions(self):
        return self.probs.shape[0]

    def expect(self, f):
        cols, squeeze = _as_columns(f)
        out = np.einsum("axy,yk->xak", self.probs, cols, optimize=True)
        return out[..., 0] if squeeze else out

    def rows(self, states, actions):
        return self.probs[np.asarray(actions), np.asarray(states), :]

    def min_entry(self):
        return float(self.probs.min()) if self.probs.size else 0.0

    def renormalized(self):
        sums = self.probs.sum(axis=2, keepdims=True)
        safe = np.where(sums > 0, sums, 1.0)
        return DenseKernel(self.probs / safe)


class SparseKernel:
    """Kernel held as one CSR matrix per action."""

    def __init__(self, matrices):
        mats = [sp.csr_matrix(m, dtype=float) for m in matrices]
        if not mats:
            raise ValueError("sparse kernel needs at least one action")
        n = mats[0].shape[0]
        if any(m.shape != (n, n) for m in mats):
            raise ValueError("all action matrices must be square and equally sized")
        self.matrices = mats

    @property
    def n_states(self):
        return self.matrices[0].shape[0]

    @property
    def n_actions(self):
        return len(self.matrices)

    def expect(self, f):
        cols, squeeze = _as_columns(f)
        out = np.stack([m @ cols for m in self.matrices], axis=1)
        return out[..., 0] if squeeze else out

    def rows(self, states, actions):
        states = np.atleast_1d(states)
        actions = np.atleast_1d(actions)
        out = np.zeros((len(states), self.n_states))
        for i, (x, a) in enumerate(zip(states, actions)):
            out[i] = self.matrices[a].getrow(x).toarray().ravel()
        return out

    def min_entry(self):
        return min(float(m.data.min()) if m.nnz else 0.0 for m in self.matrices)

    def renormalized(self):
        out = []
        for m in self.matrices:
            sums = np.asarray(m.sum(axis=1)).ravel()
            scale = np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)
            out.append(sp.diags(scale) @ m)
        return SparseKernel(out)


def make_kernel(probs):
    """Dense storage below ``DENSE_STATE_LIMIT`` states, sparse at or above."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape[1] < DENSE_STATE_LIMIT:
        return DenseKernel(probs)
    return SparseKernel(list(probs))


class KroneckerKernel:
    """Kernel whose rows factor over the dimensions of a rectangular grid.

    ``factors[d]`` has shape ``(n_actions, cells[d], cells[d])``; the row of
    flat state ``x`` (C order over the grid) under action ``a`` is the outer
    product of ``factors[d][a, i_d, :]``.
    """

    def __init__(self, factors):
        self.factors = [np.asarray(f, dtype=float) for f in factors]
        n_actions = {f.shape[0] for f in self.factors}
        if len(n_actions) != 1:
            raise ValueError("all factors must share the action count")
        self.cells = tuple(f.shape[1] for f in self.factors)

    @property
    def n_states(self):
        return int(np.prod(self.cells))

    @property
    def n_actions(self):
        return self.factors[0].shape[0]

    def expect(self, f):
        cols, squeeze = _as_columns(f)
        k = cols.shape[1]
        n_act = self.n_actions
        # g carries axes (action, cell_0, ..., cell_{d-1}, column)
        g = np.broadcast_to(cols.reshape(self.cells + (k,)), (n_act,) + self.cells + (k,))
        for d, fac in enumerate(self.factors):
            moved = np.moveaxis(g, d + 1, 1)
            shape = moved.shape
            flat = moved.reshape(n_act, shape[1], -1)
            flat = np.matmul(fac, flat)
            g = np.moveaxis(flat.reshape(shape), 1, d + 1)
        out = np.moveaxis(g.reshape(n_act, self.n_states, k), 0, 1)
        return out[..., 0] if squeeze else np.ascontiguousarray(out)

    def rows(self, states, actions):
        states = np.atleast_1d(states)
        actions = np.atleast_1d(actions)
        multi = np.unravel_index(states, self.cells)
        out = None
        for d, fac in enumerate(self.factors):
            r = fac[actions, multi[d], :]
            out = r if out is None else (out[:, :, None] * r[:, None, :]).reshape(len(states), -1)
        return out

    def min_entry(self):
        return min(float(f.min()) for f in self.factors)

    def renormalized(self):
        out = []
        for fac in self.factors:
            sums = fac.sum(axis=2, keepdims=True)
            out.append(fac / np.where(sums > 0, sums, 1.0))
        return KroneckerKernel(out)


class ProductKernel:
    """Kernel of the composition of a labelled model with a transition system.

    Product state ``x * Q + q`` moves to ``x' * Q + succ[x, q]`` with the base
    probability ``T(x'|x,u)``; the automaton successor reads the label of the
    current base state.
    """

    def __init__(self, base, succ):
        self.base = base
        self.succ = np.asarray(succ, dtype=np.int64)
        if self.succ.shape[0] != base.n_states:
            raise ValueError("successor table must have one row per base state")
        self.n_q = self.succ.shape[1]

    @property
    def n_states(self):
        return self.base.n_states * self.n_q

    @property
    def n_actions(self):
        return self.base.n_actions

    def expect(self, f):
        cols, squeeze = _as_columns(f)
        n_x, n_q, k = self.base.n_states, self.n_q, cols.shape[1]
        e = self.base.expect(cols.reshape(n_x, n_q * k)).reshape(n_x, -1, n_q, k)
        out = e[np.arange(n_x)[:, None], :, self.succ]  # (X, Q, A, k)
        out = out.reshape(n_x * n_q, -1, k)
        return out[..., 0] if squeeze else out

    def rows(self, states, actions):
        states = np.atleast_1d(states)
        xs, qs = np.divmod(states, self.n_q)
        base_rows = self.base.rows(xs, actions)
        out = np.zeros((len(states), self.n_states))
        q_next = self.succ[xs, qs]
        for i in range(len(states)):
            out[i, q_next[i]::self.n_q] = base_rows[i]
        return out

    def min_entry(self):
        return self.base.min_entry()

    def renormalized(self):
        return self
