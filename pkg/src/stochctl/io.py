"""CSV writers for values, policies, residual logs, absorbing sets and paths.

Floats are written with ``%.17g`` so that files round-trip exactly and are
byte-identical across repeated runs.
"""

from __future__ import annotations

import os

import numpy as np


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _write(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) for v in row) + "\n")


def _coords(model, n):
    grid = model.grid
    if grid is None:
        return ["x1"], np.arange(n)[:, None]
    return [f"x{d + 1}" for d in range(grid.dims)], grid.centers()


def write_values(path, model, values, q=0):
    """``x1,...,xd,q,value``; ``q`` is a scalar or per-state array of automaton states."""
    values = np.asarray(values)
    names, coords = _coords(model, len(values))
    qs = np.broadcast_to(np.asarray(q), values.shape)
    _write(path, names + ["q", "value"],
           ([*c, int(qq), float(v)] for c, qq, v in zip(coords, qs, values)))


def write_policy(path, model, actions, q=0):
    """``x1,...,xd,q,action_index,<components>``; index ``-1`` (and components ``-1``) marks ties."""
    actions = np.asarray(actions, dtype=np.int64)
    names, coords = _coords(model, len(actions))
    vecs = model.actions.vectors
    comp = list(model.actions.names) or [f"a{k + 1}" for k in range(vecs.shape[1])]
    qs = np.broadcast_to(np.asarray(q), actions.shape)

    def rows():
        for c, qq, a in zip(coords, qs, actions):
            parts = [-1.0] * vecs.shape[1] if a < 0 else list(vecs[a])
            yield [*c, int(qq), int(a), *[float(p) for p in parts]]

    _write(path, names + ["q", "action_index"] + comp, rows())


def write_residuals(path, residuals, betas=None):
    """``iter,residual,beta_estimate``; the beta column is empty when unknown."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iter,residual,beta_estimate\n")
        for k, r in enumerate(residuals, start=1):
            b = "" if betas is None or k >= len(betas) else _num(betas[k])
            fh.write(f"{k},{_num(r)},{b}\n")


def write_sets(path, model, report):
    """One row per state: membership in each ``S_n`` of the chain and in ``S_inf``."""
    n = len(report.safe)
    names, coords = _coords(model, n)
    chain = report.chain
    header = names + [f"S{k}" for k in range(len(chain))] + ["S_inf"]
    _write(path, header, ([*coords[x], *[int(s[x]) for s in chain], int(report.s_inf[x])]
                          for x in range(n)))


def write_paths(path, batch):
    states, actions = batch.states, batch.actions
    n_paths, steps = actions.shape

    def rows():
        for p in range(n_paths):
            for t in range(steps + 1):
                yield [p, t, int(states[p, t]), int(actions[p, t]) if t < steps else -1]

    _write(path, ["path_id", "step", "state_index", "action_index"], rows())


def tie_mask(q, feasible, tol=1e-12):
    """States where every feasible action lies within ``tol`` of the best one."""
    hi = np.where(feasible, q, -np.inf).max(axis=1)
    lo = np.where(feasible, q, np.inf).min(axis=1)
    return hi - lo <= tol
