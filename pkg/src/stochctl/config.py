"""Model configuration files (INI syntax).

Example::

    [state_space]
    lower = 0 0
    upper = 2 2
    cells = 64 64

    [actions]
    grid v = 1.0 0.8 5
    grid u1 = 0 1 11

    [labels]
    S = box 0.2 0.2 1.5 1.5
    default = BOT

    [kernel]
    builtin = powernet
    c = 0.93

``[actions]`` takes either ``grid <name> = lo hi count`` lines (crossed in
file order, first line outermost) or ``vectors = a,b;c,d``. Label boxes are
closed and matched on cell centres; later lines win. ``[kernel]`` is
``builtin = powernet`` with optional parameter overrides, or
``file = <csv>`` with rows ``state,action,next_state,prob``.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import os

import numpy as np

from .errors import ValidationError
from .mdp import ActionSet, GridModel, StateGrid
from .powernet import Box, Noise, PowerNetParams, box_labeling, build_powernet

_NOISE_KEYS = {"r1": ("renewable", 0), "r2": ("renewable", 1), "d1": ("demand", 0), "d2": ("demand", 1)}


def _floats(text, what):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ValidationError(f"{what}: expected numbers, got {text!r}") from None


def _read(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    for section in ("state_space", "actions", "kernel"):
        if section not in cp:
            raise ValidationError(f"{path}: missing [{section}] section")
    return cp


def _grid(sec):
    lower = _floats(sec.get("lower", ""), "lower")
    upper = _floats(sec.get("upper", ""), "upper")
    cells = [int(v) for v in _floats(sec.get("cells", ""), "cells")]
    if "dims" in sec and int(sec["dims"]) != len(cells):
        raise ValidationError("dims does not match the number of cell counts")
    return StateGrid(tuple(lower), tuple(upper), tuple(cells))


def _actions(sec):
    if "vectors" in sec:
        rows = [_floats(r, "vectors") for r in sec["vectors"].split(";") if r.strip()]
        return np.array(rows), ()
    names, axes = [], []
    for key, value in sec.items():
        if key.startswith("grid "):
            lo, hi, count = _floats(value, key)
            names.append(key[5:].strip())
            axes.append(np.linspace(lo, hi, int(count)) if int(count) > 1 else np.array([lo]))
    if not axes:
        raise ValidationError("[actions] needs 'vectors' or 'grid <name>' lines")
    return np.array(list(itertools.product(*axes))), tuple(names)


def _labels(cp, grid):
    if "labels" not in cp:
        return None
    sec = cp["labels"]
    if "default" not in sec:
        raise ValidationError("[labels] needs a 'default' letter")
    boxes = []
    for key, value in sec.items():
        if key == "default":
            continue
        kind, _, rest = value.partition(" ")
        if kind != "box":
            raise ValidationError(f"label {key}: only 'box lo... hi...' is supported")
        nums = _floats(rest, key)
        if len(nums) != 2 * grid.dims:
            raise ValidationError(f"label {key}: expected {2 * grid.dims} numbers")
        boxes.append((key, Box(tuple(nums[: grid.dims]), tuple(nums[grid.dims:]))))
    return box_labeling(grid, boxes, sec["default"].strip())


def _powernet_params(sec, grid):
    kw = {}
    for key in ("M", "c", "p", "v_min"):
        if key in sec:
            kw[key] = float(sec[key])
    noises = {"renewable": list(PowerNetParams().renewable), "demand": list(PowerNetParams().demand)}
    for key, (group, i) in _NOISE_KEYS.items():
        if key in sec:
            mu, sigma, lo, hi = _floats(sec[key], key)
            noises[group][i] = Noise(mu, sigma, lo, hi)
    kw["renewable"] = tuple(noises["renewable"])
    kw["demand"] = tuple(noises["demand"])
    if len(set(grid.cells)) != 1:
        raise ValidationError("power-network grids must be square")
    kw["cells"] = grid.cells[0]
    return PowerNetParams(**kw)


def _kernel_file(path, n_states, n_actions):
    probs = np.zeros((n_actions, n_states, n_states))
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            x, u, y = int(row["state"]), int(row["action"]), int(row["next_state"])
            if not (0 <= x < n_states and 0 <= y < n_states and 0 <= u < n_actions):
                raise ValidationError(f"kernel entry ({x}, {u}, {y}) out of range")
            probs[u, x, y] += float(row["prob"])
    feasible = probs.sum(axis=2).T > 0
    return probs, feasible


def load_model(path):
    """Build a labelled :class:`GridModel` from a configuration file."""
    cp = _read(path)
    grid = _grid(cp["state_space"])
    vectors, names = _actions(cp["actions"])
    labeling = _labels(cp, grid)
    ksec = cp["kernel"]
    if ksec.get("builtin") == "powernet":
        params = _powernet_params(ksec, grid)
        model = build_powernet(params, labeling=labeling, grid=grid, vectors=vectors)
        return model
    if "file" in ksec:
        kpath = os.path.join(os.path.dirname(os.path.abspath(path)), ksec["file"])
        probs, feasible = _kernel_file(kpath, grid.total_states, len(vectors))
        model = GridModel.from_array(probs, feasible, vectors, labeling, grid)
        if names:
            model = GridModel(model.kernel, ActionSet(vectors, feasible, names), grid, labeling,
                              validate=False)
        return model
    raise ValidationError("[kernel] needs 'builtin = powernet' or 'file = <csv>'")
