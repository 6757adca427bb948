"""Composition of a labelled model with a deterministic automaton."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automata import BoundedReach, Buchi, Rabin, Reach
from .errors import UnsupportedError, ValidationError
from .kernels import ProductKernel
from .mdp import ActionSet, GridModel, MarkovPolicy


@dataclass(frozen=True)
class ProductModel:
    """Product MDP; state ``x * Q + q`` stands for the pair ``(x, q)``."""

    base: GridModel
    automaton: object
    model: GridModel

    @property
    def n_q(self):
        return self.automaton.n_states

    def index(self, x, q):
        return np.asarray(x) * self.n_q + np.asarray(q)

    def split(self, s):
        return np.divmod(np.asarray(s), self.n_q)

    def initial_states(self):
        """Product index ``(x, q_init)`` for every base state ``x``."""
        return self.index(np.arange(self.base.n_states), self.automaton.initial)

    def automaton_mask(self, qs):
        qmask = np.zeros(self.n_q, dtype=bool)
        qmask[list(qs)] = True
        return np.tile(qmask, self.base.n_states)

    def initial_values(self, values):
        """Restrict a product value vector to the pairs ``(x, q_init)``."""
        return np.asarray(values)[self.initial_states()]


def compose(model, automaton):
    if model.labeling is None:
        raise ValidationError("composition needs a labelled model")
    if tuple(model.labeling.alphabet) != tuple(automaton.alphabet):
        raise ValidationError(
            f"alphabet mismatch: model {model.labeling.alphabet} vs automaton {automaton.alphabet}"
        )
    trans = np.asarray(automaton.trans, dtype=np.int64)  # (Q, letters)
    # successor of (x, q) reads the label of the current state x
    succ = trans[:, model.labeling.labels].T  # (X, Q)
    kernel = ProductKernel(model.kernel, succ)
    feasible = np.repeat(model.feasible, automaton.n_states, axis=0)
    actions = ActionSet(model.actions.vectors, feasible, model.actions.names)
    prod = GridModel(kernel, actions, validate=False)
    return ProductModel(model, automaton, prod)


@dataclass(frozen=True)
class TargetSets:
    goal: np.ndarray
    safe: np.ndarray
    unsafe: np.ndarray
    horizon: int | None = None
    buchi: np.ndarray | None = None


def target_sets(p):
    acc = p.automaton.acceptance
    n = p.model.n_states
    if isinstance(acc, Rabin):
        raise UnsupportedError("Rabin acceptance is not supported by the solvers")
    final = p.automaton_mask(acc.final)
    if isinstance(acc, Buchi):
        return TargetSets(np.zeros(n, bool), np.ones(n, bool), np.zeros(n, bool), buchi=final)
    horizon = acc.horizon if isinstance(acc, BoundedReach) else None
    assert isinstance(acc, (Reach, BoundedReach))
    return TargetSets(final, ~final, np.zeros(n, bool), horizon=horizon)


class ProjectedController:
    """Base-model controller that tracks the automaton state from the label history.

    ``reset(x0)`` starts the run, ``act(t)`` returns the actions for the
    current base states, ``observe(x_next)`` advances the automaton with the
    label of the state just left. All methods are vectorised over paths.
    """

    def __init__(self, product, policy):
        self.product = product
        self.policy = policy if isinstance(policy, MarkovPolicy) else MarkovPolicy(policy)
        self._trans = np.asarray(product.automaton.trans, dtype=np.int64)
        self._labels = product.base.labeling.labels
        self.x = None
        self.q = None

    def reset(self, x0):
        self.x = np.asarray(x0, dtype=np.int64).copy()
        self.q = np.full(self.x.shape, self.product.automaton.initial, dtype=np.int64)

    def act(self, t):
        return self.policy.at(t)[self.product.index(self.x, self.q)]

    def observe(self, x_next):
        self.q = self._trans[self.q, self._labels[self.x]]
        self.x = np.asarray(x_next, dtype=np.int64).copy()


def project_policy(product, product_policy):
    return ProjectedController(product, product_policy)


def embed_policy(product, base_policy):
    """Lift a base Markov policy to the product by ignoring the automaton state."""
    pol = base_policy if isinstance(base_policy, MarkovPolicy) else MarkovPolicy(base_policy)
    return MarkovPolicy(np.repeat(pol.actions, product.n_q, axis=-1))
