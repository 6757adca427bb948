"""Compare product-DP values with seeded Monte-Carlo estimates on random models.

Each row draws a labelled toy model and a co-safe formula, solves the
bounded product problem and simulates the synthesized policy.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from stochctl.ltl import parse_ltl, scltl_to_dfa
from stochctl.mdp import GridModel, Labeling
from stochctl.montecarlo import SimConfig, estimate_dfa_acceptance
from stochctl.product import compose, target_sets
from stochctl.reachability import ReachSpec, reach_bounded

FORMULAS = ("F B", "A U B", "F (A & X B)", "G[3] !C", "(A | B) U[4] C", "F (B & F C)")


@dataclass
class CompareConfig:
    seed: int = 0
    models: int = 6
    states: int = 5
    actions: int = 2
    horizon: int = 5
    paths: int = 10**5


def toy_model(rng, cfg, alphabet):
    probs = rng.random((cfg.actions, cfg.states, cfg.states)) ** 3
    probs /= probs.sum(axis=2, keepdims=True)
    labels = Labeling(alphabet, rng.integers(0, len(alphabet), cfg.states))
    return GridModel.from_array(probs, labeling=labels)


def main(cfg: CompareConfig):
    rng = np.random.default_rng(cfg.seed)
    alphabet = ("A", "B", "C")
    print(f"{'formula':<18} {'x0':>3} {'dp':>9} {'mc':>9} {'3se':>8}")
    for i in range(cfg.models):
        m = toy_model(rng, cfg, alphabet)
        text = FORMULAS[i % len(FORMULAS)]
        aut = scltl_to_dfa(parse_ltl(text, alphabet), alphabet)
        prod = compose(m, aut)
        sets = target_sets(prod)
        res = reach_bounded(prod.model, ReachSpec(sets.safe, sets.goal, cfg.horizon))
        x0 = int(rng.integers(cfg.states))
        est = estimate_dfa_acceptance(m, aut, res.policy, cfg.horizon,
                                      SimConfig(cfg.seed * 1000 + i, cfg.paths, cfg.horizon, x0=x0))
        dp = res.values[prod.initial_states()[x0]]
        print(f"{text:<18} {x0:>3} {dp:9.5f} {est.value:9.5f} {3 * est.stderr:8.5f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--paths", type=int, default=10**5)
    a = ap.parse_args()
    main(CompareConfig(seed=a.seed, paths=a.paths))
