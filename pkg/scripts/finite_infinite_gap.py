"""Bounded versus unbounded minimal reachability on a deterministic jump chain.

From state 0 the controller picks a jump to any ``k <= K``; elsewhere the
state decreases by one. The goal is state 1. Every finite horizon ``n < K``
can be beaten by jumping past it, yet every path eventually hits the goal.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from stochctl.mdp import GridModel
from stochctl.reachability import ReachSpec, absorbing_analysis, reach_bounded, reach_unbounded


@dataclass
class GapConfig:
    K: int = 25
    tol: float = 1e-12


def jump_chain(K):
    X = K + 1
    probs = np.zeros((K + 1, X, X))
    feasible = np.zeros((X, K + 1), bool)
    for k in range(1, K + 1):
        probs[k - 1, 0, k] = 1.0
        feasible[0, k - 1] = True
    for x in range(1, X):
        probs[K, x, x - 1] = 1.0
        feasible[x, K] = True
    vectors = np.array([[1.0 / k] for k in range(1, K + 1)] + [[-1.0]])
    return GridModel.from_array(probs, feasible, vectors)


def main(cfg: GapConfig):
    m = jump_chain(cfg.K)
    goal = np.zeros(m.n_states, bool)
    goal[1] = True
    for n in (0, 1, cfg.K // 2, cfg.K - 1, cfg.K, cfg.K + 5):
        res = reach_bounded(m, ReachSpec(~goal, goal, n, "min"))
        print(f"n={n:3d}  min P(reach 1 within n | x0=0) = {res.values[0]:.3f}")
    rep = absorbing_analysis(m, ~goal)
    print(f"absorbing analysis: verdict={rep.verdict}, m={rep.m}, beta={rep.beta}")
    spec = ReachSpec(~goal, goal, None, "min")
    with_cert = reach_unbounded(m, spec, cfg.tol, certificate=rep)
    without = reach_unbounded(m, spec, cfg.tol)
    print(f"unbounded, certified:   value={with_cert.values[0]:.3f} status={with_cert.status}")
    print(f"unbounded, uncertified: value={without.values[0]:.3f} status={without.status}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=GapConfig.K)
    main(GapConfig(ap.parse_args().K))
