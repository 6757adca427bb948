import numpy as np
import pytest

from stochctl.mdp import GridModel, Labeling

CRITERIA = {}


def record(number, passed, detail):
    CRITERIA[number] = (passed, detail)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        passed, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} ({detail})")


def random_model(rng, n_states, n_actions, sparsity=0.0, all_feasible=False, labels=None, alphabet=None):
    """Random model with optionally sparse rows and random feasibility."""
    probs = rng.random((n_actions, n_states, n_states))
    if sparsity:
        probs *= rng.random(probs.shape) >= sparsity
        empty = probs.sum(axis=2) == 0
        a, x = np.nonzero(empty)
        probs[a, x, rng.integers(0, n_states, size=len(a))] = 1.0
    probs /= probs.sum(axis=2, keepdims=True)
    if all_feasible:
        feasible = np.ones((n_states, n_actions), bool)
    else:
        feasible = rng.random((n_states, n_actions)) < 0.7
        feasible[np.arange(n_states), rng.integers(0, n_actions, n_states)] = True
    probs = probs * feasible.T[:, :, None]
    lab = None
    if labels is not None:
        lab = Labeling(alphabet, labels)
    return GridModel.from_array(probs, feasible, labeling=lab)


def chain(rows):
    """Single-action model from a list of rows."""
    return GridModel.from_array(np.array([rows], dtype=float))


@pytest.fixture
def two_state():
    # s -> g with 0.3, stays with 0.7; g absorbing
    return chain([[0.7, 0.3], [0.0, 1.0]])


_CACHE = {}


def bundled_model(scenario):
    """Bundled power-network model, built once per session."""
    if scenario not in _CACHE:
        from stochctl.config import load_model
        from stochctl.powernet import bundled_path

        _CACHE[scenario] = load_model(bundled_path(f"powernet_{scenario}.cfg"))
    return _CACHE[scenario]


def case_study(scenario, out_dir=None):
    """Case-study result, computed once per session; returns ``(result, seconds)``."""
    import time

    key = ("cs", scenario)
    if key not in _CACHE:
        from stochctl.powernet import run_case_study

        t0 = time.perf_counter()
        res = run_case_study(scenario, out_dir=out_dir)
        _CACHE[key] = (res, time.perf_counter() - t0)
    return _CACHE[key]
