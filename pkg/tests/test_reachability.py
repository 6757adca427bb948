import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochctl.errors import ValidationError
from stochctl.mdp import GridModel
from stochctl.reachability import (
    ExcessiveCertificate,
    ReachSpec,
    absorbing_analysis,
    contraction_error_bound,
    dp_step,
    reach_bounded,
    reach_unbounded,
    safety_bounded,
    truncated_reach,
    verify_excessive,
)

from conftest import chain, random_model


def spec(n, safe, goal, horizon=None, direction="max"):
    return ReachSpec.build(n, safe, goal, horizon, direction)


def test_normalization_removes_goal_from_safe():
    s = spec(3, [0, 1], [1])
    assert s.safe.tolist() == [True, False, False]
    assert s.unsafe.tolist() == [False, False, True]


def test_first_step(two_state):
    s = spec(2, [0], [1])
    f = dp_step(two_state, s, np.array([0.0, 1.0]))
    assert np.allclose(f, [0.3, 1.0])


def test_two_steps(two_state):
    res = reach_bounded(two_state, spec(2, [0], [1], 2))
    assert abs(res.values[0] - 0.51) < 1e-15


def test_empty_goal_is_safety_operator(two_state):
    s = spec(2, [0], [])
    f = np.array([1.0, 1.0])
    assert np.allclose(dp_step(two_state, s, f), [0.7 * 1 + 0.3 * 1, 0.0])


def test_dp_step_rejects_out_of_range(two_state):
    with pytest.raises(ValidationError):
        dp_step(two_state, spec(2, [0], [1]), np.array([2.0, 0.0]))


def test_horizon_zero_and_empty_safe(two_state):
    assert reach_bounded(two_state, spec(2, [0], [1], 0)).values.tolist() == [0.0, 1.0]
    assert reach_bounded(two_state, spec(2, [], [1], 5)).values.tolist() == [0.0, 1.0]


def _enumerate_markov(model, s, n):
    probs = model.dense()
    feas = [np.flatnonzero(model.feasible[x]) for x in range(model.n_states)]
    best_max = np.full(model.n_states, -np.inf)
    best_min = np.full(model.n_states, np.inf)
    for maps in itertools.product(itertools.product(*feas), repeat=n):
        v = s.goal.astype(float)
        for t in reversed(range(n)):
            u = np.array(maps[t])
            nxt = probs[u, np.arange(model.n_states)] @ v
            v = np.where(s.goal, 1.0, np.where(s.safe, nxt, 0.0))
        best_max = np.maximum(best_max, v)
        best_min = np.minimum(best_min, v)
    return best_max, best_min


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_bounded_matches_policy_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 4, 2)
    safe = rng.random(4) < 0.6
    goal = rng.random(4) < 0.3
    s_max = ReachSpec(safe, goal, 3, "max")
    s_min = ReachSpec(safe, goal, 3, "min")
    hi, lo = _enumerate_markov(m, s_max, 3)
    assert np.allclose(reach_bounded(m, s_max).values, hi, atol=1e-12)
    assert np.allclose(reach_bounded(m, s_min).values, lo, atol=1e-12)


def test_bounded_policy_attains_value():
    rng = np.random.default_rng(5)
    m = random_model(rng, 5, 3)
    s = ReachSpec(rng.random(5) < 0.7, rng.random(5) < 0.3, 4, "max")
    res = reach_bounded(m, s)
    probs = m.dense()
    v = s.goal.astype(float)
    for t in reversed(range(4)):
        u = res.policy.at(t)
        v = np.where(s.goal, 1.0, np.where(s.safe, probs[u, np.arange(5)] @ v, 0.0))
    assert np.allclose(v, res.values, atol=1e-14)


def test_unbounded_two_state(two_state):
    res = reach_unbounded(two_state, spec(2, [0], [1]), tol=1e-13)
    assert res.status == "converged"
    assert abs(res.values[0] - 1.0) < 1e-12


def test_strongly_absorbing_subset_gets_zero():
    m = chain([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    res = reach_unbounded(m, spec(3, [0, 1], [2]))
    assert res.values.tolist() == [0.0, 0.0, 1.0]


def test_diverged_status():
    m = chain([[0.999, 0.001], [0, 1]])
    res = reach_unbounded(m, spec(2, [0], [1]), tol=1e-12, max_iters=10)
    assert res.status == "diverged" and len(res.residuals) == 10


def test_safety_examples():
    loop = chain([[1.0]])
    assert safety_bounded(loop, [0], horizon=7).values.tolist() == [1.0]
    leak = chain([[0.7, 0.3], [0.0, 1.0]])
    res = safety_bounded(leak, [0], horizon=5, keep_history=True)
    for n, v in enumerate(res.history):
        assert abs(v[0] - 0.7**n) < 1e-15


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_safety_reach_duality(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 5, 3)
    safe = rng.random(5) < 0.6
    v = safety_bounded(m, safe, "max", 4).values
    r = reach_bounded(m, ReachSpec(safe, ~safe, 4, "min")).values
    assert np.allclose(1 - v, r, atol=1e-12)
    v = safety_bounded(m, safe, "min", 4).values
    r = reach_bounded(m, ReachSpec(safe, ~safe, 4, "max")).values
    assert np.allclose(1 - v, r, atol=1e-12)


def test_absorbing_examples():
    m = chain([[0.5, 0.5, 0], [0, 1.0, 0], [0, 0, 1.0]])
    rep = absorbing_analysis(m, [0, 1], cap=50)
    # state 0 keeps all its mass inside {0, 1}, so it is weakly absorbing too
    assert rep.s_inf.tolist() == [True, True, False]
    assert rep.verdict == "non-contractive"

    leaky = GridModel.from_array(np.array([
        [[0.5, 0.3, 0.2], [0.4, 0.4, 0.2], [0, 0, 1]],
        [[0.8, 0.1, 0.1], [0.1, 0.5, 0.4], [0, 0, 1]],
    ]))
    rep = absorbing_analysis(leaky, [0, 1])
    assert not rep.chain[1].any()
    assert rep.m == 1 and rep.beta <= 0.9 and rep.verdict == "contractive"

    rep = absorbing_analysis(leaky, [])
    assert rep.m == 0 and rep.beta == 0 and not rep.s_inf.any()


def test_contraction_bound_values():
    leak = chain([[0.7, 0.3], [0, 1]])
    rep = absorbing_analysis(leak, [0])
    assert rep.m == 1 and abs(rep.beta - 0.7) < 1e-15
    assert abs(contraction_error_bound(rep, 10) - 0.0282475249) < 1e-10
    res = safety_bounded(leak, [0], horizon=10)
    assert res.values[0] <= contraction_error_bound(rep, 10) + 1e-15
    rep.m = 3
    assert contraction_error_bound(rep, 2) == 1.0
    bad = absorbing_analysis(chain([[1.0]]), [0], cap=5)
    with pytest.raises(ValidationError):
        contraction_error_bound(bad, 3)


def test_unbounded_min_flags_without_certificate():
    m = chain([[0.5, 0.5], [0, 1]])
    s = spec(2, [0], [1], direction="min")
    assert reach_unbounded(m, s, tol=1e-13).status == "lower-estimate"
    rep = absorbing_analysis(m, s.safe)
    res = reach_unbounded(m, s, tol=1e-13, certificate=rep)
    assert res.status == "converged" and res.error_bound is not None


def drift_chain(n=11):
    """Birth-death chain on 0..n-1 drifting towards 0; state n-1 is the goal."""
    rows = np.zeros((n, n))
    rows[0, 0] = 1.0
    for x in range(1, n - 1):
        rows[x, x - 1] = 0.7
        rows[x, x + 1] = 0.3
    rows[n - 1, n - 1] = 1.0
    return chain(rows.tolist())


def drift_certificate():
    g = np.arange(11) / 9.0
    g[10] = 1.2
    return g


def test_excessive_drift_instance():
    m = drift_chain()
    g = drift_certificate()
    target = np.arange(11) < 10
    v = verify_excessive(m, ExcessiveCertificate(g, target))
    assert v.passed and v.drift_ok and not v.degenerate
    bad = ExcessiveCertificate(np.clip(1 - g, 0, None), target)
    assert not verify_excessive(m, bad).passed


def test_excessive_degenerate_cases():
    m = chain([[1.0, 0], [0, 1.0]])
    v = verify_excessive(m, ExcessiveCertificate(np.full(2, 2.0), [0]))
    assert v.drift_ok and v.sublevel_in_target and v.degenerate
    # the absorbing state 0 of the target does not sit in {g = 0}
    assert not v.absorbing_ok
    v = verify_excessive(m, ExcessiveCertificate(np.array([0.0, 2.0]), [0]))
    assert v.passed


def test_truncated_reach_within_bound():
    m = drift_chain()
    g = drift_certificate()
    s = spec(11, np.arange(10), [10])
    cert = ExcessiveCertificate(g, np.arange(11) < 10)
    truth = reach_unbounded(m, s, tol=1e-15, max_iters=10**5).values
    for eps in (0.05, 0.2, 1.0):
        res = truncated_reach(m, s, cert, eps)
        assert np.max(np.abs(res.values - truth)) <= res.error_bound + 1e-9


def test_truncated_reach_rejects_goal_in_sublevel():
    m = drift_chain()
    g = np.arange(11) / 10.0
    s = spec(11, np.arange(10), [10])
    with pytest.raises(ValidationError, match="goal"):
        truncated_reach(m, s, ExcessiveCertificate(g, np.ones(11, bool)), 0.1)
