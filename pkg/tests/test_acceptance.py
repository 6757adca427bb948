"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Every criterion computes its numbers through a ``_cK(out_dir)`` function that
also writes CSV artifacts, so the determinism criterion can rerun them and
compare files byte for byte.
"""

import itertools
import os
import time

import numpy as np
import pytest

from stochctl.automata import BoundedReach, run
from stochctl.ltl import (
    Always,
    And,
    Atom,
    Eventually,
    FragmentClass,
    Next,
    Not,
    Or,
    Until,
    classify,
    parse_ltl,
    scltl_to_dfa,
    semantics_eval,
    words,
)
from stochctl.mdp import GridModel
from stochctl.montecarlo import SimConfig, estimate_dfa_acceptance
from stochctl.persistence import persistence_value
from stochctl.powernet import run_case_study
from stochctl.product import compose, target_sets
from stochctl.reachability import (
    ReachSpec,
    absorbing_analysis,
    contraction_error_bound,
    reach_bounded,
    reach_unbounded,
    safety_unbounded,
)

from conftest import CRITERIA, case_study, chain, random_model

FIRST_RUN = {}


def _csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else "%.17g" % x for x in row) + "\n")


# ---------------------------------------------------------------------------
# 1. oracle equivalence

ENUM_CAP = 2 * 10**5


def _markov_enumeration(P, feasible, transit, goal, n, x0):
    """Exhaustive value range over deterministic Markov policies from ``x0``.

    Only decisions at transit states reachable at time ``t`` matter, so the
    enumeration runs over those slots. Values come from forward propagation
    of the state distribution, not from a backward recursion.
    """
    X = len(goal)
    reach = [np.zeros(X, bool)]
    reach[0][x0] = True
    for _ in range(n):
        nxt = (P[:, reach[-1] & transit, :].sum(axis=(0, 1)) > 0)
        reach.append(nxt)
    slots = [(t, x) for t in range(n) for x in np.flatnonzero(reach[t] & transit)]
    options = [np.flatnonzero(feasible[x]) for _, x in slots]
    count = int(np.prod([len(o) for o in options])) if options else 1
    if count > ENUM_CAP:
        return None
    combos = np.array(list(itertools.product(*options)), dtype=np.int64).reshape(count, len(slots))
    acts = np.zeros((count, n, X), dtype=np.int64)
    for k, (t, x) in enumerate(slots):
        acts[:, t, x] = combos[:, k]
    d = np.zeros((count, X))
    d[:, x0] = 1.0
    hit = np.zeros(count)
    for t in range(n):
        hit += d[:, goal].sum(axis=1)
        d = d * transit
        rows = P[acts[:, t, :], np.arange(X)[None, :], :]  # (C, X, X)
        d = np.einsum("cx,cxy->cy", d, rows)
    hit += d[:, goal].sum(axis=1)
    return hit.max(), hit.min(), count


def _history_tree(P, feasible, transit, goal, n, direction):
    """Optimal value over deterministic history-dependent policies.

    Every history ``x_0..x_t`` is a separate node with its own decision; no
    two histories share a value even when they end in the same state.
    """
    X = len(goal)
    pick = np.max if direction == "max" else np.min
    fill = -np.inf if direction == "max" else np.inf
    last = np.tile(np.arange(X), X ** n)
    val = goal[last].astype(float)
    for t in range(n - 1, -1, -1):
        last = np.tile(np.arange(X), X ** t)
        child = val.reshape(X ** (t + 1), X)
        q = np.einsum("hay,hy->ha", P[:, last, :].transpose(1, 0, 2), child)
        q = np.where(feasible[last], q, fill)
        val = np.where(goal[last], 1.0, np.where(transit[last], pick(q, axis=1), 0.0))
    return val


def _c1(out):
    rng = np.random.default_rng(20240101)
    rows, worst, resampled, largest = [], 0.0, 0, 0
    t0 = time.perf_counter()
    inst = 0
    while inst < 200:
        X, A, n = int(rng.integers(2, 6)), int(rng.integers(2, 4)), int(rng.integers(1, 5))
        m = random_model(rng, X, A, sparsity=0.3)
        safe, goal = rng.random(X) < 0.75, rng.random(X) < 0.25
        transit = safe & ~goal
        P, feas = m.dense(), m.feasible
        enum = [_markov_enumeration(P, feas, transit, goal, n, x0) for x0 in range(X)]
        if any(e is None for e in enum):
            resampled += 1
            continue
        largest = max(largest, max(e[2] for e in enum))
        for direction, col in (("max", 0), ("min", 1)):
            dp = reach_bounded(m, ReachSpec(safe, goal, n, direction)).values
            markov = np.array([e[col] for e in enum])
            hist = _history_tree(P, feas, transit, goal, n, direction)
            err = max(np.max(np.abs(dp - markov)), np.max(np.abs(dp - hist)))
            worst = max(worst, float(err))
            for x in range(X):
                rows.append([str(inst), direction, str(x), dp[x], markov[x], hist[x]])
        inst += 1
    elapsed = time.perf_counter() - t0
    _csv(os.path.join(out, "c1_values.csv"), ["instance", "direction", "x", "dp", "markov", "history"], rows)
    ok = worst <= 1e-12 and elapsed < 30
    return ok, (f"200 models, max |DP - oracle| = {worst:.2e}, largest enumeration {largest} policies, "
                f"{resampled} oversized draws redrawn, {elapsed:.1f}s")


def test_criterion_1(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c1"))
    ok, detail = _c1(out)
    FIRST_RUN[1] = (_c1, out)
    CRITERIA[1] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 2. Monte-Carlo consistency


def _random_formula(rng, letters, depth):
    if depth == 0 or rng.random() < 0.2:
        atom = Atom(letters[rng.integers(len(letters))])
        return Not(atom) if rng.random() < 0.3 else atom
    op = rng.integers(7)
    sub = lambda: _random_formula(rng, letters, depth - 1)  # noqa: E731
    if op == 0:
        return And(sub(), sub())
    if op == 1:
        return Or(sub(), sub())
    if op == 2:
        return Next(sub())
    if op == 3:
        return Until(sub(), sub(), None if rng.random() < 0.5 else int(rng.integers(1, 4)))
    if op == 4:
        return Eventually(sub(), None if rng.random() < 0.5 else int(rng.integers(1, 4)))
    if op == 5:
        return Always(sub(), int(rng.integers(1, 3)))
    return sub()


def _c2(out):
    rng = np.random.default_rng(7)
    rows, agree = [], 0
    t0 = time.perf_counter()
    for inst in range(50):
        X, A, k = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        alphabet = tuple("ABC"[:k])
        labels = rng.integers(0, k, X)
        m = random_model(rng, X, A, sparsity=0.3, labels=labels, alphabet=alphabet)
        while True:
            f = _random_formula(rng, alphabet, 3)
            if classify(f) in (FragmentClass.SCLTL, FragmentClass.BLTL):
                break
        aut = scltl_to_dfa(f, alphabet)
        prod = compose(m, aut)
        sets = target_sets(prod)
        res = reach_bounded(prod.model, ReachSpec(sets.safe, sets.goal, 5, "max"))
        x0 = int(rng.integers(X))
        value = float(res.values[prod.initial_states()[x0]])
        est = estimate_dfa_acceptance(m, aut, res.policy, 5, SimConfig(1000 + inst, 10**5, 5, x0=x0))
        hit = abs(value - est.value) <= 3 * est.stderr + 1e-12
        agree += hit
        rows.append([str(inst), str(f), value, est.value, est.stderr, str(int(hit))])
    elapsed = time.perf_counter() - t0
    _csv(os.path.join(out, "c2_estimates.csv"), ["instance", "formula", "dp", "mc", "stderr", "agree"], rows)
    ok = agree >= 48 and elapsed < 120
    return ok, f"{agree}/50 within 3 SE, {elapsed:.1f}s"


def test_criterion_2(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c2"))
    ok, detail = _c2(out)
    FIRST_RUN[2] = (_c2, out)
    CRITERIA[2] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 3. contraction bound


def _contractive_instances(rng):
    """Transit states first, then goal ``g`` and sink ``d``; fixpoints in closed form."""
    out = []
    for _ in range(10):
        p = rng.uniform(0.1, 0.9)
        r = rng.uniform(0.0, 1.0 - p)
        m = chain([[p, r, 1 - p - r], [0, 1, 0], [0, 0, 1]])
        out.append((m, np.array([True, False, False]), np.array([r / (1 - p)])))
    for i in range(10):
        if i % 3 == 0:
            # s1 -> s2 surely, so m(S) = 2
            q = np.array([[0.0, 1.0], [rng.uniform(0.1, 0.6), 0.0]])
            b = np.array([0.0, rng.uniform(0.0, 1.0 - q[1, 0])])
        else:
            q = rng.dirichlet(np.ones(4), size=2)[:, :2] * rng.uniform(0.5, 1.0)
            b = (1.0 - q.sum(axis=1)) * rng.uniform(0.0, 1.0, size=2)
        rows = np.zeros((4, 4))
        rows[:2, :2] = q
        rows[:2, 2] = b
        rows[:2, 3] = 1.0 - q.sum(axis=1) - b
        rows[2, 2] = rows[3, 3] = 1.0
        det = (1 - q[0, 0]) * (1 - q[1, 1]) - q[0, 1] * q[1, 0]
        fix = np.array([(1 - q[1, 1]) * b[0] + q[0, 1] * b[1], q[1, 0] * b[0] + (1 - q[0, 0]) * b[1]]) / det
        out.append((chain(rows.tolist()), np.array([True, True, False, False]), fix))
    return out


def _c3(out):
    rng = np.random.default_rng(3)
    rows, worst_gap, ok = [], -np.inf, True
    for inst, (m, safe, fix) in enumerate(_contractive_instances(rng)):
        goal = np.zeros(len(safe), bool)
        goal[int(safe.sum())] = True
        rep = absorbing_analysis(m, safe)
        ok &= rep.verdict == "contractive"
        for n in range(1, 11):
            w = reach_bounded(m, ReachSpec(safe, goal, rep.m * n)).values[safe]
            err = float(np.max(np.abs(w - fix)))
            bound = rep.beta ** n
            ok &= err <= bound + 1e-12 and contraction_error_bound(rep, rep.m * n) == bound
            worst_gap = max(worst_gap, err - bound)
            rows.append([str(inst), str(rep.m), str(n), rep.beta, err, bound])
    _csv(os.path.join(out, "c3_errors.csv"), ["instance", "m", "n", "beta", "error", "bound"], rows)
    return bool(ok), f"20 instances x n=1..10, max(error - beta^n) = {worst_gap:.2e}"


def test_criterion_3(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c3"))
    ok, detail = _c3(out)
    FIRST_RUN[3] = (_c3, out)
    CRITERIA[3] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 4. absorbing-set equivalence

CAP = 10**4
SAFETY_ZERO = 1e-6


def _c4(out):
    rng = np.random.default_rng(4)
    rows, agree, simple = [], 0, 0
    for inst in range(100):
        X, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        m = random_model(rng, X, A, sparsity=0.6)
        safe = rng.random(X) < 0.7
        rep = absorbing_analysis(m, safe, cap=CAP)
        v1 = not rep.s_inf.any()
        v2 = rep.m is not None and rep.m < CAP
        sv = safety_unbounded(m, safe, "max", tol=1e-12, max_iters=10**6).values
        v3 = bool(np.max(sv, initial=0.0) < SAFETY_ZERO)
        agree += v1 == v2 == v3
        simple += v1
        rows.append([str(inst), str(int(v1)), str(int(v2)), str(int(v3)), float(np.max(sv, initial=0.0))])
    _csv(os.path.join(out, "c4_verdicts.csv"), ["instance", "s_inf_empty", "m_below_cap", "safety_zero", "max_safety"], rows)
    return agree == 100, f"{agree}/100 agree ({simple} simple, {100 - simple} with absorbing subsets)"


def test_criterion_4(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c4"))
    ok, detail = _c4(out)
    FIRST_RUN[4] = (_c4, out)
    CRITERIA[4] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 5. finite/infinite horizon gap


def finite_infinite_instance(K=25):
    """States 0..K; at 0 action k jumps to k (k = 1..K), elsewhere the step is -1."""
    X, A = K + 1, K + 1
    probs = np.zeros((A, X, X))
    feasible = np.zeros((X, A), bool)
    for k in range(1, K + 1):
        probs[k - 1, 0, k] = 1.0
        feasible[0, k - 1] = True
    for x in range(1, X):
        probs[K, x, x - 1] = 1.0
        feasible[x, K] = True
    vectors = np.array([[1.0 / k] for k in range(1, K + 1)] + [[-1.0]])
    return GridModel.from_array(probs, feasible, vectors)


def _c5(out):
    K = 25
    m = finite_infinite_instance(K)
    goal = np.zeros(K + 1, bool)
    goal[1] = True
    safe = ~goal
    bounded = [float(reach_bounded(m, ReachSpec(safe, goal, n, "min")).values[0]) for n in range(K)]
    rep = absorbing_analysis(m, safe)
    certified = reach_unbounded(m, ReachSpec(safe, goal, None, "min"), tol=1e-12, certificate=rep)
    bare = reach_unbounded(m, ReachSpec(safe, goal, None, "min"), tol=1e-12)
    rows = [[str(n), v] for n, v in enumerate(bounded)]
    rows.append(["inf", float(certified.values[0])])
    _csv(os.path.join(out, "c5_values.csv"), ["n", "value_at_0"], rows)
    ok = (all(v == 0.0 for v in bounded) and certified.values[0] == 1.0
          and certified.status == "converged" and bare.status == "lower-estimate")
    return ok, (f"bounded max over n<{K} = {max(bounded)}, unbounded = {certified.values[0]} "
                f"({certified.status}), without certificate: {bare.status}")


def test_criterion_5(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c5"))
    ok, detail = _c5(out)
    FIRST_RUN[5] = (_c5, out)
    CRITERIA[5] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 6. translation soundness

AB, ABC = ("A", "B"), ("A", "B", "C")
CORPUS = [
    ("F A", AB), ("A U B", AB), ("X B", AB), ("X X A", AB), ("F[3] B", AB),
    ("G[2] A", AB), ("A U[2] B", AB), ("F (A & X B)", AB), ("F A & F B", ABC),
    ("(A | B) U C", ABC), ("A U (B U C)", ABC), ("F (A & X (B & X C))", ABC),
    ("X (A U B)", AB), ("F[2] (A | C)", ABC), ("G[3] !C", ABC),
    ("A U[3] (B & X C)", ABC), ("!A U B", AB), ("F (B & F C)", ABC),
    ("(A U B) | (B U C)", ABC), ("(A U B) & F C", ABC), ("X F A", AB),
    ("F[4] (A & X A)", AB), ("G[1] A & F[3] B", AB), ("A & X (!A U B)", AB),
    ("F (A & !B)", ABC), ("(A | B) U[4] C", ABC), ("X (A | X B)", AB),
    ("F (C & X X A)", ABC), ("!C U (A & X (!C U B))", ABC), ("G[2] (!A | X B)", AB),
]


def _c6(out):
    t0 = time.perf_counter()
    rows, mismatches, checked = [], 0, 0
    for i, (text, alphabet) in enumerate(CORPUS):
        f = parse_ltl(text, alphabet)
        aut = scltl_to_dfa(f, alphabet)
        bad = 0
        for w in words(alphabet, 6):
            verdict = run(aut, w).verdict
            sem = semantics_eval(f, w)
            bad += (verdict == "accepted") != (sem is True)
            if isinstance(aut.acceptance, BoundedReach) and len(w) >= aut.acceptance.horizon:
                bad += (verdict == "rejected") != (sem is False)
            checked += 1
        mismatches += bad
        rows.append([str(i), text, str(aut.n_states), str(bad)])
    elapsed = time.perf_counter() - t0
    _csv(os.path.join(out, "c6_corpus.csv"), ["index", "formula", "dfa_states", "mismatches"], rows)
    ok = mismatches == 0 and elapsed < 60
    return ok, f"30 formulae, {checked} words, {mismatches} mismatches, {elapsed:.1f}s"


def test_criterion_6(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c6"))
    ok, detail = _c6(out)
    FIRST_RUN[6] = (_c6, out)
    CRITERIA[6] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 7. persistence properties

PERSIST_TOL = 1e-10


def _c7(out):
    rng = np.random.default_rng(8)
    rows = []
    increasing, invariant, trivial = 0, 0, 0
    for inst in range(50):
        X, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        m = random_model(rng, X, A, sparsity=0.5)
        safe = rng.random(X) < 0.6
        res = persistence_value(m, safe, tol=PERSIST_TOL, max_iters=10**6, keep_history=True)
        hist = np.array(res.history)
        rise = float(np.max(np.diff(hist, axis=0), initial=0.0))
        non_increasing = rise <= 1e-12
        increasing += not non_increasing
        inv = res.info["invariance_residual"] <= PERSIST_TOL
        invariant += inv
        s_zero = np.max(res.info["safety"], initial=0.0) < SAFETY_ZERO
        p_zero = np.max(res.values, initial=0.0) < SAFETY_ZERO
        trivial += s_zero == p_zero
        rows.append([str(inst), str(int(non_increasing)), rise, res.info["invariance_residual"],
                     str(int(s_zero)), str(int(p_zero))])
    three = chain([[0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]])
    v = float(persistence_value(three, [1], tol=1e-12).values[0])
    _csv(os.path.join(out, "c7_persistence.csv"),
         ["instance", "non_increasing", "max_rise", "invariance_residual", "safety_zero", "persistence_zero"], rows)
    ok = increasing == 0 and invariant == 50 and trivial == 50 and abs(v - 0.5) <= 1e-9
    return ok, (f"non-increasing on {50 - increasing}/50 (iterates rise on {increasing}), "
                f"invariant {invariant}/50, triviality {trivial}/50, 3-state value {v:.12f}")


def test_criterion_7(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c7"))
    ok, detail = _c7(out)
    FIRST_RUN[7] = (_c7, out)
    CRITERIA[7] = (ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 8. case study


def _c8_checks(safety, reach):
    grid = safety.model.grid
    centers = grid.centers()
    a = safety.report is not None and not safety.report.s_inf.any()
    b_val = float(safety.values[grid.nearest((0.85, 0.85))])
    lab = reach.model.labeling
    g_vals, bot_vals = reach.values[lab.mask("G")], reach.values[lab.mask("BOT")]
    c_goal = bool(np.all(g_vals == 1.0))
    c_bot = bool(np.all(bot_vals == 0.0))
    active = reach.policy >= 0
    v = reach.model.actions.vectors[reach.policy[active], 0]
    d = bool(np.all(v == reach.model.actions.vectors[:, 0].max()))
    pol = safety.policy
    u = np.where(pol >= 0, safety.model.actions.vectors[np.maximum(pol, 0), 1], np.nan)
    low_high = (centers[:, 0] < 1.0) & (centers[:, 1] >= 1.0)
    high_low = (centers[:, 0] >= 1.0) & (centers[:, 1] < 1.0)
    e1, e2 = int(np.sum(u[low_high] == 1.0)), int(np.sum(u[high_low] == 0.0))
    checks = {
        "a": a,
        "b": b_val >= 0.95,
        "c": c_goal and c_bot,
        "d": d,
        "e": e1 > 0 and e2 > 0 and safety.step == 50,
    }
    detail = (f"(a) S_inf empty={a}; (b) value={b_val:.6f}; "
              f"(c) G min={g_vals.min():.3g} [{c_goal}], BOT max={bot_vals.max():.3g} [{c_bot}]; "
              f"(d) v=1 on {int(v.size)} non-tied cells={d}; (e) u1=1 cells {e1}, u1=0 cells {e2}")
    return checks, detail


def test_criterion_8(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("c8"))
    safety, t1 = case_study("safety", out)
    reach, t2 = case_study("reachavoid", out)
    checks, detail = _c8_checks(safety, reach)
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and t1 + t2 < 600
    FIRST_RUN[8] = (None, out)
    CRITERIA[8] = (ok, f"{detail}; {t1 + t2:.0f}s" + (f"; failing parts: {','.join(failed)}" if failed else ""))
    assert ok, CRITERIA[8][1]


# ---------------------------------------------------------------------------
# 9. determinism


def _files(d):
    return sorted(f for f in os.listdir(d) if f.endswith(".csv"))


@pytest.mark.slow
def test_criterion_9(tmp_path_factory):
    diffs, compared = [], 0
    for k, fn in ((1, _c1), (2, _c2), (3, _c3), (4, _c4), (5, _c5), (6, _c6), (7, _c7)):
        if k in FIRST_RUN:
            first = FIRST_RUN[k][1]
        else:
            first = str(tmp_path_factory.mktemp(f"c{k}a"))
            fn(first)
        second = str(tmp_path_factory.mktemp(f"c{k}b"))
        fn(second)
        for name in _files(first):
            compared += 1
            with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                if a.read() != b.read():
                    diffs.append(name)
    first = FIRST_RUN.get(8, (None, None))[1]
    if first is None:
        first = str(tmp_path_factory.mktemp("c8a"))
        for scenario in ("safety", "reachavoid"):
            case_study(scenario, first)
    second = str(tmp_path_factory.mktemp("c8b"))
    for scenario in ("safety", "reachavoid"):
        run_case_study(scenario, out_dir=second)
    names = _files(first)
    for name in names:
        compared += 1
        with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
            if a.read() != b.read():
                diffs.append(name)
    ok = not diffs and compared >= 7 + len(names) and len(names) > 0
    CRITERIA[9] = (ok, f"{compared} CSV files compared, {len(diffs)} differ" + (f": {diffs}" if diffs else ""))
    assert ok, CRITERIA[9][1]
