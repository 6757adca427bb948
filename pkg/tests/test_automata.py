import pytest

from stochctl.automata import (
    BoundedReach,
    Buchi,
    DetAutomaton,
    Rabin,
    Reach,
    load_automaton,
    parse_automaton,
    run,
    serialize_automaton,
)
from stochctl.errors import ParseError, ValidationError
from stochctl.powernet import bundled_path


@pytest.fixture(params=["task1.aut", "task1_neg.aut", "task2.aut"])
def bundled(request):
    return load_automaton(bundled_path(request.param))


def test_bundled_roundtrip(bundled):
    assert parse_automaton(serialize_automaton(bundled)) == bundled


def test_task1_buchi():
    a = load_automaton(bundled_path("task1.aut"))
    assert a.n_states == 2 and a.acceptance == Buchi(frozenset({0}))
    r = run(a, ["S", "S", "BOT"])
    assert r.verdict == "undetermined"
    assert r.recent == frozenset({0, 1})


def test_task1_negation_run():
    a = load_automaton(bundled_path("task1_neg.aut"))
    r = run(a, ["S", "S", "BOT"])
    assert r.states == (0, 0, 0, 1)
    assert r.verdict == "accepted"


def test_task2_run():
    a = load_automaton(bundled_path("task2.aut"))
    assert run(a, ["S", "G1", "G"]).verdict == "accepted"
    assert run(a, ["S", "G1", "G2", "G"]).verdict == "undetermined"


def test_empty_word():
    a = load_automaton(bundled_path("task2.aut"))
    r = run(a, [])
    assert r.states == (0,) and r.verdict == "undetermined"


def test_unknown_letter():
    a = load_automaton(bundled_path("task2.aut"))
    with pytest.raises(ValidationError, match="unknown letter"):
        run(a, ["Z"])


BASE = """alphabet: a b
states: 2
initial: 0
acceptance: reach 1
trans: 0 a 0
trans: 0 b 1
trans: 1 a 1
trans: 1 b 1
"""


def test_missing_transition_named():
    text = BASE.replace("trans: 0 b 1\n", "")
    with pytest.raises(ValidationError, match=r"\(0, b\)"):
        parse_automaton(text)


def test_duplicate_transition():
    with pytest.raises(ParseError, match="duplicate"):
        parse_automaton(BASE + "trans: 0 a 1\n")


def test_acceptance_out_of_range():
    with pytest.raises(ValidationError, match="unknown state"):
        parse_automaton(BASE.replace("reach 1", "reach 7"))


def test_reach_final_must_be_absorbing():
    text = BASE.replace("trans: 1 a 1", "trans: 1 a 0")
    with pytest.raises(ValidationError, match="not absorbing"):
        parse_automaton(text)


def test_comments_and_other_conditions():
    text = "# header\n" + BASE.replace("reach 1", "reach-bounded 3 1  # bounded")
    a = parse_automaton(text)
    assert a.acceptance == BoundedReach(frozenset({1}), 3)
    assert run(a, ["a", "a", "a"]).verdict == "rejected"
    rabin = BASE.replace("acceptance: reach 1", "acceptance: rabin 2\npair: 0 ; 1\npair: 1 ;")
    a = parse_automaton(rabin)
    assert a.acceptance == Rabin(((frozenset({0}), frozenset({1})), (frozenset({1}), frozenset())))
    assert parse_automaton(serialize_automaton(a)) == a


def test_rabin_pair_count_checked():
    with pytest.raises(ParseError):
        parse_automaton(BASE.replace("acceptance: reach 1", "acceptance: rabin 2\npair: 0 ; 1"))


def test_direct_construction_validates():
    with pytest.raises(ValidationError):
        DetAutomaton(("a",), 0, ((1,),), Reach(frozenset()))
