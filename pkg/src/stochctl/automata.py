"""Deterministic automata over a finite alphabet and their text format.

Format (UTF-8, one directive per line, ``#`` starts a comment)::

    alphabet: S G1 G2 G BOT
    states: 5
    initial: 0
    acceptance: reach 4
    trans: 0 S 0
    ...

``acceptance`` is one of ``reach <F...>``, ``reach-bounded <n> <F...>``,
``buchi <F...>`` or ``rabin <k>`` followed by ``k`` lines
``pair: <F'...> ; <F''...>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class Reach:
    final: frozenset


@dataclass(frozen=True)
class BoundedReach:
    final: frozenset
    horizon: int


@dataclass(frozen=True)
class Buchi:
    final: frozenset


@dataclass(frozen=True)
class Rabin:
    """Accepting iff for some pair the run visits ``inf`` infinitely often and ``fin`` finitely often."""

    pairs: tuple  # of (inf: frozenset, fin: frozenset)


def _sets_of(acc):
    if isinstance(acc, Rabin):
        return [s for pair in acc.pairs for s in pair]
    return [acc.final]


@dataclass(frozen=True)
class DetAutomaton:
    alphabet: tuple
    initial: int
    trans: tuple  # trans[q][i] is the successor of q on alphabet[i]
    acceptance: object
    state_names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        trans = tuple(tuple(int(t) for t in row) for row in self.trans)
        acc = self.acceptance
        if isinstance(acc, (Reach, Buchi)):
            acc = type(acc)(frozenset(int(q) for q in acc.final))
        elif isinstance(acc, BoundedReach):
            acc = BoundedReach(frozenset(int(q) for q in acc.final), int(acc.horizon))
        elif isinstance(acc, Rabin):
            acc = Rabin(tuple((frozenset(map(int, a)), frozenset(map(int, b))) for a, b in acc.pairs))
        else:
            raise ValidationError(f"unknown acceptance condition {acc!r}")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "acceptance", acc)

        n = len(trans)
        if n == 0:
            raise ValidationError("automaton needs at least one state")
        if len(set(alphabet)) != len(alphabet) or not alphabet:
            raise ValidationError("alphabet must be non-empty with distinct letters")
        if not 0 <= self.initial < n:
            raise ValidationError(f"initial state {self.initial} out of range")
        for q, row in enumerate(trans):
            if len(row) != len(alphabet):
                raise ValidationError(f"state {q} needs one transition per letter")
            for t in row:
                if not 0 <= t < n:
                    raise ValidationError(f"transition from state {q} targets unknown state {t}")
        for s in _sets_of(acc):
            bad = [q for q in s if not 0 <= q < n]
            if bad:
                raise ValidationError(f"acceptance set mentions unknown state(s) {sorted(bad)}")
        if isinstance(acc, BoundedReach) and acc.horizon < 0:
            raise ValidationError("bounded-reach horizon must be non-negative")
        if isinstance(acc, Reach):
            for q in sorted(acc.final):
                if any(t != q for t in trans[q]):
                    raise ValidationError(f"final state {q} of a reach automaton is not absorbing")

    @property
    def n_states(self):
        return len(self.trans)

    def letter_index(self, letter):
        try:
            return self.alphabet.index(letter)
        except ValueError:
            raise ValidationError(f"unknown letter {letter!r}") from None

    def step(self, q, letter):
        return self.trans[q][self.letter_index(letter)]

    def successor_table(self):
        """``(Q, |alphabet|)`` nested tuple, same as ``trans``."""
        return self.trans


@dataclass(frozen=True)
class RunResult:
    states: tuple
    verdict: str  # "accepted", "rejected" or "undetermined"
    recent: frozenset = frozenset()


def run(automaton, word, window=10):
    """Run on a finite word.

    Reach conditions are accepted once a final state is seen; bounded reach is
    rejected once the horizon has passed without one. Büchi and Rabin
    conditions are never decided on a finite word: the verdict is
    ``undetermined`` and ``recent`` holds the states seen in the last
    ``window`` steps.
    """
    q = automaton.initial
    states = [q]
    for letter in word:
        q = automaton.step(q, letter)
        states.append(q)
    acc = automaton.acceptance
    recent = frozenset(states[-window:]) if window > 0 else frozenset()
    if isinstance(acc, Reach):
        verdict = "accepted" if any(s in acc.final for s in states) else "undetermined"
    elif isinstance(acc, BoundedReach):
        upto = states[: acc.horizon + 1]
        if any(s in acc.final for s in upto):
            verdict = "accepted"
        elif len(word) >= acc.horizon:
            verdict = "rejected"
        else:
            verdict = "undetermined"
    else:
        verdict = "undetermined"
    return RunResult(tuple(states), verdict, recent)


# ---------------------------------------------------------------------------
# text format


def _fmt_set(s):
    return " ".join(str(q) for q in sorted(s))


def serialize_automaton(a):
    lines = [
        f"alphabet: {' '.join(a.alphabet)}",
        f"states: {a.n_states}",
        f"initial: {a.initial}",
    ]
    acc = a.acceptance
    if isinstance(acc, Reach):
        lines.append(f"acceptance: reach {_fmt_set(acc.final)}".rstrip())
    elif isinstance(acc, BoundedReach):
        lines.append(f"acceptance: reach-bounded {acc.horizon} {_fmt_set(acc.final)}".rstrip())
    elif isinstance(acc, Buchi):
        lines.append(f"acceptance: buchi {_fmt_set(acc.final)}".rstrip())
    else:
        lines.append(f"acceptance: rabin {len(acc.pairs)}")
        for inf, fin in acc.pairs:
            lines.append(f"pair: {_fmt_set(inf)} ; {_fmt_set(fin)}".replace("  ", " ").strip())
    for q, row in enumerate(a.trans):
        for letter, t in zip(a.alphabet, row):
            lines.append(f"trans: {q} {letter} {t}")
    return "\n".join(lines) + "\n"


def _ints(tokens, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"line {lineno}: expected state indices, got {' '.join(tokens)!r}") from None


def parse_automaton(text):
    header = {}
    pairs = []
    trans = {}
    acc_tokens = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'key: value'")
        key, rest = key.strip(), rest.split()
        if key in ("alphabet", "states", "initial"):
            if key in header:
                raise ParseError(f"line {lineno}: duplicate {key!r}")
            header[key] = rest
        elif key == "acceptance":
            if acc_tokens is not None:
                raise ParseError(f"line {lineno}: duplicate acceptance")
            acc_tokens = (rest, lineno)
        elif key == "pair":
            joined = " ".join(rest)
            if ";" not in joined:
                raise ParseError(f"line {lineno}: pair needs ';' between the two sets")
            left, right = joined.split(";", 1)
            pairs.append((_ints(left.split(), lineno), _ints(right.split(), lineno)))
        elif key == "trans":
            if len(rest) != 3:
                raise ParseError(f"line {lineno}: trans needs '<state> <letter> <state>'")
            q, letter, t = rest
            src, dst = _ints([q, t], lineno)
            if (src, letter) in trans:
                raise ParseError(f"line {lineno}: duplicate transition for ({src}, {letter})")
            trans[(src, letter)] = dst
        else:
            raise ParseError(f"line {lineno}: unknown directive {key!r}")

    for key in ("alphabet", "states", "initial"):
        if key not in header:
            raise ParseError(f"missing '{key}' line")
    if acc_tokens is None:
        raise ParseError("missing 'acceptance' line")
    alphabet = tuple(header["alphabet"])
    (n,) = _ints(header["states"], 0)
    (initial,) = _ints(header["initial"], 0)

    rows = []
    for q in range(n):
        row = []
        for letter in alphabet:
            if (q, letter) not in trans:
                raise ValidationError(f"missing transition for ({q}, {letter})")
            row.append(trans.pop((q, letter)))
        rows.append(row)
    if trans:
        (q, letter), _ = next(iter(trans.items()))
        raise ValidationError(f"transition for unknown pair ({q}, {letter})")

    tokens, lineno = acc_tokens
    if not tokens:
        raise ParseError(f"line {lineno}: empty acceptance")
    kind, args = tokens[0], tokens[1:]
    if kind == "reach":
        acc = Reach(frozenset(_ints(args, lineno)))
    elif kind == "reach-bounded":
        if not args:
            raise ParseError(f"line {lineno}: reach-bounded needs a horizon")
        vals = _ints(args, lineno)
        acc = BoundedReach(frozenset(vals[1:]), vals[0])
    elif kind == "buchi":
        acc = Buchi(frozenset(_ints(args, lineno)))
    elif kind == "rabin":
        (k,) = _ints(args, lineno) if len(args) == 1 else (None,)
        if k is None or k != len(pairs):
            raise ParseError(f"line {lineno}: rabin {args} does not match {len(pairs)} pair lines")
        acc = Rabin(tuple((frozenset(a), frozenset(b)) for a, b in pairs))
    else:
        raise ParseError(f"line {lineno}: unknown acceptance kind {kind!r}")
    if pairs and kind != "rabin":
        raise ParseError("pair lines are only valid with rabin acceptance")
    return DetAutomaton(alphabet, initial, tuple(map(tuple, rows)), acc)


def load_automaton(path):
    with open(path, encoding="utf-8") as fh:
        return parse_automaton(fh.read())
