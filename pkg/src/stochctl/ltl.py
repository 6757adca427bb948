"""Linear temporal logic over a finite alphabet of mutually exclusive letters.

Formulae are immutable dataclasses. Temporal operators carry an optional
bound (``None`` means unbounded). Co-safe and bounded formulae translate to
deterministic reach automata by formula progression; automaton states are
canonical disjunctive normal forms of the residual obligations.
"""

from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iproduct

from .automata import BoundedReach, DetAutomaton, Reach
from .errors import ParseError, UnsupportedError, ValidationError

DEFAULT_STATE_CAP = 10**6


class Formula:
    __slots__ = ()

    def __str__(self):
        return unparse(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    letter: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    bound: int | None = None


@dataclass(frozen=True)
class WeakUntil(Formula):
    left: Formula
    right: Formula
    bound: int | None = None


@dataclass(frozen=True)
class Eventually(Formula):
    arg: Formula
    bound: int | None = None


@dataclass(frozen=True)
class Always(Formula):
    arg: Formula
    bound: int | None = None


TRUE = TrueF()
FALSE = FalseF()


class FragmentClass(enum.Enum):
    BLTL = "BLTL"
    SCLTL = "SCLTL"
    SLTL = "SLTL"
    GENERAL = "GENERAL"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(\[\s*-?\d+\s*\])|([A-Za-z_][A-Za-z0-9_]*)|(.))")
_PREFIX_OPS = {"X", "F", "G"}
_INFIX_OPS = {"U", "W"}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m.group(0).strip() == "":
            break
        start = m.start() + len(m.group(0)) - len(m.group(0).lstrip())
        if m.group(1):
            n = int(m.group(1).strip()[1:-1])
            if n < 0:
                raise ParseError(f"negative bound {n}", start)
            tokens.append(("bound", n, start))
        elif m.group(2):
            tokens.append(("ident", m.group(2), start))
        else:
            ch = m.group(3)
            if ch not in "!&|()":
                raise ParseError(f"unexpected character {ch!r}", start)
            tokens.append(("sym", ch, start))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text, alphabet):
        self.text = text
        self.alphabet = tuple(alphabet)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, k=0):
        j = self.i + k
        return self.tokens[j] if j < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula", len(self.text))
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}", tok[2])

    def parse(self):
        if not self.tokens:
            raise ParseError("empty formula", 0)
        f = self.or_expr()
        if self.peek() is not None:
            tok = self.peek()
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return f

    def or_expr(self):
        f = self.and_expr()
        while self.peek() and self.peek()[1] == "|":
            self.take()
            f = Or(f, self.and_expr())
        return f

    def and_expr(self):
        f = self.until_expr()
        while self.peek() and self.peek()[1] == "&":
            self.take()
            f = And(f, self.until_expr())
        return f

    def until_expr(self):
        left = self.unary()
        tok = self.peek()
        if tok and tok[0] == "ident" and tok[1] in _INFIX_OPS:
            self.take()
            bound = self.bound()
            right = self.until_expr()
            cls = Until if tok[1] == "U" else WeakUntil
            return cls(left, right, bound)
        return left

    def bound(self):
        tok = self.peek()
        if tok and tok[0] == "bound":
            self.take()
            return tok[1]
        return None

    def _starts_formula(self, k):
        tok = self.peek(k)
        if tok is None:
            return False
        if tok[0] == "bound":
            return self._starts_formula(k + 1)
        return tok[0] == "ident" or tok[1] in "!("

    def unary(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula", len(self.text))
        if tok[1] == "!":
            self.take()
            return Not(self.unary())
        if tok[0] == "ident" and tok[1] in _PREFIX_OPS:
            # a letter may share an operator's name: it is an operator only
            # when an operand follows
            if tok[1] not in self.alphabet or self._starts_formula(1):
                self.take()
                if tok[1] == "X":
                    return Next(self.unary())
                bound = self.bound()
                arg = self.unary()
                return Eventually(arg, bound) if tok[1] == "F" else Always(arg, bound)
        return self.primary()

    def primary(self):
        tok = self.take()
        kind, value, pos = tok
        if value == "(":
            f = self.or_expr()
            self.expect(")")
            return f
        if kind == "ident":
            if value == "true":
                return TRUE
            if value == "false":
                return FALSE
            if value in self.alphabet:
                return Atom(value)
            raise ParseError(f"unknown letter {value!r}", pos)
        raise ParseError(f"unexpected token {value!r}", pos)


def parse_ltl(text, alphabet):
    """Parse formula text over ``alphabet``.

    Operators: ``! & | X U W F G true false`` with optional bounds ``U[n]``,
    ``W[n]``, ``F[n]``, ``G[n]``. Unary operators bind tightest, then the
    right-associative ``U``/``W``, then ``&``, then ``|``.
    """
    return _Parser(text, alphabet).parse()


def _b(bound):
    return "" if bound is None else f"[{bound}]"


def unparse(f):
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.letter
    if isinstance(f, Not):
        return f"!{_unparse_operand(f.arg)}"
    if isinstance(f, Next):
        return f"X {_unparse_operand(f.arg)}"
    if isinstance(f, Eventually):
        return f"F{_b(f.bound)} {_unparse_operand(f.arg)}"
    if isinstance(f, Always):
        return f"G{_b(f.bound)} {_unparse_operand(f.arg)}"
    if isinstance(f, And):
        return f"({unparse(f.left)} & {unparse(f.right)})"
    if isinstance(f, Or):
        return f"({unparse(f.left)} | {unparse(f.right)})"
    if isinstance(f, Until):
        return f"({unparse(f.left)} U{_b(f.bound)} {unparse(f.right)})"
    if isinstance(f, WeakUntil):
        return f"({unparse(f.left)} W{_b(f.bound)} {unparse(f.right)})"
    raise TypeError(f"not a formula: {f!r}")


def _unparse_operand(f):
    s = unparse(f)
    if isinstance(f, (Atom, TrueF, FalseF, And, Or, Until, WeakUntil)):
        return s
    return f"({s})"


def atoms(f):
    """Letters mentioned by a formula."""
    if isinstance(f, Atom):
        return {f.letter}
    out = set()
    for child in _children(f):
        out |= atoms(child)
    return out


def _children(f):
    if isinstance(f, (Not, Next, Eventually, Always)):
        return (f.arg,)
    if isinstance(f, (And, Or, Until, WeakUntil)):
        return (f.left, f.right)
    return ()


# ---------------------------------------------------------------------------
# smart constructors: fold constants so that a residual obligation whose
# truth is already settled is syntactically True or False


def mk_and(a, b):
    if isinstance(a, FalseF) or isinstance(b, FalseF):
        return FALSE
    if isinstance(a, TrueF):
        return b
    if isinstance(b, TrueF):
        return a
    if a == b:
        return a
    return And(a, b)


def mk_or(a, b):
    if isinstance(a, TrueF) or isinstance(b, TrueF):
        return TRUE
    if isinstance(a, FalseF):
        return b
    if isinstance(b, FalseF):
        return a
    if a == b:
        return a
    return Or(a, b)


def _const(f):
    return isinstance(f, (TrueF, FalseF))


def mk_next(a):
    return a if _const(a) else Next(a)


def mk_eventually(a, bound=None):
    if _const(a) or bound == 0:
        return a
    return Eventually(a, bound)


def mk_always(a, bound=None):
    if _const(a) or bound == 0:
        return a
    return Always(a, bound)


def mk_until(a, b, bound=None):
    if _const(b) or isinstance(a, FalseF) or bound == 0:
        return b
    if isinstance(a, TrueF):
        return mk_eventually(b, bound)
    return Until(a, b, bound)


def mk_weak_until(a, b, bound=None):
    if isinstance(b, TrueF) or isinstance(a, TrueF):
        return TRUE
    if isinstance(b, FalseF):
        return mk_always(a, bound)
    if isinstance(a, FalseF):
        return b
    if bound == 0:
        return mk_or(b, a)
    return WeakUntil(a, b, bound)


def simplify(f):
    """Bottom-up constant folding with the smart constructors."""
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Not):
        a = simplify(f.arg)
        if isinstance(a, TrueF):
            return FALSE
        if isinstance(a, FalseF):
            return TRUE
        return Not(a)
    if isinstance(f, And):
        return mk_and(simplify(f.left), simplify(f.right))
    if isinstance(f, Or):
        return mk_or(simplify(f.left), simplify(f.right))
    if isinstance(f, Next):
        return mk_next(simplify(f.arg))
    if isinstance(f, Eventually):
        return mk_eventually(simplify(f.arg), f.bound)
    if isinstance(f, Always):
        return mk_always(simplify(f.arg), f.bound)
    if isinstance(f, Until):
        return mk_until(simplify(f.left), simplify(f.right), f.bound)
    if isinstance(f, WeakUntil):
        return mk_weak_until(simplify(f.left), simplify(f.right), f.bound)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# negation normal form and fragments


def to_nnf(f):
    """Push negations down to letters.

    Dualities: ``!X a = X !a``, ``!(a U b) = !b W (!a & !b)``,
    ``!(a W b) = !b U (!a & !b)``, ``!F a = G !a``, ``!G a = F !a``; bounds
    carry over unchanged.
    """
    return simplify(_nnf(f, False))


def _nnf(f, neg):
    if isinstance(f, TrueF):
        return FALSE if neg else TRUE
    if isinstance(f, FalseF):
        return TRUE if neg else FALSE
    if isinstance(f, Atom):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.arg, not neg)
    if isinstance(f, And):
        cls = Or if neg else And
        return cls(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Or):
        cls = And if neg else Or
        return cls(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Next):
        return Next(_nnf(f.arg, neg))
    if isinstance(f, Eventually):
        cls = Always if neg else Eventually
        return cls(_nnf(f.arg, neg), f.bound)
    if isinstance(f, Always):
        cls = Eventually if neg else Always
        return cls(_nnf(f.arg, neg), f.bound)
    if isinstance(f, (Until, WeakUntil)):
        if not neg:
            return type(f)(_nnf(f.left, False), _nnf(f.right, False), f.bound)
        na, nb = _nnf(f.left, True), _nnf(f.right, True)
        dual = WeakUntil if isinstance(f, Until) else Until
        return dual(nb, And(na, nb), f.bound)
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f):
    if isinstance(f, Not):
        return isinstance(f.arg, Atom)
    return all(is_nnf(c) for c in _children(f))


def classify(f):
    """Syntactic fragment of an NNF formula (sound, not complete)."""
    if not is_nnf(f):
        raise ValidationError("classify expects a formula in negation normal form")
    kinds = _unbounded_kinds(f)
    if not kinds:
        return FragmentClass.BLTL
    cosafe = kinds <= {"U", "F"}
    safe = kinds <= {"W", "G"}
    if cosafe:
        return FragmentClass.SCLTL
    if safe:
        return FragmentClass.SLTL
    return FragmentClass.GENERAL


def _unbounded_kinds(f):
    out = set()
    if isinstance(f, (Until, WeakUntil, Eventually, Always)) and f.bound is None:
        out.add({Until: "U", WeakUntil: "W", Eventually: "F", Always: "G"}[type(f)])
    for c in _children(f):
        out |= _unbounded_kinds(c)
    return out


def temporal_depth(f):
    """Number of letters after the first one a bounded formula can look at."""
    if isinstance(f, (TrueF, FalseF, Atom)):
        return 0
    if isinstance(f, Not):
        return temporal_depth(f.arg)
    if isinstance(f, (And, Or)):
        return max(temporal_depth(f.left), temporal_depth(f.right))
    if isinstance(f, Next):
        return 1 + temporal_depth(f.arg)
    if f.bound is None:
        raise ValidationError("unbounded operator has no finite depth")
    if isinstance(f, (Eventually, Always)):
        return f.bound + temporal_depth(f.arg)
    return f.bound + max(temporal_depth(f.left), temporal_depth(f.right))


# ---------------------------------------------------------------------------
# three-valued evaluation on finite prefixes
#
# Positions beyond the prefix carry an unknown letter and are evaluated with
# Kleene's strong three-valued logic. A result of True (False) means the
# prefix is an informative good (bad) prefix.


def _k_not(a):
    return None if a is None else (not a)


def _k_and(a, b):
    if a is False or b is False:
        return False
    if a is True and b is True:
        return True
    return None


def _k_or(a, b):
    if a is True or b is True:
        return True
    if a is False and b is False:
        return False
    return None


def _beyond(f):
    """Value of ``f`` at any position past the end of the prefix."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return None
    if isinstance(f, Not):
        return _k_not(_beyond(f.arg))
    if isinstance(f, And):
        return _k_and(_beyond(f.left), _beyond(f.right))
    if isinstance(f, Or):
        return _k_or(_beyond(f.left), _beyond(f.right))
    if isinstance(f, (Next, Eventually, Always)):
        return _beyond(f.arg)
    if isinstance(f, Until):
        return _beyond(f.right)
    if isinstance(f, WeakUntil):
        return _k_or(_beyond(f.right), _beyond(f.left))
    raise TypeError(f"not a formula: {f!r}")


def _eval(f, word, i):
    if i >= len(word):
        return _beyond(f)
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return word[i] == f.letter
    if isinstance(f, Not):
        return _k_not(_eval(f.arg, word, i))
    if isinstance(f, And):
        return _k_and(_eval(f.left, word, i), _eval(f.right, word, i))
    if isinstance(f, Or):
        return _k_or(_eval(f.left, word, i), _eval(f.right, word, i))
    if isinstance(f, Next):
        return _eval(f.arg, word, i + 1)
    if isinstance(f, Eventually):
        return _eval(Until(TRUE, f.arg, f.bound), word, i)
    if isinstance(f, Always):
        # G[n] a holds iff a holds at positions i..i+n
        return _k_not(_eval(Until(TRUE, _nnf(f.arg, True), f.bound), word, i))
    if isinstance(f, (Until, WeakUntil)):
        return _eval_until(f, word, i)
    raise TypeError(f"not a formula: {f!r}")


def _eval_until(f, word, i):
    weak = isinstance(f, WeakUntil)
    n = f.bound
    # scan forward: satisfied once right holds with left holding before
    prefix = True  # Kleene conjunction of left over positions seen so far
    k = 0
    result = False
    while True:
        pos = i + k
        if pos >= len(word) or (n is not None and k > n):
            break
        r = _eval(f.right, word, pos)
        result = _k_or(result, _k_and(prefix, r))
        if result is True:
            return True
        prefix = _k_and(prefix, _eval(f.left, word, pos))
        if prefix is False:
            return result
        k += 1
    if n is not None and k > n:
        # bound exhausted inside the prefix
        if weak:
            return _k_or(result, prefix)
        return result
    # the remaining window extends past the prefix
    tail = _beyond(f.right)
    if weak:
        tail = _k_or(tail, _beyond(f.left))
    return _k_or(result, _k_and(prefix, tail))


def semantics_eval(f, word, mode="definite"):
    """Evaluate ``f`` on a finite prefix.

    ``definite`` returns True/False for informative good/bad prefixes and
    None otherwise; ``optimistic``/``pessimistic`` resolve None to
    True/False.
    """
    value = _eval(f, tuple(word), 0)
    if mode == "definite":
        return value
    if mode == "optimistic":
        return True if value is None else value
    if mode == "pessimistic":
        return False if value is None else value
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# progression


def progress(f, letter):
    """Residual obligation after reading ``letter``.

    For NNF ``f`` and any word ``w`` starting with ``letter``:
    ``w`` satisfies ``f`` iff the shifted word satisfies the result.
    """
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Atom):
        return TRUE if f.letter == letter else FALSE
    if isinstance(f, Not):
        if not isinstance(f.arg, Atom):
            raise ValidationError("progress expects a formula in negation normal form")
        return FALSE if f.arg.letter == letter else TRUE
    if isinstance(f, And):
        return mk_and(progress(f.left, letter), progress(f.right, letter))
    if isinstance(f, Or):
        return mk_or(progress(f.left, letter), progress(f.right, letter))
    if isinstance(f, Next):
        return f.arg
    if isinstance(f, Eventually):
        now = progress(f.arg, letter)
        if f.bound == 0:
            return now
        return mk_or(now, mk_eventually(f.arg, _dec(f.bound)))
    if isinstance(f, Always):
        now = progress(f.arg, letter)
        if f.bound == 0:
            return now
        return mk_and(now, mk_always(f.arg, _dec(f.bound)))
    if isinstance(f, Until):
        now = progress(f.right, letter)
        if f.bound == 0:
            return now
        rest = mk_until(f.left, f.right, _dec(f.bound))
        return mk_or(now, mk_and(progress(f.left, letter), rest))
    if isinstance(f, WeakUntil):
        now = progress(f.right, letter)
        if f.bound == 0:
            return mk_or(now, progress(f.left, letter))
        rest = mk_weak_until(f.left, f.right, _dec(f.bound))
        return mk_or(now, mk_and(progress(f.left, letter), rest))
    raise TypeError(f"not a formula: {f!r}")


def _dec(bound):
    return None if bound is None else bound - 1


# ---------------------------------------------------------------------------
# canonical forms


def _dnf(f):
    """Set of clauses (frozensets of literals) equivalent to ``f``."""
    if isinstance(f, TrueF):
        return frozenset([frozenset()])
    if isinstance(f, FalseF):
        return frozenset()
    if isinstance(f, Or):
        return _absorb(_dnf(f.left) | _dnf(f.right))
    if isinstance(f, And):
        left, right = _dnf(f.left), _dnf(f.right)
        return _absorb(frozenset(a | b for a in left for b in right))
    return frozenset([frozenset([_canon_literal(f)])])


def _absorb(clauses):
    kept = [c for c in clauses if not any(o < c for o in clauses)]
    return frozenset(kept)


def _canon_literal(f):
    if isinstance(f, (Atom, Not)):
        return f
    if isinstance(f, Next):
        return Next(canonical(f.arg))
    if isinstance(f, (Eventually, Always)):
        return type(f)(canonical(f.arg), f.bound)
    if isinstance(f, (Until, WeakUntil)):
        return type(f)(canonical(f.left), canonical(f.right), f.bound)
    raise TypeError(f"not a literal: {f!r}")


@lru_cache(maxsize=None)
def canonical(f):
    """Sorted, absorbed DNF rebuilt as a formula; equal forms mean equal states."""
    clauses = _dnf(f)
    if not clauses:
        return FALSE
    if frozenset() in clauses:
        return TRUE
    built = []
    for clause in clauses:
        lits = sorted(clause, key=unparse)
        term = lits[0]
        for lit in lits[1:]:
            term = And(term, lit)
        built.append(term)
    built.sort(key=unparse)
    out = built[0]
    for term in built[1:]:
        out = Or(out, term)
    return out


# ---------------------------------------------------------------------------
# translation


def scltl_to_dfa(f, alphabet, max_states=DEFAULT_STATE_CAP):
    """Deterministic reach automaton for a co-safe or bounded formula.

    States are the canonical residuals reachable from ``f`` by progression,
    numbered in breadth-first order over the alphabet; the accepting state is
    the residual ``true``. Bounded formulae get a bounded-reach condition with
    horizon ``temporal_depth + 1``.
    """
    alphabet = tuple(alphabet)
    unknown = atoms(f) - set(alphabet)
    if unknown:
        raise ValidationError(f"formula uses letters outside the alphabet: {sorted(unknown)}")
    nnf = to_nnf(f)
    frag = classify(nnf)
    if frag not in (FragmentClass.SCLTL, FragmentClass.BLTL):
        raise UnsupportedError(f"formula is {frag.value}, not co-safe or bounded")
    start = canonical(nnf)
    index = {start: 0}
    names = [start]
    trans = []
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        row = []
        for letter in alphabet:
            nxt = canonical(progress(cur, letter))
            if nxt not in index:
                if len(index) >= max_states:
                    raise UnsupportedError(
                        f"automaton exceeds {max_states} states; increase the cap"
                    )
                index[nxt] = len(names)
                names.append(nxt)
                queue.append(nxt)
            row.append(index[nxt])
        trans.append(row)
    final = frozenset(i for i, s in enumerate(names) if isinstance(s, TrueF))
    if frag is FragmentClass.BLTL:
        acceptance = BoundedReach(final, temporal_depth(nnf) + 1)
    else:
        acceptance = Reach(final)
    return DetAutomaton(
        alphabet=alphabet,
        initial=0,
        trans=tuple(tuple(r) for r in trans),
        acceptance=acceptance,
        state_names=tuple(unparse(s) for s in names),
    )


def words(alphabet, max_len):
    """All words of length 1..max_len (test-oracle helper)."""
    for n in range(1, max_len + 1):
        yield from iproduct(alphabet, repeat=n)


def expand_bounded_until(left, right, n):
    """Disjunction-of-conjunctions expansion of ``left U[n] right`` using Next only."""

    def x_pow(f, k):
        for _ in range(k):
            f = Next(f)
        return f

    out = FALSE
    for i in range(n + 1):
        term = x_pow(right, i)
        for j in range(i):
            term = And(x_pow(left, j), term)
        out = term if isinstance(out, FalseF) else Or(out, term)
    return out
