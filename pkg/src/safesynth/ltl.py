"""LTL formulas over named atomic propositions.

Syntax tree, text parser, negation normal form, subformula closure, exact
lasso semantics and a three-valued prefix classifier for safe formulas.
Letters are ``frozenset`` objects holding the atoms that are true.
"""
from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

Letter = frozenset
FiniteWord = tuple  # tuple of letters


class Formula:
    """Base class of all syntax tree nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_infix(self)

    # operator sugar, handy in tests and demos
    def __and__(self, other: Formula) -> Formula:
        return And(self, other)

    def __or__(self, other: Formula) -> Formula:
        return Or(self, other)

    def __invert__(self) -> Formula:
        return Not(self)


@dataclass(frozen=True, repr=False)
class Const(Formula):
    value: bool

    def __repr__(self) -> str:
        return "TRUE" if self.value else "FALSE"


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    name: str

    def __repr__(self) -> str:
        return f"Atom({self.name!r})"


@dataclass(frozen=True, repr=False)
class Not(Formula):
    child: Formula

    def __repr__(self) -> str:
        return f"Not({self.child!r})"


@dataclass(frozen=True, repr=False)
class Next(Formula):
    child: Formula

    def __repr__(self) -> str:
        return f"Next({self.child!r})"


@dataclass(frozen=True, repr=False)
class And(Formula):
    left: Formula
    right: Formula

    def __repr__(self) -> str:
        return f"And({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Or(Formula):
    left: Formula
    right: Formula

    def __repr__(self) -> str:
        return f"Or({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Until(Formula):
    left: Formula
    right: Formula

    def __repr__(self) -> str:
        return f"Until({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class WeakUntil(Formula):
    left: Formula
    right: Formula

    def __repr__(self) -> str:
        return f"WeakUntil({self.left!r}, {self.right!r})"


TRUE = Const(True)
FALSE = Const(False)

_UNARY = (Not, Next)
_BINARY = (And, Or, Until, WeakUntil)


def eventually(f: Formula) -> Formula:
    return Until(TRUE, f)


def always(f: Formula) -> Formula:
    return WeakUntil(f, FALSE)


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


def next_n(f: Formula, n: int) -> Formula:
    for _ in range(n):
        f = Next(f)
    return f


def conj(parts: Iterable[Formula]) -> Formula:
    parts = list(parts)
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disj(parts: Iterable[Formula]) -> Formula:
    parts = list(parts)
    if not parts:
        return FALSE
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, _UNARY):
        return (f.child,)
    if isinstance(f, _BINARY):
        return (f.left, f.right)
    return ()


def atoms(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset([f.name])
    out: frozenset[str] = frozenset()
    for c in children(f):
        out |= atoms(c)
    return out


def length(f: Formula) -> int:
    """Number of symbols (nodes) of ``f``."""
    return 1 + sum(length(c) for c in children(f))


def depth(f: Formula) -> int:
    cs = children(f)
    return 0 if not cs else 1 + max(depth(c) for c in cs)


# --------------------------------------------------------------------------
# printing

_INFIX = {And: "&", Or: "|", Until: "U", WeakUntil: "W"}
_PREFIX_NAME = {Not: "!", Next: "X", And: "&", Or: "|", Until: "U", WeakUntil: "W"}


def to_infix(f: Formula) -> str:
    """Readable infix text that `parse_formula` reads back to ``f``."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _wrap(f.child)
    if isinstance(f, Next):
        return "X " + _wrap(f.child)
    return f"{_wrap(f.left)} {_INFIX[type(f)]} {_wrap(f.right)}"


def _wrap(f: Formula) -> str:
    s = to_infix(f)
    return s if isinstance(f, (Const, Atom, Not, Next)) else f"({s})"


def to_prefix(f: Formula) -> str:
    """Fully parenthesized prefix form, used for logs and stable ordering."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f.name
    args = " ".join(to_prefix(c) for c in children(f))
    return f"({_PREFIX_NAME[type(f)]} {args})"


# --------------------------------------------------------------------------
# parsing

class LtlSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<op><>|\[\]|->|[!&|()])|(?P<word>[A-Za-z_][A-Za-z0-9_]*))"
)
_KEYWORDS = {"X", "U", "W", "true", "false"}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise LtlSyntaxError(f"unexpected character {text[start]!r}", start)
        tok = m.group("op") or m.group("word")
        tokens.append((tok, m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("<eof>", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, alphabet):
        self.tokens = _tokenize(text)
        self.i = 0
        self.alphabet = None if alphabet is None else frozenset(alphabet)

    def peek(self) -> str:
        return self.tokens[self.i][0]

    def pos(self) -> int:
        return self.tokens[self.i][1]

    def take(self) -> str:
        tok = self.tokens[self.i][0]
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        if self.peek() != tok:
            raise LtlSyntaxError(f"expected {tok!r}, found {self.peek()!r}", self.pos())
        self.i += 1

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek() != "<eof>":
            raise LtlSyntaxError(f"unexpected token {self.peek()!r}", self.pos())
        return f

    def implication(self) -> Formula:
        left = self.until()
        if self.peek() == "->":
            self.take()
            return implies(left, self.implication())
        return left

    def until(self) -> Formula:
        left = self.disjunction()
        if self.peek() in ("U", "W"):
            op = Until if self.take() == "U" else WeakUntil
            return op(left, self.until())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.unary()
        while self.peek() == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "X":
            self.take()
            return Next(self.unary())
        if tok == "<>":
            self.take()
            return eventually(self.unary())
        if tok == "[]":
            self.take()
            return always(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok, pos = self.tokens[self.i]
        if tok == "(":
            self.take()
            f = self.implication()
            self.expect(")")
            return f
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok == "<eof>":
            raise LtlSyntaxError("unexpected end of formula", pos)
        if tok in _KEYWORDS or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            raise LtlSyntaxError(f"unexpected token {tok!r}", pos)
        if self.alphabet is not None and tok not in self.alphabet:
            raise LtlSyntaxError(f"undeclared atom {tok!r}", pos)
        self.take()
        return Atom(tok)


def parse_formula(text: str, alphabet: Iterable[str] | None = None) -> Formula:
    """Parse ``text`` into a formula.

    Operators, loosest first: ``->`` (right assoc), ``U``/``W`` (right
    assoc), ``|``, ``&``, then the unary ``! X <> []``.  ``<>`` and ``[]``
    are stored desugared as ``true U f`` and ``f W false``.  When an
    alphabet is given every atom must belong to it.
    """
    return _Parser(text, alphabet).parse()


# --------------------------------------------------------------------------
# normal forms and fragments

def to_nnf(f: Formula) -> Formula:
    """Push negations down to the atoms."""
    return _nnf(f, False)


@lru_cache(maxsize=None)
def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Const):
        return Const(f.value != neg)
    if isinstance(f, Atom):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    if isinstance(f, Next):
        return Next(_nnf(f.child, neg))
    if isinstance(f, And):
        op = Or if neg else And
        return op(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Or):
        op = And if neg else Or
        return op(_nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, (Until, WeakUntil)):
        if not neg:
            return type(f)(_nnf(f.left, False), _nnf(f.right, False))
        # !(a W b) = !b U (!b & !a),  !(a U b) = !b W (!b & !a)
        nl, nr = _nnf(f.left, True), _nnf(f.right, True)
        dual = Until if isinstance(f, WeakUntil) else WeakUntil
        return dual(nr, And(nr, nl))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return isinstance(f.child, Atom)
    return all(is_nnf(c) for c in children(f))


def is_literal(f: Formula) -> bool:
    return isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.child, Atom))


def is_safe(f: Formula) -> bool:
    """True when ``f`` is in the safe fragment: NNF and no ``U``."""
    if isinstance(f, Until):
        return False
    if isinstance(f, Not):
        return isinstance(f.child, Atom)
    return all(is_safe(c) for c in children(f))


def closure(f: Formula) -> list[Formula]:
    """Subformulas of an NNF formula in post-order, without duplicates.

    Negated atoms count as leaves, so ``!p`` appears but ``p`` only when it
    occurs positively.
    """
    out: list[Formula] = []
    seen: set[Formula] = set()

    def visit(g: Formula) -> None:
        if g in seen:
            return
        if not is_literal(g):
            for c in children(g):
                visit(c)
        seen.add(g)
        out.append(g)

    visit(f)
    return out


# --------------------------------------------------------------------------
# lasso semantics

@dataclass(frozen=True)
class LassoWord:
    """The infinite word ``stem . loop^omega``."""

    stem: tuple
    loop: tuple

    def __post_init__(self):
        object.__setattr__(self, "stem", tuple(frozenset(a) for a in self.stem))
        object.__setattr__(self, "loop", tuple(frozenset(a) for a in self.loop))
        if not self.loop:
            raise ValueError("loop of a lasso word must be nonempty")

    def __len__(self) -> int:
        return len(self.stem) + len(self.loop)

    def letter(self, i: int) -> frozenset:
        if i < len(self.stem):
            return self.stem[i]
        return self.loop[(i - len(self.stem)) % len(self.loop)]

    def prefix(self, n: int) -> tuple:
        return tuple(self.letter(i) for i in range(n))


def lasso_valuation(f: Formula, w: LassoWord) -> dict[Formula, list[bool]]:
    """Truth value of every subformula of ``f`` at each position of ``w``.

    Positions are ``0 .. len(w)-1``; the successor of the last position is
    the start of the loop.
    """
    n = len(w)
    succ = list(range(1, n)) + [len(w.stem)]
    letters = [w.letter(i) for i in range(n)]
    val: dict[Formula, list[bool]] = {}

    def ev(g: Formula) -> list[bool]:
        if g in val:
            return val[g]
        if isinstance(g, Const):
            v = [g.value] * n
        elif isinstance(g, Atom):
            v = [g.name in a for a in letters]
        elif isinstance(g, Not):
            v = [not b for b in ev(g.child)]
        elif isinstance(g, And):
            lv, rv = ev(g.left), ev(g.right)
            v = [a and b for a, b in zip(lv, rv)]
        elif isinstance(g, Or):
            lv, rv = ev(g.left), ev(g.right)
            v = [a or b for a, b in zip(lv, rv)]
        elif isinstance(g, Next):
            cv = ev(g.child)
            v = [cv[succ[i]] for i in range(n)]
        elif isinstance(g, (Until, WeakUntil)):
            lv, rv = ev(g.left), ev(g.right)
            # least fixpoint for U, greatest for W
            v = [isinstance(g, WeakUntil)] * n
            changed = True
            while changed:
                changed = False
                for i in reversed(range(n)):
                    b = rv[i] or (lv[i] and v[succ[i]])
                    if b != v[i]:
                        v[i] = b
                        changed = True
        else:
            raise TypeError(f"not a formula: {g!r}")
        val[g] = v
        return v

    ev(f)
    return val


def eval_lasso(f: Formula, w: LassoWord) -> bool:
    """Exact check of ``stem . loop^omega |= f``."""
    return lasso_valuation(f, w)[f][0]


# --------------------------------------------------------------------------
# prefix classification

class Verdict(enum.Enum):
    DEF_TRUE = "DefTrue"
    DEF_FALSE = "DefFalse"
    OPEN = "Open"


# A residual obligation is a DNF: frozenset of clauses, each clause a
# frozenset of formulas that must all hold at the current position.
_DNF_TRUE = frozenset([frozenset()])
_DNF_FALSE: frozenset = frozenset()


def _absorb(clauses: Iterable[frozenset]) -> frozenset:
    cs = sorted(set(clauses), key=len)
    kept: list[frozenset] = []
    for c in cs:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _dnf_and(a: frozenset, b: frozenset) -> frozenset:
    return _absorb(x | y for x in a for y in b)


@lru_cache(maxsize=None)
def _expand(f: Formula, letter: frozenset) -> frozenset:
    """Obligations for the next position after reading ``letter`` under ``f``."""
    if isinstance(f, Const):
        return _DNF_TRUE if f.value else _DNF_FALSE
    if isinstance(f, Atom):
        return _DNF_TRUE if f.name in letter else _DNF_FALSE
    if isinstance(f, Not):
        return _DNF_FALSE if f.child.name in letter else _DNF_TRUE
    if isinstance(f, And):
        return _dnf_and(_expand(f.left, letter), _expand(f.right, letter))
    if isinstance(f, Or):
        return _absorb(_expand(f.left, letter) | _expand(f.right, letter))
    if isinstance(f, Next):
        return frozenset([frozenset([f.child])])
    if isinstance(f, WeakUntil):
        stay = _dnf_and(_expand(f.left, letter), frozenset([frozenset([f])]))
        return _absorb(_expand(f.right, letter) | stay)
    raise TypeError(f"not a safe formula node: {f!r}")


def _progress(dnf: frozenset, letter: frozenset) -> frozenset:
    out: set = set()
    for clause in dnf:
        acc = _DNF_TRUE
        for g in clause:
            acc = _dnf_and(acc, _expand(g, letter))
            if not acc:
                break
        out |= acc
    return _absorb(out)


class PrefixClassifier:
    """Three-valued finite-prefix evaluation of one safe formula.

    A residual obligation is progressed letter by letter; a safe formula is
    violated by an infinite word exactly when the residual becomes the empty
    DNF after finitely many steps.  ``DEF_FALSE`` therefore means no infinite
    path of the residual graph avoids the empty DNF, and ``DEF_TRUE`` means
    the empty DNF is unreachable.
    """

    def __init__(self, f: Formula, alphabet: Iterable[str] | None = None):
        g = f if is_safe(f) else to_nnf(f)
        if not is_safe(g):
            raise ValueError(f"prefix classification needs a safe formula: {to_infix(f)}")
        self.formula = g
        names = sorted(atoms(g) if alphabet is None else set(alphabet) | atoms(g))
        self.letters = [frozenset(c) for r in range(len(names) + 1)
                        for c in itertools.combinations(names, r)]
        self.initial = frozenset([frozenset([g])])
        self._status: dict[frozenset, Verdict] = {}

    def residual(self, word: Sequence[Iterable[str]]) -> frozenset:
        r = self.initial
        for a in word:
            if not r:
                break
            r = _progress(r, frozenset(a))
        return r

    def step(self, residual: frozenset, letter: Iterable[str]) -> frozenset:
        return _progress(residual, frozenset(letter))

    def status(self, residual: frozenset) -> Verdict:
        if residual in self._status:
            return self._status[residual]
        # explore the residual graph reachable from here
        graph: dict[frozenset, list[frozenset]] = {}
        stack = [residual]
        while stack:
            r = stack.pop()
            if r in graph or r in self._status:
                continue
            succs = [] if not r else [_progress(r, a) for a in self.letters]
            graph[r] = succs
            stack.extend(succs)
        nodes = list(graph)

        def known(r, verdict):
            return self._status.get(r) is verdict

        # alive: some infinite path avoids the empty DNF
        alive = {r for r in nodes if r}
        changed = True
        while changed:
            changed = False
            for r in list(alive):
                if not any(s in alive or (s in self._status and self._status[s] is not Verdict.DEF_FALSE)
                           for s in graph[r]):
                    alive.discard(r)
                    changed = True
        # doomed: empty DNF reachable
        doomed = {r for r in nodes if not r}
        changed = True
        while changed:
            changed = False
            for r in nodes:
                if r not in doomed and any(s in doomed or (s in self._status and not known(s, Verdict.DEF_TRUE))
                                           for s in graph[r]):
                    doomed.add(r)
                    changed = True
        for r in nodes:
            if r not in alive:
                self._status[r] = Verdict.DEF_FALSE
            elif r not in doomed:
                self._status[r] = Verdict.DEF_TRUE
            else:
                self._status[r] = Verdict.OPEN
        return self._status[residual]

    def classify(self, word: Sequence[Iterable[str]]) -> Verdict:
        return self.status(self.residual(word))


def classify_prefix(f: Formula, z: Sequence[Iterable[str]]) -> Verdict:
    """Classify the finite word ``z`` against the safe formula ``f``.

    ``DEF_FALSE`` iff every infinite extension of ``z`` violates ``f`` (``z``
    is a bad prefix), ``DEF_TRUE`` iff every extension satisfies it, and
    ``OPEN`` otherwise.
    """
    return PrefixClassifier(f).classify(z)


# --------------------------------------------------------------------------
# case-study formula generators

def fail_window(n: int, k: int) -> list[tuple[int, ...]]:
    """Fault windows (tuples of 0/1 over ``n`` cycles) that count as failure."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    windows = itertools.product((1, 0), repeat=n)
    if (n, k) == (3, 2):
        return [w for w in windows if sum(w) >= 2]
    if (n, k) == (3, 1):
        return [(1, 1, 0), (0, 1, 1), (1, 0, 1)]
    return [w for w in windows if sum(w) == k]


def fail_pattern(n: int, k: int, fault: str = "f", minterms: bool = False) -> Formula:
    """Antecedent that flags too many faults in ``n`` consecutive cycles.

    (3, 2) is "two or more faults among three cycles" and (3, 1) is the
    published three-disjunct pattern, kept as is even though every disjunct
    carries two faults.  Any other (n, k) means exactly ``k`` of the ``n``
    cycles carry the fault atom.

    With ``minterms=True`` the same predicate is written as a disjunction of
    complete fault/no-fault assignments over the window.
    """
    windows = fail_window(n, k)
    f = Atom(fault)

    def at(i, positive=True):
        return next_n(f if positive else Not(f), i)

    if minterms:
        return disj(conj(at(i, bool(b)) for i, b in enumerate(w)) for w in windows)
    if (n, k) == (3, 2):
        return disj([And(at(0), at(1)), And(at(1), at(2)), And(at(0), at(2))])
    if (n, k) == (3, 1):
        return disj([
            conj([at(0), at(1), at(2, False)]),
            conj([at(0, False), at(1), at(2)]),
            conj([at(0), at(1, False), at(2)]),
        ])
    return disj(conj(at(i, bool(b)) for i, b in enumerate(w)) for w in windows)


def gen_fail_formula(n: int, k: int, consequent: Formula, fault: str = "f",
                     minterms: bool = False) -> Formula:
    """``[] (fail_{n,k} -> X^n consequent)``."""
    return always(implies(fail_pattern(n, k, fault, minterms), next_n(consequent, n)))


def gen_modeswitch_formula(pairs: Sequence[tuple[Formula, Formula]]) -> Formula:
    """``[] (phi_1 & ... & phi_n)`` with one mode-switch template per pair.

    Each ``phi_i`` is ``scen -> (scen & !goal) W ((scen & goal) W !scen)``.
    """
    if not pairs:
        raise ValueError("mode switching needs at least one (scenario, goal) pair")
    parts = []
    for scen, goal in pairs:
        inner = WeakUntil(And(scen, goal), Not(scen))
        parts.append(implies(scen, WeakUntil(And(scen, Not(goal)), inner)))
    return always(conj(parts))
