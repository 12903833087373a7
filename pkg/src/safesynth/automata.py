"""Finite-word automata for bad prefixes of safe formulas.

`construct_fine_nfa` builds, backwards from the empty valuation, an NFA whose
states are sets of subformulas of NNF(!phi).  It accepts a set of bad
prefixes of ``phi`` that contains a prefix of every violating word.
`subset_construction` turns it into a total DFA.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import ltl
from .ltl import And, Atom, Const, Formula, Next, Not, Or, Until, WeakUntil


class AutomatonError(ValueError):
    pass


def letters_of(alphabet: Sequence[str]) -> list[frozenset]:
    """All letters over ``alphabet``; letter ``i`` holds atom ``j`` iff bit ``j`` of ``i`` is set."""
    return [frozenset(a for j, a in enumerate(alphabet) if i >> j & 1)
            for i in range(1 << len(alphabet))]


def letter_index(alphabet: Sequence[str], letter: Iterable[str]) -> int:
    idx = 0
    pos = {a: j for j, a in enumerate(alphabet)}
    for a in letter:
        if a not in pos:
            raise AutomatonError(f"atom {a!r} is not in the alphabet {list(alphabet)}")
        idx |= 1 << pos[a]
    return idx


def render_letter(letter: Iterable[str]) -> str:
    return "{" + ",".join(sorted(letter)) + "}"


@dataclass
class Nfa:
    """NFA over the letters ``2^alphabet``.

    ``states[i]`` is a bitmask over ``closure`` (which subformulas hold).
    ``succ[i][a]`` lists the successors of state ``i`` on letter index ``a``.
    """

    alphabet: tuple[str, ...]
    closure: list[Formula]
    states: list[int]
    initial: frozenset[int]
    final: frozenset[int]
    succ: list[list[tuple[int, ...]]]
    root: Formula | None = None

    @property
    def letters(self) -> list[frozenset]:
        return letters_of(self.alphabet)

    def __len__(self) -> int:
        return len(self.states)

    def transitions(self):
        for src, row in enumerate(self.succ):
            for a, dsts in enumerate(row):
                for dst in dsts:
                    yield src, a, dst

    def state_formulas(self, i: int) -> list[Formula]:
        mask = self.states[i]
        return [g for j, g in enumerate(self.closure) if mask >> j & 1]


@dataclass
class Dfa:
    """Total DFA; ``delta[q, a]`` is the successor of ``q`` on letter index ``a``.

    ``subsets[q]`` records which NFA states the subset-construction state
    stands for.  State 0 is initial.
    """

    alphabet: tuple[str, ...]
    delta: np.ndarray
    final: frozenset[int]
    subsets: list[frozenset[int]] = field(default_factory=list)
    initial: int = 0

    def __len__(self) -> int:
        return self.delta.shape[0]

    @property
    def letters(self) -> list[frozenset]:
        return letters_of(self.alphabet)

    @property
    def sink(self) -> int | None:
        for q, s in enumerate(self.subsets):
            if not s:
                return q
        return None

    def step(self, q: int, letter: Iterable[str] | int) -> int:
        a = letter if isinstance(letter, (int, np.integer)) else letter_index(self.alphabet, letter)
        if not 0 <= a < self.delta.shape[1]:
            raise AutomatonError(f"letter index {a} out of range")
        return int(self.delta[q, a])

    def run(self, word: Iterable, q: int | None = None) -> int:
        q = self.initial if q is None else q
        for letter in word:
            q = self.step(q, letter)
        return q

    def accepts(self, word: Iterable) -> bool:
        return self.run(word) in self.final


# --------------------------------------------------------------------------

def _compile_closure(cl: list[Formula], alphabet: Sequence[str]):
    index = {g: i for i, g in enumerate(cl)}
    pos = {a: j for j, a in enumerate(alphabet)}
    ops = []
    for i, g in enumerate(cl):
        if isinstance(g, Const):
            ops.append(("const", g.value))
        elif isinstance(g, Atom):
            ops.append(("atom", 1 << pos[g.name]))
        elif isinstance(g, Not):
            ops.append(("natom", 1 << pos[g.child.name]))
        elif isinstance(g, Or):
            ops.append(("or", index[g.left], index[g.right]))
        elif isinstance(g, And):
            ops.append(("and", index[g.left], index[g.right]))
        elif isinstance(g, Next):
            ops.append(("next", index[g.child]))
        elif isinstance(g, Until):
            ops.append(("until", index[g.left], index[g.right]))
        else:
            raise AutomatonError(f"unexpected node in negated safe formula: {ltl.to_infix(g)}")
    return ops


def _predecessor(ops, s: int, letter: int) -> int:
    """Valuation at the current position given the letter read here and the
    valuation ``s`` at the next position."""
    t = 0
    for i, op in enumerate(ops):
        kind = op[0]
        if kind == "atom":
            hit = letter & op[1]
        elif kind == "natom":
            hit = not letter & op[1]
        elif kind == "or":
            hit = (t >> op[1] | t >> op[2]) & 1
        elif kind == "and":
            hit = (t >> op[1] & t >> op[2]) & 1
        elif kind == "next":
            hit = s >> op[1] & 1
        elif kind == "until":
            hit = t >> op[2] & 1 or (t >> op[1] & 1 and s >> i & 1)
        else:
            hit = op[1]
        if hit:
            t |= 1 << i
    return t


def construct_fine_nfa(phi_safe: Formula, alphabet: Iterable[str] | None = None) -> Nfa:
    """Fine automaton for the bad prefixes of the safe formula ``phi_safe``.

    The construction runs backwards from the empty valuation (the single
    final state).  For each dequeued valuation ``s`` and letter, the unique
    valuation ``s'`` of the previous position is computed over the closure of
    ``NNF(!phi_safe)`` and the edge ``s' -letter-> s`` is recorded; ``s'`` is
    initial when it contains ``NNF(!phi_safe)``.
    """
    names = ltl.atoms(phi_safe)
    alphabet = tuple(sorted(names if alphabet is None else set(alphabet)))
    if not names <= set(alphabet):
        raise AutomatonError(f"atoms {sorted(names - set(alphabet))} missing from alphabet")
    negated = ltl.to_nnf(ltl.Not(phi_safe))
    if not ltl.is_safe(ltl.to_nnf(phi_safe)):
        raise AutomatonError(f"not a safe formula: {ltl.to_infix(phi_safe)}")
    cl = ltl.closure(negated)
    ops = _compile_closure(cl, alphabet)
    root_bit = 1 << cl.index(negated)
    n_letters = 1 << len(alphabet)

    ids = {0: 0}
    states = [0]
    edges: list[tuple[int, int, int]] = []
    initial: set[int] = set()
    queue = deque([0])
    while queue:
        s = queue.popleft()
        for a in range(n_letters):
            t = _predecessor(ops, s, a)
            if t not in ids:
                ids[t] = len(states)
                states.append(t)
                queue.append(t)
            if t & root_bit:
                initial.add(ids[t])
            edges.append((ids[t], a, ids[s]))

    succ: list[list[list[int]]] = [[[] for _ in range(n_letters)] for _ in states]
    for src, a, dst in edges:
        succ[src][a].append(dst)
    return Nfa(
        alphabet=alphabet,
        closure=cl,
        states=states,
        initial=frozenset(initial),
        final=frozenset([0]),
        succ=[[tuple(sorted(d)) for d in row] for row in succ],
        root=negated,
    )


def subset_construction(nfa: Nfa) -> Dfa:
    """Reachable-subset determinization, states numbered in BFS order.

    The empty subset is kept as an explicit non-final sink when reachable,
    so the transition function is total.
    """
    n_letters = 1 << len(nfa.alphabet)
    start = frozenset(nfa.initial)
    ids = {start: 0}
    subsets = [start]
    rows: list[list[int]] = []
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        row = []
        for a in range(n_letters):
            nxt = frozenset(itertools.chain.from_iterable(nfa.succ[q][a] for q in cur))
            if nxt not in ids:
                ids[nxt] = len(subsets)
                subsets.append(nxt)
                queue.append(nxt)
            row.append(ids[nxt])
        rows.append(row)
    final = frozenset(i for i, s in enumerate(subsets) if s & nfa.final)
    return Dfa(alphabet=nfa.alphabet, delta=np.array(rows, dtype=np.int64).reshape(len(rows), n_letters),
               final=final, subsets=subsets)


def nfa_accepts(nfa: Nfa, word: Iterable) -> bool:
    cur = set(nfa.initial)
    for letter in word:
        a = letter if isinstance(letter, int) else letter_index(nfa.alphabet, letter)
        cur = {d for q in cur for d in nfa.succ[q][a]}
        if not cur:
            return False
    return bool(cur & nfa.final)


def dfa_step(dfa: Dfa, q: int, letter) -> int:
    return dfa.step(q, letter)


def export_graph(a: Nfa | Dfa) -> str:
    """Stable line-oriented text rendering of an automaton.

    One ``node`` line per state (with ``init``/``final`` flags) followed by
    one ``edge`` line per transition, labelled by the letter.
    """
    letters = a.letters
    lines = []
    if isinstance(a, Dfa):
        lines.append(f"dfa alphabet={render_letter(a.alphabet)} states={len(a)}")
        for q in range(len(a)):
            flags = ("init " if q == a.initial else "") + ("final " if q in a.final else "")
            members = ",".join(str(s) for s in sorted(a.subsets[q])) if a.subsets else ""
            lines.append(f"node {q} {flags}[{members}]".replace("  ", " "))
        for q in range(len(a)):
            for i, letter in enumerate(letters):
                lines.append(f"edge {q} {int(a.delta[q, i])} {render_letter(letter)}")
    else:
        lines.append(f"nfa alphabet={render_letter(a.alphabet)} states={len(a)}")
        for q in range(len(a)):
            flags = ("init " if q in a.initial else "") + ("final " if q in a.final else "")
            label = " ; ".join(ltl.to_prefix(g) for g in a.state_formulas(q))
            lines.append(f"node {q} {flags}[{label}]")
        for src, i, dst in a.transitions():
            lines.append(f"edge {src} {dst} {render_letter(letters[i])}")
    return "\n".join(lines) + "\n"
