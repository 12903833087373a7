import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from safesynth import ltl
from safesynth.ltl import And, Atom, Const, Next, Not, Or, Until, WeakUntil
from safesynth.system import TransitionSystem

ATOMS = ("a", "b", "c")


def all_letters(names):
    names = sorted(names)
    return [frozenset(c) for r in range(len(names) + 1) for c in itertools.combinations(names, r)]


def all_words(names, max_len):
    letters = all_letters(names)
    for n in range(max_len + 1):
        yield from itertools.product(letters, repeat=n)


def random_safe_formula(rng, depth=4, atoms=ATOMS):
    """Random safe formula in NNF over ``atoms``."""
    if depth == 0 or rng.random() < 0.2:
        r = rng.random()
        if r < 0.05:
            return Const(bool(rng.integers(2)))
        a = Atom(atoms[rng.integers(len(atoms))])
        return Not(a) if r < 0.5 else a
    kind = rng.integers(4)
    if kind == 0:
        return And(random_safe_formula(rng, depth - 1, atoms), random_safe_formula(rng, depth - 1, atoms))
    if kind == 1:
        return Or(random_safe_formula(rng, depth - 1, atoms), random_safe_formula(rng, depth - 1, atoms))
    if kind == 2:
        return Next(random_safe_formula(rng, depth - 1, atoms))
    return WeakUntil(random_safe_formula(rng, depth - 1, atoms), random_safe_formula(rng, depth - 1, atoms))


def _leaf(names):
    atom = st.sampled_from(names).map(Atom)
    return st.one_of(atom, atom.map(Not), st.sampled_from([ltl.TRUE, ltl.FALSE]))


def safe_formulas(names=("p", "q"), max_leaves=8):
    """Hypothesis strategy for safe formulas in NNF."""
    return st.recursive(
        _leaf(names),
        lambda ch: st.one_of(
            st.tuples(ch, ch).map(lambda t: And(*t)),
            st.tuples(ch, ch).map(lambda t: Or(*t)),
            ch.map(Next),
            st.tuples(ch, ch).map(lambda t: WeakUntil(*t)),
        ),
        max_leaves=max_leaves,
    )


def ltl_formulas(names=("p", "q"), max_leaves=8):
    """Hypothesis strategy for arbitrary LTL formulas (with negations anywhere)."""
    atom = st.sampled_from(names).map(Atom)
    return st.recursive(
        st.one_of(atom, st.sampled_from([ltl.TRUE, ltl.FALSE])),
        lambda ch: st.one_of(
            ch.map(Not),
            ch.map(Next),
            st.tuples(ch, ch).map(lambda t: And(*t)),
            st.tuples(ch, ch).map(lambda t: Or(*t)),
            st.tuples(ch, ch).map(lambda t: Until(*t)),
            st.tuples(ch, ch).map(lambda t: WeakUntil(*t)),
        ),
        max_leaves=max_leaves,
    )


def lasso_words(names=("p", "q"), max_stem=3, max_loop=3):
    letter = st.frozensets(st.sampled_from(names))
    return st.builds(ltl.LassoWord,
                     st.lists(letter, max_size=max_stem).map(tuple),
                     st.lists(letter, min_size=1, max_size=max_loop).map(tuple))


def random_system(rng, n_states=None, n_inputs=None, atoms=ATOMS, max_branch=3, p_label=0.4):
    n = int(rng.integers(1, 51)) if n_states is None else n_states
    m = int(rng.integers(1, 5)) if n_inputs is None else n_inputs
    post = [[set(rng.choice(n, size=int(rng.integers(1, min(max_branch, n) + 1)), replace=False).tolist())
             for _ in range(m)] for _ in range(n)]
    labels = [{a for a in atoms if rng.random() < p_label} for _ in range(n)]
    k = int(rng.integers(1, min(3, n) + 1))
    init = set(rng.choice(n, size=k, replace=False).tolist())
    return TransitionSystem.from_post(list(atoms), [f"u{i}" for i in range(m)], labels, init, post)


# brute-force game oracles, written independently of the numpy solvers

def oracle_safety(s, safe):
    """Iterated removal of states that cannot avoid leaving the safe set."""
    alive = {x for x in range(s.n_states) if safe[x]}
    changed = True
    while changed:
        changed = False
        for x in sorted(alive):
            if not any(s.post(x, u) and s.post(x, u) <= alive for u in range(s.n_inputs)):
                alive.discard(x)
                changed = True
    return alive


def oracle_attractor(s, target):
    """Ranks by breadth-first layering: rank k states force rank < k in one step."""
    rank = {x: 0 for x in range(s.n_states) if target[x]}
    level = 0
    while True:
        level += 1
        layer = [x for x in range(s.n_states) if x not in rank
                 and any(s.post(x, u) and all(y in rank for y in s.post(x, u)) for u in range(s.n_inputs))]
        if not layer:
            return rank
        for x in layer:
            rank[x] = level


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each, printed after the run

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """Record ``criterion(n, ok, detail)`` as one pass/fail line."""
    def record(n, ok, detail):
        _ACCEPTANCE[str(n)] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE, key=int):
            terminalreporter.write_line(_ACCEPTANCE[key])
