import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safesynth import ltl
from safesynth.ltl import (FALSE, TRUE, And, Atom, LassoWord, Next, Not, Or, Until, Verdict, WeakUntil,
                           classify_prefix, eval_lasso, parse_formula, to_nnf)

from conftest import all_letters, lasso_words, ltl_formulas, safe_formulas

p, q, r = Atom("p"), Atom("q"), Atom("r")


def lassos(names, max_stem, max_loop):
    letters = all_letters(names)
    for ns in range(max_stem + 1):
        for nl in range(1, max_loop + 1):
            for stem in itertools.product(letters, repeat=ns):
                for loop in itertools.product(letters, repeat=nl):
                    yield LassoWord(stem, loop)


# --- parsing ----------------------------------------------------------------

def test_parse_weak_until():
    assert parse_formula("p W q", {"p", "q"}) == WeakUntil(p, q)


def test_parse_eventually_desugars():
    assert parse_formula("<> target") == Until(TRUE, Atom("target"))


def test_parse_always_desugars():
    assert parse_formula("[]p") == WeakUntil(p, FALSE)


def test_parse_incomplete_binary_is_syntax_error():
    with pytest.raises(ltl.LtlSyntaxError) as e:
        parse_formula("p W")
    assert e.value.position == 3


def test_parse_undeclared_atom():
    with pytest.raises(ltl.LtlSyntaxError, match="undeclared atom 'r'"):
        parse_formula("p & r", {"p", "q"})


@pytest.mark.parametrize("text", ["", "p &", "(p | q", "p q", "X", "p -> ", "&p", "p $ q"])
def test_parse_malformed(text):
    with pytest.raises(ltl.LtlSyntaxError):
        parse_formula(text)


def test_precedence_and_associativity():
    assert parse_formula("p | q & r") == Or(p, And(q, r))
    assert parse_formula("p U q W r") == Until(p, WeakUntil(q, r))
    assert parse_formula("p -> q -> r") == Or(Not(p), Or(Not(q), r))
    assert parse_formula("!X p") == Not(Next(p))
    assert parse_formula("X X p") == Next(Next(p))


@given(ltl_formulas(("p", "q", "r")))
def test_infix_round_trip(f):
    assert parse_formula(ltl.to_infix(f)) == f


def test_prefix_serialization():
    assert ltl.to_prefix(parse_formula("p W (q & X !r)")) == "(W p (& q (X (! r))))"


# --- NNF ----------------------------------------------------------------------

def test_nnf_negated_weak_until():
    nq, np_ = Not(q), Not(p)
    assert to_nnf(Not(WeakUntil(p, q))) == Until(nq, And(nq, np_))


def test_nnf_double_negation():
    assert to_nnf(Not(Not(p))) == p


def test_nnf_negated_next_and_lasso_equivalent():
    f = Not(Next(And(p, q)))
    g = to_nnf(f)
    assert g == Next(Or(Not(p), Not(q)))
    for w in lassos(("p", "q"), 3, 3):
        assert eval_lasso(f, w) == eval_lasso(g, w)


@settings(max_examples=300)
@given(ltl_formulas(("p", "q", "r")), lasso_words(("p", "q", "r"), 4, 4))
def test_nnf_preserves_semantics(f, w):
    g = to_nnf(f)
    assert ltl.is_nnf(g)
    assert eval_lasso(f, w) == eval_lasso(g, w)


@given(safe_formulas())
def test_negated_safe_formula_has_no_weak_until(f):
    g = to_nnf(Not(f))
    assert ltl.is_nnf(g)
    assert not any(isinstance(h, WeakUntil) for h in ltl.closure(g))


# --- closure ------------------------------------------------------------------

def test_closure_atom():
    assert ltl.closure(p) == [p]


def test_closure_negated_weak_until():
    f = to_nnf(Not(WeakUntil(p, q)))
    assert set(ltl.closure(f)) == {Not(q), Not(p), And(Not(q), Not(p)), f}
    assert ltl.closure(f)[-1] == f


def test_closure_next_chain():
    assert ltl.closure(Next(Next(p))) == [p, Next(p), Next(Next(p))]


@given(ltl_formulas().map(to_nnf))
def test_closure_is_postorder_and_deduplicated(f):
    cl = ltl.closure(f)
    assert len(cl) == len(set(cl))
    pos = {g: i for i, g in enumerate(cl)}
    for g in cl:
        if not ltl.is_literal(g):
            assert all(pos[c] < pos[g] for c in ltl.children(g))


# --- lasso semantics ----------------------------------------------------------

def test_always_on_constant_trace():
    assert eval_lasso(parse_formula("[]p"), LassoWord((), ({"p"},)))


def test_until_satisfied_at_position_two():
    assert eval_lasso(Until(p, q), LassoWord(({"p"}, {"p"}), ({"q"},)))


def test_weak_until_never_released():
    assert eval_lasso(WeakUntil(p, q), LassoWord((), ({"p"},)))
    assert not eval_lasso(Until(p, q), LassoWord((), ({"p"},)))


def test_lasso_rejects_empty_loop():
    with pytest.raises(ValueError):
        LassoWord(({"p"},), ())


@given(lasso_words(("p",)))
def test_eventually_is_true_until(w):
    assert eval_lasso(parse_formula("<>p"), w) == eval_lasso(Until(TRUE, p), w)
    assert eval_lasso(parse_formula("<>p"), w) == any(w.letter(i) for i in range(len(w)))


@given(ltl_formulas(), lasso_words())
def test_lasso_unrolling_invariant(f, w):
    # rotating the loop into the stem denotes the same infinite word
    w2 = LassoWord(w.stem + w.loop[:1], w.loop[1:] + w.loop[:1])
    assert eval_lasso(f, w) == eval_lasso(f, w2)


# --- prefix classification ----------------------------------------------------

def test_classify_always_violated():
    assert classify_prefix(parse_formula("[]p"), [{"p"}, set()]) is Verdict.DEF_FALSE


def test_classify_always_open():
    assert classify_prefix(parse_formula("[]p"), [{"p"}, {"p"}]) is Verdict.OPEN


def test_classify_avoid_until_target():
    f = parse_formula("!o W t")
    assert classify_prefix(f, [{"o"}]) is Verdict.DEF_FALSE
    # cross-check: every loop extension of length <= 3 violates
    for n in range(1, 4):
        for loop in itertools.product(all_letters(("o", "t")), repeat=n):
            assert not eval_lasso(f, LassoWord(({"o"},), loop))


def test_classify_def_true():
    f = parse_formula("!o W t")
    assert classify_prefix(f, [set(), {"t"}]) is Verdict.DEF_TRUE
    assert classify_prefix(TRUE, []) is Verdict.DEF_TRUE
    assert classify_prefix(FALSE, []) is Verdict.DEF_FALSE


def test_classify_unsatisfiable_next():
    # no letter satisfies p & !p, so the empty word is already bad
    assert classify_prefix(Next(And(p, Not(p))), []) is Verdict.DEF_FALSE


def test_classify_rejects_non_safe():
    with pytest.raises(ValueError):
        classify_prefix(parse_formula("<>p"), [])


def _extensions_oracle(f, word, names):
    """Verdict by brute force over lasso continuations of the word."""
    vals = {eval_lasso(f, LassoWord(tuple(word) + stem, loop))
            for stem in itertools.chain.from_iterable(
                itertools.product(all_letters(names), repeat=k) for k in range(3))
            for n in range(1, 3) for loop in itertools.product(all_letters(names), repeat=n)}
    if vals == {False}:
        return Verdict.DEF_FALSE
    if vals == {True}:
        return Verdict.DEF_TRUE
    return Verdict.OPEN


@settings(max_examples=60, deadline=None)
@given(safe_formulas(max_leaves=5), st.lists(st.frozensets(st.sampled_from(["p", "q"])), max_size=3))
def test_classify_agrees_with_lasso_oracle(f, word):
    got = classify_prefix(f, word)
    oracle = _extensions_oracle(f, word, ("p", "q"))
    if got is not Verdict.OPEN:
        # definite verdicts are exact, so the sampled continuations agree
        assert oracle is got
    else:
        # short formulas are decided by short lassos
        assert oracle is Verdict.OPEN


@given(safe_formulas(), st.lists(st.frozensets(st.sampled_from(["p", "q"])), max_size=4),
       st.frozensets(st.sampled_from(["p", "q"])))
def test_classify_def_false_is_monotone(f, word, a):
    if classify_prefix(f, word) is Verdict.DEF_FALSE:
        assert classify_prefix(f, word + [a]) is Verdict.DEF_FALSE


# --- case-study generators ----------------------------------------------------

def test_fail_3_2_formula():
    f = Atom("f")
    x = Next
    expected = WeakUntil(Or(Not(Or(Or(And(f, x(f)), And(x(f), x(x(f)))), And(f, x(x(f))))),
                            x(x(x(Atom("stop"))))), FALSE)
    assert ltl.gen_fail_formula(3, 2, Atom("stop")) == expected


def test_fail_3_1_literal_pattern():
    g = ltl.gen_fail_formula(3, 1, Atom("slow"))
    s = ltl.to_infix(g)
    for disjunct in ["(f & X f) & X X !f", "(!f & X f) & X X f", "(f & X !f) & X X f"]:
        assert disjunct in s


def test_fail_1_1_formula():
    assert ltl.gen_fail_formula(1, 1, Atom("stop")) == parse_formula("[](f -> X stop)")


@pytest.mark.parametrize("n,k", [(0, 1), (3, 0), (3, 4)])
def test_fail_out_of_range(n, k):
    with pytest.raises(ValueError):
        ltl.gen_fail_formula(n, k, Atom("stop"))


@pytest.mark.parametrize("n,k", [(3, 2), (3, 1), (4, 1), (2, 1)])
def test_fail_minterm_encoding_is_equivalent(n, k):
    a = ltl.gen_fail_formula(n, k, Atom("stop"))
    b = ltl.gen_fail_formula(n, k, Atom("stop"), minterms=True)
    for w in lassos(("f", "stop"), 2, 2):
        assert eval_lasso(a, w) == eval_lasso(b, w)


def test_fail_window_counts():
    assert set(ltl.fail_window(4, 1)) == {w for w in itertools.product((0, 1), repeat=4) if sum(w) == 1}
    assert set(ltl.fail_window(3, 2)) == {w for w in itertools.product((0, 1), repeat=3) if sum(w) >= 2}


def test_modeswitch_single_pair():
    s, g = Atom("s"), Atom("g")
    expected = WeakUntil(Or(Not(s), WeakUntil(And(s, Not(g)), WeakUntil(And(s, g), Not(s)))), FALSE)
    assert ltl.gen_modeswitch_formula([(s, g)]) == expected


def test_modeswitch_two_complementary_scenarios():
    s = Atom("scen1")
    f = ltl.gen_modeswitch_formula([(s, Atom("goal1")), (Not(s), Atom("goal2"))])
    assert isinstance(f, WeakUntil) and f.right == FALSE
    assert isinstance(f.left, And)
    assert ltl.atoms(f) == {"scen1", "goal1", "goal2"}


def test_modeswitch_empty():
    with pytest.raises(ValueError):
        ltl.gen_modeswitch_formula([])
