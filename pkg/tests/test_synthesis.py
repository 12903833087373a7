from pathlib import Path

import numpy as np
import pytest

from safesynth import ltl
from safesynth.abstraction import load_config
from safesynth.games import check_enforces, sample_run, solve_reachability
from safesynth.ltl import Atom, WeakUntil, parse_formula
from safesynth.synthesis import (UnsupportedFragmentError, decompose_until, holds_on_label, synthesize,
                                 synthesize_formula)
from safesynth.system import TransitionSystem

from conftest import random_system

CONFIGS = Path(__file__).parent.parent / "configs"


# --- decomposition ----------------------------------------------------------------

def test_decompose_safe_formula_has_no_goal():
    f = parse_formula("[](a -> X b)")
    assert decompose_until(f) == (f, None)


def test_decompose_reach_avoid():
    safe, goal = decompose_until(parse_formula("(!o W t) & <>t"))
    assert safe == parse_formula("!o W t")
    assert goal == Atom("t")


def test_decompose_plain_eventually():
    safe, goal = decompose_until(parse_formula("<>(a & b)"))
    assert safe == ltl.TRUE and goal == parse_formula("a & b")


def test_decompose_strong_until():
    safe, goal = decompose_until(parse_formula("!o U t"))
    assert safe == WeakUntil(parse_formula("!o"), Atom("t"))
    assert goal == Atom("t")


@pytest.mark.parametrize("text", ["<>X t", "<>a & <>b", "[]<>a", "(a U b) U c", "a U X b", "<>a & (a U b)"])
def test_decompose_unsupported(text):
    with pytest.raises(UnsupportedFragmentError):
        decompose_until(parse_formula(text))


def test_holds_on_label():
    f = parse_formula("a & !(b | c)")
    assert holds_on_label(f, frozenset({"a"}))
    assert not holds_on_label(f, frozenset({"a", "c"}))
    with pytest.raises(UnsupportedFragmentError):
        holds_on_label(parse_formula("X a"), frozenset())


# --- small systems ------------------------------------------------------------------

def test_true_safety_part_gives_plain_attractor(rng):
    for _ in range(30):
        s = random_system(rng, n_states=20, n_inputs=3)
        res = synthesize(s, ltl.TRUE, Atom("a"))
        assert len(res.dfa) == 1
        target = np.array(["a" in h for h in s.labels])
        plain = solve_reachability(s, target)
        # the product with a one-state automaton is S itself (up to renumbering)
        got = {int(res.product.base_state[i]): int(res.controller.rank[i]) for i in range(res.product.system.n_states)}
        reach = {x: got[x] for x in got if got[x] >= 0}
        want = {x: int(plain.rank[x]) for x in got if plain.rank[x] >= 0}
        assert reach == want


def test_unknown_atom_rejected():
    s = TransitionSystem.from_post(["p"], ["u"], [set()], {0}, [[{0}]])
    with pytest.raises(ValueError, match="not outputs"):
        synthesize(s, parse_formula("[]q"))


def test_unrealizable_is_reported_not_raised():
    s = TransitionSystem.from_post(["p"], ["u"], [set(), {"p"}], {0}, [[{1}], [{1}]])
    res = synthesize(s, parse_formula("[]!p"))
    assert not res.realizable
    assert res.report["realizable"] is False
    assert res.report["reach_winning"] == "none"


def test_random_synthesis_is_sound(rng):
    phi = parse_formula("(!b W c) & <>c")
    safe_part = parse_formula("!b W c")
    checked = 0
    for _ in range(40):
        s = random_system(rng, n_states=15, n_inputs=3)
        res = synthesize_formula(s, phi)
        starts = [i for i in res.product.system.initial if res.winning[i]]
        if not starts:
            continue
        checked += 1
        v = check_enforces(res.system, res.controller, safe_part, target=res.controller.target, initial=starts)
        assert v, v.reason
    assert checked > 5


def test_report_keys_and_determinism(rng):
    s = random_system(rng, n_states=12, n_inputs=2)
    a = synthesize_formula(s, parse_formula("[](a -> X !b) & <>c"))
    b = synthesize_formula(s, parse_formula("[](a -> X !b) & <>c"))
    assert list(a.report)[:7] == ["nfa_states", "dfa_states", "build_ms", "product_states", "safety_winning",
                                  "reach_winning", "realizable"]
    strip = lambda r: {k: v for k, v in r.items() if not k.endswith("_ms")}
    assert strip(a.report) == strip(b.report)
    assert np.array_equal(a.controller.choice, b.controller.choice)
    assert a.report_text().splitlines()[6] in ("realizable=true", "realizable=false")


def test_preference_only_reorders_among_safe_inputs(rng):
    s = random_system(rng, n_states=20, n_inputs=3)
    phi = parse_formula("[](a -> X !b)")
    a = synthesize(s, phi)
    b = synthesize(s, phi, preference=[2, 1, 0])
    assert np.array_equal(a.strategy.winning, b.strategy.winning)
    for i in np.flatnonzero(b.strategy.winning):
        assert b.strategy.allowed[i, b.controller.choice[i]]
        assert b.controller.choice[i] == max(b.strategy.inputs(int(i)))


# --- robot workspace ---------------------------------------------------------------

@pytest.fixture(scope="module")
def robot():
    cfg = load_config((CONFIGS / "reach_avoid.yaml").read_text())
    phi = parse_formula((CONFIGS / "reach_avoid.ltl").read_text().split("\n", 1)[1])
    return cfg, synthesize_formula(cfg.system, phi)


def test_robot_reach_avoid_is_realizable(robot):
    _, res = robot
    assert res.realizable
    assert res.report["dfa_states"] == 3


def test_robot_controller_verified(robot):
    cfg, res = robot
    starts = sorted(res.product.system.initial)
    v = check_enforces(res.system, res.controller, res.phi_safe, target=res.controller.target, initial=starts)
    assert v, v.reason


def test_robot_runs_avoid_obstacles(robot):
    cfg, res = robot
    rng = np.random.default_rng(3)
    sysr = res.system
    for _ in range(20):
        x0 = int(rng.choice(sorted(sysr.initial)))
        run = sample_run(sysr, res.controller, x0, sysr.n_states, rng, target=res.controller.target)
        labels = [sysr.labels[i] for i, _ in run]
        assert not any(h & {"obstacle1", "obstacle2", "obstacle3", "out"} for h in labels)
        assert "target" in labels[-1]


def test_walled_off_target_is_unrealizable():
    cfg = load_config((CONFIGS / "unreachable.yaml").read_text())
    res = synthesize_formula(cfg.system, parse_formula("(!(obstacle1 | obstacle2 | obstacle3) W target) & <>target"))
    assert not res.realizable
    assert res.report["reach_winning"] == 0 or not res.controller.winning[sorted(res.product.system.initial)].any()
