"""End-to-end synthesis for ``phi_safe & <>gamma`` on a finite transition system."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import ltl
from .automata import Dfa, Nfa, construct_fine_nfa, subset_construction
from .games import Controller, StrategySet, solve_reachability, solve_safety
from .ltl import And, Atom, Const, Formula, Next, Not, Or, Until, WeakUntil
from .system import ProductSystem, TransitionSystem, product, restrict

logger = logging.getLogger(__name__)


class UnsupportedFragmentError(ValueError):
    pass


def _propositional(f: Formula) -> bool:
    if isinstance(f, (Const, Atom)):
        return True
    if isinstance(f, (Next, Until, WeakUntil)):
        return False
    return all(_propositional(c) for c in ltl.children(f))


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return _conjuncts(f.left) + _conjuncts(f.right)
    return [f]


def _is_eventually(f: Formula) -> bool:
    return isinstance(f, Until) and f.left == ltl.TRUE


def decompose_until(phi: Formula) -> tuple[Formula, Formula | None]:
    """Split ``phi`` into a safe part and an optional propositional goal.

    Accepted shapes: a safe formula; ``psi & <>g``; ``<>g``; and a top-level
    ``p U q``, which is rewritten to ``(p W q, q)``.  The goal must be
    propositional (the game targets states, not runs).
    """
    if ltl.is_safe(ltl.to_nnf(phi)):
        return phi, None
    if isinstance(phi, Until) and not _is_eventually(phi):
        p, q = phi.left, phi.right
        if not (ltl.is_safe(ltl.to_nnf(p)) and _propositional(q)):
            raise UnsupportedFragmentError(
                f"unsupported fragment: in p U q, p must be safe and q propositional: {ltl.to_infix(phi)}")
        return WeakUntil(p, q), q
    goals = [c for c in _conjuncts(phi) if _is_eventually(c)]
    rest = [c for c in _conjuncts(phi) if not _is_eventually(c)]
    if len(goals) != 1:
        raise UnsupportedFragmentError(
            f"unsupported fragment: expected a safe formula with at most one <>goal: {ltl.to_infix(phi)}")
    gamma = goals[0].right
    if not _propositional(gamma):
        raise UnsupportedFragmentError(f"unsupported fragment: goal {ltl.to_infix(gamma)} is not propositional")
    bad = [c for c in rest if not ltl.is_safe(ltl.to_nnf(c))]
    if bad:
        raise UnsupportedFragmentError(f"unsupported fragment: {ltl.to_infix(bad[0])} is not safe")
    return ltl.conj(rest), gamma


def holds_on_label(f: Formula, label: frozenset) -> bool:
    """Truth of a propositional formula on one letter."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        return f.name in label
    if isinstance(f, Not):
        return not holds_on_label(f.child, label)
    if isinstance(f, And):
        return holds_on_label(f.left, label) and holds_on_label(f.right, label)
    if isinstance(f, Or):
        return holds_on_label(f.left, label) or holds_on_label(f.right, label)
    raise UnsupportedFragmentError(f"{ltl.to_infix(f)} is not propositional")


@dataclass
class SynthesisResult:
    phi_safe: Formula
    gamma: Formula | None
    nfa: Nfa
    dfa: Dfa
    product: ProductSystem
    strategy: StrategySet
    controller: Controller
    realizable: bool
    report: dict = field(default_factory=dict)

    @property
    def system(self) -> TransitionSystem:
        """The safety-restricted product the controller runs on."""
        return restrict(self.product.system, self.strategy.allowed)

    @property
    def winning(self) -> np.ndarray:
        return self.controller.winning if self.gamma is not None else self.strategy.winning

    def report_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.report.items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def synthesize(s: TransitionSystem, phi_safe: Formula, gamma: Formula | str | None = None,
               preference=None) -> SynthesisResult:
    """Safety game on ``S x D`` followed by an optional reachability game.

    The reachability game is solved on the product restricted to the maximal
    safety strategy set, with target = winning states whose label satisfies
    ``gamma``.  Outside the attractor the returned controller follows the
    safety strategy set (first allowed input in ``preference`` order), so it
    is defined on the whole safety winning region.  Unrealizability is
    reported, not raised.
    """
    if isinstance(gamma, str):
        gamma = Atom(gamma)
    used = ltl.atoms(phi_safe) | (ltl.atoms(gamma) if gamma is not None else frozenset())
    missing = used - set(s.atoms)
    if missing:
        raise ValueError(f"atoms {sorted(missing)} are not outputs of the system")
    alphabet = sorted(ltl.atoms(phi_safe))
    t0 = time.perf_counter()
    nfa = construct_fine_nfa(phi_safe, alphabet)
    t1 = time.perf_counter()
    dfa = subset_construction(nfa)
    t2 = time.perf_counter()
    prod = product(s, dfa)
    t3 = time.perf_counter()
    strategy = solve_safety(prod.system, prod.safe)
    t4 = time.perf_counter()
    safe_ctrl = Controller.from_strategy_set(strategy, preference)
    init = sorted(prod.system.initial)
    reach_winning = None
    if gamma is None:
        controller = safe_ctrl
        realizable = bool(strategy.winning[init].all())
    else:
        labelled = np.array([holds_on_label(gamma, h) for h in prod.system.labels], dtype=bool)
        target = labelled & strategy.winning
        restricted = restrict(prod.system, strategy.allowed)
        reach = solve_reachability(restricted, target)
        choice = np.where(reach.winning, reach.choice, safe_ctrl.choice)
        controller = Controller(choice=choice, rank=reach.rank, target=target, winning=reach.winning)
        reach_winning = int(reach.winning.sum())
        realizable = bool(reach.winning[init].all())
    t5 = time.perf_counter()

    report = {
        "nfa_states": len(nfa),
        "dfa_states": len(dfa),
        "build_ms": (t2 - t0) * 1e3,
        "product_states": prod.system.n_states,
        "safety_winning": int(strategy.winning.sum()),
        "reach_winning": reach_winning if reach_winning is not None else "none",
        "realizable": realizable,
        "nfa_ms": (t1 - t0) * 1e3,
        "dfa_ms": (t2 - t1) * 1e3,
        "product_ms": (t3 - t2) * 1e3,
        "safety_ms": (t4 - t3) * 1e3,
        "reach_ms": (t5 - t4) * 1e3,
    }
    logger.info("synthesis: %s", report)
    return SynthesisResult(phi_safe=phi_safe, gamma=gamma, nfa=nfa, dfa=dfa, product=prod,
                           strategy=strategy, controller=controller, realizable=realizable, report=report)


def synthesize_formula(s: TransitionSystem, phi: Formula, preference=None) -> SynthesisResult:
    phi_safe, gamma = decompose_until(phi)
    return synthesize(s, phi_safe, gamma, preference)
