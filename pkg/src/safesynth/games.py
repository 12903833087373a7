"""Safety and reachability games on finite transition systems.

Player 0 picks an input, player 1 (the environment) picks the successor.
State sets are boolean masks over the states of the system.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import ltl
from .system import TransitionSystem

logger = logging.getLogger(__name__)


def as_mask(s: TransitionSystem, states) -> np.ndarray:
    """Bool mask over the states of ``s`` from a mask or an iterable of ids."""
    if isinstance(states, np.ndarray) and states.dtype == bool:
        if states.shape != (s.n_states,):
            raise ValueError(f"mask has shape {states.shape}, expected {(s.n_states,)}")
        return states
    mask = np.zeros(s.n_states, dtype=bool)
    mask[list(states)] = True
    return mask


def forcing_inputs(s: TransitionSystem, target: np.ndarray) -> np.ndarray:
    """``ok[x, u]``: ``u`` is enabled at ``x`` and ``Post_u(x)`` is inside ``target``."""
    escapes = np.bincount(s.entry_pair, weights=~target[s.indices],
                          minlength=s.n_states * s.n_inputs)
    return (escapes == 0).reshape(s.n_states, s.n_inputs) & s.enabled


def cpre(s: TransitionSystem, target) -> np.ndarray:
    """Controllable predecessors: states with an input forcing a visit to ``target``."""
    return forcing_inputs(s, as_mask(s, target)).any(axis=1)


@dataclass
class StrategySet:
    """Memoryless strategy set: ``allowed[x, u]`` and the winning region."""

    winning: np.ndarray
    allowed: np.ndarray
    iterations: int = 0

    def inputs(self, x: int) -> frozenset[int]:
        return frozenset(int(u) for u in np.flatnonzero(self.allowed[x]))


@dataclass
class Controller:
    """Memoryless controller: one input per state (``-1`` where none)."""

    choice: np.ndarray
    rank: np.ndarray
    target: np.ndarray
    winning: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.winning is None:
            self.winning = self.choice >= 0

    def input(self, x: int) -> int:
        return int(self.choice[x])

    def inputs(self, x: int) -> frozenset[int]:
        u = int(self.choice[x])
        return frozenset() if u < 0 else frozenset([u])

    @classmethod
    def from_strategy_set(cls, strategy: StrategySet, preference: Iterable[int] | None = None) -> Controller:
        """Pick one allowed input per winning state, first in ``preference`` order."""
        m = strategy.allowed.shape[1]
        order = list(range(m)) if preference is None else list(preference)
        order += [u for u in range(m) if u not in order]
        ranked = strategy.allowed[:, order]
        has = ranked.any(axis=1)
        choice = np.where(has, np.asarray(order)[ranked.argmax(axis=1)], -1)
        n = strategy.winning.size
        return cls(choice=choice, rank=np.where(has, 0, -1), target=np.zeros(n, dtype=bool),
                   winning=strategy.winning.copy())


def solve_safety(s: TransitionSystem, safe) -> StrategySet:
    """Greatest fixpoint ``W = safe & CPre(W)`` and the maximal strategy set.

    ``allowed[x, u]`` holds exactly when ``x`` is in ``W`` and every
    ``u``-successor of ``x`` stays in ``W``.
    """
    safe = as_mask(s, safe)
    win = safe.copy()
    it = 0
    while True:
        it += 1
        ok = forcing_inputs(s, win)
        nxt = safe & ok.any(axis=1)
        if np.array_equal(nxt, win):
            break
        win = nxt
    logger.debug("safety fixpoint after %d iterations, |W| = %d", it, int(win.sum()))
    return StrategySet(winning=win, allowed=ok & win[:, None], iterations=it)


def solve_reachability(s: TransitionSystem, target) -> Controller:
    """Attractor of ``target`` with ranks and a rank-decreasing controller.

    A state first added at level ``k`` gets rank ``k`` and the smallest input
    whose successors all have rank below ``k``.  Target states get their
    smallest enabled input.
    """
    target = as_mask(s, target)
    rank = np.where(target, 0, -1)
    choice = np.full(s.n_states, -1, dtype=np.int64)
    has_input = s.enabled.any(axis=1)
    choice[target & has_input] = s.enabled[target & has_input].argmax(axis=1)
    attr = target.copy()
    k = 0
    while True:
        ok = forcing_inputs(s, attr)
        new = ok.any(axis=1) & ~attr
        if not new.any():
            break
        k += 1
        rank[new] = k
        choice[new] = ok[new].argmax(axis=1)
        attr |= new
    logger.debug("attractor depth %d, |A| = %d", k, int(attr.sum()))
    return Controller(choice=choice, rank=rank, target=target, winning=attr)


# --------------------------------------------------------------------------
# closed-loop checking

@dataclass
class Verdict:
    ok: bool
    reason: str = ""
    run: list[tuple[int, int]] = field(default_factory=list)  # (state, input), input -1 at the end
    explored: int = 0

    def __bool__(self) -> bool:
        return self.ok


def _moves(c):
    return c.inputs


def _path(parent: dict, node) -> list:
    out = []
    while node is not None:
        out.append(node)
        node = parent[node]
    return out[::-1]


def check_enforces(s: TransitionSystem, c: Controller | StrategySet, phi: ltl.Formula | None = None,
                   target=None, budget: int = 200_000, samples: int = 200, horizon: int | None = None,
                   seed: int = 0, initial: Iterable[int] | None = None) -> Verdict:
    """Check a controller or strategy set against every environment.

    Safety of ``phi`` is checked on all closed-loop output prefixes through
    the prefix classifier: the search walks (state, residual) pairs, so it is
    exhaustive as long as at most ``budget`` pairs are reachable.  Past the
    budget it falls back to ``samples`` seeded random runs of length
    ``horizon``.  With a ``target`` every closed-loop run must reach it in at
    most ``n_states`` steps (no cycle and no dead end outside the target).
    """
    moves = _moves(c)
    starts = sorted(s.initial if initial is None else initial)
    for x in starts:
        if not moves(x):
            return Verdict(False, f"initial state {x} has no input", [(x, -1)])
    explored = 0
    reasons = []
    if phi is not None:
        v = _check_safety(s, moves, phi, starts, budget, samples, horizon or 4 * s.n_states, seed)
        if not v:
            return v
        explored, reasons = v.explored, [v.reason]
    if target is not None:
        v = _check_reach(s, moves, as_mask(s, target), starts)
        if not v:
            return v
        reasons.append(v.reason)
    return Verdict(True, "; ".join(reasons) or "ok", explored=explored)


def _check_safety(s, moves, phi, starts, budget, samples, horizon, seed) -> Verdict:
    clf = ltl.PrefixClassifier(phi)
    bad = ltl.Verdict.DEF_FALSE
    parent: dict = {}
    queue: deque = deque()
    for x in starts:
        node = (x, clf.step(clf.initial, s.labels[x]))
        if node not in parent:
            parent[node] = None
            queue.append(node)
    via: dict = {}
    while queue:
        if len(parent) > budget:
            logger.info("safety check exceeded %d pairs, sampling %d runs", budget, samples)
            return _sample_safety(s, moves, clf, starts, samples, horizon, seed)
        x, r = queue.popleft()
        if clf.status(r) is bad:
            nodes = _path(parent, (x, r))
            run = [(n[0], via.get(nodes[i + 1], -1)) for i, n in enumerate(nodes[:-1])]
            return Verdict(False, "bad prefix produced", run + [(x, -1)], len(parent))
        for u in sorted(moves(x)):
            for y in s.post(x, u):
                nxt = (y, clf.step(r, s.labels[y]))
                if nxt not in parent:
                    parent[nxt] = (x, r)
                    via[nxt] = u
                    queue.append(nxt)
    return Verdict(True, "safe", explored=len(parent))


def _sample_safety(s, moves, clf, starts, samples, horizon, seed) -> Verdict:
    rng = np.random.default_rng(seed)
    bad = ltl.Verdict.DEF_FALSE
    for _ in range(samples):
        x = starts[rng.integers(len(starts))]
        r = clf.step(clf.initial, s.labels[x])
        run = []
        for _ in range(horizon):
            if clf.status(r) is bad:
                return Verdict(False, "bad prefix produced (sampled)", run + [(x, -1)])
            us = sorted(moves(x))
            if not us:
                return Verdict(False, "run reached a state without input (sampled)", run + [(x, -1)])
            u = us[rng.integers(len(us))]
            succ = sorted(s.post(x, u))
            run.append((x, u))
            x = succ[rng.integers(len(succ))]
            r = clf.step(r, s.labels[x])
    return Verdict(True, "no bad prefix in sampled runs")


def _check_reach(s, moves, target, starts) -> Verdict:
    # iterative DFS over non-target states; a grey successor closes a cycle avoiding the target
    color: dict[int, int] = {}

    def edges(x):
        return iter([(u, y) for u in sorted(moves(x)) for y in sorted(s.post(x, u))])

    for x0 in starts:
        if target[x0] or x0 in color:
            continue
        if not moves(x0):
            return Verdict(False, "state outside target without input", [(x0, -1)])
        color[x0] = 1
        stack = [[x0, edges(x0), -1]]
        while stack:
            top = stack[-1]
            step = next(top[1], None)
            if step is None:
                color[top[0]] = 2
                stack.pop()
                continue
            u, y = step
            top[2] = u
            if target[y] or color.get(y) == 2:
                continue
            run = [(z, v) for z, _, v in stack]
            if color.get(y) == 1:
                return Verdict(False, "cycle avoiding the target", run + [(y, -1)])
            if not moves(y):
                return Verdict(False, "state outside target without input", run + [(y, -1)])
            color[y] = 1
            stack.append([y, edges(y), -1])
    return Verdict(True, "target reached from every start")


def sample_run(s: TransitionSystem, c: Controller | StrategySet, x0: int, steps: int,
               rng: np.random.Generator, target=None) -> list[tuple[int, int]]:
    """One closed-loop run with a uniformly random environment.

    Stops early on reaching ``target`` or a state without input.
    """
    moves = _moves(c)
    tgt = None if target is None else as_mask(s, target)
    run = []
    x = x0
    for _ in range(steps):
        if tgt is not None and tgt[x]:
            break
        us = sorted(moves(x))
        if not us:
            break
        u = us[rng.integers(len(us))]
        succ = sorted(s.post(x, u))
        run.append((x, u))
        x = succ[rng.integers(len(succ))]
    run.append((x, -1))
    return run


def export_controller(c: Controller, strategy: StrategySet | None = None) -> str:
    """Text table ``state_id input_id rank`` then ``state_id {inputs}`` rows."""
    lines = ["# controller: state input rank"]
    for x in np.flatnonzero(c.choice >= 0):
        lines.append(f"{int(x)} {int(c.choice[x])} {int(c.rank[x])}")
    if strategy is not None:
        lines.append("# strategy-set: state {inputs}")
        for x in np.flatnonzero(strategy.winning):
            us = ",".join(str(int(u)) for u in np.flatnonzero(strategy.allowed[x]))
            lines.append(f"{int(x)} {{{us}}}")
    return "\n".join(lines) + "\n"


def load_controller(text: str, n_states: int) -> Controller:
    choice = np.full(n_states, -1, dtype=np.int64)
    rank = np.full(n_states, -1, dtype=np.int64)
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#"):
            section = "strategy" if "strategy" in line else "controller"
            continue
        if not line or section != "controller":
            continue
        x, u, r = (int(t) for t in line.split())
        if not 0 <= x < n_states:
            raise ValueError(f"controller row names state {x}, system has {n_states}")
        choice[x], rank[x] = u, r
    return Controller(choice=choice, rank=rank, target=rank == 0)
