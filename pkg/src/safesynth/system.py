"""Finite transition systems, products with DFAs and restriction.

Successor sets are stored in CSR form: the pair ``(x, u)`` has flat index
``x * n_inputs + u`` and its successors are
``indices[indptr[k]:indptr[k + 1]]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .automata import Dfa, letter_index


class InvalidSystemError(ValueError):
    """Malformed or blocking transition system."""


@dataclass
class TransitionSystem:
    """Finite system ``(X, X0, U, ->, 2^P, H)``.

    ``enabled`` marks the (state, input) pairs that may be used; it is all
    true for a plain system and shrinks under `restrict`.
    """

    atoms: tuple[str, ...]
    inputs: tuple[str, ...]
    labels: list[frozenset]
    initial: frozenset[int]
    indptr: np.ndarray
    indices: np.ndarray
    state_names: list[str] | None = None
    enabled: np.ndarray | None = None
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int32)
        n, m = self.n_states, self.n_inputs
        if self.indptr.shape != (n * m + 1,):
            raise InvalidSystemError(f"indptr has shape {self.indptr.shape}, expected {(n * m + 1,)}")
        if self.enabled is None:
            self.enabled = np.ones((n, m), dtype=bool)
        if not self.check:
            return
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise InvalidSystemError("successor id out of range")
        bad = [x for x in self.initial if not 0 <= x < n]
        if bad:
            raise InvalidSystemError(f"initial states out of range: {bad}")
        unknown = set().union(*self.labels) - set(self.atoms) if self.labels else set()
        if unknown:
            raise InvalidSystemError(f"labels use undeclared atoms {sorted(unknown)}")
        empty = np.flatnonzero(np.diff(self.indptr) == 0)
        if empty.size:
            x, u = divmod(int(empty[0]), m)
            raise InvalidSystemError(
                f"system is blocking: state {x} ({self.name(x)}) has no successor "
                f"under input {u} ({self.inputs[u]})")

    # ------------------------------------------------------------------
    @classmethod
    def from_post(cls, atoms: Sequence[str], inputs: Sequence[str], labels: Sequence[Iterable[str]],
                  initial: Iterable[int], post: Sequence[Sequence[Iterable[int]]],
                  state_names: Sequence[str] | None = None) -> TransitionSystem:
        """Build from nested lists: ``post[x][u]`` is the successor set."""
        lengths, flat = [], []
        for x, row in enumerate(post):
            if len(row) != len(inputs):
                raise InvalidSystemError(f"state {x} lists {len(row)} successor sets for {len(inputs)} inputs")
            for succ in row:
                s = sorted(set(succ))
                lengths.append(len(s))
                flat.extend(s)
        indptr = np.concatenate([[0], np.cumsum(lengths, dtype=np.int64)])
        return cls(atoms=tuple(atoms), inputs=tuple(inputs),
                   labels=[frozenset(h) for h in labels], initial=frozenset(initial),
                   indptr=indptr, indices=np.array(flat, dtype=np.int32),
                   state_names=None if state_names is None else list(state_names))

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_transitions(self) -> int:
        return int(self.indices.size)

    def name(self, x: int) -> str:
        return self.state_names[x] if self.state_names else str(x)

    def post(self, x: int, u: int) -> frozenset[int]:
        """Successors of ``x`` under input ``u``; empty if ``u`` is disabled at ``x``."""
        if not (0 <= x < self.n_states and 0 <= u < self.n_inputs):
            raise InvalidSystemError(f"unknown state/input pair ({x}, {u})")
        if not self.enabled[x, u]:
            return frozenset()
        k = x * self.n_inputs + u
        return frozenset(int(y) for y in self.indices[self.indptr[k]:self.indptr[k + 1]])

    def successors_array(self, x: int, u: int) -> np.ndarray:
        k = x * self.n_inputs + u
        return self.indices[self.indptr[k]:self.indptr[k + 1]]

    def states_with(self, atom: str) -> np.ndarray:
        return np.array([atom in h for h in self.labels], dtype=bool)

    @property
    def blocking(self) -> frozenset[int]:
        """States with no enabled input (only after `restrict`)."""
        return frozenset(int(x) for x in np.flatnonzero(~self.enabled.any(axis=1)))

    @cached_property
    def entry_pair(self) -> np.ndarray:
        """Flat pair index ``x * n_inputs + u`` of every entry in ``indices``."""
        return np.repeat(np.arange(self.n_states * self.n_inputs), np.diff(self.indptr))

    def pair_sources(self) -> np.ndarray:
        """State id of every successor entry in ``indices``."""
        counts = np.diff(self.indptr)
        pair_state = np.repeat(np.arange(self.n_states), self.n_inputs)
        return np.repeat(pair_state, counts)

    def is_deterministic(self) -> bool:
        return bool(np.all(np.diff(self.indptr) == 1))


@dataclass
class ProductSystem:
    """``S x D``: a transition system over pairs plus provenance maps."""

    system: TransitionSystem
    base_state: np.ndarray  # product state -> factor state
    dfa_state: np.ndarray   # product state -> DFA state
    unsafe: np.ndarray      # bool mask, DFA component final
    dfa: Dfa

    @property
    def safe(self) -> np.ndarray:
        return ~self.unsafe

    def index(self, x: int, q: int) -> int | None:
        hit = np.flatnonzero((self.base_state == x) & (self.dfa_state == q))
        return int(hit[0]) if hit.size else None

    def lookup(self) -> dict[tuple[int, int], int]:
        return {(int(x), int(q)): i for i, (x, q) in enumerate(zip(self.base_state, self.dfa_state))}


def _label_letters(s: TransitionSystem, alphabet: Sequence[str]) -> np.ndarray:
    extra = set(alphabet) - set(s.atoms)
    if extra:
        raise InvalidSystemError(f"automaton atoms {sorted(extra)} are not outputs of the system")
    keep = set(alphabet)
    return np.array([letter_index(alphabet, h & keep) for h in s.labels], dtype=np.int64)


def product(s: TransitionSystem, d: Dfa) -> ProductSystem:
    """Synchronous product restricted to states reachable from the initial ones.

    Initial pairs are ``(x, delta(q0, H(x)))`` and ``(x, q) -u-> (x', q')``
    when ``x -u-> x'`` and ``q' = delta(q, H(x'))``.  The DFA alphabet may be
    a subset of the system atoms; labels are projected onto it.
    """
    n, m, nq = s.n_states, s.n_inputs, len(d)
    lab = _label_letters(s, d.alphabet)
    delta = d.delta
    # full product over X x Q, state id x * nq + q
    counts = np.diff(s.indptr).reshape(n, m)
    p_counts = np.repeat(counts[:, None, :], nq, axis=1).reshape(-1)
    p_indptr = np.concatenate([[0], np.cumsum(p_counts)])
    # successors of pair (x, q, u) are (x', delta[q, lab[x']]) for x' in post(x, u)
    succ_x = s.indices.astype(np.int64)
    pair_starts = s.indptr[:-1].reshape(n, m)
    order = (pair_starts[:, None, :] + np.zeros((1, nq, 1), dtype=np.int64)).reshape(-1)
    seg = np.repeat(order - p_indptr[:-1], p_counts) + np.arange(p_indptr[-1])
    src_q = np.repeat(np.tile(np.repeat(np.arange(nq), m), n), p_counts)
    xs = succ_x[seg]
    p_indices = xs * nq + delta[src_q, lab[xs]]

    init = sorted({int(x) * nq + int(delta[d.initial, lab[x]]) for x in s.initial})
    # reachable part
    n_full = n * nq
    p_enabled_full = np.repeat(s.enabled[:, None, :], nq, axis=1).reshape(n_full, m)
    edge_src = np.repeat(np.arange(n_full * m) // m, p_counts)
    live = np.repeat(p_enabled_full.reshape(-1), p_counts)
    graph = csr_matrix((np.ones(int(live.sum()), dtype=np.int8),
                        (edge_src[live], p_indices[live])), shape=(n_full + 1, n_full + 1))
    # virtual root n_full links to all initial states
    root_edges = csr_matrix((np.ones(len(init), dtype=np.int8),
                             (np.full(len(init), n_full), np.array(init, dtype=np.int64))),
                            shape=(n_full + 1, n_full + 1))
    order_bfs = breadth_first_order(graph + root_edges, n_full, directed=True,
                                    return_predecessors=False)
    reach = np.sort(order_bfs[order_bfs != n_full])
    new_id = np.full(n_full, -1, dtype=np.int64)
    new_id[reach] = np.arange(reach.size)

    # compact CSR
    pairs = (reach[:, None] * m + np.arange(m)[None, :]).reshape(-1)
    lens = p_counts[pairs]
    starts = p_indptr[:-1][pairs]
    c_indptr = np.concatenate([[0], np.cumsum(lens)])
    gather = np.repeat(starts - c_indptr[:-1], lens) + np.arange(c_indptr[-1])
    c_indices = new_id[p_indices[gather]]
    base = reach // nq
    qs = reach % nq
    labels = [s.labels[int(x)] for x in base]
    names = None
    if s.state_names:
        names = [f"{s.state_names[int(x)]}|q{int(q)}" for x, q in zip(base, qs)]
    sys = TransitionSystem(atoms=s.atoms, inputs=s.inputs, labels=labels,
                           initial=frozenset(int(new_id[i]) for i in init),
                           indptr=c_indptr, indices=c_indices, state_names=names,
                           enabled=s.enabled[base].copy(), check=False)
    final = np.zeros(nq, dtype=bool)
    final[list(d.final)] = True
    return ProductSystem(system=sys, base_state=base, dfa_state=qs, unsafe=final[qs], dfa=d)


def restrict(s: TransitionSystem, allowed: np.ndarray) -> TransitionSystem:
    """Keep only the inputs allowed by a strategy set (``allowed[x, u]``).

    States left without inputs become blocking; see `TransitionSystem.blocking`.
    """
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != (s.n_states, s.n_inputs):
        raise InvalidSystemError(f"strategy-set mask has shape {allowed.shape}, expected {(s.n_states, s.n_inputs)}")
    return TransitionSystem(atoms=s.atoms, inputs=s.inputs, labels=s.labels, initial=s.initial,
                            indptr=s.indptr, indices=s.indices, state_names=s.state_names,
                            enabled=s.enabled & allowed, check=False)


# --------------------------------------------------------------------------
# text format

def _fmt_labels(h: Iterable[str]) -> str:
    return "{" + ",".join(sorted(h)) + "}"


def save_system(s: TransitionSystem, comments: Sequence[str] = ()) -> str:
    """Serialize to the line-oriented system format.

    Disabled (restricted-away) pairs are written as ``trans`` lines with the
    ``disabled`` flag so that the enabled mask round-trips as well.
    """
    lines = [f"# {c}" for c in comments]
    lines.append("atoms: " + " ".join(s.atoms))
    lines.append("inputs: " + " ".join(s.inputs))
    for x in range(s.n_states):
        init = " init" if x in s.initial else ""
        name = s.name(x) if s.state_names else f"s{x}"
        lines.append(f"state {x} {name} labels={_fmt_labels(s.labels[x])}{init}")
    m = s.n_inputs
    for x in range(s.n_states):
        for u in range(m):
            flag = "" if s.enabled[x, u] else " disabled"
            for y in s.successors_array(x, u):
                lines.append(f"trans {x} {s.inputs[u]} {int(y)}{flag}")
    return "\n".join(lines) + "\n"


_STATE = re.compile(r"state\s+(\d+)\s+(\S+)\s+labels=\{([^}]*)\}(\s+init)?\s*$")
_TRANS = re.compile(r"trans\s+(\d+)\s+(\S+)\s+(\d+)(\s+disabled)?\s*$")


def load_system(text: str) -> TransitionSystem:
    """Parse the system format; rejects blocking (state, input) pairs."""
    atoms: list[str] | None = None
    inputs: list[str] | None = None
    states: dict[int, tuple[str, frozenset, bool]] = {}
    trans: list[tuple[int, str, int, bool]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("atoms:"):
            atoms = line[len("atoms:"):].split()
        elif line.startswith("inputs:"):
            inputs = line[len("inputs:"):].split()
        elif (m := _STATE.match(line)):
            labs = frozenset(a.strip() for a in m.group(3).split(",") if a.strip())
            states[int(m.group(1))] = (m.group(2), labs, bool(m.group(4)))
        elif (m := _TRANS.match(line)):
            trans.append((int(m.group(1)), m.group(2), int(m.group(3)), bool(m.group(4))))
        else:
            raise InvalidSystemError(f"line {lineno}: cannot parse {raw!r}")
    if atoms is None or inputs is None:
        raise InvalidSystemError("missing 'atoms:' or 'inputs:' header")
    n = len(states)
    if sorted(states) != list(range(n)):
        raise InvalidSystemError("state ids must be 0..n-1")
    uid = {u: i for i, u in enumerate(inputs)}
    post = [[set() for _ in inputs] for _ in range(n)]
    disabled = np.zeros((n, len(inputs)), dtype=bool)
    for src, u, dst, off in trans:
        if u not in uid:
            if u.isdigit() and int(u) < len(inputs):
                u = inputs[int(u)]
            else:
                raise InvalidSystemError(f"transition from {src} uses unknown input {u!r}")
        if src not in states or dst not in states:
            raise InvalidSystemError(f"transition {src} -{u}-> {dst} names an unknown state")
        post[src][uid[u]].add(dst)
        if off:
            disabled[src, uid[u]] = True
    for x in range(n):
        for u, succ in enumerate(post[x]):
            if not succ:
                raise InvalidSystemError(f"system is blocking: state {x} has no successor under input {inputs[u]}")
    s = TransitionSystem.from_post(atoms, inputs, [states[x][1] for x in range(n)],
                                   [x for x in range(n) if states[x][2]], post,
                                   state_names=[states[x][0] for x in range(n)])
    s.enabled = ~disabled
    return s
