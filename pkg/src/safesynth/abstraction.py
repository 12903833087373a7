"""Grid abstractions of sampled ODE models and controller refinement.

The sampled system holds each input constant for ``tau`` seconds and
integrates with fixed-step RK4.  The abstraction has one state per grid cell
plus an absorbing ``out`` state; a cell's ``u``-successors are all cells that
meet a box around the image of the cell center, inflated by a growth bound.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .system import TransitionSystem

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class AbstractionError(ValueError):
    pass


class NotWinningError(RuntimeError):
    """Simulation reached a state with no controller input."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


# --------------------------------------------------------------------------
# models

GrowthBound = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass
class OdeModel:
    """``dx/dt = f(x, u)`` with a box domain and a finite input set.

    ``rhs`` is batched: it maps ``(N, n)`` states and ``(N, m)`` inputs to
    ``(N, n)`` derivatives.  ``growth(radius, u, tau)`` optionally bounds,
    per coordinate, how far two solutions starting ``radius`` apart can drift
    in ``tau`` seconds; without it the scalar Lipschitz bound is used.
    """

    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    inputs: np.ndarray
    tau: float
    lipschitz: float
    state_names: tuple[str, ...]
    input_names: tuple[str, ...]
    periodic: tuple[bool, ...] = ()
    growth: GrowthBound | None = None
    substeps: int = 16

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if not self.periodic:
            self.periodic = (False,) * self.n
        if self.tau <= 0:
            raise AbstractionError(f"sampling period must be positive, got {self.tau}")
        if self.lipschitz < 0:
            raise AbstractionError("growth constant must be nonnegative")
        if self.inputs.size == 0:
            raise AbstractionError("input set is empty")
        if np.any(self.upper <= self.lower):
            raise AbstractionError("state domain box is empty")
        if self.inputs.shape[1] != len(self.input_names):
            raise AbstractionError("input values do not match the input names")
        if len(self.state_names) != self.n or len(self.periodic) != self.n:
            raise AbstractionError("state names / periodic flags do not match the dimension")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def input_name(self, k: int) -> str:
        return "(" + ",".join(f"{a}={_num(v)}" for a, v in zip(self.input_names, self.inputs[k])) + ")"


def _num(v: float) -> str:
    return f"{v:g}"


def _unicycle_rhs(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    v, w = u[:, 0], u[:, 1]
    th = x[:, 2]
    return np.stack([v * np.cos(th), v * np.sin(th), w], axis=1)


def _unicycle_growth(radius: np.ndarray, u: np.ndarray, tau: float) -> np.ndarray:
    # heading error is preserved exactly; it moves the position by at most |v| tau dtheta
    v = np.abs(u[..., 0])
    drift = v * tau * radius[..., 2]
    return np.stack([radius[..., 0] + drift, radius[..., 1] + drift,
                     np.broadcast_to(radius[..., 2], drift.shape)], axis=-1)


def unicycle(lower=(0.0, 0.0), upper=(5.0, 5.0), v=(0.0, 0.2, 0.4), omega=(-0.2, 0.0, 0.2),
             tau: float = 1.0) -> OdeModel:
    """Unicycle robot ``x' = v cos(theta), y' = v sin(theta), theta' = omega``.

    ``theta`` lives on ``[0, 2 pi)`` and wraps around.
    """
    inputs = np.array(list(itertools.product(v, omega)), dtype=float)
    return OdeModel(rhs=_unicycle_rhs,
                    lower=np.array([lower[0], lower[1], 0.0]),
                    upper=np.array([upper[0], upper[1], TWO_PI]),
                    inputs=inputs, tau=tau,
                    lipschitz=float(np.max(np.abs(inputs[:, 0]))),
                    state_names=("x", "y", "theta"), input_names=("v", "omega"),
                    periodic=(False, False, True), growth=_unicycle_growth)


MODELS = {"unicycle": unicycle}


def flow(model: OdeModel, x, u, tau: float | None = None, substeps: int | None = None) -> np.ndarray:
    """State after holding ``u`` for ``tau`` seconds (fixed-step RK4).

    ``x`` may be a single state or an ``(N, n)`` batch; ``u`` a single input
    value or a matching batch.  Periodic coordinates are not wrapped.
    """
    tau = model.tau if tau is None else tau
    k = model.substeps if substeps is None else substeps
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x).copy()
    us = np.broadcast_to(np.atleast_2d(np.asarray(u, dtype=float)), (xs.shape[0], model.m))
    h = tau / k
    f = model.rhs
    for _ in range(k):
        k1 = f(xs, us)
        k2 = f(xs + 0.5 * h * k1, us)
        k3 = f(xs + 0.5 * h * k2, us)
        k4 = f(xs + h * k3, us)
        xs = xs + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(xs)):
        raise AbstractionError("flow produced a non-finite state")
    return xs[0] if single else xs


@dataclass
class SampledSystem:
    """The sampled system: deterministic, one RK4 flow per step."""

    model: OdeModel

    def step(self, x, k: int) -> np.ndarray:
        return self.wrap(flow(self.model, x, self.model.inputs[k]))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float)
        for d, per in enumerate(self.model.periodic):
            if per:
                lo, span = self.model.lower[d], self.model.upper[d] - self.model.lower[d]
                x[..., d] = lo + np.mod(x[..., d] - lo, span)
        return x


# --------------------------------------------------------------------------
# predicates

_BOUND = re.compile(r"^\s*(?:(?P<lo>[-+0-9.eE]+)\s*(?P<op1><=|<)\s*)?(?P<var>[A-Za-z_]\w*)"
                    r"\s*(?:(?P<op2><=|<|==)\s*(?P<hi>[-+0-9.eE]+))?\s*$")


def parse_box(text: str, names: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``"4.4<=x<=4.6, 1<=y<=1.6"`` into bounds over ``names``.

    Unmentioned coordinates are unbounded; ``v==0`` pins a coordinate.
    """
    lo = np.full(len(names), -np.inf)
    hi = np.full(len(names), np.inf)
    for part in text.split(","):
        if not part.strip():
            continue
        m = _BOUND.match(part)
        if not m or (m["lo"] is None and m["hi"] is None):
            raise AbstractionError(f"cannot parse bound {part.strip()!r}")
        if m["var"] not in names:
            raise AbstractionError(f"unknown variable {m['var']!r}; expected one of {list(names)}")
        d = list(names).index(m["var"])
        try:
            if m["lo"] is not None:
                lo[d] = max(lo[d], float(m["lo"]))
            if m["hi"] is not None:
                hi[d] = min(hi[d], float(m["hi"]))
                if m["op2"] == "==":
                    lo[d] = max(lo[d], float(m["hi"]))
        except ValueError as e:
            raise AbstractionError(f"bad number in {part.strip()!r}") from e
    return lo, hi


@dataclass
class Predicate:
    name: str
    lower: np.ndarray
    upper: np.ndarray
    mode: str = "center"  # center | any | all

    def __post_init__(self):
        if self.mode not in ("center", "any", "all"):
            raise AbstractionError(f"labelling mode must be center, any or all, got {self.mode!r}")

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


# --------------------------------------------------------------------------
# grid abstraction

@dataclass
class GridAbstraction:
    model: OdeModel
    eta: np.ndarray
    shape: tuple[int, ...]
    system: TransitionSystem
    eps: float
    predicates: list[Predicate] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def out(self) -> int:
        return self.n_cells

    def quantize(self, x) -> np.ndarray | int:
        """Cell id of each state (half-open cells), ``out`` outside the domain."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = SampledSystem(self.model).wrap(np.atleast_2d(x))
        idx = np.floor((xs - self.model.lower) / self.eta).astype(np.int64)
        for d, per in enumerate(self.model.periodic):
            if per:
                idx[:, d] %= self.shape[d]
        inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)
        cells = np.full(xs.shape[0], self.out, dtype=np.int64)
        if inside.any():
            cells[inside] = np.ravel_multi_index(tuple(idx[inside].T), self.shape)
        return int(cells[0]) if single else cells

    def center(self, cell) -> np.ndarray:
        cell = np.asarray(cell)
        if np.any(cell >= self.n_cells):
            raise AbstractionError("the out state has no center")
        idx = np.stack(np.unravel_index(cell, self.shape), axis=-1)
        return self.model.lower + (idx + 0.5) * self.eta

    def distance(self, a, b) -> np.ndarray:
        """Output metric: max of the Euclidean distance on non-periodic
        coordinates and the shortest arc on periodic ones."""
        diff = np.abs(np.atleast_2d(a) - np.atleast_2d(b))
        per = np.array(self.model.periodic)
        span = self.model.upper - self.model.lower
        diff[:, per] = np.minimum(diff[:, per], span[per] - diff[:, per])
        parts = [np.linalg.norm(diff[:, ~per], axis=1)] if (~per).any() else []
        if per.any():
            parts.append(diff[:, per].max(axis=1))
        return np.max(np.stack(parts, axis=1), axis=1)

    def related(self, cell: int, x) -> bool:
        """The relation: ``x`` lies in ``cell`` (or outside the domain for ``out``)."""
        return self.quantize(np.asarray(x, dtype=float)) == cell

    def input_index(self, value) -> int:
        hits = np.flatnonzero(np.all(np.isclose(self.model.inputs, np.asarray(value, dtype=float)), axis=1))
        if hits.size == 0:
            raise AbstractionError(f"input {value} is not in the input set")
        return int(hits[0])


def _cells_per_dim(model: OdeModel, eta) -> tuple[np.ndarray, tuple[int, ...]]:
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (model.n,)).copy()
    if np.any(eta <= 0):
        raise AbstractionError(f"grid widths must be positive, got {eta}")
    counts = (model.upper - model.lower) / eta
    rounded = np.round(counts)
    if np.any(np.abs(counts - rounded) > 1e-9 * np.maximum(1, counts)) or np.any(rounded < 1):
        raise AbstractionError(f"grid widths {eta} do not divide the domain evenly")
    return eta, tuple(int(c) for c in rounded)


def _label_cells(preds: Sequence[Predicate], centers: np.ndarray, eta: np.ndarray) -> list[set[str]]:
    labels: list[set[str]] = [set() for _ in range(centers.shape[0])]
    lo, hi = centers - eta / 2, centers + eta / 2
    for p in preds:
        if p.mode == "center":
            hit = p.contains(centers)
        elif p.mode == "any":
            hit = np.all((hi > p.lower) & (lo < p.upper), axis=1)
        else:
            hit = np.all((lo >= p.lower) & (hi <= p.upper), axis=1)
        for c in np.flatnonzero(hit):
            labels[c].add(p.name)
    return labels


def build_grid_abstraction(model: OdeModel, eta, predicates: Iterable[Predicate] = (),
                           initial=None, tol: float = 1e-9) -> GridAbstraction:
    """Finite abstraction on a uniform grid of widths ``eta``.

    For every cell and input the center is flowed for ``tau`` and inflated by
    the growth bound of the half cell widths.  Box faces within ``tol`` cell
    widths of a cell boundary are snapped to it (floating-point noise in the
    centers would otherwise add a spurious neighbour).  Every cell meeting that box is a successor; if the box leaves
    the domain the absorbing ``out`` state is one too.  ``initial`` is a
    `Predicate`, a box string, or ``None`` (all cells).  The ``out`` state
    carries the atom ``out``.
    """
    eta, shape = _cells_per_dim(model, eta)
    preds = list(predicates)
    n_cells = int(np.prod(shape))
    centers = model.lower + (np.stack(np.unravel_index(np.arange(n_cells), shape), axis=1) + 0.5) * eta
    per = np.array(model.periodic)
    shape_a = np.array(shape)
    half = eta / 2
    m_in = model.inputs.shape[0]

    counts = np.zeros((n_cells + 1, m_in), dtype=np.int64)
    per_input: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(m_in):
        u = model.inputs[k]
        img = flow(model, centers, u)
        if model.growth is not None:
            r = model.growth(np.broadcast_to(half, centers.shape), np.broadcast_to(u, (n_cells, model.m)), model.tau)
        else:
            r = np.broadcast_to(np.linalg.norm(half) * math.exp(model.lipschitz * model.tau), centers.shape)
        # cells are half-open, so a box face lying on a cell boundary only touches the upper cell
        lo_i = np.floor((img - r - model.lower) / eta + tol).astype(np.int64)
        hi_i = np.ceil((img + r - model.lower) / eta - tol).astype(np.int64) - 1
        leaves = np.any(((lo_i < 0) | (hi_i >= shape_a)) & ~per, axis=1)
        lo_c = np.where(per, lo_i, np.clip(lo_i, 0, shape_a - 1))
        hi_c = np.where(per, hi_i, np.clip(hi_i, 0, shape_a - 1))
        span = np.where(per, np.minimum(hi_c - lo_c + 1, shape_a), hi_c - lo_c + 1)
        empty = np.any(((hi_i < 0) | (lo_i >= shape_a)) & ~per, axis=1)  # box misses the grid
        span = np.where(empty[:, None], 0, np.maximum(span, 0))
        offsets = np.stack(np.meshgrid(*[np.arange(s) for s in span.max(axis=0)], indexing="ij"),
                           axis=-1).reshape(-1, model.n)
        idx = lo_c[:, None, :] + offsets[None, :, :]
        valid = np.all(offsets[None, :, :] < span[:, None, :], axis=2)
        idx = np.where(per, np.mod(idx, shape_a), idx)
        flat = np.ravel_multi_index(tuple(np.moveaxis(np.where(valid[..., None], idx, 0), -1, 0)), shape)
        flat = np.where(valid, flat, -1)
        # periodic wrap can repeat a cell when the box spans the whole circle
        flat = np.sort(flat, axis=1)
        dup = np.zeros_like(valid)
        dup[:, 1:] = flat[:, 1:] == flat[:, :-1]
        keep = (flat >= 0) & ~dup
        out_col = np.where(leaves, n_cells, -1)[:, None]
        succ = np.concatenate([flat, out_col], axis=1)
        keep = np.concatenate([keep, leaves[:, None]], axis=1)
        counts[:n_cells, k] = keep.sum(axis=1)
        per_input.append((succ, keep))
    counts[n_cells, :] = 1
    # CSR order is state-major, then input
    width = max(p[0].shape[1] for p in per_input)
    succ_all = np.stack([np.pad(p[0], ((0, 0), (0, width - p[0].shape[1])), constant_values=-1)
                         for p in per_input], axis=1)   # (cells, inputs, width)
    keep_all = np.stack([np.pad(p[1], ((0, 0), (0, width - p[1].shape[1])), constant_values=False)
                         for p in per_input], axis=1)
    indices = np.concatenate([succ_all[keep_all], np.full(m_in, n_cells)])
    indptr = np.concatenate([[0], np.cumsum(counts.reshape(-1))])
    if np.any(counts == 0):
        raise AbstractionError("abstraction has a blocking cell; this indicates a bug in the successor box")

    names = tuple(p.name for p in preds)
    atoms = tuple(dict.fromkeys(names + ("out",)))
    labels = _label_cells(preds, centers, eta) + [{"out"}]
    if initial is None:
        init = range(n_cells)
    else:
        ip = initial if isinstance(initial, Predicate) else Predicate("init", *parse_box(initial, model.state_names))
        init = np.flatnonzero(ip.contains(centers))
        if init.size == 0:
            raise AbstractionError("initial region contains no cell center")
    sys = TransitionSystem(atoms=atoms, inputs=tuple(model.input_name(k) for k in range(m_in)),
                           labels=[frozenset(h) for h in labels], initial=frozenset(int(c) for c in init),
                           indptr=indptr, indices=indices.astype(np.int32),
                           state_names=None, enabled=np.ones((n_cells + 1, m_in), dtype=bool))
    g = GridAbstraction(model=model, eta=eta, shape=shape, system=sys, eps=0.0, predicates=preds)
    g.eps = float(g.distance(np.zeros(model.n), half)[0])
    logger.info("grid abstraction %s: %d cells, %d transitions, eps=%.4f",
                shape, n_cells, sys.n_transitions, g.eps)
    return g


# --------------------------------------------------------------------------
# approximate alternating simulation

@dataclass
class AsrVerdict:
    ok: bool
    condition: int = 0
    witness: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def check_asr(sa: TransitionSystem, step_b: Callable[[np.ndarray, int], np.ndarray],
              inputs_b: Sequence[int], pairs: Sequence[tuple[int, np.ndarray]],
              related: Callable[[int, np.ndarray], bool], eps: float,
              distance: Callable[[int, np.ndarray], float],
              initial_b: Sequence[np.ndarray] | None = None,
              abstract_of: Callable[[np.ndarray], Iterable[int]] | None = None) -> AsrVerdict:
    """Check the three conditions of an eps-approximate alternating simulation
    from ``sa`` to a deterministic system given by ``step_b`` on sampled pairs.

    1. every initial state of ``sa`` is related to some sampled initial ``xb``;
    2. related pairs have outputs within ``eps``;
    3. for every related pair and enabled ``ua`` some ``ub`` leads ``xb`` to a
       state related to a ``ua``-successor of ``xa``.
    Returns the first violation with its witness.  ``abstract_of(xb)``, when
    given, must list exactly the states related to ``xb``; it replaces the
    pairwise relation queries in conditions 1 and 3.
    """
    if abstract_of is not None:
        def related_any(xas, xbs) -> bool:
            hit = set()
            for xb in xbs:
                hit.update(abstract_of(np.asarray(xb)))
            return not hit.isdisjoint(xas)
    else:
        def related_any(xas, xbs) -> bool:
            return any(related(xa, xb) for xb in xbs for xa in xas)
    if initial_b is not None:
        covered = None
        if abstract_of is not None:
            covered = set()
            for xb in initial_b:
                covered.update(abstract_of(np.asarray(xb)))
        for xa in sorted(sa.initial):
            ok = xa in covered if covered is not None else any(related(xa, xb) for xb in initial_b)
            if not ok:
                return AsrVerdict(False, 1, {"xa": xa})
    for xa, xb in pairs:
        if not related(xa, xb):
            continue
        d = float(distance(xa, xb))
        if d > eps:
            return AsrVerdict(False, 2, {"xa": xa, "xb": np.asarray(xb), "distance": d})
    for xa, xb in pairs:
        if not related(xa, xb):
            continue
        succ_b = [step_b(np.asarray(xb), ub) for ub in inputs_b]
        for ua in np.flatnonzero(sa.enabled[xa]):
            post = sa.post(xa, int(ua))
            if not related_any(post, succ_b):
                return AsrVerdict(False, 3, {"xa": xa, "xb": np.asarray(xb), "ua": int(ua),
                                             "post": sorted(post)})
    return AsrVerdict(True)


# --------------------------------------------------------------------------
# memory extension: last input and exogenous atoms as part of the state

@dataclass
class MemoryExtension:
    """``X x U x E``: the base state, the input held during the current
    cycle, and the current exogenous letter (chosen by the environment).

    ``(x, u_cur, e) -u-> (x', u, e')`` for every ``x'`` in ``Post_{u_cur}(x)``
    and every allowed ``e'``.  The label is ``H(x)``, the exogenous atoms in
    ``e``, and every input atom whose input set contains ``u_cur``.
    """

    base: TransitionSystem
    exogenous: tuple[frozenset, ...]
    input_atoms: dict[str, frozenset[int]]
    system: TransitionSystem

    @property
    def n_inputs(self) -> int:
        return self.base.n_inputs

    def index(self, x: int, u_cur: int, e: int) -> int:
        return (x * self.n_inputs + u_cur) * len(self.exogenous) + e

    def split(self, i: int) -> tuple[int, int, int]:
        ne = len(self.exogenous)
        return i // (self.n_inputs * ne), (i // ne) % self.n_inputs, i % ne

    def letter_id(self, letter: Iterable[str]) -> int:
        letter = frozenset(letter)
        try:
            return self.exogenous.index(letter)
        except ValueError:
            raise AbstractionError(f"exogenous letter {sorted(letter)} is not allowed") from None


def extend_with_memory(base: TransitionSystem, exogenous_atoms: Sequence[str] = (),
                       input_atoms: Mapping[str, Iterable[int]] | None = None,
                       exogenous: Sequence[Iterable[str]] | None = None,
                       initial_inputs: Iterable[int] | None = None) -> MemoryExtension:
    """Build the memory extension of ``base``.

    ``exogenous`` lists the allowed environment letters (default: all subsets
    of ``exogenous_atoms``).  Initial states are ``(x0, u, e)`` for initial
    ``x0``, ``u`` in ``initial_inputs`` (default: all) and every ``e``.
    """
    input_atoms = {a: frozenset(int(u) for u in us) for a, us in (input_atoms or {}).items()}
    if exogenous is None:
        exogenous = [frozenset(c) for r in range(len(exogenous_atoms) + 1)
                     for c in itertools.combinations(exogenous_atoms, r)]
    exo = tuple(frozenset(e) for e in exogenous)
    extra = set().union(*exo) - set(exogenous_atoms) if exo else set()
    if extra:
        raise AbstractionError(f"exogenous letters use undeclared atoms {sorted(extra)}")
    clash = (set(exogenous_atoms) | set(input_atoms)) & set(base.atoms)
    if clash:
        raise AbstractionError(f"atoms {sorted(clash)} already label the base system")
    n, m, ne = base.n_states, base.n_inputs, len(exo)
    # successors of (x, u_cur, e) under u: Post_{u_cur}(x) x {u} x E
    base_counts = np.diff(base.indptr).reshape(n, m)        # [x, u_cur]
    src_pairs = np.arange(n * m)                             # x * m + u_cur
    ext_states = np.repeat(src_pairs, ne)                    # state id // ne
    per_state = base_counts.reshape(-1)[ext_states] * ne     # entries per (state, u)
    counts = np.repeat(per_state, m)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    # build entries: for each ext state s, each u, each x' in post, each e'
    st = np.repeat(np.arange(n * m * ne), m)
    us = np.tile(np.arange(m), n * m * ne)
    pair = st // ne
    starts = base.indptr[pair]
    lens = base_counts.reshape(-1)[pair]
    rep = lens * ne
    entry_owner = np.repeat(np.arange(st.size), rep)
    within = np.arange(int(rep.sum())) - np.repeat(np.cumsum(rep) - rep, rep)
    xprime = base.indices[np.repeat(starts, rep) + within // ne]
    eprime = within % ne
    indices = (xprime.astype(np.int64) * m + us[entry_owner]) * ne + eprime
    ext_enabled = np.repeat(base.enabled[:, None, :], m * ne, axis=1).reshape(n * m * ne, m)
    # an input u is usable at (x, u_cur, e) only if u is enabled at x; blocking is avoided
    # because the held input u_cur must itself have successors
    held_ok = np.repeat(base.enabled.reshape(-1), ne)
    ext_enabled &= held_ok[:, None]
    labels = []
    for i in range(n * m * ne):
        x, u_cur, e = i // (m * ne), (i // ne) % m, i % ne
        h = set(base.labels[x]) | exo[e] | {a for a, s in input_atoms.items() if u_cur in s}
        labels.append(frozenset(h))
    init_u = range(m) if initial_inputs is None else list(initial_inputs)
    initial = frozenset((x * m + u) * ne + e for x in base.initial for u in init_u for e in range(ne))
    atoms = tuple(base.atoms) + tuple(a for a in exogenous_atoms) + tuple(input_atoms)
    names = None
    if base.state_names:
        names = [f"{base.state_names[i // (m * ne)]}|{base.inputs[(i // ne) % m]}|{_fmt(exo[i % ne])}"
                 for i in range(n * m * ne)]
    sys = TransitionSystem(atoms=atoms, inputs=base.inputs, labels=labels, initial=initial,
                           indptr=indptr, indices=indices.astype(np.int32), state_names=names,
                           enabled=ext_enabled, check=False)
    return MemoryExtension(base=base, exogenous=exo, input_atoms=input_atoms, system=sys)


def _fmt(letter: Iterable[str]) -> str:
    return "{" + ",".join(sorted(letter)) + "}"


# --------------------------------------------------------------------------
# refinement and closed-loop simulation

@dataclass
class Trajectory:
    state_names: tuple[str, ...]
    input_names: tuple[str, ...]
    tau: float
    states: np.ndarray          # (N, n), state at the start of each cycle
    inputs: np.ndarray          # (N, m), input held during the cycle
    cells: np.ndarray
    dfa_states: np.ndarray
    product_states: np.ndarray
    atoms: list[frozenset]
    max_error: float = 0.0

    def __len__(self) -> int:
        return self.states.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.state_names, *self.input_names, "cell_id", "dfa_state", "atoms"])
        for i in range(len(self)):
            w.writerow([_num(i * self.tau), *(f"{v:.6f}" for v in self.states[i]),
                        *(_num(v) for v in self.inputs[i]), int(self.cells[i]),
                        int(self.dfa_states[i]), " ".join(sorted(self.atoms[i]))])
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        if name in self.input_names:
            return self.inputs[:, self.input_names.index(name)]
        return self.states[:, self.state_names.index(name)]


def refine_and_simulate(g: GridAbstraction, result, x0, steps: int,
                        env: Sequence[Iterable[str]] | Callable[[int], Iterable[str]] | None = None,
                        memory: MemoryExtension | None = None, u0: int | None = None,
                        stop_at_target: bool = False) -> Trajectory:
    """Run the refined controller on the sampled system.

    Each cycle: quantize the state, advance the specification automaton on
    the cell's label, look up the controller input for the product state,
    hold it for ``tau``.  With a memory extension the looked-up input is the
    one held during the next cycle (``u0`` is held during the first) and
    ``env`` supplies the exogenous letter of each cycle (missing entries are
    the empty letter).

    The run ends early on leaving the domain (the ``out`` state absorbs).
    Raises `NotWinningError` if the initial state is not winning or a later
    state has no input, and `AbstractionError` if the concrete successor is
    not among the abstract successors or drifts more than ``eps`` from its
    cell center.
    """
    prod = result.product
    lookup = prod.lookup()
    ctrl = result.controller
    winning = result.winning
    dfa = prod.dfa
    keep = set(dfa.alphabet)
    sampled = SampledSystem(g.model)
    x = sampled.wrap(np.asarray(x0, dtype=float))
    if memory is not None and u0 is None:
        zero = np.flatnonzero(np.all(g.model.inputs == 0, axis=1))
        u0 = int(zero[0]) if zero.size else 0

    def env_letter(i: int) -> frozenset:
        if env is None:
            return frozenset()
        if callable(env):
            return frozenset(env(i))
        return frozenset(env[i]) if i < len(env) else frozenset()

    rows_x, rows_u, cells, qs, pids, atoms = [], [], [], [], [], []
    q = dfa.initial
    u_cur = u0
    prev_state = None
    prev_input = None
    max_err = 0.0
    for i in range(steps):
        cell = g.quantize(x)
        if cell != g.out:
            err = float(g.distance(x, g.center(cell))[0])
            max_err = max(max_err, err)
            if err > g.eps + 1e-12:
                raise AbstractionError(f"step {i}: distance {err:.4g} to the cell center exceeds eps={g.eps:.4g}")
        if memory is not None:
            xa = memory.index(cell, u_cur, memory.letter_id(env_letter(i)))
            label = memory.system.labels[xa]
        else:
            xa = cell
            label = g.system.labels[cell]
        abstract = memory.system if memory is not None else g.system
        if prev_state is not None and xa not in abstract.post(prev_state, prev_input):
            raise AbstractionError(f"step {i}: concrete successor {xa} is not an abstract successor "
                                   f"of {prev_state} under input {prev_input}")
        q = dfa.step(q, label & keep)
        pid = lookup.get((xa, q))
        if pid is None or (i == 0 and not winning[pid]):
            raise NotWinningError(i, f"abstract state {xa} with automaton state {q} is not winning")
        u = int(ctrl.choice[pid])
        if u < 0:
            raise NotWinningError(i, f"left the winning region at abstract state {xa}")
        held = u_cur if memory is not None else u
        rows_x.append(x.copy())
        rows_u.append(g.model.inputs[held])
        cells.append(cell)
        qs.append(q)
        pids.append(pid)
        atoms.append(label)
        if cell == g.out or (stop_at_target and ctrl.target[pid]):
            break
        prev_state, prev_input = xa, u
        x = sampled.step(x, held)
        u_cur = u
    return Trajectory(state_names=g.model.state_names, input_names=g.model.input_names, tau=g.model.tau,
                      states=np.array(rows_x), inputs=np.array(rows_u), cells=np.array(cells),
                      dfa_states=np.array(qs), product_states=np.array(pids), atoms=atoms, max_error=max_err)


# --------------------------------------------------------------------------
# configuration files

def _grid_eta(model: OdeModel, cfg: Mapping) -> np.ndarray:
    if "cells" in cfg:
        cells = np.asarray(cfg["cells"], dtype=float)
        return (model.upper - model.lower) / cells
    if "eta" in cfg:
        return np.asarray(cfg["eta"], dtype=float)
    raise AbstractionError("config needs 'cells' or 'eta'")


@dataclass
class AbstractionConfig:
    abstraction: GridAbstraction
    memory: MemoryExtension | None = None

    @property
    def system(self) -> TransitionSystem:
        return self.memory.system if self.memory is not None else self.abstraction.system


def abstraction_from_config(cfg: Mapping) -> AbstractionConfig:
    """Build an abstraction from a parsed config mapping.

    Keys: ``model`` (default ``unicycle``), ``domain`` (``{x: [lo, hi], ...}``),
    ``cells`` or ``eta``, ``tau``, ``inputs`` (``{v: [...], omega: [...]}``),
    ``predicates`` (name -> box string or ``{box, mode}``), optional ``init``
    and optional ``memory`` (``exogenous`` atoms, ``allowed`` letters,
    ``input_atoms`` name -> input box such as ``"v==0"``, ``initial_input``).
    """
    try:
        kind = cfg.get("model", "unicycle")
        if kind not in MODELS:
            raise AbstractionError(f"unknown model {kind!r}")
        dom = cfg["domain"]
        inputs = cfg["inputs"]
        model = unicycle(lower=(dom["x"][0], dom["y"][0]), upper=(dom["x"][1], dom["y"][1]),
                         v=tuple(inputs["v"]), omega=tuple(inputs["omega"]), tau=float(cfg["tau"]))
        preds = []
        for name, spec in (cfg.get("predicates") or {}).items():
            box, mode = (spec, "center") if isinstance(spec, str) else (spec["box"], spec.get("mode", "center"))
            preds.append(Predicate(name, *parse_box(box, model.state_names), mode=mode))
        g = build_grid_abstraction(model, _grid_eta(model, cfg), preds, initial=cfg.get("init"))
        mem = None
        if "memory" in cfg:
            mc = cfg["memory"]
            ia = {}
            for name, box in (mc.get("input_atoms") or {}).items():
                lo, hi = parse_box(box, model.input_names)
                ia[name] = np.flatnonzero(np.all((model.inputs >= lo - 1e-12) & (model.inputs <= hi + 1e-12), axis=1))
            allowed = mc.get("allowed")
            init_u = None
            if "initial_input" in mc:
                lo, hi = parse_box(mc["initial_input"], model.input_names)
                init_u = np.flatnonzero(np.all((model.inputs >= lo - 1e-12) & (model.inputs <= hi + 1e-12), axis=1))
            mem = extend_with_memory(g.system, tuple(mc.get("exogenous", ())), ia,
                                     exogenous=None if allowed is None else [frozenset(a) for a in allowed],
                                     initial_inputs=init_u)
        return AbstractionConfig(abstraction=g, memory=mem)
    except KeyError as e:
        raise AbstractionError(f"missing config key {e.args[0]!r}") from None


def load_config(text: str) -> AbstractionConfig:
    import yaml

    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise AbstractionError(f"malformed config: {e}") from None
    if not isinstance(cfg, Mapping):
        raise AbstractionError("config must be a mapping")
    return abstraction_from_config(cfg)
