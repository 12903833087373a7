"""Command-line front end.

    python -m safesynth translate  --spec phi.ltl [--alphabet a,b] [--out DIR]
    python -m safesynth synthesize --spec phi.ltl (--system S.txt | --abstraction A.yaml) [--out DIR]
    python -m safesynth simulate   --spec phi.ltl --abstraction A.yaml --x0 x,y,theta [--env-word W] --out T.csv
    python -m safesynth bench      --n-range 3..6 --k 1 [--jobs J]

Exit codes: 0 success (including an unrealizable verdict), 2 bad input,
3 runtime precondition failure (e.g. x0 not winning).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import abstraction, automata, games, ltl, synthesis, system

logger = logging.getLogger("safesynth")

EXIT_INPUT = 2
EXIT_PRECONDITION = 3


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def read_spec(path: str, alphabet=None) -> ltl.Formula:
    lines = [ln.split("#", 1)[0] for ln in _read(path).splitlines()]
    text = " ".join(ln for ln in lines if ln.strip())
    if not text.strip():
        raise InputError(f"{path}: no formula")
    return ltl.parse_formula(text, alphabet)


def parse_env_word(text: str) -> list[frozenset]:
    """Whitespace-separated letters, one per control cycle.

    A letter is a comma-separated list of atoms; negated atoms (``!f``,
    ``¬f``) and ``{}`` / ``-`` stand for absence.
    """
    word = []
    for tok in text.split():
        tok = tok.strip("{}")
        atoms = [a for a in tok.split(",") if a and a != "-" and not a.startswith(("!", "¬"))]
        word.append(frozenset(atoms))
    return word


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _report(d: dict) -> str:
    return "".join(f"{k}={synthesis._fmt(v)}\n" for k, v in d.items())


# --------------------------------------------------------------------------

def cmd_translate(args) -> int:
    alphabet = args.alphabet.split(",") if args.alphabet else None
    phi = read_spec(args.spec, alphabet)
    phi_safe, _ = synthesis.decompose_until(phi)
    t0 = time.perf_counter()
    nfa = automata.construct_fine_nfa(phi_safe, alphabet)
    t1 = time.perf_counter()
    dfa = automata.subset_construction(nfa)
    t2 = time.perf_counter()
    out = Path(args.out) if args.out else None
    _write(out, "nfa.txt", automata.export_graph(nfa))
    _write(out, "dfa.txt", automata.export_graph(dfa))
    rep = _report({"formula": ltl.to_infix(phi_safe), "nfa_states": len(nfa), "dfa_states": len(dfa),
                   "nfa_ms": (t1 - t0) * 1e3, "dfa_ms": (t2 - t1) * 1e3, "build_ms": (t2 - t0) * 1e3})
    _write(out, "report.txt", rep)
    sys.stdout.write(rep)
    return 0


def _load_target(args):
    if bool(args.system) == bool(args.abstraction):
        raise InputError("give exactly one of --system and --abstraction")
    if args.system:
        return system.load_system(_read(args.system)), None
    cfg = abstraction.load_config(_read(args.abstraction))
    return cfg.system, cfg


def _preference(s: system.TransitionSystem, cfg) -> list[int] | None:
    if cfg is None:
        return None
    # prefer moving: larger |v| first, then smaller |omega|
    u = cfg.abstraction.model.inputs
    return sorted(range(len(u)), key=lambda k: (-abs(u[k, 0]), abs(u[k, 1]) if u.shape[1] > 1 else 0, k))


def _synthesize(args):
    s, cfg = _load_target(args)
    phi = read_spec(args.spec)
    result = synthesis.synthesize_formula(s, phi, preference=_preference(s, cfg))
    return s, cfg, result


def cmd_synthesize(args) -> int:
    s, cfg, result = _synthesize(args)
    out = Path(args.out) if args.out else None
    _write(out, "controller.txt", games.export_controller(result.controller, result.strategy))
    _write(out, "report.txt", result.report_text())
    sys.stdout.write(result.report_text())
    return 0


def cmd_simulate(args) -> int:
    if not args.abstraction:
        raise InputError("simulate needs --abstraction")
    args.system = None
    s, cfg, result = _synthesize(args)
    if args.controller:
        ctrl = games.load_controller(_read(args.controller), result.product.system.n_states)
        result.controller = games.Controller(choice=ctrl.choice, rank=ctrl.rank, target=result.controller.target,
                                             winning=result.controller.winning)
    try:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    except ValueError:
        raise InputError(f"bad --x0 {args.x0!r}") from None
    g = cfg.abstraction
    if x0.size != g.model.n:
        raise InputError(f"--x0 needs {g.model.n} coordinates")
    mem = cfg.memory
    env = None
    if args.env_word:
        env = parse_env_word(_read(args.env_word))
    elif mem is not None:
        rng = np.random.default_rng(args.seed)
        letters = mem.exogenous
        env = [letters[i] for i in rng.integers(len(letters), size=args.steps)]
    steps = args.steps if args.steps else (len(env) + 3 if env else 50)
    traj = abstraction.refine_and_simulate(g, result, x0, steps, env=env, memory=mem)
    text = traj.to_csv()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    logger.info("simulated %d cycles, max distance to cell centers %.4g (eps %.4g)",
                len(traj), traj.max_error, g.eps)
    return 0


def bench_row(n: int, k: int) -> dict:
    phi = ltl.gen_fail_formula(n, k, ltl.Atom("stop"), minterms=True)
    t0 = time.perf_counter()
    nfa = automata.construct_fine_nfa(phi)
    dfa = automata.subset_construction(nfa)
    dt = time.perf_counter() - t0
    return {"n": n, "k": k, "length": ltl.length(phi), "nfa_states": len(nfa),
            "dfa_states": len(dfa), "build_s": dt}


def _parse_range(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"bad --n-range {text!r}; use e.g. 3..6") from None


def cmd_bench(args) -> int:
    ns = _parse_range(args.n_range)
    if any(k < 1 or k > n for n in ns for k in [args.k]):
        raise InputError("need 1 <= k <= n for every n")
    jobs = max(1, args.jobs)
    if jobs > 1 and len(ns) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(bench_row, ns, [args.k] * len(ns)))
    else:
        rows = [bench_row(n, args.k) for n in ns]
    lines = ["n k nfa_states dfa_states build_s"]
    lines += [f"{r['n']} {r['k']} {r['nfa_states']} {r['dfa_states']} {r['build_s']:.3f}" for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safesynth", description="Controller synthesis for safe LTL.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="formula -> fine NFA and DFA")
    t.add_argument("--spec", required=True)
    t.add_argument("--alphabet", help="comma-separated atoms (default: those of the formula)")
    t.add_argument("--out", help="directory for nfa.txt, dfa.txt, report.txt")
    t.set_defaults(func=cmd_translate)

    for name, func, helptext in [("synthesize", cmd_synthesize, "solve the games, write a controller"),
                                 ("simulate", cmd_simulate, "closed-loop run of the refined controller")]:
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--spec", required=True)
        c.add_argument("--abstraction", help="YAML abstraction config")
        c.add_argument("--out")
        c.add_argument("--jobs", type=int, default=1)
        if name == "synthesize":
            c.add_argument("--system", help="transition system text file")
        else:
            c.add_argument("--x0", required=True, help="initial state, comma separated")
            c.add_argument("--env-word", help="file with one exogenous letter per cycle")
            c.add_argument("--controller", help="controller table from synthesize (default: re-synthesize)")
            c.add_argument("--steps", type=int, default=0)
            c.add_argument("--seed", type=int, default=0)
        c.set_defaults(func=func)

    b = sub.add_parser("bench", help="automaton sizes for []( fail_{n,k} -> X^n stop )")
    b.add_argument("--n-range", default="3..6")
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except abstraction.NotWinningError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InputError, ValueError) as e:
        # parse errors, unsupported fragments, malformed systems and configs
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
