"""Controller synthesis for safe LTL specifications.

Pipeline: formula -> fine bad-prefix NFA -> DFA -> product with the plant
-> safety game -> optional reachability game -> refined controller.
"""
from .automata import Dfa, Nfa, construct_fine_nfa, export_graph, nfa_accepts, subset_construction
from .games import (Controller, StrategySet, check_enforces, cpre, export_controller,
                    solve_reachability, solve_safety)
from .ltl import (Formula, LassoWord, PrefixClassifier, Verdict, classify_prefix, closure, eval_lasso,
                  gen_fail_formula, gen_modeswitch_formula, parse_formula, to_nnf)
from .synthesis import SynthesisResult, decompose_until, synthesize, synthesize_formula
from .system import ProductSystem, TransitionSystem, load_system, product, restrict, save_system

__version__ = "0.1.0"

__all__ = [
    "Controller", "Dfa", "Formula", "LassoWord", "Nfa", "PrefixClassifier", "ProductSystem",
    "StrategySet", "SynthesisResult", "TransitionSystem", "Verdict", "check_enforces",
    "classify_prefix", "closure", "construct_fine_nfa", "cpre", "decompose_until", "eval_lasso",
    "export_controller", "export_graph", "gen_fail_formula", "gen_modeswitch_formula",
    "load_system", "nfa_accepts", "parse_formula", "product", "restrict", "save_system",
    "solve_reachability", "solve_safety", "subset_construction", "synthesize",
    "synthesize_formula", "to_nnf",
]
