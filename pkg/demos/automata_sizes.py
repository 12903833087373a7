# Automaton sizes for the fault-tolerance requirement
#
# The requirement "whenever k faults occur in n consecutive readings, the
# robot is stopped n cycles later" is a safe formula. Here we translate it
# for a few (n, k) and look at how the fine NFA and its determinization grow.

import time

from safesynth import automata, ltl
from safesynth.ltl import Atom

# The fault window is written as full minterms over f, one disjunct per
# admissible fault pattern.

phi = ltl.gen_fail_formula(3, 2, Atom("stop"), minterms=True)
print(ltl.to_infix(phi))
print("length", ltl.length(phi))

# Translate: backward construction of the fine NFA, then subset construction.

nfa = automata.construct_fine_nfa(phi)
dfa = automata.subset_construction(nfa)
print(len(nfa), "NFA states,", len(dfa), "DFA states")

# Most NFA states collapse after determinization. The NFA tracks formula
# obligations, while the DFA only needs to remember the last n readings.

print(f"{'n':>2} {'k':>2} {'nfa':>7} {'dfa':>5} {'seconds':>8}")
for n, k in [(3, 2), (3, 1), (4, 1), (5, 1), (6, 1)]:
    t0 = time.perf_counter()
    nfa = automata.construct_fine_nfa(ltl.gen_fail_formula(n, k, Atom("stop"), minterms=True))
    dfa = automata.subset_construction(nfa)
    print(f"{n:>2} {k:>2} {len(nfa):>7} {len(dfa):>5} {time.perf_counter() - t0:>8.3f}")

# The DFA for n=3, k=2 is small enough to print in full.

print(automata.export_graph(automata.subset_construction(
    automata.construct_fine_nfa(ltl.gen_fail_formula(3, 2, Atom("stop"))))))
