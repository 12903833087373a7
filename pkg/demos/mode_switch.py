# Switching between two operating modes
#
# While scenario s_i holds, goal g_i must hold from some point until the
# scenario changes. With two complementary scenarios the automaton is tiny.

from safesynth import automata, ltl
from safesynth.ltl import Atom, Not

scen = Atom("scen1")
phi = ltl.gen_modeswitch_formula([(scen, Atom("goal1")), (Not(scen), Atom("goal2"))])
print(ltl.to_infix(phi))

dfa = automata.subset_construction(automata.construct_fine_nfa(phi))
print(len(dfa), "DFA states")
print(automata.export_graph(dfa))

# Feed a few finite traces through the DFA. A trace is rejected (a bad
# prefix) once a goal is dropped while its scenario still holds.

traces = {
    "settle into goal1": [{"scen1"}, {"scen1", "goal1"}, {"scen1", "goal1"}],
    "drop goal1": [{"scen1", "goal1"}, {"scen1"}],
    "switch scenario": [{"scen1", "goal1"}, {"goal2"}, {"goal2"}],
}
for name, word in traces.items():
    print(f"{name:20s} bad prefix: {dfa.accepts(word)}")
