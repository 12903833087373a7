# Stopping after repeated sensor faults
#
# The robot state is extended with the input held during the current cycle
# and an exogenous fault bit f. The controller must stop the robot (v = 0)
# three cycles after any window of three readings with at least two faults.

from pathlib import Path

import numpy as np

from safesynth.abstraction import load_config, refine_and_simulate
from safesynth.cli import parse_env_word, read_spec
from safesynth.synthesis import synthesize_formula

configs = Path(__file__).resolve().parent.parent / "configs"

cfg = load_config((configs / "fault.yaml").read_text())
mem = cfg.memory
print("base states", mem.base.n_states, "extended states", mem.system.n_states)

# Prefer driving: among the safe inputs take the largest speed.

u = cfg.abstraction.model.inputs
pref = sorted(range(len(u)), key=lambda k: (-abs(u[k, 0]), abs(u[k, 1]), k))
res = synthesize_formula(cfg.system, read_spec(str(configs / "fault.ltl")), preference=pref)
print(res.report_text())

# Drive it with a fixed fault sequence.

word = parse_env_word((configs / "fault_word.txt").read_text())
tr = refine_and_simulate(cfg.abstraction, res, np.array([2.5, 2.5, 0.0]), len(word) + 3,
                         env=word, memory=mem)
faults = ["f" in w for w in word] + [False] * 3
for i in range(len(tr)):
    window = sum(faults[max(0, i - 3):i]) if i >= 3 else 0
    must = " (must stop)" if i >= 3 and window >= 2 else ""
    print(f"cycle {i:2d}  fault={'f' if faults[i] else '-'}  v={tr.inputs[i, 0]:.1f}{must}")
