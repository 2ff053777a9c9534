"""Which operations matter? Fit a forest to a log and read off credits."""
import numpy as np

from mpnnas.importance import analyze_log, operation_names
from mpnnas.space import decode, sample_uniform
from mpnnas.training import EvaluationRecord

rng = np.random.default_rng(0)
log = []
for i in range(300):
    p = sample_uniform(seed=rng)
    # skip into cell2 helps, big state dims in cell1 hurt a little
    r = -1.0 + 0.4 * (p[3] == 1) - 0.1 * (decode(p).cells[0].state_dim == 32) + 0.05 * rng.normal()
    log.append(EvaluationRecord(p=p, reward=r, t_finish=float(i)))

_, imp = analyze_log(log, n_trees=50, seed=0)
names = operation_names()
print("top positive")
for i, v in imp.top_positive[:5]:
    print(f"  {names[i]:<28}{v:+.4f}")
print("top negative")
for i, v in imp.top_negative[:5]:
    print(f"  {names[i]:<28}{v:+.4f}")
