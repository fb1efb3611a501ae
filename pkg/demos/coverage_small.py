"""A scaled-down coverage study: 20 datasets per group size instead of 100."""

import sys

from mmanova.simulation import coverage_experiment

case = int(sys.argv[1]) if len(sys.argv) > 1 else 1
rep = coverage_experiment(case, (5, 20), n_eps=15, S=20, R=500, seed=7)

print(f"case {case}, {rep.S} datasets per n_alpha, {rep.draws} draws each\n")
print(f"{'n_alpha':>7s}  {'parameter':16s}{'criterion':26s}{'cover':>7s}{'median width':>14s}")
for c in rep.cells + rep.reference:
    print(f"{c.n_alpha:7d}  {c.parameter:16s}{c.criterion:26s}{c.coverage:7.2f}{c.median_width:14.3f}")
