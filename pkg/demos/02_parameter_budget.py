"""How the parameter budget grows with the rank schedule.

Reproduces the five rank settings of the rank study for a 784-256-256 MLP
with 10-way heads over 20 tasks, then prints the per-task growth of the
default (11, 1) schedule.
"""
from incrank.metrics import count_params, format_megaparams

for r1, rt in [(1, 1), (6, 1), (11, 1), (11, 2), (11, 4)]:
    rep = count_params(784, [256, 256], 10, r1, rt, 20)
    print(f"r=({r1},{rt}): {rep.total:>7d}  {format_megaparams(rep.total)}")

rep = count_params(784, [256, 256], 10, 11, 1, 20)
print("\nper task, (11,1):")
print(" ".join(str(n) for n in rep.per_task))
print("each extra task costs", rep.per_task[1] - rep.per_task[0], "to",
      rep.per_task[-1] - rep.per_task[-2], "parameters")
