"""Resilience statistics of a hand-written compromise trace."""
import numpy as np

from cpsguard.metrics import check_eps_delta, compute_resilience, rho_from_counts

trace = [set(), {0}, {0, 1}, {1}, {1}, set(), {2}, set()]
rep = compute_resilience(trace, n=3)
print("run lengths per subsystem", rep.tau)
print("frequencies", [round(float(f), 3) for f in rep.freq], "rho", rep.rho)
mat = np.array([[i in c for i in range(3)] for c in trace])
print("time-average form", rho_from_counts(mat))
print(check_eps_delta([0.1, 0.3, 0.05, 0.6], eps=0.4, delta=0.3))
