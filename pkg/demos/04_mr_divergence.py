"""
Maximal regularity fails
========================

The cutoff solution w = sin^2(pi t / T) u(t) starts at 0 and has a right
hand side whose L2(V) norm stays bounded as eps -> 0, while the H norm of
w' on (T/2, T) grows like log(1/eps).
"""

from maxreglab.counterexample import NONSYMMETRIC, SYMMETRIC, CounterexampleSpec
from maxreglab.solver import mr_divergence

eps = [10.0**-k for k in range(2, 9)]
for variant in (NONSYMMETRIC, SYMMETRIC):
    table = mr_divergence(CounterexampleSpec(variant), eps, n_cells=1024)
    print(variant)
    print("  eps        ||w'||^2 L2(H)   increment   ||f|| L2(V)   solver")
    for r in table.rows:
        inc = "" if r.increment is None else f"{r.increment:.4f}"
        solver = "" if r.solver_udot_l2h_sq is None else f"{r.solver_udot_l2h_sq:.4f}"
        print(f"  {r.epsilon:8.0e}   {r.udot_l2h_sq:12.5f}   {inc:>9}   {r.rhs_l2v:10.5f}   {solver}")
