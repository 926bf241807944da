"""
The weak problem is still well posed
====================================

Solves w' + A(t) w = f in V' with the theta-scheme, where f is the
cutoff right hand side, and watches the L2(V) error against the closed
form solution shrink under joint refinement in space and time.
"""

from maxreglab.counterexample import SYMMETRIC, CounterexampleSpec, realize
from maxreglab.solver import SolverConfig, cutoff_error_L2V, solve_cutoff, time_rule_steps
from maxreglab.spaces import build_mesh

spec = CounterexampleSpec(SYMMETRIC)
eps = 0.1
for theta in (1.0, 0.5):
    print(f"theta = {theta}")
    prev = None
    for level in range(4):
        real = realize(spec, build_mesh(eps, 64 * 2**level, 2.0))
        steps = time_rule_steps(real.spec, eps) * 2**level
        res = solve_cutoff(real, steps, SolverConfig(theta))
        err = cutoff_error_L2V(real, res)
        ratio = "" if prev is None else f"  reduction {prev / err:.2f}"
        print(f"  n = {real.mesh.n_cells:4d}, steps = {steps:5d}: error {err:.3e}{ratio}")
        prev = err
