"""
Extending a form given on one direction
=======================================

A partial form b(lam u0, v) = lam (T u0 | v)_V is extended to all of V,
once keeping accretivity and once as a selfadjoint form.  The sampled
numerical ranges show the difference.
"""

import numpy as np

from maxreglab.extension import (
    ExtensionConfig,
    PartialForm,
    extend_accretive,
    extend_selfadjoint,
    numerical_range_sample,
    operator_norm,
)
from maxreglab.spaces import GridFunction, build_grams, build_mesh

mesh = build_mesh(0.1, 16, 2.0)
grams = build_grams(mesh, 1.5)
rng = np.random.default_rng(1)
u0 = rng.standard_normal(mesh.n_basis) + 0j
g = rng.standard_normal(mesh.n_basis) + 1j * rng.standard_normal(mesh.n_basis)
# make Re (T u0 | u0) > 0 so that b is accretive on span{u0}
g = g - grams.inner_V(g, u0) / grams.norm_V(u0) ** 2 * u0 + (0.5 + 0.3j) * u0
pf = PartialForm(GridFunction(mesh, u0), GridFunction(mesh, g), grams)
print(f"||T|| on span(u0) = {pf.norm:.4f}")

acc = extend_accretive(pf)
print(f"accretive:   ||S|| = {operator_norm(acc):.4f}  certified <= {np.sqrt(2) * pf.norm:.4f}")
w = numerical_range_sample(acc, 2000, seed=0).points
print(f"  min Re W = {w.real.min():.3e}   max |Im W| = {np.abs(w.imag).max():.3f}")

# the selfadjoint extension works with real data
g_sym = g.real + 0j
pf_sym = PartialForm(pf.u0, GridFunction(mesh, g_sym), grams)
sa = extend_selfadjoint(pf_sym, ExtensionConfig(mode="selfadjoint", eps_lower=0.5))
w = numerical_range_sample(sa, 2000, seed=0).points
print(f"selfadjoint: ||S|| = {operator_norm(sa):.4f}")
print(f"  min Re W = {w.real.min():.3e}   max |Im W| = {np.abs(w.imag).max():.1e}")

v = rng.standard_normal(mesh.n_basis) + 0j
print("both restrict to b on span(u0):",
      np.isclose(acc(pf.u0.coeffs, v), pf(1.0, v)), np.isclose(sa(pf_sym.u0.coeffs, v), pf_sym(1.0, v)))
