"""
The two counterexample forms
============================

For each variant: the calibrated constants, the defining identity
a(t; u(t), v) = (u(t) - u'(t) | v)_H on random v, and how far the
assembled operator is from being selfadjoint.
"""

import numpy as np

from maxreglab.counterexample import NONSYMMETRIC, SYMMETRIC, CounterexampleSpec, realize
from maxreglab.spaces import build_mesh

mesh = build_mesh(1e-3, 1024, 2.0)
rng = np.random.default_rng(2)
for variant in (NONSYMMETRIC, SYMMETRIC):
    real = realize(CounterexampleSpec(variant), mesh)
    alpha, M, _ = real.constants
    shift = f", shift d = {real.spec.d:.4g}" if real.spec.symmetric else ""
    print(f"{variant}: alpha = {alpha:.4g}, M = {M:.4g}{shift}")
    for t in (0.25, 0.5, 1.0):
        op = real.form(t)
        u, udot = real.u(t).coeffs, real.u_dot(t).coeffs
        v = rng.standard_normal(mesh.n_basis) + 1j * rng.standard_normal(mesh.n_basis)
        lhs = op(u, v)
        rhs = np.vdot(v, real.grams.gram_H @ (u - udot))
        s = op.s_matrix
        print(f"  t={t:4}: |a(u,v) - (u-u'|v)_H| / |rhs| = {abs(lhs - rhs) / abs(rhs):.1e}"
              f"   ||s - s^H|| = {np.linalg.norm(s - s.conj().T):.3g}")
