import numpy as np
import pytest
from scipy.optimize import brentq

from maxreglab.counterexample import (
    NONSYMMETRIC,
    SYMMETRIC,
    CounterexampleSpec,
    assemble_form,
    calibrate,
    choose_d,
    choose_d_from_integrals,
    coercivity_lower_bound,
    compute_z,
    cutoff,
    cutoff_solution,
    eval_trajectory,
    h_truncated,
    holder_estimate,
    partial_form_at,
    realize,
    sample_times,
    sliced_h_integral,
    trajectory_modulus_exact,
    verify_conditions,
    with_shift,
)
from maxreglab.extension import difference_norm, reduced_eigenvalues
from maxreglab.spaces import build_mesh, integrate

NS = CounterexampleSpec(NONSYMMETRIC)
SY = with_shift(CounterexampleSpec(SYMMETRIC))
MESH = build_mesh(1e-3, 512, 2.0)
TIMES = sample_times(1.0)


def _rand(rng, n, k):
    return rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))


def _pairing(G, v, f):
    """(f|v_k) = v_k^H G f for the columns of v."""
    return (G @ v).conj().T @ f


# -- spec and cut-off ---------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        CounterexampleSpec("other")
    with pytest.raises(ValueError):
        CounterexampleSpec(SYMMETRIC, shift_d=0.5)
    with pytest.raises(ValueError):
        CounterexampleSpec(horizon_T=0.0)
    with pytest.raises(ValueError):
        CounterexampleSpec(SYMMETRIC).d


def test_cutoff_profile():
    T = 2.0
    val, der = cutoff(np.array([0.0, T / 2, 0.75 * T, T]), T)
    np.testing.assert_array_equal(val, [0.0, 1.0, 1.0, 1.0])
    assert der[0] == 0.0 and np.all(der[2:] == 0)
    t = np.linspace(0.01, 0.99 * T, 57)
    h = 1e-6
    fd = (cutoff(t + h, T)[0] - cutoff(t - h, T)[0]) / (2 * h)
    np.testing.assert_allclose(cutoff(t, T)[1], fd, atol=1e-6)
    # C^1 across T/2
    assert abs(cutoff(T / 2 - 1e-9, T)[1]) < 1e-6


# -- trajectories -------------------------------------------------------------------


def test_nonsymmetric_initial_value():
    tp = eval_trajectory(NS, 0.0, MESH)
    np.testing.assert_allclose(tp.u.coeffs, MESH.nodes, rtol=1e-15)
    fine = build_mesh(1e-6, 4096, 2.0)
    assert eval_trajectory(NS, 0.0, fine).norms["u_H"] ** 2 == pytest.approx(1 / 3, rel=1e-6)


def test_nonsymmetric_norm_invariance():
    ref = eval_trajectory(NS, 0.0, MESH)
    for t in TIMES:
        tp = eval_trajectory(NS, t, MESH)
        for key in ("u_H", "u_V", "udot_Vdual"):
            assert tp.norms[key] == pytest.approx(ref.norms[key], rel=1e-9)
        assert tp.n2 == pytest.approx(ref.n2, rel=1e-9)


def test_symmetric_initial_value():
    tp = eval_trajectory(SY, 0.0, MESH)
    x = MESH.nodes
    np.testing.assert_allclose(tp.u.coeffs, SY.d * x, rtol=1e-14)
    np.testing.assert_allclose(tp.u_dot.coeffs, x * x ** (-1.5), rtol=1e-14)


# -- partial forms ------------------------------------------------------------------


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_partial_form_agrees_with_identity(spec):
    rng = np.random.default_rng(0)
    real = realize(spec, MESH)
    GH = real.grams.gram_H
    v = _rand(rng, MESH.n_basis, 100)
    for t in TIMES[::4]:
        pf = partial_form_at(spec, t, MESH)
        tp = real.trajectory(t)
        b = (real.grams.gram_V @ v).conj().T @ pf.riesz_T_u0.coeffs
        ref = _pairing(GH, v, tp.u.coeffs) - _pairing(GH, v, tp.u_dot.coeffs)
        assert np.max(np.abs(b - ref)) <= 1e-9 * np.max(np.abs(ref))
        assert np.allclose(pf(2.0, v[:, 0]), 2 * pf(1.0, v[:, 0]), rtol=1e-14)


def test_nonsymmetric_partial_form_real_part():
    fine = build_mesh(1e-6, 4096, 2.0)
    pf = partial_form_at(NS, 0.37, fine)
    assert pf(1.0, pf.u0).real == pytest.approx(1 / 3, rel=1e-6)


def test_symmetric_partial_form_at_zero():
    eps = 1e-3
    mesh = build_mesh(eps, 2048, 2.0)
    pf = partial_form_at(SY, 0.0, mesh)
    d = SY.d
    exact = d * d * (1 - eps**3) / 3 - d * (2 / 3) * (1 - eps**1.5)
    quad = integrate(lambda x: (d * x) ** 2 - d * x**0.5, build_mesh(eps, 64, 2.0)).real
    assert quad == pytest.approx(exact, rel=1e-12)
    assert pf(1.0, pf.u0).real == pytest.approx(quad, rel=1e-5)


# -- z(t) and the assembled forms -------------------------------------------------------


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_z_orthogonal_and_matches_gram_schmidt(spec):
    real = realize(spec, MESH)
    for t in TIMES:
        tp = real.trajectory(t)
        z = compute_z(spec, t, MESH)
        assert abs(real.grams.inner_V(tp.u, z)) <= 1e-9 * tp.n1 * tp.n2
        op = assemble_form(spec, t, MESH)
        gs = op.basis_z.coeffs
        phase = np.vdot(gs, real.grams.gram_V @ z.coeffs)
        np.testing.assert_allclose(z.coeffs / tp.n2, gs * phase / abs(phase), rtol=1e-9, atol=1e-9 * np.abs(gs).max())
        assert np.real(phase) > 0  # same orientation


def test_nonsymmetric_z_norm_constant():
    ref = eval_trajectory(NS, 0.0, MESH).n2
    for t in TIMES:
        assert eval_trajectory(NS, t, MESH).n2 == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_form_matches_explicit_summands(spec):
    """a(v1, v2) written through u, z and inner products, without the 2x2 matrix."""
    rng = np.random.default_rng(1)
    real = realize(spec, MESH)
    G = real.grams.gram_V
    GH = real.grams.gram_H
    alpha = real.alpha
    v1, v2 = _rand(rng, MESH.n_basis, 50), _rand(rng, MESH.n_basis, 50)
    ip = lambda f, v: (G @ v).conj().T @ f  # (f|v_k)_V
    sign = 1.0 if spec.symmetric else -1.0
    for t in TIMES[::3]:
        tp = real.trajectory(t)
        u, z = tp.u.coeffs, tp.z.coeffs
        n1sq = tp.n1**2
        # beta = (||u||_H^2 - <u', u>) / ||u||_V^2 from the H pairing, not from the solve
        beta = (np.vdot(u, GH @ u) - np.vdot(u, GH @ tp.u_dot.coeffs)) / n1sq
        v1u, v1z = np.einsum("ik,i->k", (G @ v1).conj(), u).conj(), ip(z, v1).conj()
        v2u, v2z = ip(u, v2), ip(z, v2)
        # (v1|u) = conj((u|v1)); (v2|u) appears conjugated in the summands
        expected = (
            0.5 * alpha * np.einsum("ik,ik->k", (G @ v2).conj(), v1)
            + (beta - 0.5 * alpha) / n1sq * v1u * v2u
            + sign * v1z * v2u / n1sq
            + v1u * v2z / n1sq
        )
        if spec.symmetric:
            expected = expected + real.k_term / tp.n2**2 * v1z * v2z
        op = real.form(t)
        got = np.einsum("ik,ik->k", (G @ v2).conj(), op.apply(v1))
        assert np.max(np.abs(got - expected)) <= 1e-9 * np.max(np.abs(expected))


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_form_restricts_to_partial_form(spec):
    rng = np.random.default_rng(2)
    v = _rand(rng, MESH.n_basis, 100)
    for t in TIMES[::5]:
        op = assemble_form(spec, t, MESH)
        pf = partial_form_at(spec, t, MESH)
        G = pf.grams.gram_V
        a = (G @ v).conj().T @ op.apply(pf.u0.coeffs)
        b = (G @ v).conj().T @ pf.riesz_T_u0.coeffs
        assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(b))


def test_symmetric_form_selfadjoint_and_coercive():
    real = realize(SY, MESH)
    for t in TIMES:
        op = real.form(t)
        K = op.matrix()
        assert np.linalg.norm(K - K.conj().T) <= 1e-12 * np.linalg.norm(K)
        assert reduced_eigenvalues(op).min() >= 0.5 * real.alpha - 1e-9


def test_symmetric_lower_bounds():
    real = realize(SY, MESH)
    mV = real.grams.gram_V.diagonal()
    c = MESH.nodes
    floor = (SY.d - 1) ** 2 * np.sum(mV * c**2)
    for t in TIMES:
        tp = real.trajectory(t)
        assert tp.n1**2 >= floor * (1 - 1e-12)
        assert tp.n2 > 0 and not tp.degenerate


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_calibrated_constants_hold_at_sampled_times(spec):
    real = realize(spec, MESH)
    for t in TIMES:
        pf = real.partial_form(t)
        coerc = pf(1.0, pf.u0).real / real.grams.norm_V(pf.u0) ** 2
        assert coerc >= real.alpha * (1 - 1e-12)
        assert pf.norm <= real.spec.M * (1 + 1e-12)


def test_nonsymmetric_alpha_is_quotient():
    real = realize(NS, MESH)
    c = MESH.nodes
    ratio = np.sum(real.grams.gram_H.diagonal() * c**2) / np.sum(real.grams.gram_V.diagonal() * c**2)
    assert calibrate(real.spec, real.grams).alpha == pytest.approx(ratio, rel=1e-14)


# -- shift d ------------------------------------------------------------------------------


def test_choose_d_matches_root_oracle():
    f = lambda d: (d - 1) ** 2 / 3 - (d + 1) * 2 / 3 - 1 / 30
    root = brentq(f, 1.0 + 1e-9, 100.0)
    expected = np.ceil(root * 1000) / 1000
    assert choose_d(CounterexampleSpec(SYMMETRIC)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(4.259)


def test_choose_d_scaling_and_degenerate_phase():
    base = choose_d_from_integrals(1 / 3, 2 / 3)
    assert choose_d_from_integrals(7 * (1 / 3), 7 * (2 / 3)) == base
    d0 = choose_d_from_integrals(1 / 3, 0.0)
    assert d0 == pytest.approx(np.ceil((1 + np.sqrt(0.1)) * 1000) / 1000)
    for d in (1.0001, 1.5, 3.0):
        assert coercivity_lower_bound(d, 1 / 3, 0.0) > 0


def test_choose_d_rejects_divergent_integral():
    with pytest.raises(ValueError):
        choose_d(CounterexampleSpec(SYMMETRIC, profile_exp=0.1))


# -- conditions ------------------------------------------------------------------------------


def test_conditions_default_exponents():
    eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    cr = verify_conditions(NS, eps)
    np.testing.assert_allclose(cr.V_integral[-1], 2 / 3, rtol=1e-2)
    np.testing.assert_allclose(cr.Vdual_integral[-1], 2 / 3, rtol=1e-2)
    np.testing.assert_allclose(cr.H_truncated, np.log(1 / np.array(eps)), rtol=1e-10)
    assert all(cr.flags.values())


def test_symmetric_h_minus_half_log_bounded():
    eps = 10.0 ** -np.arange(2, 9)
    rem = [h_truncated(SY, e) - 0.5 * np.log(1 / e) for e in eps]
    assert np.ptp(rem[-3:]) < 1e-4
    assert all(verify_conditions(SY, eps).flags.values())


@pytest.mark.parametrize("profile_exp,t", [(1.0, 0.7), (1.0, 1.0), (1.2, 0.5)])
def test_sliced_h_integral_against_quadrature(profile_exp, t):
    spec = with_shift(CounterexampleSpec(SYMMETRIC, profile_exp=profile_exp))
    eps = 1e-3
    direct = integrate(lambda x: np.abs(spec.u_dot(t, x)) ** 2, build_mesh(eps, 256, 2.0),
                       phase_rate=lambda x: t * np.abs(spec.phase_derivative(x))).real
    assert sliced_h_integral(spec, eps, t) == pytest.approx(direct, rel=1e-8)


def test_conditions_require_decreasing_eps():
    with pytest.raises(ValueError):
        verify_conditions(NS, [1e-3, 1e-2])


# -- Hoelder -----------------------------------------------------------------------------------


def test_form_difference_vanishes_at_equal_times():
    real = realize(SY, MESH)
    assert difference_norm(real.form(0.4), real.form(0.4)) == 0.0


def test_holder_requires_enough_pairs():
    with pytest.raises(ValueError):
        holder_estimate(NS, MESH, taus=[1e-3, 1e-2], n_base=2)
    with pytest.raises(ValueError):
        holder_estimate(NS, MESH, taus=np.logspace(-3, -1, 10), n_base=4)


def test_trajectory_modulus_against_closed_form():
    # ||u(t) - u(s)||_V^2 = int x^(1/2) 4 sin^2(tau x^(-3/2) / 2) dx, bounded by 10/3 tau
    for tau in (1e-4, 1e-3, 1e-2, 1e-1):
        exact = trajectory_modulus_exact(NS, 0.2, 0.2 + tau, 1e-4)
        assert exact / tau <= 10 / 3
        direct = integrate(lambda x: 4 * x**0.5 * np.sin(0.5 * tau * x**-1.5) ** 2,
                           build_mesh(1e-4, 256, 2.0),
                           phase_rate=lambda x: tau * 1.5 * x**-2.5).real
        assert exact == pytest.approx(direct, rel=1e-10)


def test_holder_estimate_small_mesh():
    hr = holder_estimate(NS, build_mesh(1e-6, 512, 2.0), n_base=2, seed=3)
    assert hr.pairs.shape == (50, 4)
    assert np.all(hr.pairs[:, 2] >= 0)
    assert 0.4 < hr.fitted_exponent < 0.6
    assert hr.trajectory_modulus <= 10 / 3 + 0.1


# -- cut-off solution --------------------------------------------------------------------------


@pytest.mark.parametrize("spec", [NS, SY], ids=["nonsymmetric", "symmetric"])
def test_cutoff_solution(spec):
    real = realize(spec, MESH)
    assert np.all(cutoff_solution(spec, 0.0, MESH).w.coeffs == 0)
    for t in (0.5, 0.8, 1.0):
        cs = cutoff_solution(spec, t, MESH)
        np.testing.assert_array_equal(cs.w.coeffs, real.u(t).coeffs)
        np.testing.assert_array_equal(cs.rhs.coeffs, real.u(t).coeffs)
    rng = np.random.default_rng(4)
    v = _rand(rng, MESH.n_basis, 100)
    GH, G = real.grams.gram_H, real.grams.gram_V
    for t in TIMES:
        cs = real.cutoff_solution(t)
        op = real.form(t)
        res = (_pairing(GH, v, cs.w_dot.coeffs) + (G @ v).conj().T @ op.apply(cs.w.coeffs)
               - _pairing(GH, v, cs.rhs.coeffs))
        scale = np.max(np.abs(_pairing(GH, v, real.u_dot(t).coeffs))) + 1.0
        assert np.max(np.abs(res)) <= 1e-8 * scale
