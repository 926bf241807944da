import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxreglab.extension import (
    ACCRETIVE,
    SELFADJOINT,
    BoundCertificate,
    ExtensionConfig,
    FormOperator,
    PartialForm,
    composite_bound,
    difference_norm,
    extend_accretive,
    extend_form,
    extend_selfadjoint,
    numerical_range_sample,
    operator_norm,
    random_vectors,
    rayleigh_quotients,
    reduced_eigenvalues,
    riesz_map,
    trivial_extension,
)
from maxreglab.spaces import GridFunction, build_grams, build_mesh

MESH = build_mesh(0.05, 24, 2.0)
GRAMS = build_grams(MESH, 1.5)
N = MESH.n_basis


def _rand(rng, *shape, real=False):
    x = rng.standard_normal(shape)
    return x + 0j if real else x + 1j * rng.standard_normal(shape)


def _orthonormal_pair(rng, real=False):
    a, b = _rand(rng, N, real=real), _rand(rng, N, real=real)
    e1 = a / GRAMS.norm_V(a)
    b = b - GRAMS.inner_V(b, e1) * e1
    return e1, b / GRAMS.norm_V(b)


def _pf(u0, tu0):
    return PartialForm(GridFunction(MESH, u0), GridFunction(MESH, tu0), GRAMS)


def _accretive_pf(rng):
    u0, g = _rand(rng, N), _rand(rng, N)
    tau = GRAMS.inner_V(g, u0).real / GRAMS.norm_V(u0) ** 2
    return _pf(u0, g + (max(0.0, -tau) + rng.uniform(0, 1)) * u0)


def _selfadjoint_pf(rng, eps):
    u0, g = _rand(rng, N, real=True), _rand(rng, N, real=True)
    tau = GRAMS.inner_V(g, u0).real / GRAMS.norm_V(u0) ** 2
    return _pf(u0, g + (max(0.0, eps - tau) + rng.uniform(0, 1)) * u0)


# -- Riesz map -----------------------------------------------------------------


def test_riesz_map_examples():
    G = GRAMS.gram_V.toarray()
    np.testing.assert_allclose(riesz_map(G[:, 7], GRAMS).coeffs, np.eye(N)[7], atol=1e-12)
    assert np.all(riesz_map(np.zeros(N), GRAMS).coeffs == 0)


def test_riesz_map_represents_functional():
    rng = np.random.default_rng(0)
    ell = _rand(rng, N)
    g = riesz_map(ell, GRAMS)
    for _ in range(100):
        v = _rand(rng, N)
        assert abs(GRAMS.inner_V(g, v) - np.vdot(v, ell)) <= 1e-9 * np.linalg.norm(ell) * np.linalg.norm(v)


# -- partial forms ---------------------------------------------------------------


def test_partial_form_linear_in_u():
    rng = np.random.default_rng(1)
    pf = _accretive_pf(rng)
    for _ in range(100):
        v, lam = _rand(rng, N), complex(*rng.standard_normal(2))
        assert np.isclose(pf(lam, v), lam * pf(1.0, v), rtol=1e-12)


def test_partial_form_rejects_zero():
    with pytest.raises(ValueError):
        _pf(np.zeros(N), np.ones(N))


# -- trivial extension -----------------------------------------------------------


def test_trivial_extension_identity_is_projection():
    rng = np.random.default_rng(2)
    u = _rand(rng, N)
    op = trivial_extension(u, u, GRAMS)
    assert operator_norm(op) == pytest.approx(1.0, rel=1e-12)
    pts = numerical_range_sample(op, 1000, seed=3).points
    assert pts.real.min() >= -1e-12 and pts.real.max() <= 1 + 1e-12
    v = _rand(rng, N)
    proj = GRAMS.inner_V(v, u) / GRAMS.norm_V(u) ** 2 * u
    np.testing.assert_allclose(op.apply(v), proj, rtol=1e-10, atol=1e-12)


def test_trivial_extension_scaling():
    rng = np.random.default_rng(4)
    u = _rand(rng, N)
    op = trivial_extension(u, 2 * u, GRAMS)
    assert operator_norm(op) == pytest.approx(2.0, rel=1e-12)
    pts = numerical_range_sample(op, 1000, seed=5).points
    assert pts.real.min() >= -1e-12 and pts.real.max() <= 2 + 1e-12


def test_trivial_extension_random_accretive_on_2d_subspace():
    rng = np.random.default_rng(6)
    U = _rand(rng, N, 2)
    C = _rand(rng, 2, 2)
    C = C - min(0.0, np.linalg.eigvalsh(0.5 * (C + C.conj().T)).min()) * np.eye(2)
    op = trivial_extension(U, U @ C, GRAMS)
    pts = numerical_range_sample(op, 1000, seed=7).points
    assert pts.real.min() >= -1e-10


def test_trivial_extension_rejects_non_invariant():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError):
        trivial_extension(_rand(rng, N), _rand(rng, N), GRAMS)


# -- accretive extension ---------------------------------------------------------


def test_accretive_invariant_case_is_diagonal():
    e1, _ = _orthonormal_pair(np.random.default_rng(9))
    op = extend_accretive(_pf(e1, e1))
    np.testing.assert_allclose(op.s_matrix, [[1.0]], atol=1e-12)
    pts = numerical_range_sample(op, 1000, seed=0).points
    assert pts.real.min() >= -1e-12 and pts.real.max() <= 1 + 1e-12


def test_accretive_two_by_two_case():
    rng = np.random.default_rng(10)
    e1, e2 = _orthonormal_pair(rng)
    op = extend_accretive(_pf(e1, e1 + e2))
    np.testing.assert_allclose(op.s_matrix, [[1, -1], [1, 0]], atol=1e-12)
    lam = _rand(rng, 2, 1000)
    w = e1[:, None] * lam[0] + e2[:, None] * lam[1]
    Gw = GRAMS.gram_V @ w
    re = np.einsum("ik,ik->k", Gw.conj(), op.apply(w)).real
    np.testing.assert_allclose(re, np.abs(lam[0]) ** 2, rtol=1e-10, atol=1e-12)
    assert re.min() >= -1e-12


def test_accretive_matches_explicit_matrix():
    rng = np.random.default_rng(11)
    pf = _accretive_pf(rng)
    op = extend_accretive(pf)
    e1 = pf.u0.coeffs / GRAMS.norm_V(pf.u0)
    te1 = pf.riesz_T_u0.coeffs / GRAMS.norm_V(pf.u0)
    e2 = op.basis[:, 1]
    np.testing.assert_allclose(op.basis[:, 0], e1, rtol=1e-13)
    t11, t21 = GRAMS.inner_V(te1, e1), GRAMS.inner_V(te1, e2)
    np.testing.assert_allclose(op.s_matrix, [[t11, -np.conj(t21)], [t21, 0]], rtol=1e-12, atol=1e-14)
    assert abs(GRAMS.inner_V(op.basis_u, op.basis_z)) <= 1e-10
    assert GRAMS.norm_V(op.basis_z) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_accretive_certificate(seed):
    rng = np.random.default_rng(seed)
    pf = _accretive_pf(rng)
    op = extend_accretive(pf)
    assert operator_norm(op) <= np.sqrt(2.0) * pf.norm + 1e-10
    assert op.bound_cert.norm_bound == pytest.approx(np.sqrt(2.0) * pf.norm, rel=1e-14)
    assert numerical_range_sample(op, 1000, seed=seed).points.real.min() >= -1e-10


def test_accretive_rejects_non_accretive():
    rng = np.random.default_rng(12)
    u0 = _rand(rng, N)
    with pytest.raises(ValueError):
        extend_accretive(_pf(u0, -u0))


# -- self-adjoint extension ------------------------------------------------------


def test_selfadjoint_invariant_case():
    e1, _ = _orthonormal_pair(np.random.default_rng(13), real=True)
    op = extend_selfadjoint(_pf(e1, 0.3 * e1), ExtensionConfig(SELFADJOINT, 0.3))
    # dim W = 1 routes to the trivial extension, which is 0 on the complement
    np.testing.assert_allclose(op.s_matrix, [[0.3]], atol=1e-12)
    assert reduced_eigenvalues(op).min() >= 0


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0, 3.0, 10.0])
def test_selfadjoint_two_by_two_eigen_oracle(t):
    e1, e2 = _orthonormal_pair(np.random.default_rng(14), real=True)
    op = extend_selfadjoint(_pf(e1, e1 + t * e2), ExtensionConfig(SELFADJOINT, 1.0))
    if t == 0.0:  # T e1 = e1: invariant case
        np.testing.assert_allclose(op.s_matrix, [[1.0]], atol=1e-12)
        return
    np.testing.assert_allclose(op.s_matrix, [[1, t], [t, 1 + t * t]], rtol=1e-12, atol=1e-13)
    ev = np.linalg.eigvalsh(np.array([[1, t], [t, 1 + t * t]]))
    assert ev.min() >= -1e-12
    assert np.prod(ev) == pytest.approx(1.0, rel=1e-9)  # det = 1 + t^2 - t^2


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 2.0))
@settings(max_examples=100, deadline=None)
def test_selfadjoint_certificate(seed, eps):
    rng = np.random.default_rng(seed)
    pf = _selfadjoint_pf(rng, eps)
    op = extend_selfadjoint(pf, ExtensionConfig(SELFADJOINT, eps))
    t = pf.norm
    assert operator_norm(op) <= np.sqrt(2.0) * (t + t * t / eps) + 1e-10
    assert np.allclose(op.s_matrix.imag, 0) and np.allclose(op.s_matrix, op.s_matrix.T, atol=1e-12)
    pts = numerical_range_sample(op, 1000, seed=seed).points
    assert pts.real.min() >= -1e-10 and np.abs(pts.imag).max() <= 1e-10
    K = op.matrix()
    assert np.linalg.norm(K - K.conj().T) <= 1e-12 * np.linalg.norm(K)


def test_selfadjoint_rejections():
    rng = np.random.default_rng(15)
    u0 = _rand(rng, N, real=True)
    with pytest.raises(ValueError):
        extend_selfadjoint(_pf(u0 + 1j * u0, u0), ExtensionConfig(SELFADJOINT, 0.1))
    with pytest.raises(ValueError):
        extend_selfadjoint(_pf(u0, 0.05 * u0), ExtensionConfig(SELFADJOINT, 0.1))
    pf = _selfadjoint_pf(rng, 0.5)
    with pytest.raises(ValueError):
        extend_selfadjoint(pf, ExtensionConfig(SELFADJOINT, 0.5, k_term=1e-6))
    with pytest.raises(ValueError):
        ExtensionConfig(SELFADJOINT, None)


# -- form extension --------------------------------------------------------------


def test_extend_form_shifted_identity_is_coercive():
    rng = np.random.default_rng(16)
    u0 = _rand(rng, N)
    alpha = 0.7
    op = extend_form(_pf(u0, alpha * u0), alpha, alpha)
    w = _rand(rng, N, 1000)
    assert rayleigh_quotients(op, w).real.min() >= alpha / 2 - 1e-12


@pytest.mark.parametrize("mode", [ACCRETIVE, SELFADJOINT])
def test_extend_form_bounds_and_restriction(mode):
    rng = np.random.default_rng(17)
    for _ in range(20):
        real = mode == SELFADJOINT
        u0 = _rand(rng, N, real=real)
        g = _rand(rng, N, real=real)
        g = g - GRAMS.inner_V(g, u0) / GRAMS.norm_V(u0) ** 2 * u0 + 1.3 * u0
        pf = _pf(u0, g)
        alpha = pf(1.0, pf.u0).real / GRAMS.norm_V(u0) ** 2
        M = pf.norm
        op = extend_form(pf, alpha, M, mode)
        bound = np.sqrt(2) * (M + alpha / 2 + 2 / alpha * (M + alpha / 2) ** 2) + alpha / 2
        assert op.bound_cert == BoundCertificate(pytest.approx(bound), pytest.approx(alpha / 2))
        assert operator_norm(op) <= bound
        v1, v2 = _rand(rng, N, 1000), _rand(rng, N, 1000)
        G = GRAMS.gram_V
        a = np.einsum("ik,ik->k", (G @ v2).conj(), op.apply(v1))
        nv = lambda v: np.sqrt(np.einsum("ik,ik->k", v.conj(), G @ v).real)
        assert np.all(np.abs(a) <= bound * nv(v1) * nv(v2))
        assert rayleigh_quotients(op, random_vectors(op, 1000, rng)).real.min() >= alpha / 2 - 1e-9
        v = _rand(rng, N, 100)
        a_u = np.einsum("ik,ik->k", (G @ v).conj(), op.apply(u0[:, None] * np.ones(100)))
        b_u = (G @ v).conj().T @ g
        assert np.all(np.abs(a_u - b_u) <= 1e-10 * M * GRAMS.norm_V(u0) * nv(v))


def test_extend_form_checks_preconditions():
    rng = np.random.default_rng(18)
    u0 = _rand(rng, N)
    pf = _pf(u0, u0)
    with pytest.raises(ValueError):
        extend_form(pf, 2.0, 5.0)
    with pytest.raises(ValueError):
        extend_form(pf, 0.5, 0.5)
    with pytest.raises(ValueError):
        extend_form(pf, 0.0, 5.0)


def test_composite_bound_value():
    assert composite_bound(1.0, 1.0) == pytest.approx(np.sqrt(2) * (1.5 + 2 * 2.25) + 0.5)


# -- norms and ranges ------------------------------------------------------------


def _op(s, shift, basis=None):
    if basis is None:
        basis = np.column_stack(_orthonormal_pair(np.random.default_rng(19)))
    return FormOperator(GRAMS, basis, np.asarray(s, dtype=complex), shift, BoundCertificate(0, 0))


def test_zero_and_scalar_operators():
    zero = _op(np.zeros((2, 2)), 0.0)
    assert operator_norm(zero) == 0
    assert np.all(numerical_range_sample(zero, 50).points == 0)
    c = _op(np.zeros((2, 2)), 0.8)
    assert operator_norm(c) == pytest.approx(0.8)
    np.testing.assert_allclose(numerical_range_sample(c, 50).points, 0.8, rtol=1e-13)


def test_operator_norm_matches_dense_generalized_eigenproblem():
    rng = np.random.default_rng(20)
    op = _op(_rand(rng, 2, 2), 0.4)
    K = op.matrix()
    G = GRAMS.gram_V.toarray()
    L = np.linalg.cholesky(G)
    Li = np.linalg.inv(L)
    # V-norm of A with K = G A equals the 2-norm of L^-1 K L^-H
    dense = np.linalg.norm(Li @ K @ Li.conj().T, 2)
    assert operator_norm(op) == pytest.approx(dense, rel=1e-8)


def test_random_selfadjoint_range_within_reduced_spectrum():
    rng = np.random.default_rng(21)
    s = rng.standard_normal((2, 2))
    op = _op(s + s.T, 0.3)
    ev = reduced_eigenvalues(op)
    pts = numerical_range_sample(op, 2000, seed=1).points
    assert pts.real.min() >= ev.min() - 1e-12 and pts.real.max() <= ev.max() + 1e-12


def test_rank_structure():
    rng = np.random.default_rng(22)
    op = extend_accretive(_accretive_pf(rng))
    K = op.matrix() - op.alpha_shift * GRAMS.gram_V.toarray()
    sv = np.linalg.svd(K, compute_uv=False)
    assert sv[2] <= 1e-12 * sv[0]


def test_difference_norm_against_dense():
    rng = np.random.default_rng(23)
    a = extend_form(_accretive_pf(rng), 0.1, 100.0)
    b = FormOperator(GRAMS, np.column_stack(_orthonormal_pair(rng)), _rand(rng, 2, 2), 0.9,
                     BoundCertificate(0, 0))
    L = np.linalg.cholesky(GRAMS.gram_V.toarray())
    Li = np.linalg.inv(L)
    dense = np.linalg.norm(Li @ (a.matrix() - b.matrix()) @ Li.conj().T, 2)
    assert difference_norm(a, b) == pytest.approx(dense, rel=1e-8)
    assert difference_norm(a, a) <= 1e-12
