"""Extension of sesquilinear forms given on U x V, dim U = 1, to V x V.

A bounded form b on U x V is stored through its Riesz operator T: U -> V,
b(u, v) = (Tu|v)_V.  The extensions built here act as a 2x2 matrix S on
W = span{U, TU} (orthonormal basis e1 in U, e2 orthogonal to it) and as
zero on the V-orthogonal complement of W, optionally plus a multiple of
the identity.  Coefficient conventions: vectors are nodal coefficient
arrays, (f|g)_V = g^H G f, and ``s_matrix[i, j] = (S e_j | e_i)_V``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as la

from .spaces import GramSet, GridFunction, _coeffs

ACCRETIVE = "accretive"
SELFADJOINT = "selfadjoint"
DEGENERATE_TOL = 1e-12


class BoundCertificate(NamedTuple):
    norm_bound: float
    coercivity_bound: float


@dataclass(frozen=True, eq=False)
class PartialForm:
    """b(lam * u0, v) = lam * (riesz_T_u0 | v)_V on span{u0} x V."""

    u0: GridFunction
    riesz_T_u0: GridFunction
    grams: GramSet = field(repr=False)

    def __post_init__(self):
        if self.u0.mesh is not self.grams.mesh or self.riesz_T_u0.mesh is not self.grams.mesh:
            if not (np.array_equal(self.u0.mesh.nodes, self.grams.mesh.nodes)
                    and np.array_equal(self.riesz_T_u0.mesh.nodes, self.grams.mesh.nodes)):
                raise ValueError("partial form data live on different meshes")
        if not self.grams.norm_V(self.u0) > 0.0:
            raise ValueError("u0 must be nonzero in V")

    def __call__(self, lam, v) -> complex:
        return lam * self.grams.inner_V(self.riesz_T_u0, v)

    @property
    def norm(self) -> float:
        """||T|| on U, which for dim U = 1 is ||T u0||_V / ||u0||_V."""
        return self.grams.norm_V(self.riesz_T_u0) / self.grams.norm_V(self.u0)

    def shifted(self, shift: float) -> "PartialForm":
        """Partial form of b - shift * (.|.)_V."""
        return PartialForm(self.u0, self.riesz_T_u0 - shift * self.u0, self.grams)


@dataclass(frozen=True)
class ExtensionConfig:
    mode: str = ACCRETIVE
    eps_lower: Optional[float] = None
    k_term: Optional[float] = None

    def __post_init__(self):
        if self.mode not in (ACCRETIVE, SELFADJOINT):
            raise ValueError(f"unknown extension mode {self.mode!r}")
        if self.mode == SELFADJOINT and not (self.eps_lower is not None and self.eps_lower > 0):
            raise ValueError("selfadjoint mode needs eps_lower > 0")
        if self.k_term is not None and self.k_term < 0:
            raise ValueError("k_term must be nonnegative")


@dataclass(frozen=True, eq=False)
class FormOperator:
    """a(v1, v2) = (S P v1 | P v2)_V + alpha_shift (v1|v2)_V.

    ``basis`` holds V-orthonormal columns spanning the range of P (one or
    two columns); ``s_matrix`` is S in that basis.
    """

    grams: GramSet = field(repr=False)
    basis: np.ndarray = field(repr=False)
    s_matrix: np.ndarray
    alpha_shift: float
    bound_cert: BoundCertificate
    mode: str = ACCRETIVE

    @property
    def basis_u(self) -> GridFunction:
        return GridFunction(self.grams.mesh, self.basis[:, 0])

    @property
    def basis_z(self) -> Optional[GridFunction]:
        if self.basis.shape[1] < 2:
            return None
        return GridFunction(self.grams.mesh, self.basis[:, 1])

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def weighted_basis(self) -> np.ndarray:
        """G E, so that (v|e_j)_V = (G E)^H v."""
        return self.grams.gram_V @ self.basis

    def apply(self, v) -> np.ndarray:
        """Coefficients of A v where a(v1, v2) = (A v1 | v2)_V; v may be (N,) or (N, m)."""
        v = _coeffs(v)
        coords = self.weighted_basis().conj().T @ v
        return self.basis @ (self.s_matrix @ coords) + self.alpha_shift * v

    def __call__(self, v1, v2) -> complex:
        return complex(np.vdot(_coeffs(v2), self.grams.gram_V @ self.apply(v1)))

    def low_rank_factors(self):
        """(B, s) with stiffness K = alpha_shift * G + B s B^H, B = G E."""
        return self.weighted_basis(), self.s_matrix

    def matrix(self) -> np.ndarray:
        """Dense stiffness K with K[i, j] = a(phi_j, phi_i)."""
        B, s = self.low_rank_factors()
        return self.alpha_shift * self.grams.gram_V.toarray() + B @ s @ B.conj().T

    def reduced_block(self) -> np.ndarray:
        """A on span(basis) in orthonormal coordinates, plus the complement value."""
        k = self.s_matrix.shape[0]
        return self.s_matrix + self.alpha_shift * np.eye(k)


class RangeSample(NamedTuple):
    points: np.ndarray


# --------------------------------------------------------------------------


def riesz_map(functional, grams: GramSet) -> GridFunction:
    """Vector g with (g|v)_V = v^H l for all v, i.e. gram_V g = l."""
    l = _coeffs(functional)
    g = grams.solve_V(l)
    res = np.linalg.norm(grams.gram_V @ g - l)
    scale = np.linalg.norm(l)
    if not np.all(np.isfinite(g)) or (scale > 0 and res > 1e-10 * scale):
        raise RuntimeError(f"Riesz solve failed, relative residual {res / scale:.3g}")
    return GridFunction(grams.mesh, g)


def _orthonormalize(grams: GramSet, columns: np.ndarray):
    """V-orthonormal Q and upper-triangular R with columns = Q R."""
    gram = columns.conj().T @ (grams.gram_V @ columns)
    gram = 0.5 * (gram + gram.conj().T)
    R = la.cholesky(gram, lower=False)
    return _right_solve(R, columns), R


def _right_solve(R, X):
    """X R^{-1} for upper-triangular R."""
    return la.solve_triangular(R, X.T, trans="T", lower=False).T


def trivial_extension(u_basis, t_images, grams: GramSet, tol: float = 1e-10) -> FormOperator:
    """Extend T: U -> U by zero on the orthogonal complement of U.

    Parameters
    ----------
    u_basis : array (N, k) or GridFunction
        Columns spanning U.
    t_images : array (N, k) or GridFunction
        Images T u_i of the columns.
    """
    U = _coeffs(u_basis).reshape(grams.mesh.n_basis, -1)
    TU = _coeffs(t_images).reshape(grams.mesh.n_basis, -1)
    Q, R = _orthonormalize(grams, U)
    TQ = _right_solve(R, TU)
    C = (grams.gram_V @ Q).conj().T @ TQ
    resid = TQ - Q @ C
    r = np.sqrt(abs(np.vdot(resid, grams.gram_V @ resid)))
    scale = np.sqrt(abs(np.vdot(TQ, grams.gram_V @ TQ)))
    if r > tol * max(scale, 1e-300):
        raise ValueError(
            f"T does not leave U invariant (off-subspace part {r:.3g}); use the rank-2 extension"
        )
    norm_T = float(np.linalg.norm(C, 2))
    herm = 0.5 * (C + C.conj().T)
    low = float(min(0.0, np.linalg.eigvalsh(herm).min()))
    mode = SELFADJOINT if np.allclose(C, C.conj().T, atol=1e-12 * max(norm_T, 1.0)) else ACCRETIVE
    return FormOperator(grams, Q, C, 0.0, BoundCertificate(norm_T, low), mode)


def _split_image(pf: PartialForm):
    """e1, the coordinate (Te1|e1), the orthogonal part of Te1 and ||T||."""
    g = pf.grams
    n0 = g.norm_V(pf.u0)
    e1 = pf.u0.coeffs / n0
    te1 = pf.riesz_T_u0.coeffs / n0
    tau11 = np.vdot(e1, g.gram_V @ te1)
    r = te1 - tau11 * e1
    r_norm = g.norm_V(r)
    t_norm = g.norm_V(te1)
    return e1, te1, tau11, r, r_norm, t_norm


def extend_accretive(pf: PartialForm) -> FormOperator:
    """Accretive extension with ||S|| <= sqrt(2) ||T||."""
    e1, te1, tau11, r, r_norm, t_norm = _split_image(pf)
    if tau11.real < -1e-12 * max(t_norm, 1e-300):
        raise ValueError(f"partial form is not accretive: Re (Te1|e1) = {tau11.real:.3g}")
    if r_norm <= DEGENERATE_TOL * t_norm:
        op = trivial_extension(e1, te1, pf.grams, tol=1e-8)
        return FormOperator(pf.grams, op.basis, op.s_matrix, 0.0,
                            BoundCertificate(t_norm, 0.0), ACCRETIVE)
    e2 = r / r_norm
    tau21 = r_norm  # (Te1|e2), real by construction of e2
    s = np.array([[tau11, -np.conj(tau21)], [tau21, 0.0]], dtype=complex)
    basis = np.column_stack([e1, e2])
    return FormOperator(pf.grams, basis, s, 0.0,
                        BoundCertificate(np.sqrt(2.0) * t_norm, 0.0), ACCRETIVE)


def extend_selfadjoint(pf: PartialForm, cfg: ExtensionConfig) -> FormOperator:
    """Self-adjoint extension with nonnegative numerical range.

    The (e2, e2) entry is ``cfg.k_term`` (default ||T||^2 / eps_lower); it must
    be at least |(Te1|e2)|^2 / (Te1|e1) for the range to stay nonnegative.
    """
    if cfg.mode != SELFADJOINT:
        cfg = ExtensionConfig(SELFADJOINT, cfg.eps_lower, cfg.k_term)
    u0, tu0 = pf.u0.coeffs, pf.riesz_T_u0.coeffs
    for name, vec in (("u0", u0), ("T u0", tu0)):
        if np.abs(vec.imag).max(initial=0.0) > 1e-10 * max(np.abs(vec).max(), 1e-300):
            raise ValueError(f"{name} is not real-valued")
    e1, te1, tau11, r, r_norm, t_norm = _split_image(pf)
    e1, te1, r = e1.real.astype(complex), te1.real.astype(complex), r.real.astype(complex)
    tau11 = float(tau11.real)
    eps = float(cfg.eps_lower)
    if tau11 < eps * (1.0 - 1e-12):
        raise ValueError(f"(Te1|e1) = {tau11:.6g} is below eps_lower = {eps:.6g}")
    k = t_norm**2 / eps if cfg.k_term is None else float(cfg.k_term)
    if r_norm <= DEGENERATE_TOL * t_norm:
        op = trivial_extension(e1, te1, pf.grams, tol=1e-8)
        s = op.s_matrix.real.astype(complex)
        return FormOperator(pf.grams, op.basis, s, 0.0,
                            BoundCertificate(t_norm, 0.0), SELFADJOINT)
    tau21 = r_norm
    if k < tau21**2 / tau11 * (1.0 - 1e-12):
        raise ValueError(
            f"k_term = {k:.6g} is too small; need at least {tau21**2 / tau11:.6g}"
        )
    s = np.array([[tau11, tau21], [tau21, k]], dtype=complex)
    basis = np.column_stack([e1, r / r_norm])
    bound = np.sqrt(2.0) * (t_norm + k)
    return FormOperator(pf.grams, basis, s, 0.0, BoundCertificate(bound, 0.0), SELFADJOINT)


def composite_bound(alpha: float, M: float) -> float:
    """Norm bound for the extension of a form with constants (alpha, M)."""
    m = M + 0.5 * alpha
    return np.sqrt(2.0) * (m + 2.0 / alpha * m**2) + 0.5 * alpha


def extend_form(pf: PartialForm, alpha: float, M: float, mode: str = ACCRETIVE,
                k_term: Optional[float] = None) -> FormOperator:
    """Extend b with |b| <= M and Re b(u,u) >= alpha ||u||^2 to a coercive form on V x V."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    g = pf.grams
    n0sq = g.norm_V(pf.u0) ** 2
    coerc = pf(1.0, pf.u0).real / n0sq
    if coerc < alpha * (1.0 - 1e-12):
        raise ValueError(f"Re b(u,u)/||u||^2 = {coerc:.6g} is below alpha = {alpha:.6g}")
    if pf.norm > M * (1.0 + 1e-12):
        raise ValueError(f"||b|| = {pf.norm:.6g} exceeds M = {M:.6g}")
    shifted = pf.shifted(0.5 * alpha)
    if mode == ACCRETIVE:
        inner_op = extend_accretive(shifted)
    elif mode == SELFADJOINT:
        inner_op = extend_selfadjoint(shifted, ExtensionConfig(SELFADJOINT, 0.5 * alpha, k_term))
    else:
        raise ValueError(f"unknown extension mode {mode!r}")
    cert = BoundCertificate(composite_bound(alpha, M), 0.5 * alpha)
    return FormOperator(g, inner_op.basis, inner_op.s_matrix, 0.5 * alpha, cert, mode)


# --------------------------------------------------------------------------


def operator_norm(op: FormOperator) -> float:
    """Exact V-operator norm of the rank-structured operator."""
    k = op.s_matrix.shape[0]
    block = np.linalg.norm(op.reduced_block(), 2)
    if op.dim > k:
        block = max(block, abs(op.alpha_shift))
    return float(block)


def reduced_eigenvalues(op: FormOperator) -> np.ndarray:
    """Eigenvalues of the Hermitian part on span(basis) plus the complement value."""
    blk = op.reduced_block()
    ev = np.linalg.eigvalsh(0.5 * (blk + blk.conj().T))
    if op.dim > blk.shape[0]:
        ev = np.append(ev, op.alpha_shift)
    return np.sort(ev)


def random_vectors(op: FormOperator, k: int, rng: np.random.Generator) -> np.ndarray:
    """k complex vectors mixing span(basis) with random full-space directions."""
    n, m = op.basis.shape
    y = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    z = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    z /= np.sqrt(np.einsum("ik,ik->k", z.conj(), op.grams.gram_V @ z).real)
    mix = rng.uniform(0.0, 2.0, size=k)
    return op.basis @ y + mix * np.linalg.norm(y, axis=0) * z


def rayleigh_quotients(op: FormOperator, w: np.ndarray) -> np.ndarray:
    Gw = op.grams.gram_V @ w
    num = np.einsum("ik,ik->k", Gw.conj(), op.apply(w))
    den = np.einsum("ik,ik->k", Gw.conj(), w).real
    return num / den


def numerical_range_sample(op: FormOperator, k: int = 1000, seed: int = 0) -> RangeSample:
    rng = np.random.default_rng(seed)
    pts = rayleigh_quotients(op, random_vectors(op, k, rng))
    if not np.all(np.isfinite(pts)):
        raise FloatingPointError("non-finite Rayleigh quotient")
    return RangeSample(pts)


def difference_norm(op_a: FormOperator, op_b: FormOperator) -> float:
    """Exact V-operator norm of A - B for two rank-structured operators on one mesh.

    A - B is a multiple of the identity plus an operator living on the
    joint span of both bases (dimension <= 4); the norm is computed there.
    """
    ka = op_a.basis.shape[1]
    C = np.column_stack([op_a.basis, op_b.basis])
    gram = C.conj().T @ (op_a.grams.gram_V @ C)
    gram = 0.5 * (gram + gram.conj().T)
    lam, vec = np.linalg.eigh(gram)
    keep = lam > 1e-13 * lam.max()
    lam, vec = lam[keep], vec[:, keep]
    # coordinates of the joint orthonormal basis against each operator's basis
    proj = (vec / np.sqrt(lam)).conj().T @ gram
    pa, pb = proj[:, :ka], proj[:, ka:]
    dshift = op_a.alpha_shift - op_b.alpha_shift
    D = pa @ op_a.s_matrix @ pa.conj().T - pb @ op_b.s_matrix @ pb.conj().T
    D = D + dshift * np.eye(D.shape[0])
    out = np.linalg.norm(D, 2)
    if op_a.dim > D.shape[0]:
        out = max(out, abs(dshift))
    return float(out)
