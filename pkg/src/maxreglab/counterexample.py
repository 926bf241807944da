"""Explicit non-autonomous forms without L^2 maximal regularity.

Trajectories on [eps, 1] with w(x) = x^-a, phi(x) = x^-b, c(x) = x^c:

    nonsymmetric:  u(t, x) = c(x) exp(i t phi(x))
    symmetric:     u(t, x) = c(x) (sin(t phi(x)) + d)

With f = u the trajectory prescribes a form on span{u(t)} x V,
b(t, u(t), v) = (u(t)|v)_H - <u'(t), v>, which is extended to V x V by
:func:`maxreglab.extension.extend_form`.  The discrete triple uses lumped
weighted mass matrices; nodal sums then inherit the pointwise identities
of the continuous construction (constant norms in the nonsymmetric case,
the |d| +- 1 bounds in the symmetric case).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate as sci_integrate
from scipy.special import sici

from .extension import (
    ACCRETIVE,
    SELFADJOINT,
    FormOperator,
    PartialForm,
    difference_norm,
    extend_form,
)
from .spaces import (
    GramSet,
    GridFunction,
    Mesh,
    build_grams,
    build_mesh,
    integrate,
    oscillation_check,
)

NONSYMMETRIC = "nonsymmetric"
SYMMETRIC = "symmetric"
D_MARGIN = 0.1


@dataclass(frozen=True)
class CounterexampleSpec:
    variant: str = NONSYMMETRIC
    weight_exp: float = 1.5
    phase_exp: float = 1.5
    profile_exp: float = 1.0
    shift_d: Optional[float] = None
    horizon_T: float = 1.0
    alpha: Optional[float] = None
    M: Optional[float] = None

    def __post_init__(self):
        if self.variant not in (NONSYMMETRIC, SYMMETRIC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if self.variant == SYMMETRIC and self.shift_d is not None and not abs(self.shift_d) > 1:
            raise ValueError("symmetric variant needs |shift_d| > 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.M is not None and not self.M > 0:
            raise ValueError("M must be positive")

    @property
    def symmetric(self) -> bool:
        return self.variant == SYMMETRIC

    @property
    def d(self) -> float:
        if self.shift_d is None:
            raise ValueError("shift_d is unresolved; use with_shift(spec) first")
        return float(self.shift_d)

    # pointwise closed forms ------------------------------------------------
    def weight(self, x):
        return np.asarray(x, dtype=float) ** (-self.weight_exp)

    def phase(self, x):
        return np.asarray(x, dtype=float) ** (-self.phase_exp)

    def phase_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return -self.phase_exp * x ** (-self.phase_exp - 1.0)

    def profile(self, x):
        return np.asarray(x, dtype=float) ** self.profile_exp

    def u(self, t, x):
        c, ph = self.profile(x), self.phase(x)
        if self.symmetric:
            return c * (np.sin(t * ph) + self.d) + 0j
        return c * np.exp(1j * t * ph)

    def u_dot(self, t, x):
        c, ph = self.profile(x), self.phase(x)
        if self.symmetric:
            return c * ph * np.cos(t * ph) + 0j
        return 1j * ph * c * np.exp(1j * t * ph)

    def udot_sq_time_integral(self, x, t0, t1):
        """int_{t0}^{t1} |u'(t, x)|^2 dt, pointwise in x."""
        ph = self.phase(x)
        amp = (ph * self.profile(x)) ** 2
        if not self.symmetric:
            return amp * (t1 - t0)
        return amp * (0.5 * (t1 - t0) + (np.sin(2 * t1 * ph) - np.sin(2 * t0 * ph)) / (4 * ph))


def cutoff(t, T):
    """C^1 cut-off: sin^2(pi t / T) on [0, T/2], 1 afterwards; returns (value, derivative)."""
    t = np.asarray(t, dtype=float)
    inside = t < 0.5 * T
    val = np.where(inside, np.sin(np.pi * t / T) ** 2, 1.0)
    der = np.where(inside, np.pi / T * np.sin(2 * np.pi * t / T), 0.0)
    return val, der


# --------------------------------------------------------------------------
# shift d


def _converged_integral(fn, tol=1e-8):
    """int_0^1 fn by truncation eps = 1e-2, 1e-4, ...; ValueError if not converged."""
    prev = None
    for k in range(1, 9):
        val = integrate(fn, build_mesh(10.0 ** (-2 * k), 64, 1.0)).real
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val
        prev = val
    raise ValueError("integral does not converge as epsilon -> 0 (check the exponents)")


def coercivity_lower_bound(d: float, int_c2: float, int_c2phi: float) -> float:
    """(|d|-1)^2 int c^2 - (|d|+1) int c^2 |phi|."""
    return (abs(d) - 1.0) ** 2 * int_c2 - (abs(d) + 1.0) * int_c2phi


def choose_d_from_integrals(int_c2: float, int_c2phi: float, margin: float = D_MARGIN,
                            grid: float = 1e-3) -> float:
    """Smallest d > 1 on the grid with lower bound >= margin * int c^2."""
    q = int_c2phi / int_c2
    # (d-1)^2 - (d+1) q - margin >= 0
    p = 2.0 + q
    root = 0.5 * (p + np.sqrt(p * p - 4.0 * (1.0 - q - margin)))
    d = max(np.ceil(root / grid - 1e-9) * grid, 1.0 + grid)
    while coercivity_lower_bound(d, int_c2, int_c2phi) < margin * int_c2:
        d += grid
    return float(round(d, 12))


def choose_d(spec: CounterexampleSpec, margin: float = D_MARGIN) -> float:
    int_c2 = _converged_integral(lambda x: spec.profile(x) ** 2)
    int_c2phi = _converged_integral(lambda x: spec.profile(x) ** 2 * np.abs(spec.phase(x)))
    return choose_d_from_integrals(int_c2, int_c2phi, margin)


def with_shift(spec: CounterexampleSpec) -> CounterexampleSpec:
    if spec.symmetric and spec.shift_d is None:
        return replace(spec, shift_d=choose_d(spec))
    return spec


# --------------------------------------------------------------------------
# discrete realization


class Constants(NamedTuple):
    alpha: float
    M: float
    eps_coercive: float


def calibrate(spec: CounterexampleSpec, grams: GramSet) -> Constants:
    """Uniform-in-time coercivity and bound constants of the partial forms.

    Both are rigorous for the lumped discretization at every t, not only at
    sampled times.
    """
    if not grams.lumped:
        raise ValueError("calibration assumes lumped Gram matrices")
    x = grams.mesh.nodes
    mH, mV = grams.gram_H.diagonal(), grams.gram_V.diagonal()
    c, ph = spec.profile(x), np.abs(spec.phase(x))
    riesz_w = mH**2 / mV
    cV2 = np.sum(mV * c**2)
    if not spec.symmetric:
        alpha = np.sum(mH * c**2) / cV2
        M = np.sqrt(np.sum(riesz_w * c**2 * (1.0 + ph**2)) / cV2)
        return Constants(float(alpha), float(M), float(np.sum(mH * c**2)))
    d = abs(spec.d)
    eps_c = (d - 1.0) ** 2 * np.sum(mH * c**2) - (d + 1.0) * np.sum(mH * c**2 * ph)
    if eps_c <= 0:
        raise ValueError(f"shift d = {spec.d} does not give a coercive partial form")
    alpha = eps_c / ((d + 1.0) ** 2 * cV2)
    upper = np.sqrt(np.sum(riesz_w * ((d + 1.0) * np.abs(c) + ph * np.abs(c)) ** 2))
    M = upper / ((d - 1.0) * np.sqrt(cV2))
    return Constants(float(alpha), float(M), float(eps_c))


class TrajectoryPoint(NamedTuple):
    t: float
    u: GridFunction
    u_dot: GridFunction
    z: GridFunction
    n1: float
    n2: float
    norms: dict
    degenerate: bool


class ConditionReport(NamedTuple):
    epsilons: list
    V_integral: list
    Vdual_integral: list
    H_truncated: list
    flags: dict


class HolderReport(NamedTuple):
    pairs: np.ndarray  # columns: tau, s, form difference, ||u(t)-u(s)||_V^2 / tau
    fitted_exponent: float
    fitted_constant: float
    trajectory_modulus: float


class CutoffSample(NamedTuple):
    w: GridFunction
    w_dot: GridFunction
    rhs: GridFunction


class Realization:
    """A counterexample spec discretized on one mesh (lumped triple)."""

    def __init__(self, spec: CounterexampleSpec, mesh: Mesh):
        spec = with_shift(spec)
        self.mesh = mesh
        self.grams = build_grams(mesh, spec.weight_exp, lumped=True)
        self.constants = calibrate(spec, self.grams)
        spec = replace(
            spec,
            alpha=self.constants.alpha if spec.alpha is None else spec.alpha,
            M=self.constants.M if spec.M is None else spec.M,
        )
        self.spec = spec
        self.mode = SELFADJOINT if spec.symmetric else ACCRETIVE
        m = spec.M + 0.5 * spec.alpha
        # one K for all t, bounding ||T_t||^2 / (alpha/2) uniformly
        self.k_term = 2.0 / spec.alpha * m**2 if spec.symmetric else None
        self.oscillation = oscillation_check(mesh, spec.horizon_T, spec.phase_derivative)

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    def u(self, t) -> GridFunction:
        return GridFunction(self.mesh, self.spec.u(t, self.mesh.nodes))

    def u_dot(self, t) -> GridFunction:
        return GridFunction(self.mesh, self.spec.u_dot(t, self.mesh.nodes))

    def riesz(self, u: GridFunction, udot: GridFunction) -> GridFunction:
        """Discrete Riesz representative of v -> (u - u'|v)_H."""
        return GridFunction(self.mesh, self.grams.solve_V(self.grams.gram_H @ (u - udot).coeffs))

    def trajectory(self, t) -> TrajectoryPoint:
        g = self.grams
        u, udot = self.u(t), self.u_dot(t)
        rep = self.riesz(u, udot)
        n1 = g.norm_V(u)
        beta = (g.norm_H(u) ** 2 - g.gram_H.dot(udot.coeffs) @ u.coeffs.conj()) / n1**2
        z = rep - beta * u
        n2 = g.norm_V(z)
        t_u = g.norm_V(rep - 0.5 * self.alpha * u)
        norms = {
            "u_H": g.norm_H(u),
            "u_V": n1,
            "udot_H_truncated": g.norm_H(udot),
            "udot_Vdual": g.norm_Vdual(udot),
        }
        return TrajectoryPoint(float(t), u, udot, z, n1, n2, norms, n2 <= 1e-12 * t_u)

    def partial_form(self, t) -> PartialForm:
        u, udot = self.u(t), self.u_dot(t)
        return PartialForm(u, self.riesz(u, udot), self.grams)

    def form(self, t) -> FormOperator:
        return extend_form(self.partial_form(t), self.spec.alpha, self.spec.M, self.mode,
                           self.k_term)

    def cutoff_solution(self, t) -> CutoffSample:
        cut, dcut = cutoff(t, self.spec.horizon_T)
        u, udot = self.u(t), self.u_dot(t)
        return CutoffSample(float(cut) * u, float(dcut) * u + float(cut) * udot,
                            float(cut + dcut) * u)

    def u_V_sq(self, times) -> np.ndarray:
        """||u(t)||_V^2 at many times at once."""
        times = np.asarray(times, dtype=float)
        vals = self.spec.u(times[:, None], self.mesh.nodes[None, :])
        return np.abs(vals) ** 2 @ self.grams.gram_V.diagonal()


@functools.lru_cache(maxsize=16)
def realize(spec: CounterexampleSpec, mesh: Mesh) -> Realization:
    return Realization(spec, mesh)


def eval_trajectory(spec: CounterexampleSpec, t: float, mesh: Mesh) -> TrajectoryPoint:
    return realize(spec, mesh).trajectory(t)


def partial_form_at(spec: CounterexampleSpec, t: float, mesh: Mesh) -> PartialForm:
    return realize(spec, mesh).partial_form(t)


def compute_z(spec: CounterexampleSpec, t: float, mesh: Mesh) -> GridFunction:
    return realize(spec, mesh).trajectory(t).z


def assemble_form(spec: CounterexampleSpec, t: float, mesh: Mesh) -> FormOperator:
    return realize(spec, mesh).form(t)


def cutoff_solution(spec: CounterexampleSpec, t: float, mesh: Mesh) -> CutoffSample:
    return realize(spec, mesh).cutoff_solution(t)


def sample_times(T: float, n: int = 20) -> np.ndarray:
    """n Chebyshev points on [0, T] plus both endpoints, ascending."""
    k = np.arange(n)
    cheb = 0.5 * T * (1.0 - np.cos((2 * k + 1) * np.pi / (2 * n)))
    return np.concatenate([[0.0], cheb, [T]])


# --------------------------------------------------------------------------
# integrability conditions


def sliced_h_integral(spec: CounterexampleSpec, eps: float, t: float) -> float:
    """int_eps^1 |u'(t, x)|^2 dx for the symmetric variant at a fixed t > 0.

    Substituting y = t x^-b turns the integrand into y^q cos^2(y) up to a
    constant; the oscillatory half is a cosine integral.
    """
    b = spec.phase_exp
    p = 2.0 * spec.profile_exp - 2.0 * b
    q = -(p + 1.0) / b - 1.0
    pref = t ** ((p + 1.0) / b) / b
    lo, hi = t, t * eps ** (-b)
    if abs(q + 1.0) < 1e-14:
        mean = 0.5 * np.log(hi / lo)
        osc = 0.5 * (sici(2 * hi)[1] - sici(2 * lo)[1])
    elif q < 0:
        mean = 0.5 * (hi ** (q + 1) - lo ** (q + 1)) / (q + 1)
        tail = lambda a: sci_integrate.quad(lambda y: y**q, a, np.inf, weight="cos", wvar=2.0)[0]
        osc = 0.5 * (tail(lo) - tail(hi))
    else:
        mesh = build_mesh(eps, 256, 2.0)
        return float(integrate(lambda x: np.abs(spec.u_dot(t, x)) ** 2, mesh,
                               phase_rate=lambda x: t * np.abs(spec.phase_derivative(x))).real)
    return float(pref * (mean + osc))


def h_truncated(spec: CounterexampleSpec, eps: float, n_cells: int = 256, gamma: float = 2.0,
                t_slice: Optional[float] = None) -> float:
    if spec.symmetric:
        t = spec.horizon_T if t_slice is None else t_slice
        return sliced_h_integral(with_shift(spec), eps, t)
    mesh = build_mesh(eps, n_cells, gamma)
    return float(integrate(lambda x: (spec.phase(x) * spec.profile(x)) ** 2, mesh).real)


def per_decade_increments(epsilons, values) -> np.ndarray:
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    return np.diff(vals) / np.log10(eps[:-1] / eps[1:])


def verify_conditions(spec: CounterexampleSpec, epsilons: Sequence[float], n_cells: int = 256,
                      gamma: float = 2.0, t_slice: Optional[float] = None) -> ConditionReport:
    """Truncated integrals for (V), (V') and (H) along a decreasing epsilon sequence."""
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    Vs, Vds, Hs = [], [], []
    for e in eps:
        mesh = build_mesh(e, n_cells, gamma)
        Vs.append(float(integrate(lambda x: spec.weight(x) * spec.profile(x) ** 2, mesh).real))
        Vds.append(float(integrate(
            lambda x: (spec.phase(x) * spec.profile(x)) ** 2 / spec.weight(x), mesh).real))
        Hs.append(h_truncated(spec, e, n_cells, gamma, t_slice))
    flags = {}
    if len(eps) >= 2:
        flags["V_finite"] = abs(Vs[-1] - Vs[-2]) <= 1e-2 * abs(Vs[-1])
        flags["Vdual_finite"] = abs(Vds[-1] - Vds[-2]) <= 1e-2 * abs(Vds[-1])
        flags["H_increasing"] = bool(np.all(np.diff(Hs) > 0))
        inc = per_decade_increments(eps, Hs)
        ratios = inc[1:] / inc[:-1]
        tail = ratios[-3:] if ratios.size else ratios
        flags["H_log_divergent"] = bool(
            flags["H_increasing"] and tail.size > 0 and np.all((tail >= 0.8) & (tail <= 1.2))
        )
    return ConditionReport(eps, Vs, Vds, Hs, flags)


# --------------------------------------------------------------------------
# Hoelder regularity


def holder_estimate(spec: CounterexampleSpec, mesh: Mesh, taus: Optional[Sequence[float]] = None,
                    n_base: int = 8, seed: int = 0) -> HolderReport:
    """Modulus of t -> A(t) in the V-operator norm and of t -> u(t) in V.

    For every gap tau, ``n_base`` seeded base times s in [0, T - tau] are
    paired with t = s + tau.  The exponent is the least-squares slope of
    log sup_s ||A(s + tau) - A(s)|| against log tau.
    """
    real = realize(spec, mesh)
    T = real.spec.horizon_T
    if taus is None:
        taus = np.logspace(-5, -2, 25) * T
    taus = np.asarray(sorted(taus), dtype=float)
    if taus.size < 2 or taus.size * n_base < 20:
        raise ValueError("need at least 20 pairs")
    if np.log10(taus[-1] / taus[0]) < 3.0 - 1e-9:
        raise ValueError("gaps must span at least three decades")
    rng = np.random.default_rng(seed)
    rows = []
    for tau in taus:
        for s in rng.uniform(0.0, T - tau, size=n_base):
            a_s, a_t = real.form(s), real.form(s + tau)
            diff = difference_norm(a_t, a_s)
            du = real.grams.norm_V(real.u(s + tau) - real.u(s)) ** 2 / tau
            rows.append((tau, s, diff, du))
    pairs = np.array(rows)
    sup = np.array([pairs[pairs[:, 0] == tau, 2].max() for tau in taus])
    slope, intercept = np.polyfit(np.log(taus), np.log(sup), 1)
    return HolderReport(pairs, float(slope), float(np.exp(intercept)), float(pairs[:, 3].max()))


def trajectory_modulus_exact(spec: CounterexampleSpec, s: float, t: float, eps: float) -> float:
    """||u(t) - u(s)||_V^2 on [eps, 1] by oscillation-resolving quadrature."""
    spec = with_shift(spec)
    mesh = build_mesh(eps, 256, 2.0)
    rate = lambda x: abs(t - s) * np.abs(spec.phase_derivative(x)) + 1e-300
    val = integrate(lambda x: spec.weight(x) * np.abs(spec.u(t, x) - spec.u(s, x)) ** 2, mesh,
                    phase_rate=rate)
    return float(val.real)
