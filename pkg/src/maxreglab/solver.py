"""Theta-scheme for the weak Cauchy problem and the maximal-regularity diagnostics.

The discrete problem is posed in the H pairing,

    M_H (u_{k+1} - u_k) / dt + K(t_{k+theta}) u_{k+theta} = M_H f(t_{k+theta}),

with stiffness K = alpha_shift * G_V + B s B^H taken from the rank-structured
form operator.  Each step factors the sparse part once and handles the
rank-two part with the Woodbury identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import splu

from .counterexample import (
    CounterexampleSpec,
    Realization,
    cutoff,
    per_decade_increments,
    realize,
    sample_times,
)
from .extension import FormOperator
from .spaces import GramSet, Mesh, _coeffs, build_mesh, cell_quadrature, load_vector


class MonotonicityError(RuntimeError):
    """A table that must grow strictly did not; usually quadrature under-resolution."""


@dataclass(frozen=True)
class TimeGrid:
    horizon_T: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError("n_steps must be an integer >= 2")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_T, self.n_steps + 1)


@dataclass(frozen=True)
class SolverConfig:
    theta: float = 1.0
    tol: float = 1e-10

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(eq=False)
class SolveResult:
    grid: TimeGrid
    theta: float
    grams: GramSet = field(repr=False)
    trajectory: np.ndarray = field(repr=False)  # (n_steps + 1, N)
    stage_times: np.ndarray = field(repr=False)
    stage_u_V_sq: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def discrete_derivative(self) -> np.ndarray:
        return np.diff(self.trajectory, axis=0) / self.grid.dt

    def _sq_norms(self, gram, rows):
        return np.einsum("kn,kn->k", rows.conj(), (gram @ rows.T).T).real

    @property
    def norms(self) -> dict:
        g, dt = self.grams, self.grid.dt
        uV = self._sq_norms(g.gram_V, self.trajectory)
        uH = self._sq_norms(g.gram_H, self.trajectory)
        d = self.discrete_derivative
        return {
            "u_L2V": float(np.sqrt(dt * (uV.sum() - 0.5 * (uV[0] + uV[-1])))),
            "udot_L2Vdual": float(np.sqrt(dt * self._sq_norms(g.gram_Vdual, d).sum())),
            "udot_L2H": float(np.sqrt(dt * self._sq_norms(g.gram_H, d).sum())),
            "u_LinfH": float(np.sqrt(uH.max())),
        }

    def udot_l2h_sq(self, t_from: float) -> float:
        """sum of dt ||(u_{k+1} - u_k)/dt||_H^2 over steps starting at t >= t_from."""
        start = self.grid.nodes[:-1] >= t_from - 1e-12 * self.grid.horizon_T
        d = self.discrete_derivative[start]
        return float(self.grid.dt * self._sq_norms(self.grams.gram_H, d).sum())


class _Stepper:
    def __init__(self, grams: GramSet, theta: float, dt: float):
        self.grams, self.theta, self.dt = grams, theta, dt
        self._lu = {}

    def base(self, shift):
        if shift not in self._lu:
            A0 = self.grams.gram_H + (self.theta * self.dt * shift) * self.grams.gram_V
            self._lu[shift] = (A0, splu(A0.tocsc()))
        return self._lu[shift]

    def solve(self, op: FormOperator, rhs: np.ndarray):
        A0, lu = self.base(op.alpha_shift)
        sol = lambda b: lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(
            np.ascontiguousarray(b.imag))
        B, s = op.low_rank_factors()
        C = self.theta * self.dt * s
        y = sol(rhs)
        Z = sol(B)
        cap = np.eye(C.shape[0]) + C @ (B.conj().T @ Z)
        x = y - Z @ np.linalg.solve(cap, C @ (B.conj().T @ y))
        lhs = A0 @ x + B @ (C @ (B.conj().T @ x))
        scale = np.linalg.norm(rhs)
        res = np.linalg.norm(lhs - rhs) / scale if scale > 0 else np.linalg.norm(lhs)
        return x, float(res)


def _stiffness_apply(op: FormOperator, v):
    B, s = op.low_rank_factors()
    return op.alpha_shift * (op.grams.gram_V @ v) + B @ (s @ (B.conj().T @ v))


def solve_wacp(form_provider: Callable[[float], FormOperator], f: Callable, u0, grid: TimeGrid,
               grams: GramSet, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Theta-scheme for <u', v> + a(t, u, v) = (f|v)_H, u(0) = u0.

    ``f(t)`` returns a GridFunction or coefficient vector; ``form_provider(t)``
    the FormOperator of a(t, ., .).
    """
    theta, dt = cfg.theta, grid.dt
    MH = grams.gram_H
    stepper = _Stepper(grams, theta, dt)
    u = np.array(_coeffs(u0), dtype=complex)
    traj = np.empty((grid.n_steps + 1, u.size), dtype=complex)
    traj[0] = u
    stage_t = grid.nodes[:-1] + theta * dt
    stage_uV = np.empty(grid.n_steps)
    worst = 0.0
    for k, ts in enumerate(stage_t):
        op = form_provider(ts)
        fk = _coeffs(f(ts))
        rhs = MH @ u + dt * (MH @ fk)
        if theta < 1.0:
            rhs = rhs - (1.0 - theta) * dt * _stiffness_apply(op, u)
        new, res = stepper.solve(op, rhs)
        if not np.all(np.isfinite(new)) or res > cfg.tol:
            raise np.linalg.LinAlgError(
                f"linear solve failed at t = {ts:.6g} (relative residual {res:.3g}, "
                f"epsilon = {grams.mesh.epsilon:.3g}, dt = {dt:.3g})"
            )
        worst = max(worst, res)
        stage = theta * new + (1.0 - theta) * u
        stage_uV[k] = np.vdot(stage, grams.gram_V @ stage).real
        u = new
        traj[k + 1] = u
    return SolveResult(grid, theta, grams, traj, stage_t, stage_uV, worst)


class EnergyReport(NamedTuple):
    lhs: float
    rhs: float
    margin: float
    passed: bool


def energy_inequality_check(result: SolveResult, f: Callable, u0, alpha: float) -> EnergyReport:
    """alpha * sum dt ||u_{k+theta}||_V^2 <= sum dt ||f_{k+theta}||_{V'}^2 / alpha + ||u0||_H^2.

    ``alpha`` is the coercivity constant of the form used in the solve.
    """
    g, dt = result.grams, result.grid.dt
    fV = 0.0
    for ts in result.stage_times:
        fk = _coeffs(f(ts))
        fV += np.vdot(fk, g.gram_Vdual @ fk).real
    u0 = _coeffs(u0)
    lhs = alpha * dt * result.stage_u_V_sq.sum()
    rhs = dt * fV / alpha + np.vdot(u0, g.gram_H @ u0).real
    margin = rhs - lhs
    return EnergyReport(float(lhs), float(rhs), float(margin),
                        bool(margin >= -1e-12 * max(abs(rhs), 1e-300)))


# --------------------------------------------------------------------------
# counterexample runs


def time_rule_steps(spec: CounterexampleSpec, eps: float, min_steps: int = 64) -> int:
    """Smallest even step count with T * phi(eps) * dt <= pi / 4."""
    T = spec.horizon_T
    dt_max = np.pi / (4.0 * T * float(spec.phase(eps)))
    n = max(int(np.ceil(T / dt_max)), min_steps)
    return n + (n % 2)


def solve_cutoff(real: Realization, n_steps: int, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Solve with u0 = 0 and the right-hand side (cut + cut') u of the cut-off solution."""
    T = real.spec.horizon_T

    def rhs(t):
        c, dc = cutoff(t, T)
        return float(c + dc) * real.u(t)

    zero = np.zeros(real.mesh.n_basis, dtype=complex)
    return solve_wacp(real.form, rhs, zero, TimeGrid(T, n_steps), real.grams, cfg)


def cutoff_error_L2V(real: Realization, result: SolveResult) -> float:
    """L^2(V) distance (trapezoid in time) to the interpolated closed form cut(t) u(t)."""
    t = result.grid.nodes
    cut, _ = cutoff(t, real.spec.horizon_T)
    exact = cut[:, None] * real.spec.u(t[:, None], real.mesh.nodes[None, :])
    err = result.trajectory - exact
    sq = np.einsum("kn,kn->k", err.conj(), (real.grams.gram_V @ err.T).T).real
    return float(np.sqrt(result.grid.dt * (sq.sum() - 0.5 * (sq[0] + sq[-1]))))


def rhs_l2v_norm(real: Realization, n_time: int = 400) -> float:
    """||(cut + cut') u||_{L^2(0,T;V)} for the discrete trajectory (Gauss in time)."""
    T = real.spec.horizon_T
    xi, wi = np.polynomial.legendre.leggauss(n_time // 2)
    parts = []
    for a, b in ((0.0, 0.5 * T), (0.5 * T, T)):  # cut is only C^1 at T/2
        t = a + 0.5 * (b - a) * (xi + 1.0)
        c, dc = cutoff(t, T)
        parts.append(0.5 * (b - a) * np.sum(wi * (c + dc) ** 2 * real.u_V_sq(t)))
    return float(np.sqrt(sum(parts)))


def udot_l2h_sq_closed_form(spec: CounterexampleSpec, mesh: Mesh) -> float:
    """int_{T/2}^T ||u'(t)||_H^2 dt on [eps, 1], time integral taken in closed form."""
    T = spec.horizon_T
    q = cell_quadrature(mesh)
    return float(np.sum(q.weights * spec.udot_sq_time_integral(q.points, 0.5 * T, T)))


class DivergenceRow(NamedTuple):
    epsilon: float
    n_cells: int
    udot_l2h_sq: float
    increment: Optional[float]
    rhs_l2v: float
    solver_udot_l2h_sq: Optional[float]


class DivergenceTable(NamedTuple):
    variant: str
    rows: list

    def per_decade(self) -> np.ndarray:
        return per_decade_increments([r.epsilon for r in self.rows],
                                     [r.udot_l2h_sq for r in self.rows])

    def increment_ratios(self) -> np.ndarray:
        inc = self.per_decade()
        return inc[1:] / inc[:-1]


def mr_divergence(spec: CounterexampleSpec, eps_sequence: Sequence[float], n_cells: int = 1024,
                  gamma: float = 2.0, crosscheck_min_eps: float = 1e-2,
                  crosscheck_n_cells: int = 256, theta: float = 1.0) -> DivergenceTable:
    """||w'||^2_{L^2(T/2, T; H)} of the cut-off solution along a decreasing epsilon sweep.

    The tabulated value comes from the closed-form trajectory.  For
    epsilon >= ``crosscheck_min_eps`` the theta-scheme is also run with the
    time rule of :func:`time_rule_steps` and its difference quotients give
    the cross-check column.
    """
    eps = [float(e) for e in eps_sequence]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_sequence must be strictly decreasing")
    rows = []
    prev = None
    for e in eps:
        mesh = build_mesh(e, n_cells, gamma)
        val = udot_l2h_sq_closed_form(spec, mesh)
        real = realize(spec, mesh)
        solver_val = None
        if e >= crosscheck_min_eps:
            small = realize(spec, build_mesh(e, crosscheck_n_cells, gamma))
            res = solve_cutoff(small, time_rule_steps(spec, e), SolverConfig(theta))
            solver_val = res.udot_l2h_sq(0.5 * spec.horizon_T)
        inc = None if prev is None else val - prev
        if inc is not None and not inc > 0:
            raise MonotonicityError(
                f"||w'||^2 did not grow from eps = {rows[-1].epsilon:g} to {e:g}"
            )
        rows.append(DivergenceRow(e, n_cells, val, inc, rhs_l2v_norm(real), solver_val))
        prev = val
    return DivergenceTable(spec.variant, rows)


# --------------------------------------------------------------------------
# defining identity


class ResidualReport(NamedTuple):
    residual: float
    dual_norm: float
    per_time: np.ndarray  # columns: t, random-set residual, dual norm
    oscillation: dict
    flagged: bool


def residual_functional(real: Realization, t: float) -> np.ndarray:
    """r_i = <u'(t), phi_i> + a(t, u_h(t), phi_i) - (u(t)|phi_i)_H with exact loads.

    Convention: r(v) = v^H r.  The loads integrate the closed-form u, u'
    against the basis with oscillation-resolving quadrature.
    """
    spec, mesh = real.spec, real.mesh
    rate_fn = (lambda x: t * np.abs(spec.phase_derivative(x))) if t > 0 else None
    load_udot = load_vector(lambda x: spec.u_dot(t, x), mesh, rate_fn)
    load_u = load_vector(lambda x: spec.u(t, x), mesh, rate_fn)
    op = real.form(t)
    return load_udot + _stiffness_apply(op, real.u(t).coeffs) - load_u


def residual_check(spec: CounterexampleSpec, mesh: Mesh, times: Optional[Sequence[float]] = None,
                   n_test: int = 100, seed: int = 0) -> ResidualReport:
    """Defining identity tested against discrete v, normalized by ||v||_V (||u||_V + ||u'||_V')."""
    real = realize(spec, mesh)
    g = real.grams
    if times is None:
        times = sample_times(real.spec.horizon_T)
    rng = np.random.default_rng(seed)
    n = mesh.n_basis
    V = rng.standard_normal((n, n_test)) + 1j * rng.standard_normal((n, n_test))
    v_norm = np.sqrt(np.einsum("ik,ik->k", V.conj(), g.gram_V @ V).real)
    rows = []
    for t in times:
        r = residual_functional(real, t)
        tp = real.trajectory(t)
        scale = tp.norms["u_V"] + tp.norms["udot_Vdual"]
        rand = np.max(np.abs(V.conj().T @ r) / v_norm) / scale
        dual = np.sqrt(abs(np.vdot(r, g.solve_V(r)))) / scale
        rows.append((t, rand, dual))
    per_time = np.array(rows)
    osc = real.oscillation
    return ResidualReport(float(per_time[:, 1].max()), float(per_time[:, 2].max()), per_time, osc,
                          not osc["resolved"])
