"""Verification routines behind every CLI command and the acceptance suite.

Each ``check_*`` function runs one family of checks for an
:class:`~maxreglab.config.ExperimentConfig` and appends verdicts, tables and
warnings to a :class:`~maxreglab.report.Report`.
"""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .counterexample import (
    NONSYMMETRIC,
    SYMMETRIC,
    holder_estimate,
    realize,
    sample_times,
    verify_conditions,
)
from .extension import (
    ACCRETIVE,
    ExtensionConfig,
    PartialForm,
    composite_bound,
    extend_accretive,
    extend_selfadjoint,
    operator_norm,
    random_vectors,
    rayleigh_quotients,
    reduced_eigenvalues,
)
from .report import DIVERGENCE_HEADER, Report, Table, divergence_csv_rows
from .solver import (
    MonotonicityError,
    SolverConfig,
    cutoff_error_L2V,
    energy_inequality_check,
    mr_divergence,
    residual_check,
    solve_cutoff,
    time_rule_steps,
)
from .spaces import GridFunction, build_grams, build_mesh

# tolerances of the acceptance criteria
EXT_NORM_TOL = 1e-10
EXT_RANGE_TOL = 1e-10
RESTRICTION_TOL = 1e-10
SYMMETRY_TOL = 1e-12
ASYMMETRY_MIN = 1e-3
COERCIVITY_TOL = 1e-9
IDENTITY_TOL = 1e-8
INVARIANT_TOL = 1e-9
HOLDER_MIN_PAIRS = 200
HOLDER_MODULUS_MAX = 10.0 / 3.0 + 0.1
HOLDER_EXPONENT_RANGE = (0.45, 0.55)
LIMIT_REL_TOL = 1e-2
RATIO_RANGE = (0.8, 1.2)
RESIDUAL_MAX = 1e-6
RHS_SPREAD_MAX = 0.05
CONVERGENCE_FACTOR_MIN = 1.5

TIME_RULE = "uniform time grid with dt <= pi / (4 T phi(eps))"


def _batched_forms(op, v1, v2):
    """a(v1_k, v2_k) for column batches."""
    G = op.grams.gram_V
    return np.einsum("ik,ik->k", (G @ v2).conj(), op.apply(v1))


def _v_norms(grams, v):
    return np.sqrt(np.einsum("ik,ik->k", v.conj(), grams.gram_V @ v).real)


# --------------------------------------------------------------------------
# extension certificates


def _random_partial_form(grams, rng, mode, degenerate):
    n = grams.mesh.n_basis
    if mode == ACCRETIVE:
        u0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        u0 = rng.standard_normal(n) + 0j
        g = rng.standard_normal(n) + 0j
    if degenerate:
        g = 0.0 * g
    u_sq = grams.norm_V(u0) ** 2
    tau = grams.inner_V(g, u0).real / u_sq
    eps_lower = rng.uniform(0.05, 1.0)
    floor = 0.0 if mode == ACCRETIVE else eps_lower
    c = max(0.0, floor - tau) + rng.uniform(0.0, 0.5) + (0.1 if degenerate else 0.0)
    g = g + c * u0
    if mode == ACCRETIVE and degenerate:
        g = g * np.exp(1j * rng.uniform(-1.2, 1.2))
    pf = PartialForm(GridFunction(grams.mesh, u0), GridFunction(grams.mesh, g), grams)
    return pf, eps_lower


def check_extension(cfg: ExperimentConfig, rep: Report) -> None:
    """Certificates of the 1-D extensions on seeded random partial forms."""
    mesh = build_mesh(0.1, 16, cfg.grading_gamma)
    grams = build_grams(mesh, cfg.weight_exp)
    rng = np.random.default_rng(cfg.seed)
    stats = {m: {"excess": -np.inf, "min_re": np.inf, "max_im": 0.0, "cases": 0}
             for m in ("accretive", "selfadjoint")}
    restriction = 0.0
    violations = 0
    for trial in range(cfg.extension_trials):
        mode = "accretive" if trial % 2 == 0 else "selfadjoint"
        pf, eps_lower = _random_partial_form(grams, rng, mode, degenerate=trial % 25 == 24)
        t_norm = pf.norm
        if mode == "accretive":
            op = extend_accretive(pf)
            bound = np.sqrt(2.0) * t_norm
        else:
            op = extend_selfadjoint(pf, ExtensionConfig("selfadjoint", eps_lower))
            bound = np.sqrt(2.0) * (t_norm + t_norm**2 / eps_lower)
        st = stats[mode]
        st["cases"] += 1
        excess = operator_norm(op) - bound
        rq = rayleigh_quotients(op, random_vectors(op, cfg.rayleigh_samples, rng))
        min_re, max_im = float(rq.real.min()), float(np.abs(rq.imag).max())
        st["excess"] = max(st["excess"], excess)
        st["min_re"] = min(st["min_re"], min_re)
        st["max_im"] = max(st["max_im"], max_im)
        v = rng.standard_normal((mesh.n_basis, 100)) + 1j * rng.standard_normal((mesh.n_basis, 100))
        u0 = np.repeat(pf.u0.coeffs[:, None], 100, axis=1)
        a_val = _batched_forms(op, u0, v)
        b_val = (grams.gram_V @ v).conj().T @ pf.riesz_T_u0.coeffs
        scale = t_norm * grams.norm_V(pf.u0) * _v_norms(grams, v)
        err = float(np.max(np.abs(a_val - b_val) / scale))
        restriction = max(restriction, err)
        bad = excess > EXT_NORM_TOL or min_re < -EXT_RANGE_TOL or err > RESTRICTION_TOL
        if mode == "selfadjoint":
            bad = bad or max_im > EXT_RANGE_TOL
        violations += int(bad)
    for mode, st in stats.items():
        if not st["cases"]:
            continue
        rep.add(f"extension.{mode}.norm_excess", st["excess"], EXT_NORM_TOL, "<=",
                f"max ||S^|| - certified bound over {st['cases']} cases")
        rep.add(f"extension.{mode}.min_re_rayleigh", st["min_re"], -EXT_RANGE_TOL, ">=",
                f"{cfg.rayleigh_samples} samples per case")
        if mode == "selfadjoint":
            rep.add("extension.selfadjoint.max_abs_im_rayleigh", st["max_im"], EXT_RANGE_TOL, "<=")
    rep.add("extension.restriction_error", restriction, RESTRICTION_TOL, "<=",
            "|a(u0, v) - b(u0, v)| relative, 100 v per case")
    rep.add("extension.violations", violations, 0, "==", f"{cfg.extension_trials} random cases")


# --------------------------------------------------------------------------
# assembled counterexample forms


def _asymmetry(op) -> float:
    """||K - K^H||_F / ||K||_F for K = shift * G + B s B^H, without forming K."""
    B, s = op.low_rank_factors()
    G = op.grams.gram_V
    R = np.linalg.qr(B, mode="r")
    skew = np.linalg.norm(R @ (s - s.conj().T) @ R.conj().T, "fro")
    low = np.linalg.norm(R @ s @ R.conj().T, "fro") ** 2
    cross = 2.0 * op.alpha_shift * np.trace(s @ (B.conj().T @ (G @ B))).real
    diag = op.alpha_shift**2 * G.multiply(G).sum()
    return float(skew / np.sqrt(diag + cross + low))


def _operator_asymmetry(op) -> float:
    """||A - A*||_V / ||A||_V; A - A* lives on span(basis), where it is s - s^H."""
    s = op.s_matrix
    return float(np.linalg.norm(s - s.conj().T, 2) / operator_norm(op))


def _oscillation_warning(rep, real, label):
    osc = real.oscillation
    if not osc["resolved"]:
        rep.warnings.append(
            f"{label}: oscillation rule not met on mesh (eps={real.mesh.epsilon:g}, "
            f"n={real.mesh.n_cells}): max phase increment {osc['max_phase_increment']:.3g} "
            f"> {osc['limit']:.3g}"
        )


def check_form(cfg: ExperimentConfig, rep: Report) -> None:
    """Symmetry, coercivity, boundedness and the defining identity of A(t)."""
    mesh = build_mesh(cfg.form_eps, cfg.form_n_cells, cfg.grading_gamma)
    for variant in cfg.variants:
        real = realize(cfg.spec(variant), mesh)
        _oscillation_warning(rep, real, f"verify-form/{variant}")
        g = real.grams
        rng = np.random.default_rng(cfg.seed)
        alpha = real.alpha
        bound = composite_bound(alpha, real.spec.M)
        times = sample_times(real.spec.horizon_T)
        asym = op_asym = max_ratio = max_opnorm = max_im = identity = orth = 0.0
        min_rq = min_eig = np.inf
        inv = {"n1": [], "n2": [], "u_H": [], "udot_Vdual": []}
        for t in times:
            op = real.form(t)
            asym = max(asym, _asymmetry(op))
            op_asym = max(op_asym, _operator_asymmetry(op))
            w = random_vectors(op, cfg.form_samples, rng)
            rq = rayleigh_quotients(op, w)
            min_rq = min(min_rq, float(rq.real.min()))
            max_im = max(max_im, float(np.max(np.abs(rq.imag))))
            min_eig = min(min_eig, float(reduced_eigenvalues(op).min()))
            v1 = random_vectors(op, cfg.form_samples, rng)
            v2 = random_vectors(op, cfg.form_samples, rng)
            ratio = np.abs(_batched_forms(op, v1, v2)) / (_v_norms(g, v1) * _v_norms(g, v2))
            max_ratio = max(max_ratio, float(ratio.max()))
            max_opnorm = max(max_opnorm, operator_norm(op))
            # defining identity <u', v> + a(u, v) = (u|v)_H against 100 random v
            tp = real.trajectory(t)
            v = rng.standard_normal((mesh.n_basis, 100)) + 1j * rng.standard_normal((mesh.n_basis, 100))
            u = np.repeat(tp.u.coeffs[:, None], 100, axis=1)
            pair = (g.gram_H @ v).conj().T @ tp.u_dot.coeffs
            a_val = _batched_forms(op, u, v)
            h_val = (g.gram_H @ v).conj().T @ tp.u.coeffs
            scale = np.abs(pair) + np.abs(a_val) + np.abs(h_val)
            identity = max(identity, float(np.max(np.abs(pair + a_val - h_val) / scale)))
            if not tp.degenerate:
                orth = max(orth, abs(g.inner_V(tp.u, tp.z)) / (tp.n1 * tp.n2))
            inv["n1"].append(tp.n1)
            inv["n2"].append(tp.n2)
            inv["u_H"].append(tp.norms["u_H"])
            inv["udot_Vdual"].append(tp.norms["udot_Vdual"])
        nt = len(times)
        if variant == SYMMETRIC:
            rep.add(f"form.{variant}.asymmetry", asym, SYMMETRY_TOL, "<=",
                    f"assembled matrix, relative ||K - K^H||_F, {nt} sampled t")
            rep.add(f"form.{variant}.operator_asymmetry", op_asym, SYMMETRY_TOL, "<=",
                    "||A - A*||_V / ||A||_V")
            rep.add(f"form.{variant}.max_abs_im_rayleigh", max_im, 1e-10, "<=")
        else:
            rep.add(f"form.{variant}.operator_asymmetry", op_asym, ASYMMETRY_MIN, ">=",
                    f"||A - A*||_V / ||A||_V over {nt} sampled t; matrix measure "
                    f"||K - K^H||_F / ||K||_F = {asym:.3g}")
        rep.add(f"form.{variant}.min_rayleigh", min_rq, 0.5 * alpha - COERCIVITY_TOL, ">=",
                f"{cfg.form_samples} samples at each of {nt} t; alpha = {alpha:.6g}")
        rep.add(f"form.{variant}.min_reduced_eigenvalue", min_eig, 0.5 * alpha - COERCIVITY_TOL, ">=")
        rep.add(f"form.{variant}.max_bound_ratio", max_ratio, bound, "<=",
                f"|a(v1,v2)| / (||v1|| ||v2||); composite constant with M = {real.spec.M:.6g}")
        rep.add(f"form.{variant}.max_operator_norm", max_opnorm, bound, "<=")
        rep.add(f"form.{variant}.defining_identity", identity, IDENTITY_TOL, "<=",
                "relative, 100 random v per t")
        rep.add(f"form.{variant}.z_orthogonality", orth, INVARIANT_TOL, "<=")
        if variant == NONSYMMETRIC:
            spread = max((max(v) - min(v)) / max(v) for v in inv.values())
            rep.add(f"form.{variant}.norm_invariance", spread, INVARIANT_TOL, "<=",
                    "n1, n2, ||u||_H, ||u'||_V' over sampled t")
        else:
            rep.add(f"form.{variant}.min_z_norm", min(inv["n2"]), 0.0, ">=",
                    "z(t) never vanishes on the sampled t", passed=min(inv["n2"]) > 0)


# --------------------------------------------------------------------------
# conditions (V), (V'), (H)


def _power_limit(p):
    """int_0^1 x^p dx, infinite for p <= -1."""
    return 1.0 / (p + 1.0) if p > -1.0 else np.inf


def check_conditions(cfg: ExperimentConfig, rep: Report) -> None:
    eps = list(cfg.eps_sweep)
    a, b, c = cfg.weight_exp, cfg.phase_exp, cfg.profile_exp
    limits = {"V": _power_limit(2 * c - a), "Vdual": _power_limit(2 * c - 2 * b + a)}
    for variant in cfg.variants:
        spec = cfg.spec(variant)
        if len(eps) < 2:
            rep.add(f"conditions.{variant}.sweep_length", len(eps), 2, ">=")
            continue
        cr = verify_conditions(spec, eps, n_cells=cfg.n_cells, gamma=cfg.grading_gamma)
        rep.tables[f"conditions_{variant}"] = Table(
            ["epsilon", "V_integral", "Vdual_integral", "H_truncated"],
            [[e, v, vd, h] for e, v, vd, h in zip(eps, cr.V_integral, cr.Vdual_integral,
                                                 cr.H_truncated)],
        )
        for name, vals in (("V", cr.V_integral), ("Vdual", cr.Vdual_integral)):
            ref = limits[name]
            err = abs(vals[-1] - ref) / ref if np.isfinite(ref) else np.inf
            rep.add(f"conditions.{variant}.{name}_limit_error", err, LIMIT_REL_TOL, "<=",
                    f"value {vals[-1]:.6g} at eps={eps[-1]:g} vs limit {ref:.6g}")
        H = np.asarray(cr.H_truncated)
        rep.add(f"conditions.{variant}.H_strictly_increasing", bool(np.all(np.diff(H) > 0)), True, "==")
        inc = np.diff(H) / np.log10(np.asarray(eps[:-1]) / np.asarray(eps[1:]))
        ratios = (inc[1:] / inc[:-1])[-3:]
        if ratios.size < 3:
            rep.add(f"conditions.{variant}.H_ratio_count", int(ratios.size), 3, ">=",
                    "need at least five epsilons")
            continue
        rep.add(f"conditions.{variant}.H_ratio_min", float(ratios.min()), RATIO_RANGE[0], ">=",
                "per-decade increment ratios, last three decades")
        rep.add(f"conditions.{variant}.H_ratio_max", float(ratios.max()), RATIO_RANGE[1], "<=")


# --------------------------------------------------------------------------
# Hoelder regularity


def check_holder(cfg: ExperimentConfig, rep: Report) -> None:
    mesh = build_mesh(cfg.holder_eps, cfg.holder_n_cells, cfg.grading_gamma)
    for variant in cfg.variants:
        spec = cfg.spec(variant)
        hr = holder_estimate(spec, mesh, n_base=cfg.holder_pairs_per_gap, seed=cfg.seed)
        rep.tables[f"holder_{variant}"] = Table(
            ["tau", "s", "form_difference", "trajectory_modulus"], hr.pairs.tolist())
        rep.add(f"holder.{variant}.pairs", int(hr.pairs.shape[0]), HOLDER_MIN_PAIRS, ">=")
        rep.add(f"holder.{variant}.trajectory_modulus", hr.trajectory_modulus, HOLDER_MODULUS_MAX,
                "<=", "sup ||u(t) - u(s)||_V^2 / |t - s|")
        rep.add(f"holder.{variant}.fitted_exponent", hr.fitted_exponent, list(HOLDER_EXPONENT_RANGE),
                "in", f"fitted constant {hr.fitted_constant:.4g}")


# --------------------------------------------------------------------------
# defining identity under refinement


def check_residual(cfg: ExperimentConfig, rep: Report) -> None:
    for variant in cfg.variants:
        spec = cfg.spec(variant)
        rows = []
        for n in cfg.residual_levels:
            mesh = build_mesh(cfg.residual_eps, n, cfg.grading_gamma)
            rr = residual_check(spec, mesh, seed=cfg.seed)
            if rr.flagged:
                rep.warnings.append(f"residual/{variant}: mesh n={n} violates the oscillation rule")
            rows.append([n, rr.residual, rr.dual_norm])
        rep.tables[f"residual_{variant}"] = Table(["n_cells", "residual", "dual_norm"], rows)
        res = np.array([r[1] for r in rows])
        dual = np.array([r[2] for r in rows])
        rep.add(f"residual.{variant}.finest", float(res[-1]), RESIDUAL_MAX, "<=",
                f"100 random v, eps={cfg.residual_eps:g}, n={rows[-1][0]}")
        rep.add(f"residual.{variant}.finest_dual_norm", float(dual[-1]), RESIDUAL_MAX, "<=")
        ratio = float(np.max(res[1:] / res[:-1]))
        rep.add(f"residual.{variant}.max_level_ratio", ratio, 1.0, "<=",
                "strictly decreasing over the refinement levels", passed=ratio < 1.0)


# --------------------------------------------------------------------------
# maximal-regularity failure


def check_divergence(cfg: ExperimentConfig, rep: Report) -> None:
    eps = list(cfg.eps_sweep)
    for variant in cfg.variants:
        spec = cfg.spec(variant)
        name = f"divergence_{variant}"
        try:
            table = mr_divergence(spec, eps, n_cells=cfg.n_cells, gamma=cfg.grading_gamma,
                                  crosscheck_min_eps=cfg.crosscheck_min_eps,
                                  crosscheck_n_cells=cfg.crosscheck_n_cells, theta=cfg.theta)
        except MonotonicityError as exc:
            rep.tables[name] = Table(list(DIVERGENCE_HEADER), [])
            rep.add(f"mr.{variant}.strictly_increasing", False, True, "==", str(exc))
            continue
        rows = table.rows
        rep.tables[name] = Table(list(DIVERGENCE_HEADER), divergence_csv_rows(
            [(r.epsilon, r.n_cells, r.udot_l2h_sq) for r in rows]))
        rep.tables[f"{name}_detail"] = Table(
            ["epsilon", "rhs_l2v", "solver_udot_l2h_sq"],
            [[r.epsilon, r.rhs_l2v, r.solver_udot_l2h_sq] for r in rows])
        if len(rows) < 2:
            rep.add(f"mr.{variant}.sweep_length", len(rows), 2, ">=")
            continue
        rep.add(f"mr.{variant}.strictly_increasing", True, True, "==",
                f"from {rows[0].udot_l2h_sq:.4g} to {rows[-1].udot_l2h_sq:.4g}")
        ratios = table.increment_ratios()[-3:]
        if ratios.size < 3:
            rep.add(f"mr.{variant}.ratio_count", int(ratios.size), 3, ">=")
        else:
            rep.add(f"mr.{variant}.increment_ratio_min", float(ratios.min()), RATIO_RANGE[0], ">=",
                    "per-decade increments, last three decades")
            rep.add(f"mr.{variant}.increment_ratio_max", float(ratios.max()), RATIO_RANGE[1], "<=")
        rhs = np.array([r.rhs_l2v for r in rows])
        rep.add(f"mr.{variant}.rhs_l2v_spread", float((rhs.max() - rhs.min()) / rhs.max()),
                RHS_SPREAD_MAX, "<=", f"||f||_L2(V) in [{rhs.min():.6g}, {rhs.max():.6g}]")
        real = realize(spec, build_mesh(eps[-1], cfg.n_cells, cfg.grading_gamma))
        w0 = float(np.max(np.abs(real.cutoff_solution(0.0).w.coeffs)))
        rep.add(f"mr.{variant}.w_at_zero", w0, 0.0, "==", "cut-off solution vanishes at t = 0")


# --------------------------------------------------------------------------
# Lions well-posedness


def check_solve(cfg: ExperimentConfig, rep: Report) -> None:
    scfg = SolverConfig(cfg.theta)
    for variant in cfg.variants:
        spec = cfg.spec(variant)
        rows = []
        worst_margin, worst_factor = np.inf, np.inf
        for e in cfg.solve_eps:
            base_steps = time_rule_steps(spec, e)
            errors = []
            for level in range(cfg.solve_levels):
                mesh = build_mesh(e, cfg.solve_n_cells * 2**level, cfg.grading_gamma)
                real = realize(spec, mesh)
                steps = base_steps * 2**level
                res = solve_cutoff(real, steps, scfg)
                rhs = lambda t, real=real: real.cutoff_solution(t).rhs
                zero = np.zeros(mesh.n_basis, dtype=complex)
                energy = energy_inequality_check(res, rhs, zero, 0.5 * real.alpha)
                err = cutoff_error_L2V(real, res)
                errors.append(err)
                worst_margin = min(worst_margin, energy.margin / energy.rhs)
                rows.append([e, level, mesh.n_cells, steps, err, energy.lhs, energy.rhs])
                if not energy.passed:
                    rep.add(f"solve.{variant}.energy_eps_{e:g}_level_{level}", energy.margin, 0.0,
                            ">=", "energy inequality violated")
            factors = np.array(errors[:-1]) / np.array(errors[1:])
            worst_factor = min(worst_factor, float(factors.min()))
            rep.add(f"solve.{variant}.eps_{e:g}.min_error_reduction", float(factors.min()),
                    CONVERGENCE_FACTOR_MIN, ">=",
                    f"{cfg.solve_levels} levels, errors {errors[0]:.3g} -> {errors[-1]:.3g}")
        rep.tables[f"solve_{variant}"] = Table(
            ["epsilon", "level", "n_cells", "n_steps", "error_L2V", "energy_lhs", "energy_rhs"], rows)
        rep.add(f"solve.{variant}.energy_min_relative_margin", worst_margin, 0.0, ">=",
                f"every eps in {list(cfg.solve_eps)}, every level; theta = {cfg.theta}")
        _energy_sweep(cfg, spec, variant, scfg, rep)


def _energy_sweep(cfg, spec, variant, scfg, rep) -> None:
    """Energy inequality over the whole eps sweep on a fixed time grid.

    The inequality holds for every step size when theta >= 1/2, so these runs
    skip the time rule; they say nothing about accuracy at small eps.
    """
    rows, worst = [], np.inf
    for e in cfg.eps_sweep:
        real = realize(spec, build_mesh(e, cfg.n_cells, cfg.grading_gamma))
        res = solve_cutoff(real, cfg.energy_steps, scfg)
        rhs = lambda t, real=real: real.cutoff_solution(t).rhs
        zero = np.zeros(real.mesh.n_basis, dtype=complex)
        energy = energy_inequality_check(res, rhs, zero, 0.5 * real.alpha)
        worst = min(worst, energy.margin / energy.rhs)
        rows.append([e, real.mesh.n_cells, cfg.energy_steps, energy.lhs, energy.rhs])
    rep.tables[f"solve_{variant}_energy_sweep"] = Table(
        ["epsilon", "n_cells", "n_steps", "energy_lhs", "energy_rhs"], rows)
    if rows:
        rep.add(f"solve.{variant}.energy_sweep_min_relative_margin", worst, 0.0, ">=",
                f"every eps in the sweep, {cfg.energy_steps} uniform steps (time rule not "
                f"applied; the inequality is unconditional for theta >= 1/2)")


COMMANDS = {
    "verify-extension": (check_extension,),
    "verify-form": (check_form, check_residual),
    "conditions": (check_conditions,),
    "holder-fit": (check_holder,),
    "mr-divergence": (check_divergence,),
    "solve": (check_solve,),
}
COMMANDS["all"] = tuple(fn for name in list(COMMANDS) for fn in COMMANDS[name])


def run(command: str, cfg: ExperimentConfig) -> Report:
    if command not in COMMANDS:
        raise KeyError(f"unknown command {command!r}; choose from {sorted(COMMANDS)}")
    echo = cfg.to_dict()
    echo["time_rule"] = TIME_RULE
    rep = Report(command, echo)
    for fn in COMMANDS[command]:
        fn(cfg, rep)
    return rep
