"""Numerical lab for non-autonomous forms without L^2 maximal regularity.

Modules
-------
spaces
    Graded meshes, P1 basis, weighted Gram matrices of the triple V, H, V'.
extension
    Accretive and self-adjoint extensions of forms given on a 1-D subspace.
counterexample
    The explicit trajectories, their prescribed forms and condition checks.
solver
    Theta-scheme for the weak Cauchy problem and divergence diagnostics.
checks, config, report, cli
    Experiment runner and its reports.
"""

from .counterexample import (
    NONSYMMETRIC,
    SYMMETRIC,
    CounterexampleSpec,
    assemble_form,
    choose_d,
    compute_z,
    cutoff,
    cutoff_solution,
    eval_trajectory,
    holder_estimate,
    partial_form_at,
    realize,
    verify_conditions,
)
from .extension import (
    ACCRETIVE,
    SELFADJOINT,
    ExtensionConfig,
    FormOperator,
    PartialForm,
    composite_bound,
    extend_accretive,
    extend_form,
    extend_selfadjoint,
    numerical_range_sample,
    operator_norm,
    riesz_map,
    trivial_extension,
)
from .solver import (
    SolverConfig,
    TimeGrid,
    energy_inequality_check,
    mr_divergence,
    residual_check,
    solve_wacp,
)
from .spaces import (
    GridFunction,
    Mesh,
    WeightSpec,
    assemble_gram,
    build_grams,
    build_mesh,
    dual_pairing,
    inner,
    interpolate,
    norm,
)

__version__ = "0.1.0"
