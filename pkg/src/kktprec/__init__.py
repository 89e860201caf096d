"""kktprec: block-diagonal augmented-Lagrangian preconditioning for the KKT
systems of PDE-constrained source inversion, with a P1 finite element
benchmark and numerical verification of the provable spectral bounds."""

from .config import ConfigError, ExperimentConfig, load_config
from .dense import (
    EigenDecomposition,
    dense_solve_spd,
    dense_solve_symmetric_indefinite,
    symmetric_eig,
)
from .fem import (
    assemble_mass,
    assemble_observation,
    assemble_regularization,
    assemble_stiffness_nitsche,
    interpolate_image,
    lump_mass,
)
from .harness import (
    RunRecord,
    generate_observations,
    run_convergence,
    run_mesh_study,
    run_reg_data_sweep,
    run_theory_verification,
    synth_source,
)
from .kkt import (
    BDAL_EXACT,
    BDAL_LUMPED_EXACT,
    BDAL_LUMPED_INEXACT,
    PRECONDITIONER_KINDS,
    REDUCED_REGULARIZATION,
    KktSystem,
    Preconditioner,
    ProblemOperators,
    ReducedHessianOperator,
    apply_kkt,
    assemble_problem,
    bdal_apply_inverse,
    build_kkt,
    build_preconditioner,
    reduced_hessian,
    reduced_hessian_apply,
    reference_solution,
    regularization_prec_apply,
    synthesize_data,
)
from .krylov import (
    LinearOperator,
    SolveReport,
    inner_solve_to_tol,
    minres,
    pcg,
)
from .mesh import NodalField, ObservationSet, TriMesh, build_mesh
from .sparse import (
    SparseMatrix,
    sparse_add_scaled,
    sparse_transpose,
    sparse_triple_diag,
    spmv,
)
from .spectral import (
    AmGmConstants,
    ConditionReport,
    SpectralFilterModel,
    TheoryViolationError,
    amgm_constants_exact,
    amgm_constants_from_filter,
    cond_bound,
    laplacian_source_model,
    preconditioned_kkt_dense,
    reconstruction_error_modes,
    sigma_min_bound,
    stability_sigma_max,
    verify_spectral_bounds,
)

__version__ = "0.1.0"
