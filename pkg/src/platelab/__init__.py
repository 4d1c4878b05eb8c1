"""platelab: numerical laboratory for boundary-damped plate transmission dynamics.

The package discretizes a two-speed Euler-Bernoulli plate on an interval
in mixed displacement/velocity/moment form, verifies the dissipativity
and decay structure of the resulting semigroup, and certifies the
weighted-inequality machinery (conjugated symbols, sub-ellipticity
brackets, Morse weight pairs, mesh-stable weighted estimates) on 2D
rectangles.
"""
from __future__ import annotations

from .mesh import Grid2D, Mesh1D, MeshError, build_grid2d, build_mesh
from .generator import (
    GeneratorMatrix,
    PlateState,
    apply_G,
    assemble_generator,
    boundary_dissipation_rate,
    discrete_laplacian,
    effective_alpha,
    energy,
    field_inner,
    field_norm,
    make_state,
    moment_field,
    solve_identity_minus_A,
)
from .evolution import (
    DecayFit,
    TrajectoryRecord,
    fit_decay,
    project_state,
    run_trajectory,
    step_crank_nicolson,
)
from .spectral import (
    ResolventScan,
    SpectrumResult,
    compute_spectrum,
    factorized_resolvent_solve,
    reduced_generator,
    resolvent_norm,
    scan_resolvent,
    trace_estimate_check,
)
from .carleman import (
    Arc,
    FlowResult,
    FlowSpec,
    SubellipticityReport,
    WeightFunction,
    carleman_inequality_check,
    conjugated_symbol,
    flow_deform,
    poisson_bracket,
    verify_subellipticity,
)
from .config import ConfigError, ExperimentConfig, load_config, resolve_config

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "ConfigError",
    "DecayFit",
    "ExperimentConfig",
    "FlowResult",
    "FlowSpec",
    "GeneratorMatrix",
    "Grid2D",
    "Mesh1D",
    "MeshError",
    "PlateState",
    "ResolventScan",
    "SpectrumResult",
    "SubellipticityReport",
    "TrajectoryRecord",
    "WeightFunction",
    "apply_G",
    "assemble_generator",
    "boundary_dissipation_rate",
    "build_grid2d",
    "build_mesh",
    "carleman_inequality_check",
    "compute_spectrum",
    "conjugated_symbol",
    "discrete_laplacian",
    "effective_alpha",
    "energy",
    "factorized_resolvent_solve",
    "field_inner",
    "field_norm",
    "fit_decay",
    "flow_deform",
    "load_config",
    "make_state",
    "moment_field",
    "poisson_bracket",
    "project_state",
    "reduced_generator",
    "resolve_config",
    "resolvent_norm",
    "run_trajectory",
    "scan_resolvent",
    "solve_identity_minus_A",
    "step_crank_nicolson",
    "trace_estimate_check",
    "verify_subellipticity",
]
