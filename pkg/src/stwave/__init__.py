"""Space-time finite elements for wave reconstruction from interior data.

The package discretizes the wave operator on an unstructured triangulation
of the full space-time slab and recovers the solution from observations on
an interior strip by solving a stabilized saddle-point system.  Modules:

- mesh, refelem, quadrature, fespace: triangulations and scalar elements
- forms: wave form, observation mass, stabilizers
- saddle: system assembly and the sparse direct solve
- analysis: error norms, indicators, rate fitting, report files
- problems: reference solutions and observation data
- studies: convergence ladders and adaptive refinement loops
- cli: the `stwave` command
"""

from .analysis import (ErrorReport, RateFit, dorfler_mark, dual_norm,
                       eta_indicators, fit_rate, hm1_dt_trace0, hminus1_norm,
                       l2_error, read_error_report, rel_l2_trace0,
                       triple_norm, write_error_report)
from .errors import StwaveError
from .fespace import DiscreteField, FESpace, eval_field, interpolate_nodal
from .forms import (assemble_data_functional, assemble_dual_stabilizer,
                    assemble_observation_mass, assemble_primal_stabilizer,
                    assemble_wave_form)
from .mesh import (SpacetimeMesh, build_structured, load_mesh,
                   refine_adaptive, refine_uniform, save_mesh, validate_mesh)
from .problems import (ExperimentConfig, ObservationData, example1, example2,
                       load_config, make_observation, represent_observation)
from .saddle import SaddleSystem, SolveReport, build_system, solve
from .studies import level_mesh, run_adaptive, run_convergence_study

__version__ = "0.1.0"

__all__ = [
    "ErrorReport", "RateFit", "dorfler_mark", "dual_norm", "eta_indicators",
    "fit_rate", "hm1_dt_trace0", "hminus1_norm", "l2_error",
    "read_error_report", "rel_l2_trace0", "triple_norm",
    "write_error_report", "StwaveError", "DiscreteField", "FESpace",
    "eval_field", "interpolate_nodal", "assemble_data_functional",
    "assemble_dual_stabilizer", "assemble_observation_mass",
    "assemble_primal_stabilizer", "assemble_wave_form", "SpacetimeMesh",
    "build_structured", "load_mesh", "refine_adaptive", "refine_uniform",
    "save_mesh", "validate_mesh", "ExperimentConfig", "ObservationData",
    "example1", "example2", "load_config", "make_observation",
    "represent_observation", "SaddleSystem", "SolveReport", "build_system",
    "solve", "level_mesh", "run_adaptive", "run_convergence_study",
    "__version__",
]
