"""Free-boundary tokamak equilibria with sparse-grid surrogates and
Monte Carlo uncertainty quantification.

The package splits into three layers: the equilibrium solver
(`geometry`, `mesh`, `kernels`, `solver`, `fields`), the surrogate and
sampling machinery (`sparsegrid`, `uq`, `pipeline`), and the campaign
front end (`config`, `cli`, `svgplot`).
"""

from .geometry import (Coil, CurrentVector, GeometryError, ReactorGeometry,
                       load_geometry, save_geometry)
from .mesh import (MeshError, NodalField, TriMesh, read_field_csv, read_mesh,
                   submesh, uniform_refine_interior, write_field_csv,
                   write_field_vtk, write_mesh)
from .solver import (EquilibriumSolution, ProfileParams, SolverError,
                     SolverOptions, solve_free_boundary)
from .fields import (FeatureRecord, FieldAnalyzer, FieldError, extract_contour,
                     feature_record, shaping)
from .sparsegrid import (SparseGridError, Surrogate, build_surrogate,
                         eval_surrogate, full_grid_size, grid_size,
                         load_surrogate, refine_level, save_surrogate)
from .uq import (EvalSample, McReport, NoiseModel, UQError, WelfordState,
                 mc_report_digest, mean_relative_error, run_mc,
                 sample_currents, sample_rng, welford_merge, welford_update)
from .pipeline import (DirectEvaluator, SurrogateEvaluator, common_mesh,
                       mesh_digest, surrogate_node_function)
from .config import CampaignConfig, ConfigError, load_config

__version__ = "0.1.0"

__all__ = [
    "Coil", "CurrentVector", "GeometryError", "ReactorGeometry",
    "load_geometry", "save_geometry",
    "MeshError", "NodalField", "TriMesh", "read_field_csv", "read_mesh",
    "submesh", "uniform_refine_interior", "write_field_csv",
    "write_field_vtk", "write_mesh",
    "EquilibriumSolution", "ProfileParams", "SolverError", "SolverOptions",
    "solve_free_boundary",
    "FeatureRecord", "FieldAnalyzer", "FieldError", "extract_contour",
    "feature_record", "shaping",
    "SparseGridError", "Surrogate", "build_surrogate", "eval_surrogate",
    "full_grid_size", "grid_size", "load_surrogate", "refine_level",
    "save_surrogate",
    "McReport", "NoiseModel", "UQError", "WelfordState", "mc_report_digest",
    "mean_relative_error", "run_mc", "sample_currents", "sample_rng",
    "welford_merge", "welford_update",
    "DirectEvaluator", "EvalSample", "SurrogateEvaluator", "common_mesh",
    "mesh_digest", "surrogate_node_function",
    "CampaignConfig", "ConfigError", "load_config",
    "__version__",
]
