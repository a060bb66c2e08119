"""phasetrack: whole-cell morphology tracking by PDE-constrained optimal control.

Fits a forced, volume-constrained Allen-Cahn phase-field model to pairs (or
sequences) of static shape observations, recovering the full space-time
morphology and the driving force field between snapshots.
"""

from .adjoint import (
    AdjointTrajectory,
    Observation,
    control_gradient,
    objective,
    solve_adjoint,
    steepest_descent_update,
    update_norm,
)
from .analysis import (
    Contour,
    centroid,
    centroid_speed,
    control_extrema,
    enclosed_area,
    extract_zero_levelset,
    fidelity_history,
    mass_area,
)
from .datasets import (
    DATASET_NAMES,
    builtin_dataset,
    default_control_mode,
    make_initial_control,
)
from .fieldio import read_field, write_field
from .forward import (
    Control,
    SolveError,
    StateTrajectory,
    forward_step_constrained,
    forward_step_unconstrained,
    solve_forward,
)
from .geometry import (
    ImplicitCurve,
    Polygon,
    RasterImage,
    indicator_field,
    read_pgm,
    smooth_indicator,
    tanh_profile_field,
)
from .kernels import solver_backend
from .linsolve import ConvergenceError, SpdOperator, cg_solve
from .mesh import Field, Mesh, Rectangle, build_mesh, interpolate, lumped_inner
from .model import (
    MassTarget,
    ModelParams,
    compute_cg,
    d2potential,
    dpotential,
    mass_target,
    positive_part_mass,
    potential,
)
from .optimize import (
    OptimizationConfig,
    OptimizationReport,
    TrackingAborted,
    run_tracking,
)
from .problem import TrackingProblem

__version__ = "0.1.0"
