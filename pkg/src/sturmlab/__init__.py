"""Numerical laboratory for grow-up dynamics of quasilinear parabolic
equations on [0, pi] and the connection structure of their unbounded
attractors."""

from .field import (
    SpatialGrid,
    StateField,
    EigenMode,
    ZeroKind,
    zero_number,
    classify_zero,
    inner,
    norm,
    project_mode,
    eigenmode,
    field_from_modes,
)
from .dynamics import (
    CoefficientSpec,
    StepController,
    TrajectoryRecord,
    DiscretizationFidelityError,
    step,
    integrate,
    detect_growup,
    mode_growth_rates,
    difference_zero_monitor,
    build_cutoff,
    preset_spec,
)
from .equilibria import (
    EquilibriumRecord,
    SturmPermutation,
    shoot,
    find_equilibria,
    linearize,
    sturm_permutation,
    adjacent,
)
from .compactify import (
    ProjectedState,
    PlaneState,
    InfinityEquilibrium,
    project,
    unproject,
    infinity_equilibria,
    sphere_flow_step,
    sphere_flow_run,
    energy_infinity,
    plane_project,
    plane_flow_rates,
    growup_direction,
    tail_bound,
)
from .connection import (
    ConnectionGraph,
    Edge,
    Scenario,
    AttractorReport,
    predicted_graph,
    verify_edge,
    ymap,
    assemble_attractor,
)

__version__ = "0.1.0"
