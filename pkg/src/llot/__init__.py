"""Marginal-pinned smoothing of symmetric particle ensembles, the matching
fermionic mixed state, Coulomb multi-marginal transport, and the
small-parameter rate study, all at desk scale on uniform grids."""

from .errors import NumericalError, ValidationError
from .grids import (
    AtomicPlan,
    Grid,
    GridDensity,
    SeparationReport,
    density_from_values,
    h1_seminorm_sqrt,
    l1_gradient,
    marginal,
    separation,
    snap_to_grid,
    symmetrize,
)
from .mollifier import BumpProfile, GridKernel, ScaledMollifier, convolve_sq, eval_chi
from .regularizer import (
    Constant,
    CoulombPair,
    Observable,
    RegularizedPlan,
    SingleParticleSum,
    SmoothedPlan,
    build_regularized,
    density_of,
    integrate_observable,
    integrate_plan,
    kinetic_of_sqrt,
    potential_error,
)
from .quantum import (
    MixedStateKernel,
    OrbitalSet,
    dense_kernel_matrix,
    det_square_identity,
    kernel_eval,
    kinetic_trace,
    one_particle_density,
    quadratic_form,
    slater,
    trace,
)
from .mmot import (
    DualCheckReport,
    TransportProblem,
    TransportSolution,
    check_dual,
    plan_separation,
    solve_lp,
    solve_sinkhorn,
)
from .semiclassics import (
    SweepRecord,
    SweepResult,
    TrialEnergy,
    assembled_constant,
    fit_log_slope,
    golden_minimize,
    optimize_eps,
    sweep,
    trial_energy,
)

__version__ = "0.1.0"
