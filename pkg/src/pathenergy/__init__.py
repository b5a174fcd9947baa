"""Path energy of density paths and Wasserstein geodesic interpolation of images."""

from .energy import (
    EnergyMode,
    EnergyReport,
    assemble_operator,
    compute_weights,
    energy_and_gradient,
    mass_loss,
    path_energy,
    path_energy_gradient,
    solve_slice,
)
from .errors import (
    DisconnectedDomain,
    MassMismatch,
    PathEnergyError,
    ShapeMismatch,
    SolverDivergence,
)
from .geodesic import GeodesicResult, SolverConfig, choose_T, init_path, optimize_path, preprocess
from .grid import (
    BoundaryCondition,
    StaggeredField,
    divergence,
    downsample,
    face_gradient,
    normalize_mass,
    threshold,
)
from .metrics import SsimParams, ssim, ssim_sequence, w2_estimate

__version__ = "0.1.0"
