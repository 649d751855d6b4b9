"""Exponential tail bounds for translation-invariant quantum lattice dynamics.

Computes dual rate functions over the complexified Brillouin zone, their
Legendre transforms, group-velocity spectra and propagation regions for
discrete-time walks and lattice Hamiltonians, and verifies the exponential
tail bounds by exact finite-lattice simulation.
"""

from .catalog import CatalogEntry, catalog_get, catalog_names, resolve_model
from .errors import (
    BoxTooLarge,
    DegenerateMaximizer,
    DegeneratePoint,
    EigenError,
    InsufficientData,
    LatticeTailsError,
    ModelFormatError,
    ModelValidationError,
    NonUniqueMaximizer,
    ThirdDerivativeUnstable,
    UnknownCatalogName,
)
from .evolve import (
    EvolutionRecord,
    ExpMomentSeries,
    InitialState,
    RateFit,
    Region,
    TailSeries,
    compare_velocity_distributions,
    empirical_rate,
    evolve,
    exp_moment,
    tail_probability,
    theoretical_velocity_distribution,
    velocity_histogram,
)
from .geometry import Polytope, convex_hull
from .model import (
    ComplexMomentum,
    Kind,
    LatticeModel,
    SymbolValue,
    evaluate_symbol,
    jump_hull,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    validate_model,
)
from .rates import (
    BoundaryExpansion,
    DualRate,
    RadialRate,
    RateFunction,
    boundary_expansion,
    boundary_rate_bound,
    dual_rate,
    gauge,
    legendre,
    lieb_robinson_bound,
    propagation_bound_predicate,
    radial_dual,
    radial_rate,
)
from .spectra import (
    PropagationRegion,
    SpectrumAt,
    VelocitySample,
    dual_rate_at,
    eigen,
    group_velocity,
    group_velocity_fd,
    propagation_region,
)
from .sweepio import SweepResult, read_csv, write_csv

__version__ = "0.1.0"
