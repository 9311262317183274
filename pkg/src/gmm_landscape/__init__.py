"""Population likelihood landscape of equally weighted spherical Gaussian mixtures."""

from .classifier import (
    AssociationStats,
    StructureReport,
    Thresholds,
    association_stats,
    bipartite_graph,
    check_second_order_consequences,
    classify,
    line_structure_label,
)
from .errors import (
    ConfigError,
    DegenerateComponentError,
    EngineAccuracyError,
    InvalidArgumentError,
    LandscapeError,
    UnsupportedConfigurationError,
)
from .expectation import ExpectationEngine, ExpectationResult, expect_component, expect_mixture
from .geometry import VoronoiMass, VoronoiQuery, hard_membership, soft_membership, voronoi_mass
from .landscape import (
    DescentTrace,
    LandscapeValue,
    StationarityReport,
    check_mean_consistency,
    check_span,
    descend,
    em_step,
    gradient,
    hessian,
    loss,
    stationarity_report,
)
from .mixture import FittedCenters, PointEvaluation, TrueMixture, component_log_density, evaluate_point
from .theory import (
    BoundCheckResult,
    verify_exponential_association,
    verify_gaussian_tails,
    verify_geometry_inclusions,
    verify_variance_lower_bound,
)

__version__ = "0.1.0"
