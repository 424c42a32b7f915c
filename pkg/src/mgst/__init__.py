"""Multivariate group sequential tests driven by a global summary statistic.

Three engines compute boundary constants and error probabilities:
multivariate Simpson integration (``simpson``), the first-order Delta
approximation (``delta``) and Monte Carlo simulation (``montecarlo``).
"""

from .delta import UnivariateLaw, approx_law, information_ratio, solve_boundaries_delta
from .design import (
    Boundaries,
    DesignSpec,
    Region,
    SpendingFunction,
    StageTargets,
    region_of,
    stage_targets,
    worst_case_null,
)
from .errors import (
    ConfigurationError,
    DegenerateLawError,
    InfeasibleDesignError,
    InsufficientReplicatesError,
    InvalidCovarianceError,
    MGSTError,
    ScheduleOrderError,
)
from .gaussian import conditional_law, information, mvn_density
from .montecarlo import estimate_probabilities, sample_stage, solve_boundaries_mc
from .samplesize import SizingResult, attained_power, fixed_information, max_information
from .simpson import SimpsonEngine, evaluate_boundaries, solve_boundaries
from .statistic import CallableStatistic, LinearStatistic, SignedProductStatistic, SummaryStatistic, make_statistic

__all__ = [
    "Boundaries",
    "CallableStatistic",
    "ConfigurationError",
    "DegenerateLawError",
    "DesignSpec",
    "InfeasibleDesignError",
    "InsufficientReplicatesError",
    "InvalidCovarianceError",
    "LinearStatistic",
    "MGSTError",
    "Region",
    "ScheduleOrderError",
    "SignedProductStatistic",
    "SimpsonEngine",
    "SizingResult",
    "SpendingFunction",
    "StageTargets",
    "SummaryStatistic",
    "UnivariateLaw",
    "approx_law",
    "attained_power",
    "conditional_law",
    "estimate_probabilities",
    "evaluate_boundaries",
    "fixed_information",
    "information",
    "information_ratio",
    "make_statistic",
    "max_information",
    "mvn_density",
    "region_of",
    "sample_stage",
    "solve_boundaries",
    "solve_boundaries_delta",
    "solve_boundaries_mc",
    "stage_targets",
    "worst_case_null",
]
