"""Design-based variance estimation for finely stratified experiments."""

__version__ = "0.1.0"

from .assign import (
    Assignment,
    ObservedExperiment,
    draw_assignment,
    enumerate_assignments,
    observe,
    substream,
)
from .estimators import (
    ConfidenceInterval,
    StratumEffects,
    VarianceEstimate,
    confidence_interval,
    diff_in_means,
    normal_quantile,
    var_alt,
    var_coarse,
    var_fogarty,
    var_imai,
    var_paired,
)
from .pairing import PairingPlan, match_units, pair_strata
from .popmodel import (
    Cluster,
    ClusterPopulation,
    Estimands,
    FinitePopulation,
    Stratification,
    collapse_clusters,
    estimands,
    validate,
)

__all__ = [
    "Assignment",
    "Cluster",
    "ClusterPopulation",
    "ConfidenceInterval",
    "Estimands",
    "FinitePopulation",
    "ObservedExperiment",
    "PairingPlan",
    "Stratification",
    "StratumEffects",
    "VarianceEstimate",
    "collapse_clusters",
    "confidence_interval",
    "diff_in_means",
    "draw_assignment",
    "enumerate_assignments",
    "estimands",
    "match_units",
    "normal_quantile",
    "observe",
    "pair_strata",
    "substream",
    "validate",
    "var_alt",
    "var_coarse",
    "var_fogarty",
    "var_imai",
    "var_paired",
]
