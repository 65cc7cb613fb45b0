"""Quadruple inequalities, Fréchet means and their convergence rates in metric spaces."""

from .costs import (
    AnchoredPowerCost,
    Bregman,
    BoundedLipschitz,
    BregmanStruct,
    InnerProduct,
    MinOverSets,
    Nice,
    PowerCost,
    PowerStruct,
    Product,
    ProjectionStructure,
    SquaredDistance,
    StrongIP,
    WeightedIP,
    cost_eval,
    empirical_objective,
    min_structure,
    product_structure,
    strong_quadruple_residual,
    weak_quadruple_residual,
)
from .entropy import covering_number, covering_numbers, entrn_estimate, entropy_fit, eta, rate_prediction
from .errors import QuadmeanError
from .estimators import (
    ConstrainedPlaneMean,
    EstimatorConfig,
    FrechetMean,
    TreeFrechetMean,
    brute_force_mean,
    frechet_mean_constrained_plane,
    frechet_mean_tree,
    frechet_mean_vector,
    growth_fit,
)
from .harness import (
    CauchyLine,
    ExperimentConfig,
    GaussianVector,
    LossTable,
    PlaneCloud,
    PointMass,
    TreeDiscrete,
    empirical_process_sup,
    fit_rate,
    moment_estimate,
    run_experiment,
    tail_check,
)
from .lab import (
    arithmetic_form_check,
    lemma_battery,
    optimality_case,
    quadrilateral_cosine,
    sweep_structure,
    tripod_strong_counterexample,
    weak_implies_strong_check,
)
from .report import ViolationReport
from .spaces import (
    Disc,
    Euclidean,
    MetricTree,
    PlaneWithHole,
    Polygon,
    ProductSpace,
    TreePoint,
    WeightedSequence,
    distance,
    metric_axiom_sweep,
    npc_inequality_check,
    project_to_space,
    tree_geodesic_point,
)

__version__ = "0.1.0"
