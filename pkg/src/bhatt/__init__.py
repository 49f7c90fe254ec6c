"""Classical and quantum Cramer-Rao / Bhattacharyya bounds for discrete models."""

from .classical import (
    BhattMatrix,
    BoundReport,
    EstimatorTable,
    NoSolution,
    bhatt_bound,
    bhatt_estimator,
    bhatt_matrix,
    bound_hierarchy,
    cramer_rao,
    existence_system,
    fisher_information,
    max_nontrivial_order,
    solve_estimator,
)
from .errors import BhattError, DivergentBound
from .model import DerivativeOptions, DerivativeStack, DiscreteModel, evaluate_stack, prune_support
from .quantum import (
    DensityFamily,
    DensityStack,
    HermitianEstimator,
    q_bhatt_bound,
    q_bhatt_estimator,
    q_bound_hierarchy,
    q_matrix,
    q_max_nontrivial_order,
    qfi,
    sld,
)

__version__ = "0.1.0"
