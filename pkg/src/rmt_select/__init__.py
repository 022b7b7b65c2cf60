"""Subset selection for least-squares estimation under one-sided correlated channels.

Deterministic equivalents of the MSE, log-det and worst-case error variance
metrics, their gradients, and the greedy and convex selectors built on them.
"""

from .core import (
    BudgetInfeasible,
    CorrelationMatrix,
    DimensionMismatch,
    EdgeDegenerate,
    ErrorMetric,
    IllConditioned,
    NonConvergence,
    NonPositiveEdge,
    NoRoot,
    NotPSD,
    ProblemDims,
    SelectionError,
    SelectionVector,
    SingularGram,
    TooLarge,
    UpdateSingular,
)
from .detequiv import equivalent, lce_bar, mse_bar, solve_delta, solve_eta, wev_bar
from .exact import exact_measure, sample_channel, swap_update
from .gradients import gradient
from .scenarios import MimoScenario, WsnScenario, preset
from .selectors import (
    AwareOracle,
    BlindOracle,
    convex_relax_select,
    exhaustive_select,
    greedy_select,
    project_capped_simplex,
    random_select,
    round_topk,
)

__version__ = "0.1.0"
