"""Pipeline state definition for the marginal-likelihood LangGraph."""

from typing import Any, Callable, Dict, List, Optional

import numpy as np
from typing_extensions import TypedDict


class MarginalState(TypedDict):
    """
    State object for the marginal-likelihood graph.

    Inputs are set once; every stage node adds its samples, tables and fits.
    """

    # Inputs
    counts: Any  # CountsData
    scheme: Any  # TomographyScheme
    family: Any  # ChannelFamily
    prop: Any  # PropertyFn
    prior: Any  # PriorSpec
    config: Any  # MarginalConfig
    tilt: Optional[Callable[[np.ndarray], np.ndarray]]
    sampler: Any  # ChannelSampler

    # Property grid: F values and the rescaled x in [0, 1]
    grid: np.ndarray
    x_grid: np.ndarray

    # Stage 1: prior sample and beta-mixture fit
    prior_values: Optional[np.ndarray]
    prior_log_evidence: Optional[float]
    prior_table: Optional[np.ndarray]
    prior_fit: Any

    # Stage 2: reweighted prior sample and sine-series fit (may repeat)
    weights: List[Callable[[np.ndarray], np.ndarray]]
    reweighted_values: Optional[np.ndarray]
    reweighted_log_evidence: Optional[float]
    reweighted_table: Optional[np.ndarray]
    reweighted_fit: Any
    deviation: Optional[float]
    iteration: int

    # Stage 3: reweighted posterior sample and spline fit
    posterior_values: Optional[np.ndarray]
    posterior_table: Optional[np.ndarray]
    posterior_fit: Any

    # Bookkeeping and output
    sample_sizes: Dict[str, int]
    result: Any  # MarginalResult
