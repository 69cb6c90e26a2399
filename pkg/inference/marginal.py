"""Marginal likelihood L(D|F) of a scalar channel property by iterative prior reweighting.

The pipeline itself (sampling and fitting stages) runs as a LangGraph state machine in
graph/workflow.py; this module holds the property definitions, the reweighting targets, the
result type and the entry points.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid

from channels.duality import avg_fidelity_batch, min_fidelity_batch
from channels.families import ChannelFamily
from inference.fitting import CdfFit, empirical_cdf
from inference.regions import IntervalCurves
from sampling.hmc import HmcConfig, TargetDensity
from tomography.likelihood import CountsData, PriorSpec
from tomography.schemes import TomographyScheme
from utils.logging_config import get_logger

logger = get_logger(__name__)

WEIGHT_FLOOR = 1e-12
UNITAL_FAMILIES = ("dephasing", "pauli", "symmetric-unital", "unital")
CENTRAL_RANGE = (0.05, 0.95)


# ============================================================================
# PROPERTIES
# ============================================================================


@dataclass(frozen=True)
class PropertyFn:
    """A scalar channel property with its range and endpoint power-law exponents."""

    name: str
    low: float
    high: float
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    a_min: Optional[float] = None
    b_min: Optional[float] = None
    unital_only: bool = False

    def __call__(self, chois: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(chois))

    def rescale(self, values: np.ndarray) -> np.ndarray:
        """Affine map of [low, high] onto [0, 1]."""
        return (np.asarray(values, dtype=float) - self.low) / (self.high - self.low)

    def unscale(self, x: np.ndarray) -> np.ndarray:
        return self.low + np.asarray(x, dtype=float) * (self.high - self.low)

    def check_family(self, family: ChannelFamily) -> None:
        """
        Raises:
            ValueError: If the property is undefined on the family
        """
        if self.unital_only and family.name not in UNITAL_FAMILIES:
            raise ValueError(f"Property '{self.name}' is only defined for unital qubit families, not '{family.name}'")


def get_property(name: str, dim: int = 2) -> PropertyFn:
    """
    Look up a property by CLI name.

    avg-fidelity ranges over [1/(d+1), 1]; for qubits its prior CDF behaves as x³ near the lower
    end and 1 − (1−x)^{21/2} near the upper end. min-fidelity (unital qubit channels) ranges over
    [0, 1] with exponents 4 and 15/2.

    Raises:
        ValueError: For unknown names or min-fidelity with d ≠ 2
    """
    if name in ("avg-fidelity", "avg_fidelity"):
        qubit = dim == 2
        return PropertyFn(
            name="avg-fidelity",
            low=1.0 / (dim + 1),
            high=1.0,
            evaluator=avg_fidelity_batch,
            a_min=3.0 if qubit else None,
            b_min=10.5 if qubit else None,
        )
    if name in ("min-fidelity", "min_fidelity", "min_fidelity_unital"):
        if dim != 2:
            raise ValueError("min-fidelity is only available for qubit channels")
        return PropertyFn(
            name="min-fidelity",
            low=0.0,
            high=1.0,
            evaluator=min_fidelity_batch,
            a_min=4.0,
            b_min=7.5,
            unital_only=True,
        )
    raise ValueError(f"Unknown property '{name}'. Available: avg-fidelity, min-fidelity")


def cdf_estimate(values: np.ndarray, prop: PropertyFn, grid: np.ndarray) -> np.ndarray:
    """
    Empirical CDF P(F) of property values on a grid of F values.

    Raises:
        ValueError: On an empty sample
    """
    table = empirical_cdf(values, grid)
    if grid[-1] >= prop.high:
        table[-1] = 1.0
    return table


# ============================================================================
# REWEIGHTING
# ============================================================================


WeightFn = Callable[[np.ndarray], np.ndarray]


def floored_weight(fit: CdfFit, grid_points: int = 2001) -> WeightFn:
    """The fitted density on [0, 1], floored at 1e-12 of its maximum on a fine grid."""
    points = np.linspace(0.0, 1.0, grid_points)[1:-1]
    floor = WEIGHT_FLOOR * max(float(np.max(fit.derivative(points))), WEIGHT_FLOOR)

    def weight(x: np.ndarray) -> np.ndarray:
        return np.maximum(fit.derivative(x), floor)

    return weight


def combine_weights(weights: Sequence[WeightFn]) -> Optional[WeightFn]:
    """Pointwise product of weight functions; None for an empty list."""
    if not weights:
        return None

    def combined(x: np.ndarray) -> np.ndarray:
        total = np.ones_like(np.asarray(x, dtype=float))
        for w in weights:
            total = total * w(x)
        return total

    return combined


def reweighting_term(
    prop: PropertyFn,
    weight: Optional[WeightFn] = None,
    tilt: Optional[WeightFn] = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Extra log density −log W(x) + log g(F) on a batch of Choi matrices, x the rescaled property.

    Property values outside the range get −∞.
    """

    def term(chois: np.ndarray) -> np.ndarray:
        values = prop(chois)
        x = prop.rescale(values)
        outside = (x < -1e-12) | (x > 1.0 + 1e-12)
        x = np.clip(x, 0.0, 1.0)
        out = np.zeros(x.shape)
        with np.errstate(divide="ignore"):
            if weight is not None:
                out = out - np.log(weight(x))
            if tilt is not None:
                out = out + np.log(tilt(values))
        return np.where(outside, -np.inf, out)

    return term


def reweighted_target(
    base: TargetDensity,
    family: ChannelFamily,
    prop: PropertyFn,
    weight: WeightFn,
) -> TargetDensity:
    """
    Target with log density log w(θ) − log W(f(θ)).

    Args:
        base: Prior or posterior target in the family's parameters
        family: Family mapping parameters to Choi matrices
        prop: Property f
        weight: Positive weight W on the rescaled property

    Returns:
        TargetDensity usable by the HMC sampler
    """
    term = reweighting_term(prop, weight)

    def log_w_batch(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        base_values = (
            base.log_w_batch(points) if base.log_w_batch is not None else np.array([base.log_w(p) for p in points])
        )
        return base_values + term(family.choi_batch(points))

    return TargetDensity(
        dimension=base.dimension,
        log_w=lambda theta: float(log_w_batch(np.asarray(theta)[None])[0]),
        log_w_batch=log_w_batch,
        fd_step=base.fd_step,
    )


# ============================================================================
# PIPELINE CONFIGURATION AND RESULT
# ============================================================================


class MarginalConfig(BaseModel):
    """Settings for the marginal-likelihood pipeline."""

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    prior_draws: int = Field(default=50_000, ge=10)
    reweighted_draws: int = Field(default=75_000, ge=10)
    posterior_draws: int = Field(default=75_000, ge=10)
    hmc: HmcConfig = Field(default_factory=HmcConfig)
    chains: int = Field(default=1, ge=1)
    grid_points: int = Field(default=201, ge=11)
    beta_terms: int = Field(default=3, ge=2)
    fit_tolerance: float = Field(default=0.05, gt=0)
    convergence_tolerance: float = Field(default=0.02, gt=0)
    iterations: int = Field(default=1, ge=1)
    seed: int = 0


@dataclass
class MarginalResult:
    """
    L(D|F) on a grid of property values together with every intermediate stage.

    likelihood is L(D|F) in units of the prior-sample mean likelihood L(D) = exp(log_scale), so
    the plausible interval is where it exceeds 1.
    """

    property_name: str
    grid: np.ndarray
    likelihood: np.ndarray
    prior_density: np.ndarray
    log_scale: float
    tables: Dict[str, np.ndarray]
    fits: Dict[str, Dict[str, Any]]
    sample_sizes: Dict[str, int]
    iterations: int
    interval: Optional[IntervalCurves] = None

    @property
    def normalization_ratio(self) -> float:
        """∫ L(D|F) prior(F) dF / L(D); close to 1 when the stages are consistent."""
        mass = trapezoid(self.prior_density, self.grid)
        return float(trapezoid(self.likelihood * self.prior_density, self.grid) / mass)

    def to_frame(self) -> pd.DataFrame:
        with np.errstate(divide="ignore"):
            log_likelihood = np.log(self.likelihood) + self.log_scale
        return pd.DataFrame({"F": self.grid, "L": self.likelihood, "log_L": log_likelihood})

    def summary(self) -> Dict[str, Any]:
        summary: Dict[str, Any] = {
            "property": self.property_name,
            "log_scale": self.log_scale,
            "normalization_ratio": self.normalization_ratio,
            "iterations": self.iterations,
            "sample_sizes": self.sample_sizes,
            "fits": self.fits,
            "argmax_F": float(self.grid[int(np.argmax(self.likelihood))]),
        }
        if self.interval is not None:
            summary["interval"] = self.interval.summary()
        return summary


def marginal_likelihood(
    counts: CountsData,
    scheme: TomographyScheme,
    family: ChannelFamily,
    prop: PropertyFn,
    prior: PriorSpec,
    cfg: MarginalConfig,
    tilt: Optional[WeightFn] = None,
    sampler: Any = None,
) -> MarginalResult:
    """
    Run the reweighting pipeline and return L(D|F).

    Stages: prior sample → beta-mixture CDF fit; sample reweighted by the fitted density → sine
    series fit (repeated while the reweighted CDF is further than the convergence tolerance
    from the straight line and iterations remain); reweighted posterior sample → smoothing
    spline fit; L(D|F) = L̃(D)·W̃_D/W̃_0 and the interval curves of F.

    Args:
        counts: Observed counts
        scheme: Tomography scheme
        family: Channel family sampled over
        prop: Property F
        prior: Prior in probability space
        cfg: Pipeline settings
        tilt: Optional positive g(F) multiplying the prior (L(D|F) is unchanged by it)
        sampler: ChannelSampler (defaults to the global one)

    Returns:
        MarginalResult

    Raises:
        ValueError: If the property is undefined on the family
        NumericalError: If a stage fails or a fit residual exceeds cfg.fit_tolerance
    """
    from graph.workflow import run_marginal_pipeline

    prop.check_family(family)
    counts.check_scheme(scheme)
    return run_marginal_pipeline(counts, scheme, family, prop, prior, cfg, tilt=tilt, sampler=sampler)


def invariance_check(
    run: Callable[[Optional[WeightFn]], MarginalResult],
    tilt: WeightFn,
    baseline: Optional[MarginalResult] = None,
    tolerance: float = 0.1,
    relevance: float = 1e-3,
) -> Dict[str, Any]:
    """
    Compare L(D|F) with and without the prior multiplied by g(F).

    The comparison covers the central 90% of the range, restricted to points where both curves
    exceed `relevance` times their maximum.

    Args:
        run: Pipeline runner taking an optional tilt
        tilt: Positive g on property values
        baseline: Result without tilt (computed if missing)
        tolerance: Allowed relative difference

    Returns:
        Report with the maximum relative difference and a pass flag
    """
    baseline = baseline or run(None)
    tilted = run(tilt)
    prop_range = (baseline.grid[0], baseline.grid[-1])
    x = (baseline.grid - prop_range[0]) / (prop_range[1] - prop_range[0])
    # both curves in units of the untilted L(D)
    a = baseline.likelihood
    b = np.interp(baseline.grid, tilted.grid, tilted.likelihood) * np.exp(tilted.log_scale - baseline.log_scale)
    mask = (x >= CENTRAL_RANGE[0]) & (x <= CENTRAL_RANGE[1]) & (a > relevance * a.max()) & (b > relevance * b.max())
    if not mask.any():
        return {"max_relative_difference": float("nan"), "points": 0, "passed": False}
    relative = np.abs(b[mask] - a[mask]) / a[mask]
    report = {
        "max_relative_difference": float(relative.max()),
        "points": int(mask.sum()),
        "passed": bool(relative.max() <= tolerance),
    }
    logger.info(f"Invariance check: max relative difference {report['max_relative_difference']:.3f}")
    return report


def straight_line_deviation(x: np.ndarray, table: np.ndarray) -> float:
    """Sup-deviation of a CDF table on [0, 1] from the identity."""
    return float(np.max(np.abs(np.asarray(table) - np.asarray(x))))