"""Smooth fits of cumulative distribution tables on [0, 1].

Three fitting forms are used by the marginal-likelihood pipeline: mixtures of regularized
incomplete beta functions with prescribed endpoint exponents, the truncated sine series
F + Σ c_j sin(jπF), and a smoothing spline with GCV-selected smoothing.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import make_smoothing_spline
from scipy.optimize import least_squares
from scipy.special import betainc, softmax
from scipy.stats import beta as beta_dist

from utils.logging_config import get_logger

logger = get_logger(__name__)

FOURIER_START_TERMS = 8
FOURIER_MIN_COEFFICIENT = 1e-4
POSITIVITY_GRID = np.linspace(0.01, 0.99, 1000)
BETA_RESTARTS = 8


@dataclass
class CdfFit:
    """A fitted, differentiable CDF model on [0, 1]."""

    kind: str
    params: Dict[str, Any]
    residual: float
    value_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    derivative_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value_fn(np.asarray(x, dtype=float))

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return self.derivative_fn(np.asarray(x, dtype=float))

    def summary(self) -> Dict[str, Any]:
        return {"kind": self.kind, "residual": self.residual, "params": self.params}


def empirical_cdf(values: np.ndarray, grid: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Fraction of (weighted) values ≤ each grid point.

    Args:
        values: Sample values
        grid: Ascending evaluation points
        weights: Optional nonnegative weights

    Returns:
        Nondecreasing table with the same shape as grid

    Raises:
        ValueError: On an empty sample
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot estimate a CDF from an empty sample")
    order = np.argsort(values)
    ordered = values[order]
    if weights is None:
        cumulative = np.arange(1, ordered.size + 1, dtype=float) / ordered.size
    else:
        w = np.asarray(weights, dtype=float)[order]
        cumulative = np.cumsum(w) / w.sum()
    index = np.searchsorted(ordered, np.asarray(grid, dtype=float), side="right")
    return np.where(index > 0, cumulative[np.maximum(index - 1, 0)], 0.0)


def tail_exponent(x: np.ndarray, table: np.ndarray, lower: bool = True, span: Tuple[float, float] = (1e-3, 0.05)) -> float:
    """
    Power-law exponent of a CDF near an endpoint from a log-log slope.

    Near 0 the CDF behaves as x^a; near 1, 1 − P behaves as (1 − x)^b.

    Raises:
        ValueError: If the tail holds fewer than three usable points
    """
    x = np.asarray(x, dtype=float)
    table = np.asarray(table, dtype=float)
    distance, mass = (x, table) if lower else (1.0 - x, 1.0 - table)
    mask = (distance >= span[0]) & (distance <= span[1]) & (mass > 0)
    if mask.sum() < 3:
        raise ValueError("Not enough tail points to estimate an endpoint exponent")
    slope, _ = np.polyfit(np.log(distance[mask]), np.log(mass[mask]), 1)
    return float(slope)


# ============================================================================
# INCOMPLETE-BETA MIXTURE
# ============================================================================


def _beta_shapes(raw: np.ndarray, terms: int, a_min: float, b_min: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights and shape pairs: term 0 is (a_min, b₁), term 1 is (a₁, b_min), the rest free."""
    weights = softmax(raw[:terms])
    shapes = np.exp(raw[terms:])
    a = np.empty(terms)
    b = np.empty(terms)
    a[0], b[0] = a_min, b_min + shapes[0]
    a[1], b[1] = a_min + shapes[1], b_min
    for k in range(2, terms):
        a[k] = a_min + shapes[2 * k - 2]
        b[k] = b_min + shapes[2 * k - 1]
    return weights, a, b


def beta_mixture(x: np.ndarray, weights: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return np.sum(weights[:, None] * betainc(a[:, None], b[:, None], x[None, :]), axis=0)


def beta_mixture_density(x: np.ndarray, weights: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    values = np.zeros_like(x)
    values[inside] = np.sum(weights[:, None] * beta_dist.pdf(x[inside][None, :], a[:, None], b[:, None]), axis=0)
    return values


def fit_beta_mixture(
    x: np.ndarray,
    table: np.ndarray,
    a_min: float,
    b_min: float,
    terms: int = 3,
    restarts: int = BETA_RESTARTS,
    seed: int = 0,
) -> CdfFit:
    """
    Least-squares fit of w₁I(a_min, b₁) + w₂I(a₁, b_min) + Σ w_k I(a_k, b_k) to a CDF table.

    All shapes keep a ≥ a_min and b ≥ b_min so the prescribed endpoint power laws dominate,
    and the weights are a softmax so they stay positive and sum to 1.

    Args:
        x: Grid on [0, 1]
        table: CDF values on the grid
        a_min: Exponent of the CDF near 0
        b_min: Exponent of 1 − CDF near 1
        terms: Number of incomplete-beta terms (≥ 2)
        restarts: Random restarts of the least-squares solver
        seed: RNG seed for restarts

    Returns:
        CdfFit of kind "beta-mixture" with the residual sup-norm

    Raises:
        ValueError: If terms < 2 or the exponents are not positive
    """
    if terms < 2:
        raise ValueError(f"A beta mixture needs at least 2 terms, got {terms}")
    if a_min <= 0 or b_min <= 0:
        raise ValueError(f"Endpoint exponents must be positive, got a_min={a_min}, b_min={b_min}")
    x = np.asarray(x, dtype=float)
    table = np.asarray(table, dtype=float)
    n_shapes = 2 * terms - 2

    def residuals(raw: np.ndarray) -> np.ndarray:
        weights, a, b = _beta_shapes(raw, terms, a_min, b_min)
        return beta_mixture(x, weights, a, b) - table

    rng = np.random.default_rng(seed)
    starts = [np.concatenate([np.zeros(terms), np.zeros(n_shapes)])]
    starts += [
        np.concatenate([rng.normal(0.0, 1.0, terms), rng.uniform(np.log(0.1), np.log(20.0), n_shapes)])
        for _ in range(restarts - 1)
    ]

    best = None
    for start in starts:
        try:
            solution = least_squares(residuals, start, method="trf", max_nfev=2000)
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"Beta-mixture restart failed: {e}")
            continue
        if best is None or solution.cost < best.cost:
            best = solution
    if best is None:
        best_raw = starts[0]
        logger.warning("Every beta-mixture restart failed; using the initial guess")
    else:
        best_raw = best.x

    weights, a, b = _beta_shapes(best_raw, terms, a_min, b_min)
    residual = float(np.max(np.abs(beta_mixture(x, weights, a, b) - table)))
    logger.info(f"Beta mixture ({terms} terms): sup residual {residual:.2e}")
    return CdfFit(
        kind="beta-mixture",
        params={"weights": weights, "a": a, "b": b},
        residual=residual,
        value_fn=lambda z: beta_mixture(z, weights, a, b),
        derivative_fn=lambda z: beta_mixture_density(z, weights, a, b),
    )


# ============================================================================
# SINE SERIES
# ============================================================================


def _sine_basis(x: np.ndarray, terms: int) -> np.ndarray:
    j = np.arange(1, terms + 1)
    return np.sin(np.pi * np.outer(x, j))


def _sine_derivative(x: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    j = np.arange(1, coefficients.size + 1)
    return 1.0 + np.cos(np.pi * np.outer(x, j)) @ (np.pi * j * coefficients)


def fit_fourier(x: np.ndarray, table: np.ndarray, terms: int = FOURIER_START_TERMS) -> CdfFit:
    """
    Linear least-squares fit of F + Σ_{j≤J} c_j sin(jπF).

    Starting from J = terms, the last term is dropped while the fitted derivative is not
    positive on [0.01, 0.99] or the last coefficient is below 1e-4 in magnitude.

    Args:
        x: Grid on [0, 1]
        table: CDF values on the grid
        terms: Initial number of sine terms

    Returns:
        CdfFit of kind "fourier"
    """
    x = np.asarray(x, dtype=float)
    table = np.asarray(table, dtype=float)
    coefficients = np.zeros(0)
    for count in range(terms, 0, -1):
        candidate, *_ = np.linalg.lstsq(_sine_basis(x, count), table - x, rcond=None)
        positive = bool(np.all(_sine_derivative(POSITIVITY_GRID, candidate) > 0))
        if positive and abs(candidate[-1]) >= FOURIER_MIN_COEFFICIENT:
            coefficients = candidate
            break
        if not positive:
            logger.warning(f"Sine series with {count} terms is not monotone; dropping a term")

    def value(z: np.ndarray) -> np.ndarray:
        return z + _sine_basis(np.atleast_1d(z), coefficients.size) @ coefficients if coefficients.size else z

    def derivative(z: np.ndarray) -> np.ndarray:
        z = np.atleast_1d(z)
        return _sine_derivative(z, coefficients) if coefficients.size else np.ones_like(z)

    residual = float(np.max(np.abs(value(x) - table)))
    logger.info(f"Sine series ({coefficients.size} terms): sup residual {residual:.2e}")
    return CdfFit(
        kind="fourier",
        params={"coefficients": coefficients},
        residual=residual,
        value_fn=value,
        derivative_fn=derivative,
    )


# ============================================================================
# SMOOTHING SPLINE
# ============================================================================


def fit_smoothing_spline(x: np.ndarray, table: np.ndarray, lam: Optional[float] = None) -> CdfFit:
    """
    Cubic smoothing spline through a CDF table; lam=None selects the smoothing by GCV.

    The derivative is clipped at 0 since it is used as a density.
    """
    x = np.asarray(x, dtype=float)
    table = np.asarray(table, dtype=float)
    spline = make_smoothing_spline(x, table, lam=lam)
    slope = spline.derivative()
    residual = float(np.max(np.abs(spline(x) - table)))
    logger.info(f"Smoothing spline: sup residual {residual:.2e}")
    return CdfFit(
        kind="spline",
        params={"knots": spline.t, "coefficients": spline.c, "lam": lam},
        residual=residual,
        value_fn=lambda z: spline(z),
        derivative_fn=lambda z: np.clip(slope(z), 0.0, None),
    )
