"""Bounded-likelihood regions: size and credibility curves, critical λ and membership."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from channels.duality import born_probabilities
from sampling.sample_set import SampleSet
from tomography.likelihood import CountsData, log_likelihood
from tomography.schemes import TomographyScheme
from utils.errors import NumericalError
from utils.logging_config import get_logger

logger = get_logger(__name__)

GRID_POINTS = 200
MIN_LAMBDA = 1e-12
MLE_SLACK = 1e-6


@dataclass
class RegionCurves:
    """Size s_λ and credibility c_λ of the bounded-likelihood regions on a λ grid."""

    lambdas: np.ndarray
    size: np.ndarray
    credibility: np.ndarray
    size_err: np.ndarray
    credibility_err: np.ndarray
    lambda_crit: float
    size_crit: float
    credibility_crit: float
    extras: Dict[str, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "lambda": self.lambdas,
                "s": self.size,
                "c": self.credibility,
                "s_err": self.size_err,
                "c_err": self.credibility_err,
            }
        )

    def summary(self) -> Dict[str, float]:
        summary = {"lambda_crit": self.lambda_crit, "s_crit": self.size_crit, "c_crit": self.credibility_crit}
        summary.update(self.extras)
        return summary


# ============================================================================
# BUILDING BLOCKS
# ============================================================================


def lambda_grid(min_ratio: float, points: int = GRID_POINTS) -> np.ndarray:
    """λ = 0 followed by `points` log-spaced values in [max(min_ratio, 1e-12), 1]."""
    low = max(min_ratio, MIN_LAMBDA) if np.isfinite(min_ratio) else MIN_LAMBDA
    low = min(low, 1.0)
    return np.concatenate([[0.0], np.logspace(np.log10(low), 0.0, points)])


def survival_fraction(log_ratios: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Fraction of draws with log(L/L_max) ≥ log λ, for every λ on the grid."""
    ordered = np.sort(np.asarray(log_ratios, dtype=float))
    with np.errstate(divide="ignore"):
        log_lambdas = np.log(np.asarray(lambdas, dtype=float))
    below = np.searchsorted(ordered, log_lambdas, side="left")
    return (ordered.shape[0] - below) / ordered.shape[0]


def binomial_error(fraction: np.ndarray, n: int, ess_ratio: float = 1.0) -> np.ndarray:
    """Binomial standard error inflated by draws/ESS."""
    return np.sqrt(np.clip(fraction * (1.0 - fraction), 0.0, None) / n * ess_ratio)


def lambda_crit(prior_log_likelihood: np.ndarray, log_lmax: float) -> float:
    """
    λ_crit = L(D)/L_max with L(D) the prior-sample mean likelihood (log-sum-exp).

    Raises:
        ValueError: On an empty sample
    """
    values = np.asarray(prior_log_likelihood, dtype=float)
    if values.size == 0:
        raise ValueError("Prior sample is empty")
    log_evidence = logsumexp(values) - np.log(values.size)
    return float(min(1.0, np.exp(log_evidence - log_lmax)))


def membership(
    rho: np.ndarray,
    scheme: TomographyScheme,
    counts: CountsData,
    lam: float,
    log_lmax: float,
) -> bool:
    """
    Whether a channel lies in the bounded-likelihood region at level λ.

    Raises:
        ValueError: If λ is outside [0, 1]
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"λ must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return True
    value = log_likelihood(born_probabilities(rho, scheme), counts)
    return bool(value >= np.log(lam) + log_lmax)


def containment_lambda(log_l_channel: float, log_lmax: float) -> float:
    """Largest λ whose region still contains a channel with the given log-likelihood."""
    if not np.isfinite(log_l_channel):
        return 0.0
    return float(min(1.0, np.exp(log_l_channel - log_lmax)))


def reweighted_credibility(prior_log_likelihood: np.ndarray, log_lmax: float, lambdas: np.ndarray) -> np.ndarray:
    """Credibility estimated from the prior sample as Σ_members L / Σ_all L."""
    values = np.asarray(prior_log_likelihood, dtype=float)
    weights = np.exp(values - np.max(values))
    ratios = values - log_lmax
    with np.errstate(divide="ignore"):
        log_lambdas = np.log(np.asarray(lambdas, dtype=float))
    members = ratios[None, :] >= log_lambdas[:, None]
    return (members * weights[None, :]).sum(axis=1) / weights.sum()


# ============================================================================
# CURVES
# ============================================================================


def blr_curves(
    prior: SampleSet,
    posterior: SampleSet,
    counts: CountsData,
    log_lmax: float,
    lambdas: Optional[np.ndarray] = None,
) -> RegionCurves:
    """
    Size and credibility curves of the bounded-likelihood regions.

    Args:
        prior: Prior sample (also used for λ_crit)
        posterior: Posterior sample
        counts: Observed counts
        log_lmax: Maximum log-likelihood
        lambdas: λ grid (default: λ = 0 plus 200 log-spaced points down to the smallest sampled ratio)

    Returns:
        RegionCurves

    Raises:
        NumericalError: If a sampled likelihood exceeds L_max (broken MLE)
    """
    prior_ll = prior.log_likelihood(counts)
    posterior_ll = posterior.log_likelihood(counts)
    sampled_max = max(np.max(prior_ll), np.max(posterior_ll))
    if log_lmax < sampled_max - MLE_SLACK:
        logger.error(f"log L_max {log_lmax:.6f} is below a sampled value {sampled_max:.6f}")
        raise NumericalError(
            f"log L_max = {log_lmax:.6f} is smaller than a sampled log-likelihood {sampled_max:.6f}",
            stage="regions",
        )

    if lambdas is None:
        finite = prior_ll[np.isfinite(prior_ll)]
        min_ratio = float(np.exp(np.min(finite) - log_lmax)) if finite.size else MIN_LAMBDA
        lambdas = lambda_grid(min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)

    size = survival_fraction(prior_ll - log_lmax, lambdas)
    credibility = survival_fraction(posterior_ll - log_lmax, lambdas)
    crit = lambda_crit(prior_ll, log_lmax)
    size_crit = float(survival_fraction(prior_ll - log_lmax, np.array([crit]))[0])
    credibility_crit = float(survival_fraction(posterior_ll - log_lmax, np.array([crit]))[0])

    logger.info(f"λ_crit = {crit:.4e}: s = {size_crit:.4f}, c = {credibility_crit:.4f}")
    return RegionCurves(
        lambdas=lambdas,
        size=size,
        credibility=credibility,
        size_err=binomial_error(size, prior.size, prior.ess_ratio),
        credibility_err=binomial_error(credibility, posterior.size, posterior.ess_ratio),
        lambda_crit=crit,
        size_crit=size_crit,
        credibility_crit=credibility_crit,
    )


def containment_report(
    log_l_channel: float,
    log_lmax: float,
    prior_log_likelihood: np.ndarray,
    posterior_log_likelihood: np.ndarray,
) -> Dict[str, float]:
    """Largest containing λ for a channel, with the size and credibility of that region."""
    lam = containment_lambda(log_l_channel, log_lmax)
    grid = np.array([lam])
    return {
        "lambda_true": lam,
        "s_true": float(survival_fraction(np.asarray(prior_log_likelihood) - log_lmax, grid)[0]),
        "c_true": float(survival_fraction(np.asarray(posterior_log_likelihood) - log_lmax, grid)[0]),
    }


# ============================================================================
# SCALAR PROPERTIES
# ============================================================================


@dataclass
class IntervalCurves:
    """Size and credibility of the likelihood intervals of a scalar property."""

    lambdas: np.ndarray
    size: np.ndarray
    credibility: np.ndarray
    lambda_crit: float
    size_crit: float
    credibility_crit: float
    plausible_interval: Tuple[float, float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lambda": self.lambdas, "s": self.size, "c": self.credibility})

    def summary(self) -> Dict[str, float]:
        return {
            "lambda_crit": self.lambda_crit,
            "s_crit": self.size_crit,
            "c_crit": self.credibility_crit,
            "plausible_low": self.plausible_interval[0],
            "plausible_high": self.plausible_interval[1],
        }


def interval_curves(
    grid: np.ndarray,
    likelihood: np.ndarray,
    prior_density: np.ndarray,
    points: int = GRID_POINTS,
) -> IntervalCurves:
    """
    Size/credibility curves for the intervals {F : L(D|F) ≥ λ max L(D|F)} by trapezoidal quadrature.

    Args:
        grid: Ascending property values
        likelihood: L(D|F) on the grid (nonnegative)
        prior_density: Prior density of F on the grid

    Returns:
        IntervalCurves with the plausible interval {F : L(D|F) > L(D)}

    Raises:
        ValueError: On shape mismatch or a likelihood that vanishes everywhere
    """
    grid = np.asarray(grid, dtype=float)
    likelihood = np.clip(np.asarray(likelihood, dtype=float), 0.0, None)
    prior_density = np.clip(np.asarray(prior_density, dtype=float), 0.0, None)
    if not grid.shape == likelihood.shape == prior_density.shape:
        raise ValueError("Grid, likelihood and prior density must have the same shape")
    peak = likelihood.max()
    if peak <= 0:
        raise ValueError("Marginal likelihood vanishes on the whole grid")

    ratio = likelihood / peak
    prior_mass = trapezoid(prior_density, grid)
    posterior_mass = trapezoid(prior_density * ratio, grid)
    positive = ratio[ratio > 0]
    lambdas = lambda_grid(float(positive.min()) if positive.size else MIN_LAMBDA, points)

    def contents(lam: float) -> Tuple[float, float]:
        inside = (ratio >= lam).astype(float)
        return (
            trapezoid(prior_density * inside, grid) / prior_mass,
            trapezoid(prior_density * ratio * inside, grid) / posterior_mass,
        )

    table = np.array([contents(lam) for lam in lambdas])
    crit = float(min(1.0, posterior_mass / prior_mass))
    size_crit, credibility_crit = contents(crit)
    plausible = grid[ratio > crit]
    interval = (float(plausible.min()), float(plausible.max())) if plausible.size else (np.nan, np.nan)
    logger.info(f"Plausible interval [{interval[0]:.4f}, {interval[1]:.4f}] at λ_crit = {crit:.4f}")
    return IntervalCurves(
        lambdas=lambdas,
        size=table[:, 0],
        credibility=table[:, 1],
        lambda_crit=crit,
        size_crit=float(size_crit),
        credibility_crit=float(credibility_crit),
        plausible_interval=interval,
    )
