"""LangGraph nodes for the marginal-likelihood pipeline."""

from functools import wraps
from typing import Any, Callable, Dict

import numpy as np
from scipy.special import logsumexp

from graph.state import MarginalState
from inference.fitting import fit_beta_mixture, fit_fourier, fit_smoothing_spline, tail_exponent
from inference.marginal import (
    MarginalResult,
    cdf_estimate,
    combine_weights,
    floored_weight,
    reweighting_term,
    straight_line_deviation,
)
from inference.regions import interval_curves
from sampling.sample_set import SampleSet
from utils.errors import NumericalError
from utils.helpers import spawn_seeds
from utils.logging_config import get_logger, log_duration

logger = get_logger(__name__)

PROPERTY_BATCH = 20_000
DEFAULT_EXPONENT = 1.0


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================


def stage(name: str) -> Callable:
    """Log a node's start and re-raise any failure as NumericalError tagged with the stage."""

    def decorate(node: Callable[[MarginalState], Dict[str, Any]]) -> Callable[[MarginalState], Dict[str, Any]]:
        @wraps(node)
        def run(state: MarginalState) -> Dict[str, Any]:
            logger.info(f"Stage '{name}' started")
            try:
                with log_duration(logger, f"Stage '{name}'"):
                    return node(state)
            except NumericalError:
                logger.error(f"Stage '{name}' failed")
                raise
            except Exception as e:
                logger.error(f"Stage '{name}' failed: {e}")
                raise NumericalError(str(e), stage=name) from e

        return run

    return decorate


def property_values(sample: SampleSet, prop) -> np.ndarray:
    """Property of every draw, evaluated in batches."""
    pieces = [
        prop(sample.chois(np.arange(start, min(start + PROPERTY_BATCH, sample.size))))
        for start in range(0, sample.size, PROPERTY_BATCH)
    ]
    return np.concatenate(pieces)


def log_mean_likelihood(sample: SampleSet, counts) -> float:
    values = sample.log_likelihood(counts)
    return float(logsumexp(values) - np.log(values.size))


def check_residual(fit, tolerance: float, name: str) -> None:
    if fit.residual > tolerance:
        raise NumericalError(
            f"{fit.kind} fit residual {fit.residual:.4f} exceeds the tolerance {tolerance}",
            stage=name,
        )


def stage_seed(state: MarginalState, *key: int) -> int:
    return spawn_seeds(state["config"].seed, 1, *key)[0]


def draw(state: MarginalState, draws: int, seed: int, weighted: bool, with_data: bool) -> SampleSet:
    config = state["config"]
    weight = combine_weights(state["weights"]) if weighted else None
    extra = None
    if weight is not None or state["tilt"] is not None:
        extra = reweighting_term(state["prop"], weight, state["tilt"])
    hmc = config.hmc.model_copy(update={"draws": draws, "seed": seed})
    return state["sampler"].sample(
        state["family"],
        state["scheme"],
        state["prior"],
        hmc,
        counts=state["counts"] if with_data else None,
        extra=extra,
        chains=config.chains,
    )


# ============================================================================
# STAGE 1: PRIOR
# ============================================================================


@stage("sample_prior")
def sample_prior_node(state: MarginalState) -> Dict[str, Any]:
    """Sample the (optionally tilted) prior and record the mean likelihood L(D)."""
    config = state["config"]
    sample = draw(state, config.prior_draws, stage_seed(state, 0), weighted=False, with_data=False)
    return {
        "prior_values": property_values(sample, state["prop"]),
        "prior_log_evidence": log_mean_likelihood(sample, state["counts"]),
        "sample_sizes": {**state["sample_sizes"], "prior": sample.size},
    }


@stage("fit_prior_cdf")
def fit_prior_cdf_node(state: MarginalState) -> Dict[str, Any]:
    """Fit the prior CDF of F with an incomplete-beta mixture; its density is the first weight."""
    prop, config = state["prop"], state["config"]
    table = cdf_estimate(state["prior_values"], prop, state["grid"])
    x = state["x_grid"]
    a_min, b_min = prop.a_min, prop.b_min
    if a_min is None or b_min is None:
        try:
            a_min = a_min or tail_exponent(x, table, lower=True)
            b_min = b_min or tail_exponent(x, table, lower=False)
        except ValueError as e:
            logger.warning(f"Endpoint exponents could not be estimated ({e}); using {DEFAULT_EXPONENT}")
            a_min, b_min = a_min or DEFAULT_EXPONENT, b_min or DEFAULT_EXPONENT
        a_min, b_min = max(a_min, 0.1), max(b_min, 0.1)
        logger.info(f"Estimated endpoint exponents a_min={a_min:.2f}, b_min={b_min:.2f}")
    fit = fit_beta_mixture(x, table, a_min, b_min, terms=config.beta_terms, seed=config.seed)
    check_residual(fit, config.fit_tolerance, "fit_prior_cdf")
    return {"prior_table": table, "prior_fit": fit, "weights": [floored_weight(fit)]}


# ============================================================================
# STAGE 2: REWEIGHTED PRIOR
# ============================================================================


@stage("sample_reweighted_prior")
def sample_reweighted_prior_node(state: MarginalState) -> Dict[str, Any]:
    """Sample the prior divided by the current weight of F."""
    config = state["config"]
    seed = stage_seed(state, 1, state["iteration"])
    sample = draw(state, config.reweighted_draws, seed, weighted=True, with_data=False)
    return {
        "reweighted_values": property_values(sample, state["prop"]),
        "reweighted_log_evidence": log_mean_likelihood(sample, state["counts"]),
        "sample_sizes": {**state["sample_sizes"], "reweighted_prior": sample.size},
    }


@stage("fit_reweighted_prior")
def fit_reweighted_prior_node(state: MarginalState) -> Dict[str, Any]:
    """Fit the reweighted prior CDF with a sine series and measure its distance from the line."""
    table = cdf_estimate(state["reweighted_values"], state["prop"], state["grid"])
    fit = fit_fourier(state["x_grid"], table)
    check_residual(fit, state["config"].fit_tolerance, "fit_reweighted_prior")
    deviation = straight_line_deviation(state["x_grid"], table)
    iteration = state["iteration"] + 1
    logger.info(f"Reweighting round {iteration}: sup-deviation from the line {deviation:.4f}")
    return {"reweighted_table": table, "reweighted_fit": fit, "deviation": deviation, "iteration": iteration}


def route_after_reweighting(state: MarginalState) -> str:
    """
    Decide whether to reweight again.

    Returns:
        "iterate" while the deviation is above tolerance and rounds remain, else "posterior"
    """
    config = state["config"]
    if state["deviation"] >= config.convergence_tolerance and state["iteration"] < config.iterations:
        return "iterate"
    return "posterior"


def extend_weights_node(state: MarginalState) -> Dict[str, Any]:
    """Fold the latest sine-series density into the weight."""
    return {"weights": state["weights"] + [floored_weight(state["reweighted_fit"])]}


# ============================================================================
# STAGE 3: REWEIGHTED POSTERIOR
# ============================================================================


@stage("sample_reweighted_posterior")
def sample_reweighted_posterior_node(state: MarginalState) -> Dict[str, Any]:
    """Sample the reweighted prior times the likelihood."""
    sample = draw(state, state["config"].posterior_draws, stage_seed(state, 2), weighted=True, with_data=True)
    return {
        "posterior_values": property_values(sample, state["prop"]),
        "sample_sizes": {**state["sample_sizes"], "reweighted_posterior": sample.size},
    }


@stage("fit_posterior_cdf")
def fit_posterior_cdf_node(state: MarginalState) -> Dict[str, Any]:
    table = cdf_estimate(state["posterior_values"], state["prop"], state["grid"])
    fit = fit_smoothing_spline(state["x_grid"], table)
    check_residual(fit, state["config"].fit_tolerance, "fit_posterior_cdf")
    return {"posterior_table": table, "posterior_fit": fit}


# ============================================================================
# OUTPUT
# ============================================================================


@stage("compute_marginal")
def compute_marginal_node(state: MarginalState) -> Dict[str, Any]:
    """L(D|F)/L(D) = exp(log L̃(D) − log L(D)) · W̃_D / W̃_0 on the grid."""
    prop, x = state["prop"], state["x_grid"]
    w0 = state["reweighted_fit"].derivative(x)
    wd = state["posterior_fit"].derivative(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w0 > 0, wd / w0, 0.0)
    ratio = np.where(np.isfinite(ratio), np.clip(ratio, 0.0, None), 0.0)
    scale = np.exp(state["reweighted_log_evidence"] - state["prior_log_evidence"])
    prior_density = state["prior_fit"].derivative(x) / (prop.high - prop.low)

    result = MarginalResult(
        property_name=prop.name,
        grid=state["grid"],
        likelihood=scale * ratio,
        prior_density=prior_density,
        log_scale=state["prior_log_evidence"],
        tables={
            "x": x,
            "prior": state["prior_table"],
            "reweighted_prior": state["reweighted_table"],
            "reweighted_posterior": state["posterior_table"],
        },
        fits={
            "prior": state["prior_fit"].summary(),
            "reweighted_prior": state["reweighted_fit"].summary(),
            "reweighted_posterior": state["posterior_fit"].summary(),
        },
        sample_sizes=state["sample_sizes"],
        iterations=state["iteration"],
    )
    logger.info(f"Marginal likelihood peaks at F = {result.summary()['argmax_F']:.4f}")
    return {"result": result}


@stage("interval_curves")
def interval_curves_node(state: MarginalState) -> Dict[str, Any]:
    result = state["result"]
    result.interval = interval_curves(result.grid, result.likelihood, result.prior_density)
    return {"result": result}
