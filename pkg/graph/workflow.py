"""LangGraph workflow compilation and execution for the marginal-likelihood pipeline."""

from typing import Any, Callable, Optional

import numpy as np
from langgraph.graph import END, StateGraph

from graph.nodes import (
    compute_marginal_node,
    extend_weights_node,
    fit_posterior_cdf_node,
    fit_prior_cdf_node,
    fit_reweighted_prior_node,
    interval_curves_node,
    route_after_reweighting,
    sample_prior_node,
    sample_reweighted_posterior_node,
    sample_reweighted_prior_node,
)
from graph.state import MarginalState
from utils.logging_config import get_logger

logger = get_logger(__name__)

RECURSION_LIMIT = 200


def create_marginal_graph():
    """
    Create and compile the marginal-likelihood graph.

    Flow:
    1. sample_prior → fit_prior_cdf (beta mixture)
    2. sample_reweighted_prior → fit_reweighted_prior (sine series)
        → extend_weights → back to 2 (not yet flat and rounds remain)
        → sample_reweighted_posterior (otherwise)
    3. sample_reweighted_posterior → fit_posterior_cdf (smoothing spline)
    4. compute_marginal → interval_curves → END

    Returns:
        Compiled StateGraph
    """
    logger.info("Creating marginal-likelihood graph")

    workflow = StateGraph(MarginalState)

    workflow.add_node("sample_prior", sample_prior_node)
    workflow.add_node("fit_prior_cdf", fit_prior_cdf_node)
    workflow.add_node("sample_reweighted_prior", sample_reweighted_prior_node)
    workflow.add_node("fit_reweighted_prior", fit_reweighted_prior_node)
    workflow.add_node("extend_weights", extend_weights_node)
    workflow.add_node("sample_reweighted_posterior", sample_reweighted_posterior_node)
    workflow.add_node("fit_posterior_cdf", fit_posterior_cdf_node)
    workflow.add_node("compute_marginal", compute_marginal_node)
    workflow.add_node("interval_curves", interval_curves_node)

    workflow.set_entry_point("sample_prior")

    workflow.add_edge("sample_prior", "fit_prior_cdf")
    workflow.add_edge("fit_prior_cdf", "sample_reweighted_prior")
    workflow.add_edge("sample_reweighted_prior", "fit_reweighted_prior")

    workflow.add_conditional_edges(
        "fit_reweighted_prior",
        route_after_reweighting,
        {
            "iterate": "extend_weights",
            "posterior": "sample_reweighted_posterior",
        },
    )
    workflow.add_edge("extend_weights", "sample_reweighted_prior")

    workflow.add_edge("sample_reweighted_posterior", "fit_posterior_cdf")
    workflow.add_edge("fit_posterior_cdf", "compute_marginal")
    workflow.add_edge("compute_marginal", "interval_curves")
    workflow.add_edge("interval_curves", END)

    graph = workflow.compile()

    logger.info("Marginal-likelihood graph compiled successfully")

    return graph


# Global graph instance
marginal_graph = None


def get_marginal_graph():
    """Get the compiled marginal-likelihood graph instance."""
    global marginal_graph
    if marginal_graph is None:
        marginal_graph = create_marginal_graph()
    return marginal_graph


def initial_state(
    counts,
    scheme,
    family,
    prop,
    prior,
    config,
    tilt: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    sampler: Any = None,
) -> MarginalState:
    """Fresh pipeline state with the property grid laid out."""
    if sampler is None:
        from services.sampling_service import get_channel_sampler

        sampler = get_channel_sampler()
    x_grid = np.linspace(0.0, 1.0, config.grid_points)
    return MarginalState(
        counts=counts,
        scheme=scheme,
        family=family,
        prop=prop,
        prior=prior,
        config=config,
        tilt=tilt,
        sampler=sampler,
        grid=prop.unscale(x_grid),
        x_grid=x_grid,
        prior_values=None,
        prior_log_evidence=None,
        prior_table=None,
        prior_fit=None,
        weights=[],
        reweighted_values=None,
        reweighted_log_evidence=None,
        reweighted_table=None,
        reweighted_fit=None,
        deviation=None,
        iteration=0,
        posterior_values=None,
        posterior_table=None,
        posterior_fit=None,
        sample_sizes={},
        result=None,
    )


def run_marginal_pipeline(counts, scheme, family, prop, prior, config, tilt=None, sampler=None):
    """
    Run the marginal-likelihood graph to completion.

    Returns:
        MarginalResult from the final state
    """
    logger.info(f"Running marginal-likelihood pipeline for '{prop.name}' over family '{family.name}'")
    graph = get_marginal_graph()
    state = initial_state(counts, scheme, family, prop, prior, config, tilt=tilt, sampler=sampler)
    final_state = graph.invoke(state, config={"recursion_limit": RECURSION_LIMIT})
    return final_state["result"]
