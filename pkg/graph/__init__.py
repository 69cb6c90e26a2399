"""LangGraph components for the marginal-likelihood pipeline."""
