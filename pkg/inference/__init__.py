"""Error regions, marginal likelihoods and model selection built on channel samples."""
