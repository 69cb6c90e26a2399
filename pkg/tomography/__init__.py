"""Tomography schemes, counts, priors, likelihoods and maximum-likelihood estimation."""
