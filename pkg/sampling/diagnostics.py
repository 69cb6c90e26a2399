"""Autocorrelation and effective-sample-size diagnostics for HMC chains."""

from typing import Dict

import numpy as np
from numpy.fft import irfft, rfft

from utils.logging_config import get_logger

logger = get_logger(__name__)


def autocovariance(x: np.ndarray) -> np.ndarray:
    """
    Biased autocovariance of a 1-D series at all lags, computed with a zero-padded FFT.

    Args:
        x: Series of length n

    Returns:
        Array of length n, entry t is (1/n) Σ (x_s − x̄)(x_{s+t} − x̄)
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    centered = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = rfft(centered, n=size)
    acov = irfft(spectrum * np.conjugate(spectrum), n=size)[:n]
    return acov / n


def integrated_autocorrelation_time(x: np.ndarray) -> float:
    """
    Integrated autocorrelation time τ with Geyer's initial positive and monotone sequences.

    A constant series has τ = 1 by convention.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        return 1.0
    acov = autocovariance(x)
    if acov[0] <= 0.0 or not np.isfinite(acov[0]):
        return 1.0
    rho = acov / acov[0]

    # pair sums Γ_m = ρ_{2m} + ρ_{2m+1}, truncated at the first negative one
    pairs = []
    for m in range((n - 1) // 2):
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma < 0.0:
            break
        pairs.append(gamma)
    if not pairs:
        return 1.0
    pairs = np.minimum.accumulate(np.array(pairs))
    tau = -1.0 + 2.0 * pairs.sum()
    return float(max(tau, 1.0 / np.log10(max(n, 10))))


def effective_sample_size(draws: np.ndarray) -> np.ndarray:
    """
    Per-coordinate effective sample size n/τ.

    Args:
        draws: (n_draws, n_params) chain

    Returns:
        (n_params,) ESS values
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    n = draws.shape[0]
    taus = np.array([integrated_autocorrelation_time(draws[:, j]) for j in range(draws.shape[1])])
    return n / taus


def chain_summary(draws: np.ndarray) -> Dict[str, np.ndarray]:
    """Autocorrelation times and ESS per coordinate, plus the minimum ESS."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] == 0:
        return {"tau": np.array([]), "ess": np.array([]), "min_ess": 0.0}
    taus = np.array([integrated_autocorrelation_time(draws[:, j]) for j in range(draws.shape[1])])
    ess = draws.shape[0] / taus
    return {"tau": taus, "ess": ess, "min_ess": float(ess.min())}
