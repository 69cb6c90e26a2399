"""Maximum-likelihood estimation over a channel family's parameters."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from channels.families import ChannelFamily
from tomography.likelihood import CountsData, log_likelihood_batch
from tomography.schemes import TomographyScheme
from utils.errors import NumericalError
from utils.logging_config import get_logger

logger = get_logger(__name__)

DEFAULT_RESTARTS = 20
INVALID_PENALTY = 1e12


@dataclass
class MleResult:
    """Best point found by the multi-start optimizer."""

    params: np.ndarray
    log_lmax: float
    choi: np.ndarray
    n_starts: int
    n_converged: int
    inherited_from: Optional[str] = None


def _optimize(objective, start: np.ndarray) -> tuple:
    result = minimize(objective, start, method="BFGS", jac="3-point", options={"gtol": 1e-8, "maxiter": 2000})
    return np.asarray(result.x), float(result.fun), bool(result.success)


def max_log_likelihood(
    counts: CountsData,
    scheme: TomographyScheme,
    family: ChannelFamily,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    extra_starts: Optional[Sequence[np.ndarray]] = None,
    max_workers: int = 1,
) -> MleResult:
    """
    Multi-start quasi-Newton maximization of the log-likelihood over a family's parameters.

    Args:
        counts: Observed counts
        scheme: Tomography scheme the counts belong to
        family: Channel family to optimize over
        restarts: Number of uniformly random starting points
        seed: RNG seed for the starting points
        extra_starts: Additional starting points (e.g. an embedded smaller-family optimum)
        max_workers: Threads used to run starts concurrently

    Returns:
        MleResult with the best parameters and log L_max

    Raises:
        ValueError: If counts do not match the scheme
        NumericalError: If no start reaches a finite likelihood
    """
    counts.check_scheme(scheme)
    rng = np.random.default_rng(seed)
    starts: List[np.ndarray] = [np.asarray(s, dtype=float) for s in (extra_starts or [])]
    starts.extend(family.random_params(rng, restarts))

    def objective(params: np.ndarray) -> float:
        value = log_likelihood_batch(family.probabilities(params[None], scheme), counts)[0]
        return -value if np.isfinite(value) else INVALID_PENALTY

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        results = list(executor.map(lambda s: _optimize(objective, s), starts))
    for index, (_, f, ok) in enumerate(results):
        value = "invalid" if f >= INVALID_PENALTY else f"{-f:.6f}"
        logger.debug(f"Start {index} over '{family.name}': log L = {value}, converged={ok}")

    # extra starts are genuine family members, so the best value never drops below theirs
    candidates = [(x, f, ok) for x, f, ok in results]
    for start in starts[: len(extra_starts or [])]:
        candidates.append((start, objective(start), False))

    finite = [(x, f, ok) for x, f, ok in candidates if f < INVALID_PENALTY]
    if not finite:
        raise NumericalError(f"All {len(starts)} MLE starts failed for family '{family.name}'", stage="mle")
    n_converged = sum(1 for _, _, ok in results if ok)
    if n_converged == 0:
        logger.warning(f"No MLE start reported convergence for family '{family.name}'; using best value found")

    best_x, best_f, _ = min(finite, key=lambda item: item[1])
    logger.info(f"MLE over '{family.name}': log L_max = {-best_f:.6f} ({n_converged}/{len(starts)} converged)")
    return MleResult(
        params=best_x,
        log_lmax=-best_f,
        choi=family.choi(best_x),
        n_starts=len(starts),
        n_converged=n_converged,
    )
