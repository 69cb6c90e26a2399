"""Sampling service: prior and posterior targets over channel families, HMC runs to SampleSets."""

from typing import Callable, List, Optional

import numpy as np

from channels.duality import born_probabilities_batch
from channels.families import ChannelFamily
from sampling.hmc import HmcConfig, TargetDensity, run_chains
from sampling.sample_set import SampleSet
from tomography.likelihood import CountsData, PriorSpec, log_likelihood_batch, log_prior_batch
from tomography.schemes import TomographyScheme
from utils.errors import NumericalError
from utils.logging_config import get_logger

logger = get_logger(__name__)

START_CANDIDATES = 64
PROBABILITY_BATCH = 20_000

ExtraLogTerm = Callable[[np.ndarray], np.ndarray]


def build_target(
    family: ChannelFamily,
    scheme: TomographyScheme,
    prior: PriorSpec,
    counts: Optional[CountsData] = None,
    extra: Optional[ExtraLogTerm] = None,
) -> TargetDensity:
    """
    Log density in parameter space for a prior (and optionally a likelihood) given in probability space.

    log w(θ) = log w₀(p(θ)) + log |J(θ)| [+ log L(D|p(θ))] [+ extra(ρ(θ))]

    Args:
        family: Channel family providing the parameter → Choi map
        scheme: Tomography scheme defining p(θ)
        prior: Prior density in probability space
        counts: Data for a posterior target; None for the prior
        extra: Additional log terms evaluated on a batch of Choi matrices

    Returns:
        TargetDensity with a batched log density
    """
    prior.check_normalized(scheme)
    if counts is not None:
        counts.check_scheme(scheme)

    def log_w_batch(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        chois = family.choi_batch(points)
        probs = born_probabilities_batch(chois, scheme)
        values = log_prior_batch(probs, prior) + family.log_jacobian_batch(points, scheme)
        if counts is not None:
            values = values + log_likelihood_batch(probs, counts)
        if extra is not None:
            values = values + extra(chois)
        return np.where(np.isnan(values), -np.inf, values)

    return TargetDensity(
        dimension=family.n_params,
        log_w=lambda theta: float(log_w_batch(np.asarray(theta)[None])[0]),
        log_w_batch=log_w_batch,
    )


def probabilities_in_batches(family: ChannelFamily, scheme: TomographyScheme, params: np.ndarray) -> np.ndarray:
    pieces = [
        family.probabilities(params[start:start + PROBABILITY_BATCH], scheme)
        for start in range(0, params.shape[0], PROBABILITY_BATCH)
    ]
    return np.concatenate(pieces, axis=0)


class ChannelSampler:
    """Service that draws channels from a family under a prior, posterior or reweighted target."""

    def __init__(self, max_workers: int = 1):
        """
        Initialize the sampler.

        Args:
            max_workers: Threads used to run independent chains
        """
        self.max_workers = max_workers
        logger.info(f"Channel sampler initialized (max_workers={max_workers})")

    def start_points(
        self,
        target: TargetDensity,
        family: ChannelFamily,
        rng: np.random.Generator,
        n_chains: int,
    ) -> List[np.ndarray]:
        """
        Best n_chains of START_CANDIDATES random parameter points by target density.

        Raises:
            NumericalError: If every candidate has zero density
        """
        candidates = family.random_params(rng, max(START_CANDIDATES, n_chains))
        values = target.log_w_batch(candidates)
        order = np.argsort(-values)
        finite = [candidates[i] for i in order if np.isfinite(values[i])]
        if not finite:
            raise NumericalError(f"No start point with positive density for family '{family.name}'", stage="hmc")
        return [finite[k % len(finite)] for k in range(n_chains)]

    def sample(
        self,
        family: ChannelFamily,
        scheme: TomographyScheme,
        prior: PriorSpec,
        cfg: HmcConfig,
        counts: Optional[CountsData] = None,
        extra: Optional[ExtraLogTerm] = None,
        chains: int = 1,
    ) -> SampleSet:
        """
        Sample a family under prior × likelihood × exp(extra).

        Families with a direct sampler (dephasing, Pauli) are drawn exactly when the target is the
        primitive prior; everything else runs HMC.

        Args:
            family: Channel family
            scheme: Tomography scheme
            prior: Prior in probability space
            cfg: HMC configuration (cfg.draws is the total over all chains)
            counts: Data for a posterior sample
            extra: Extra log terms on Choi matrices (reweighting)
            chains: Number of independent chains

        Returns:
            SampleSet with cached Born probabilities
        """
        if family.direct_sampler is not None and counts is None and extra is None and prior.kind == "primitive":
            return self.sample_direct(family, scheme, cfg.draws, cfg.seed)

        target = build_target(family, scheme, prior, counts=counts, extra=extra)
        rng = np.random.default_rng(cfg.seed)
        starts = self.start_points(target, family, rng, chains)
        logger.info(
            f"Sampling '{family.name}' (d={family.dim}) with {chains} chain(s), "
            f"{'posterior' if counts is not None else 'prior'} target"
        )
        chain = run_chains(target, cfg, starts, max_workers=self.max_workers)
        probabilities = probabilities_in_batches(family, scheme, chain.draws)
        return SampleSet(
            family=family,
            params=chain.draws,
            probabilities=probabilities,
            ess=chain.ess,
            acceptance=chain.acceptance_rate,
            metadata={"step_size": chain.step_size, "log_w": chain.log_w, "diagnostics": chain.diagnostics},
        )

    def sample_direct(self, family: ChannelFamily, scheme: TomographyScheme, n: int, seed: int) -> SampleSet:
        """
        Exact primitive-prior draws for families with a direct sampler.

        Raises:
            ValueError: If the family has no direct sampler
        """
        if family.direct_sampler is None:
            raise ValueError(f"Family '{family.name}' has no direct sampler")
        rng = np.random.default_rng(seed)
        params = family.direct_sampler(rng, n)
        logger.info(f"Drew {n} direct samples from '{family.name}'")
        return SampleSet(
            family=family,
            params=params,
            probabilities=probabilities_in_batches(family, scheme, params),
            ess=float(n),
            acceptance=None,
        )


# Global instance (initialized on first use)
channel_sampler: Optional[ChannelSampler] = None


def get_channel_sampler() -> ChannelSampler:
    """Get the global channel sampler instance."""
    global channel_sampler
    if channel_sampler is None:
        from services.config_manager import get_settings

        channel_sampler = ChannelSampler(max_workers=get_settings().max_workers)
    return channel_sampler
