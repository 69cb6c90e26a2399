"""Model selection across the nested qubit channel families: AIC, BIC and relative belief ratios."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from channels.families import NESTED_FAMILIES, ChannelFamily, get_family
from sampling.hmc import HmcConfig
from sampling.sample_set import SampleSet
from tomography.likelihood import CountsData, PriorSpec, counts_from_probabilities
from tomography.mle import MleResult, max_log_likelihood
from tomography.schemes import TomographyScheme
from utils.helpers import spawn_seeds, split_total
from utils.logging_config import get_logger

logger = get_logger(__name__)

TIE_TOLERANCE = 1e-9
CRITERIA = ("aic", "bic", "rbr")
NO_MODEL = "none"


# ============================================================================
# SAMPLING
# ============================================================================


def sample_family(
    family: ChannelFamily,
    scheme: TomographyScheme,
    n: int,
    seed: int,
    sampler: Any = None,
    hmc: Optional[HmcConfig] = None,
) -> SampleSet:
    """
    Primitive-prior draws from a family.

    Dephasing and Pauli channels are drawn directly (uniform p, uniform 3-simplex); the larger
    families run HMC with their Jacobian-corrected targets.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"Need at least one draw, got {n}")
    if sampler is None:
        from services.sampling_service import get_channel_sampler

        sampler = get_channel_sampler()
    cfg = (hmc or HmcConfig()).model_copy(update={"draws": n, "seed": seed})
    return sampler.sample(family, scheme, PriorSpec(), cfg)


# ============================================================================
# CRITERIA
# ============================================================================


def aic(log_lmax: float, k: int) -> float:
    """AIC = 2k − 2 log L_max."""
    return 2.0 * k - 2.0 * log_lmax


def bic(log_lmax: float, k: int, n: int) -> float:
    """
    BIC = k log N − 2 log L_max.

    Raises:
        ValueError: If N < 1
    """
    if n < 1:
        raise ValueError(f"BIC needs N ≥ 1, got {n}")
    return k * np.log(n) - 2.0 * log_lmax


def select_min(scores: Dict[str, float], ks: Dict[str, int]) -> str:
    """Family with the smallest score; ties go to the smaller parameter count."""
    return min(scores, key=lambda name: (scores[name], ks[name]))


@dataclass
class RbrReport:
    """Relative belief ratios of the candidate models."""

    log_mean_likelihood: Dict[str, float]
    posterior: Dict[str, float]
    ratio: Dict[str, float]
    strength: Dict[str, float]
    chosen: Optional[str]

    @property
    def favored(self) -> List[str]:
        return [name for name, value in self.ratio.items() if value > 1.0]


def rbr_from_log_likelihoods(log_likelihoods: Dict[str, np.ndarray]) -> RbrReport:
    """
    Relative belief ratios from per-model prior-sample log-likelihoods.

    With equal prior weights P(M) = 1/m: P(M|D) = P(M)·mean_M L / L(D) and RBR = P(M|D)/P(M).
    The chosen model maximizes P(M|D) among models with RBR > 1; the strength of model M₀ sums
    P(M|D) over all models whose RBR ties M₀'s within relative 1e-9.

    Raises:
        ValueError: If any sample is empty
    """
    names = list(log_likelihoods)
    if any(np.asarray(log_likelihoods[n]).size == 0 for n in names):
        raise ValueError("Every model needs a non-empty sample")
    prior_weight = 1.0 / len(names)
    log_means = {n: float(logsumexp(log_likelihoods[n]) - np.log(np.asarray(log_likelihoods[n]).size)) for n in names}
    log_evidence = logsumexp([np.log(prior_weight) + log_means[n] for n in names])
    posterior = {n: float(np.exp(np.log(prior_weight) + log_means[n] - log_evidence)) for n in names}
    ratio = {n: posterior[n] / prior_weight for n in names}

    strength = {}
    for name in names:
        tied = [m for m in names if abs(ratio[m] - ratio[name]) <= TIE_TOLERANCE * max(ratio[m], ratio[name])]
        strength[name] = float(sum(posterior[m] for m in tied))

    favored = [n for n in names if ratio[n] > 1.0]
    chosen = max(favored, key=lambda n: posterior[n]) if favored else None
    if chosen is None:
        logger.info("No model favored by the relative belief ratio")
    return RbrReport(
        log_mean_likelihood=log_means,
        posterior=posterior,
        ratio=ratio,
        strength=strength,
        chosen=chosen,
    )


def rbr(samples: Dict[str, SampleSet], counts: CountsData, scheme: TomographyScheme) -> RbrReport:
    """
    Relative belief ratios for counts from the models' prior samples.

    Raises:
        ValueError: If counts do not match the scheme or a sample is missing
    """
    counts.check_scheme(scheme)
    return rbr_from_log_likelihoods({name: s.log_likelihood(counts) for name, s in samples.items()})


# ============================================================================
# NESTED MAXIMUM LIKELIHOOD
# ============================================================================


def embed_along_nesting(family: ChannelFamily, ancestor: str, params: np.ndarray) -> Optional[np.ndarray]:
    """
    Parameters of `family` reproducing the `ancestor` channel with the given parameters.

    Returns:
        The embedded parameters, or None if `ancestor` is not below `family` in the nesting
    """
    chain: List[ChannelFamily] = []
    current: Optional[ChannelFamily] = family
    while current is not None and current.name != ancestor:
        chain.append(current)
        current = get_family(current.parent, current.dim) if current.parent else None
    if current is None or any(step.embed is None for step in chain):
        return None
    for step in reversed(chain):
        params = step.embed_from_parent(params)
    return params


def nested_mle(
    counts: CountsData,
    scheme: TomographyScheme,
    families: Sequence[ChannelFamily],
    restarts: int = 20,
    seed: int = 0,
    max_workers: int = 1,
) -> Dict[str, MleResult]:
    """
    log L_max for each family along the nesting, seeding each optimization with the previous optimum.

    Since every smaller family is contained in the next one, log L_max is made nondecreasing. When a
    family's optimizer ends below the smaller family's optimum, it takes over that optimum (embedded
    parameters, Choi matrix and value) and records the family it came from in `inherited_from`.
    """
    results: Dict[str, MleResult] = {}
    previous: Optional[MleResult] = None
    previous_name: Optional[str] = None
    for index, family in enumerate(families):
        embedded = None
        if previous is not None:
            embedded = embed_along_nesting(family, previous_name, previous.params)
        result = max_log_likelihood(
            counts,
            scheme,
            family,
            restarts=restarts,
            seed=seed + index,
            extra_starts=[] if embedded is None else [embedded],
            max_workers=max_workers,
        )
        if previous is not None and embedded is not None and result.log_lmax < previous.log_lmax:
            logger.warning(
                f"'{family.name}' optimum {result.log_lmax:.8f} below the nested value {previous.log_lmax:.8f}; "
                f"inheriting the '{previous_name}' optimum"
            )
            result = MleResult(
                params=embedded,
                log_lmax=previous.log_lmax,
                choi=previous.choi,
                n_starts=result.n_starts,
                n_converged=result.n_converged,
                inherited_from=previous.inherited_from or previous_name,
            )
        results[family.name] = result
        previous, previous_name = result, family.name
    return results


# ============================================================================
# SELECTION REPORT
# ============================================================================


@dataclass
class SelectionReport:
    """Per-family criteria and the model chosen by each."""

    families: List[str]
    parameter_counts: Dict[str, int]
    log_lmax: Dict[str, float]
    aic: Dict[str, float]
    bic: Dict[str, float]
    rbr: RbrReport
    chosen: Dict[str, Optional[str]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "family": self.families,
                "k": [self.parameter_counts[f] for f in self.families],
                "log_lmax": [self.log_lmax[f] for f in self.families],
                "aic": [self.aic[f] for f in self.families],
                "bic": [self.bic[f] for f in self.families],
                "rbr": [self.rbr.ratio[f] for f in self.families],
                "posterior": [self.rbr.posterior[f] for f in self.families],
                "strength": [self.rbr.strength[f] for f in self.families],
            }
        )


def select_model(
    counts: CountsData,
    scheme: TomographyScheme,
    samples: Dict[str, SampleSet],
    restarts: int = 20,
    seed: int = 0,
    max_workers: int = 1,
) -> SelectionReport:
    """
    Evaluate AIC, BIC and RBR over the families in `samples` (ordered along the nesting).

    Returns:
        SelectionReport
    """
    families = [samples[name].family for name in NESTED_FAMILIES if name in samples]
    mles = nested_mle(counts, scheme, families, restarts=restarts, seed=seed, max_workers=max_workers)
    names = [f.name for f in families]
    ks = {f.name: f.n_params for f in families}
    log_lmax = {name: mles[name].log_lmax for name in names}
    aic_scores = {name: aic(log_lmax[name], ks[name]) for name in names}
    bic_scores = {name: bic(log_lmax[name], ks[name], max(counts.total, 1)) for name in names}
    rbr_report = rbr(samples, counts, scheme)
    report = SelectionReport(
        families=names,
        parameter_counts=ks,
        log_lmax=log_lmax,
        aic=aic_scores,
        bic=bic_scores,
        rbr=rbr_report,
        chosen={
            "aic": select_min(aic_scores, ks),
            "bic": select_min(bic_scores, ks),
            "rbr": rbr_report.chosen,
        },
    )
    logger.info(f"Selected models: {report.chosen}")
    return report


# ============================================================================
# ASSESSMENT HARNESS
# ============================================================================


@dataclass
class Assessment:
    """Outcome of the criteria assessment over simulated data."""

    runs: pd.DataFrame
    selection: pd.DataFrame
    evidence_against: pd.DataFrame


def _assess_cell(
    true_family: str,
    channel: int,
    n_total: int,
    probabilities: np.ndarray,
    samples: Dict[str, SampleSet],
    scheme: TomographyScheme,
    restarts: int,
    seed: int,
) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    counts = counts_from_probabilities(probabilities, scheme, split_total(n_total, scheme.n_inputs), rng)
    report = select_model(counts, scheme, samples, restarts=restarts, seed=seed)
    row: Dict[str, Any] = {"true_family": true_family, "channel": channel, "N": n_total}
    for criterion in CRITERIA:
        row[criterion] = report.chosen[criterion] or NO_MODEL
    for name, value in report.rbr.ratio.items():
        row[f"rbr_{name}"] = value
    return row


def assess_criteria(
    samples: Dict[str, SampleSet],
    scheme: TomographyScheme,
    n_channels: int,
    n_values: Sequence[int],
    seed: int = 0,
    restarts: int = 5,
    max_workers: int = 1,
) -> Assessment:
    """
    Simulate data from channels drawn from each family and tally which model each criterion picks.

    For every (true family, N) cell, n_channels channels are drawn from that family's prior
    sample, N copies are spread evenly over the inputs, and AIC, BIC and RBR each select a model.
    Each run has its own seed derived from (seed, family, channel, N), so the tables do not
    depend on max_workers.

    Args:
        samples: Prior samples of every candidate family (also the source of the true channels)
        scheme: Tomography scheme
        n_channels: Channels per family
        n_values: Total copies per dataset
        seed: Run seed
        restarts: MLE restarts per family and dataset
        max_workers: Threads over runs

    Returns:
        Assessment with the raw runs, the selection-frequency table and the evidence-against table
    """
    names = [name for name in NESTED_FAMILIES if name in samples]
    tasks = []
    for fi, name in enumerate(names):
        picker = np.random.default_rng(spawn_seeds(seed, 1, fi)[0])
        indices = picker.integers(0, samples[name].size, size=n_channels)
        for ci, index in enumerate(indices):
            for ni, n_total in enumerate(n_values):
                cell_seed = spawn_seeds(seed, 1, fi, ci, ni)[0]
                tasks.append((name, ci, int(n_total), samples[name].probabilities[index], cell_seed))

    logger.info(f"Assessing criteria over {len(tasks)} simulated datasets")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        rows = list(
            executor.map(
                lambda t: _assess_cell(t[0], t[1], t[2], t[3], samples, scheme, restarts, t[4]),
                tasks,
            )
        )
    runs = pd.DataFrame(rows)

    selection = (
        runs.melt(id_vars=["true_family", "N"], value_vars=list(CRITERIA), var_name="criterion", value_name="selected")
        .groupby(["criterion", "true_family", "N", "selected"])
        .size()
        .rename("count")
        .reset_index()
    )
    selection["fraction"] = selection["count"] / n_channels

    against_columns = [f"rbr_{name}" for name in names]
    against = runs[["true_family", "N"]].copy()
    for name, column in zip(names, against_columns):
        against[name] = (runs[column] < 1.0).astype(int)
    evidence_against = (
        against.melt(id_vars=["true_family", "N"], value_vars=names, var_name="model", value_name="against")
        .groupby(["true_family", "N", "model"])["against"]
        .agg(["sum", "mean"])
        .rename(columns={"sum": "count", "mean": "fraction"})
        .reset_index()
    )
    return Assessment(runs=runs, selection=selection, evidence_against=evidence_against)


def correct_rate(assessment: Assessment, criterion: str, true_family: str, n_total: int) -> float:
    """Fraction of runs in which a criterion picked the true family."""
    runs = assessment.runs
    cell = runs[(runs["true_family"] == true_family) & (runs["N"] == n_total)]
    if cell.empty:
        return float("nan")
    return float((cell[criterion] == true_family).mean())


def default_families(names: Sequence[str] = NESTED_FAMILIES) -> List[ChannelFamily]:
    return [get_family(name) for name in names]
