"""Counts data, probability-space priors, likelihoods and data simulation."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import xlogy

from channels.catalog import parse_channel_spec, parse_parameters
from channels.duality import born_probabilities
from tomography.schemes import TomographyScheme
from utils.errors import ConfigError
from utils.helpers import as_int_list
from utils.logging_config import get_logger

logger = get_logger(__name__)


# ============================================================================
# COUNTS
# ============================================================================


@dataclass
class CountsData:
    """Click counts n_k⁽ⁱ⁾, flattened input-major like the scheme outcomes."""

    counts: np.ndarray
    outcome_counts: List[int]

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError(f"Counts must be a flat vector, got shape {counts.shape}")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("Counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("Counts must be non-negative")
        if sum(self.outcome_counts) != counts.shape[0]:
            raise ValueError(f"{counts.shape[0]} counts for {sum(self.outcome_counts)} outcomes")
        self.counts = counts
        self.outcome_counts = [int(c) for c in self.outcome_counts]

    @classmethod
    def from_table(cls, table: Union[np.ndarray, Sequence[Sequence[int]]]) -> "CountsData":
        """Build from a rectangular table (rows = inputs, columns = outcomes)."""
        table = np.asarray(table)
        if table.ndim != 2:
            raise ValueError(f"Counts table must be 2-D, got shape {table.shape}")
        return cls(counts=table.reshape(-1), outcome_counts=[table.shape[1]] * table.shape[0])

    @property
    def per_input_totals(self) -> np.ndarray:
        return np.array([piece.sum() for piece in self.split()], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def table(self) -> np.ndarray:
        if len(set(self.outcome_counts)) != 1:
            raise ValueError("Counts are not rectangular")
        return self.counts.reshape(len(self.outcome_counts), self.outcome_counts[0])

    def split(self) -> List[np.ndarray]:
        bounds = np.cumsum([0] + self.outcome_counts)
        return [self.counts[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def check_scheme(self, scheme: TomographyScheme) -> None:
        """
        Raises:
            ValueError: If the layout differs from the scheme's
        """
        if list(self.outcome_counts) != list(scheme.outcome_counts):
            raise ValueError(
                f"Counts layout {self.outcome_counts} does not match scheme outcomes {scheme.outcome_counts}"
            )


def read_counts_csv(path: Union[str, Path]) -> CountsData:
    """
    Read a counts table: one row per input, one column per outcome, no header.

    Raises:
        ConfigError: If the file is missing or not an integer table
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Counts file {path} does not exist")
    try:
        frame = pd.read_csv(path, header=None, comment="#")
        return CountsData.from_table(frame.to_numpy())
    except (ValueError, pd.errors.ParserError) as e:
        raise ConfigError(f"Invalid counts file {path}: {e}") from e


def write_counts_csv(counts: CountsData, path: Union[str, Path]) -> None:
    """Write counts in the same layout read_counts_csv accepts."""
    pd.DataFrame(counts.table).to_csv(path, header=False, index=False)


# ============================================================================
# PRIORS
# ============================================================================


@dataclass
class PriorSpec:
    """
    Prior density in probability space.

    primitive: constant wherever nonzero. conjugate: Π p^{β p̄}, with the reference probabilities
    p̄ row-normalized per input.
    """

    kind: str = "primitive"
    beta: float = 0.0
    reference: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = "primitive"

    def __post_init__(self):
        if self.kind not in ("primitive", "conjugate"):
            raise ValueError(f"Unknown prior kind '{self.kind}'")
        if self.kind == "conjugate":
            if self.reference is None:
                raise ValueError("Conjugate prior needs reference probabilities")
            if self.beta < 0:
                raise ValueError(f"Conjugate prior strength must be non-negative, got {self.beta}")
            self.reference = np.asarray(self.reference, dtype=float)

    def check_normalized(self, scheme: TomographyScheme, tol: float = 1e-10) -> None:
        if self.kind != "conjugate":
            return
        sums = np.array([self.reference[s].sum() for s in scheme.slices])
        if np.max(np.abs(sums - 1.0)) > tol:
            raise ValueError(f"Conjugate reference probabilities are not row-normalized: {sums}")

    @property
    def exponents(self) -> np.ndarray:
        return self.beta * self.reference


def parse_prior_spec(text: str, scheme: TomographyScheme) -> PriorSpec:
    """
    Parse ``primitive`` or ``conjugate:beta=48,ref=<channel spec>``.

    The reference channel spec runs to the end of the string, so it may carry its own parameters.

    Raises:
        ConfigError: On malformed specs
    """
    text = text.strip()
    if text == "primitive":
        return PriorSpec()
    if not text.startswith("conjugate:"):
        raise ConfigError(f"Prior must be 'primitive' or 'conjugate:beta=...,ref=...', got '{text}'")
    body = text[len("conjugate:"):]
    head, sep, ref = body.partition("ref=")
    if not sep or not ref:
        raise ConfigError("Conjugate prior needs a reference channel: conjugate:beta=48,ref=<channel>")
    params = parse_parameters(head.rstrip(","))
    unknown = set(params) - {"beta"}
    if unknown:
        raise ConfigError(f"Unknown conjugate prior options: {sorted(unknown)}")
    beta = params.get("beta", 48.0)
    reference_choi = parse_channel_spec(ref)
    reference = born_probabilities(reference_choi, scheme)
    return PriorSpec(kind="conjugate", beta=beta, reference=reference, label=text)


# ============================================================================
# LIKELIHOOD AND PRIOR EVALUATION
# ============================================================================


def _check_shape(probs: np.ndarray, size: int) -> None:
    if probs.shape[-1] != size:
        raise ValueError(f"Probability table has {probs.shape[-1]} entries, expected {size}")


def log_likelihood(probs: np.ndarray, counts: CountsData) -> float:
    """
    Σ n log p with the 0·log p ≡ 0 convention; −∞ if an observed outcome has p = 0.

    Raises:
        ValueError: On shape mismatch
    """
    probs = np.asarray(probs, dtype=float)
    _check_shape(probs, counts.counts.shape[0])
    return float(log_likelihood_batch(probs[None], counts)[0])


def log_likelihood_batch(probs: np.ndarray, counts: CountsData) -> np.ndarray:
    """Log-likelihood for a (B, n_outcomes) stack of probability tables."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    _check_shape(probs, counts.counts.shape[0])
    with np.errstate(divide="ignore"):
        return xlogy(counts.counts, probs).sum(axis=-1)


def log_prior(probs: np.ndarray, prior: PriorSpec) -> float:
    """
    Unnormalized log prior density in probability space.

    primitive → 0; conjugate → Σ β p̄ log p.
    """
    return float(log_prior_batch(np.asarray(probs, dtype=float)[None], prior)[0])


def log_prior_batch(probs: np.ndarray, prior: PriorSpec) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if prior.kind == "primitive":
        return np.zeros(probs.shape[0])
    _check_shape(probs, prior.reference.shape[0])
    with np.errstate(divide="ignore"):
        return xlogy(prior.exponents, np.clip(probs, 0.0, None)).sum(axis=-1)


# ============================================================================
# SIMULATION
# ============================================================================


def simulate_counts(
    rho: np.ndarray,
    scheme: TomographyScheme,
    copies: Union[int, Sequence[int]],
    seed: int,
) -> CountsData:
    """
    Draw multinomial counts for every input from the channel's Born probabilities.

    Args:
        rho: TP Choi matrix
        scheme: Tomography scheme
        copies: Copies per input (one int for all inputs, or one per input)
        seed: RNG seed

    Returns:
        Simulated CountsData

    Raises:
        ValueError: On negative copies or a non-TP channel
    """
    per_input = as_int_list(copies, scheme.n_inputs)
    if any(c < 0 for c in per_input):
        raise ValueError(f"Copies must be non-negative, got {per_input}")
    probs = born_probabilities(rho, scheme)
    counts = counts_from_probabilities(probs, scheme, per_input, np.random.default_rng(seed))
    logger.info(f"Simulated {counts.total} counts over {scheme.n_inputs} inputs")
    return counts


def counts_from_probabilities(
    probs: np.ndarray,
    scheme: TomographyScheme,
    per_input: Sequence[int],
    rng: np.random.Generator,
) -> CountsData:
    """Multinomial counts per input from a flat Born-probability table."""
    pieces = []
    for n, s in zip(per_input, scheme.slices):
        p = np.clip(probs[s], 0.0, None)
        pieces.append(rng.multinomial(int(n), p / p.sum()))
    return CountsData(counts=np.concatenate(pieces), outcome_counts=scheme.outcome_counts)
