"""Channel samples with their cached Born probabilities."""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from channels.families import ChannelFamily
from tomography.likelihood import CountsData, log_likelihood_batch


@dataclass
class SampleSet:
    """
    Draws from a channel family in parameter space.

    probabilities holds the Born probabilities of every draw for the scheme the sample was
    generated with, so likelihoods for any counts on that scheme are a single reduction.
    """

    family: ChannelFamily
    params: np.ndarray
    probabilities: np.ndarray
    ess: float
    acceptance: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.params.shape[0] != self.probabilities.shape[0]:
            raise ValueError(
                f"{self.params.shape[0]} parameter rows but {self.probabilities.shape[0]} probability rows"
            )
        if self.params.shape[0] == 0:
            raise ValueError("Sample is empty")

    @property
    def size(self) -> int:
        return int(self.params.shape[0])

    @property
    def ess_ratio(self) -> float:
        """Draws per effective draw, at least 1."""
        return max(1.0, self.size / max(self.ess, 1.0))

    def log_likelihood(self, counts: CountsData) -> np.ndarray:
        return log_likelihood_batch(self.probabilities, counts)

    def chois(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        params = self.params if indices is None else self.params[indices]
        return self.family.choi_batch(params)

    def to_frame(self, log_likelihood: Optional[np.ndarray] = None) -> pd.DataFrame:
        frame = pd.DataFrame(self.params, columns=[f"theta_{j}" for j in range(self.params.shape[1])])
        if log_likelihood is not None:
            frame["log_likelihood"] = log_likelihood
        return frame
