"""Parameterized channel families, from dephasing up to general CPTP maps.

Every family maps unconstrained parameters to Choi matrices in batches and can embed the
parameters of the next-smaller family in the nesting

    dephasing ⊂ pauli ⊂ symmetric-unital ⊂ unital ⊂ general
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from channels.cptp_param import (
    FD_STEP,
    angle_count,
    choi_to_params,
    free_probability_jacobian,
    log_volume_element,
    params_to_choi,
)
from channels.duality import born_probabilities_batch, depolarize
from channels.unital_qubit import (
    pauli_probabilities_to_weights,
    symmetric_unital_params_to_choi,
    tetra_weights,
    unital_params_to_choi,
    weights_to_tetra_angles,
)
from utils.logging_config import get_logger

logger = get_logger(__name__)

NESTED_FAMILIES: Tuple[str, ...] = ("dephasing", "pauli", "symmetric-unital", "unital", "general")
BOUNDARY_MIX = 1e-6


@dataclass(frozen=True)
class ChannelFamily:
    """A parameterized set of channels with a batched Choi builder."""

    name: str
    dim: int
    n_params: int
    builder: Callable[[np.ndarray], np.ndarray]
    parent: Optional[str] = None
    embed: Optional[Callable[[np.ndarray], np.ndarray]] = None
    direct_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    square_jacobian: bool = False

    def choi(self, params: np.ndarray) -> np.ndarray:
        return self.builder(np.asarray(params, dtype=float)[None])[0]

    def choi_batch(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if params.shape[-1] != self.n_params:
            raise ValueError(f"Family '{self.name}' takes {self.n_params} parameters, got {params.shape[-1]}")
        return self.builder(params)

    def probabilities(self, params: np.ndarray, scheme) -> np.ndarray:
        """Born probabilities, shape (B, n_outcomes)."""
        return born_probabilities_batch(self.choi_batch(params), scheme)

    def log_jacobian_batch(self, params: np.ndarray, scheme, h: float = FD_STEP) -> np.ndarray:
        """
        Log volume element of the free probabilities over the parameters.

        Raises:
            ValueError: If the scheme has too few free probabilities, or a square Jacobian is
                required and the counts differ
        """
        if scheme.dim != self.dim:
            raise ValueError(f"Scheme dimension {scheme.dim} does not match family '{self.name}' (d={self.dim})")
        if self.square_jacobian and scheme.n_free != self.n_params:
            raise ValueError(
                f"Scheme has {scheme.n_free} free probabilities for {self.n_params} parameters; "
                "the Jacobian must be square"
            )

        def probabilities(points: np.ndarray) -> np.ndarray:
            return born_probabilities_batch(self.builder(points), scheme)

        jac = free_probability_jacobian(params, probabilities, scheme.free_index, h)
        return log_volume_element(jac)

    def random_params(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(0.0, 2 * np.pi, size=(size, self.n_params))

    def embed_from_parent(self, parent_params: np.ndarray) -> np.ndarray:
        """
        Parameters of this family reproducing a channel of the next-smaller family.

        Raises:
            ValueError: If the family has no parent
        """
        if self.embed is None:
            raise ValueError(f"Family '{self.name}' has no smaller family to embed")
        return self.embed(np.asarray(parent_params, dtype=float))


# ============================================================================
# EXPLICIT QUBIT FAMILIES
# ============================================================================


def dephasing_probability(params: np.ndarray) -> np.ndarray:
    """p = sin²t."""
    return np.sin(np.asarray(params, dtype=float)[..., 0]) ** 2


def dephasing_choi(p: np.ndarray) -> np.ndarray:
    """Choi matrices [[1,0,0,1−2p],[0,0,0,0],[0,0,0,0],[1−2p,0,0,1]] for an array of p."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    rho = np.zeros(p.shape + (4, 4), dtype=complex)
    rho[..., 0, 0] = rho[..., 3, 3] = 1.0
    rho[..., 0, 3] = rho[..., 3, 0] = 1.0 - 2.0 * p
    return rho


def pauli_probabilities(params: np.ndarray) -> np.ndarray:
    """(p_I, p_x, p_y, p_z) from three weight angles."""
    return tetra_weights(params)


def pauli_choi(pauli: np.ndarray) -> np.ndarray:
    """Choi matrices of Pauli channels from (..., 4) probabilities (p_I, p_x, p_y, p_z)."""
    pauli = np.atleast_2d(np.asarray(pauli, dtype=float))
    pi, px, py, pz = (pauli[..., k] for k in range(4))
    rho = np.zeros(pauli.shape[:-1] + (4, 4), dtype=complex)
    rho[..., 0, 0] = rho[..., 3, 3] = pi + pz
    rho[..., 0, 3] = rho[..., 3, 0] = pi - pz
    rho[..., 1, 1] = rho[..., 2, 2] = px + py
    rho[..., 1, 2] = rho[..., 2, 1] = px - py
    return rho


def _dephasing_builder(params: np.ndarray) -> np.ndarray:
    return dephasing_choi(dephasing_probability(params))


def _pauli_builder(params: np.ndarray) -> np.ndarray:
    return pauli_choi(pauli_probabilities(params))


def _sample_dephasing(rng: np.random.Generator, size: int) -> np.ndarray:
    p = rng.uniform(0.0, 1.0, size=size)
    return np.arcsin(np.sqrt(p))[:, None]


def _sample_pauli(rng: np.random.Generator, size: int) -> np.ndarray:
    return weights_to_tetra_angles(rng.dirichlet(np.ones(4), size=size))


def _embed_dephasing_in_pauli(params: np.ndarray) -> np.ndarray:
    p = dephasing_probability(params)
    weights = np.stack([1.0 - p, np.zeros_like(p), np.zeros_like(p), p], axis=-1)
    return weights_to_tetra_angles(weights)


def _embed_pauli_in_symmetric(params: np.ndarray) -> np.ndarray:
    weights = pauli_probabilities_to_weights(pauli_probabilities(params))
    tetra = weights_to_tetra_angles(weights)
    return np.concatenate([tetra, np.zeros(tetra.shape[:-1] + (3,))], axis=-1)


def _embed_symmetric_in_unital(params: np.ndarray) -> np.ndarray:
    return np.concatenate([params, params[..., 3:6]], axis=-1)


def _embed_unital_in_general(params: np.ndarray) -> np.ndarray:
    single = params.ndim == 1
    params = np.atleast_2d(params)
    out = []
    for row in params:
        rho = unital_params_to_choi(row)
        if np.linalg.eigvalsh(rho)[0] < 10 * BOUNDARY_MIX:
            rho = depolarize(rho, BOUNDARY_MIX)
        out.append(choi_to_params(rho))
    return out[0] if single else np.array(out)


def _general_builder(d: int) -> Callable[[np.ndarray], np.ndarray]:
    def build(params: np.ndarray) -> np.ndarray:
        return params_to_choi(params, d)

    return build


# ============================================================================
# REGISTRY
# ============================================================================


@lru_cache(maxsize=16)
def get_family(name: str, dim: int = 2) -> ChannelFamily:
    """
    Look up a channel family.

    Args:
        name: One of NESTED_FAMILIES
        dim: Hilbert-space dimension (only "general" supports d > 2)

    Returns:
        ChannelFamily

    Raises:
        ValueError: For unknown names or unsupported dimensions
    """
    if name == "general":
        return ChannelFamily(
            name="general",
            dim=dim,
            n_params=angle_count(dim),
            builder=_general_builder(dim),
            parent="unital" if dim == 2 else None,
            embed=_embed_unital_in_general if dim == 2 else None,
            square_jacobian=True,
        )
    if dim != 2:
        raise ValueError(f"Family '{name}' is only defined for qubits")
    if name == "dephasing":
        return ChannelFamily(
            name="dephasing",
            dim=2,
            n_params=1,
            builder=_dephasing_builder,
            direct_sampler=_sample_dephasing,
        )
    if name == "pauli":
        return ChannelFamily(
            name="pauli",
            dim=2,
            n_params=3,
            builder=_pauli_builder,
            parent="dephasing",
            embed=_embed_dephasing_in_pauli,
            direct_sampler=_sample_pauli,
        )
    if name == "symmetric-unital":
        return ChannelFamily(
            name="symmetric-unital",
            dim=2,
            n_params=6,
            builder=symmetric_unital_params_to_choi,
            parent="pauli",
            embed=_embed_pauli_in_symmetric,
        )
    if name == "unital":
        return ChannelFamily(
            name="unital",
            dim=2,
            n_params=9,
            builder=unital_params_to_choi,
            parent="symmetric-unital",
            embed=_embed_symmetric_in_unital,
        )
    raise ValueError(f"Unknown channel family '{name}'. Available: {', '.join(NESTED_FAMILIES)}")
