"""Tomography schemes: input states, POVMs and the induced pseudo-POVM."""

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Union

import numpy as np

from channels.duality import PAULI
from utils.errors import ConfigError
from utils.helpers import complex_from_json, complex_to_json
from utils.logging_config import get_logger

logger = get_logger(__name__)

SCHEME_TOL = 1e-12
PSD_TOL = 1e-12


@dataclass
class TomographyScheme:
    """
    Input states ρ⁽ⁱ⁾ and per-input POVMs Π_k⁽ⁱ⁾.

    Outcomes are flattened input-major: all outcomes of input 0, then input 1, and so on.
    ``slices[i]`` selects input i from a flat probability or counts vector.
    """

    dim: int
    inputs: List[np.ndarray]
    povms: List[List[np.ndarray]]
    name: str = "custom"
    tol: float = field(default=SCHEME_TOL, repr=False)

    def __post_init__(self):
        self.inputs = [np.asarray(rho, dtype=complex) for rho in self.inputs]
        self.povms = [[np.asarray(el, dtype=complex) for el in povm] for povm in self.povms]
        self.validate()

    def validate(self) -> None:
        """
        Check trace, positivity and completeness.

        Raises:
            ValueError: Naming the offending input or POVM
        """
        d = self.dim
        if len(self.inputs) == 0:
            raise ValueError("Scheme has no input states")
        if len(self.inputs) != len(self.povms):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.povms)} POVMs")
        for i, rho in enumerate(self.inputs):
            if rho.shape != (d, d):
                raise ValueError(f"Input {i} has shape {rho.shape}, expected ({d}, {d})")
            if abs(np.trace(rho) - 1.0) > self.tol:
                raise ValueError(f"Input {i} does not have unit trace")
            if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -PSD_TOL:
                raise ValueError(f"Input {i} is not positive semidefinite")
        for i, povm in enumerate(self.povms):
            if len(povm) < 2:
                raise ValueError(f"POVM {i} needs at least two outcomes")
            total = np.zeros((d, d), dtype=complex)
            for k, element in enumerate(povm):
                if element.shape != (d, d):
                    raise ValueError(f"POVM {i} element {k} has shape {element.shape}")
                if np.linalg.eigvalsh(0.5 * (element + element.conj().T))[0] < -PSD_TOL:
                    raise ValueError(f"POVM {i} element {k} is not positive semidefinite")
                total += element
            if np.max(np.abs(total - np.eye(d))) > self.tol:
                raise ValueError(f"POVM {i} is not complete (Σ_k Π_k ≠ 𝟙)")

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def outcome_counts(self) -> List[int]:
        return [len(povm) for povm in self.povms]

    @property
    def n_outcomes(self) -> int:
        return sum(self.outcome_counts)

    @property
    def n_free(self) -> int:
        """Free probabilities: one outcome per input is fixed by normalization."""
        return self.n_outcomes - self.n_inputs

    @property
    def is_rectangular(self) -> bool:
        return len(set(self.outcome_counts)) == 1

    @cached_property
    def slices(self) -> List[slice]:
        out = []
        start = 0
        for count in self.outcome_counts:
            out.append(slice(start, start + count))
            start += count
        return out

    @cached_property
    def free_index(self) -> np.ndarray:
        """Flat outcome indices with the last outcome of every input dropped."""
        return np.concatenate([np.arange(s.start, s.stop - 1) for s in self.slices])

    @cached_property
    def input_index(self) -> np.ndarray:
        """Input label of every flat outcome."""
        return np.repeat(np.arange(self.n_inputs), self.outcome_counts)

    def pseudo_povm(self) -> List[List[np.ndarray]]:
        """Λ_k⁽ⁱ⁾ = (ρ⁽ⁱ⁾)ᵀ ⊗ Π_k⁽ⁱ⁾."""
        return [[np.kron(rho.T, element) for element in povm] for rho, povm in zip(self.inputs, self.povms)]

    @cached_property
    def born_matrix(self) -> np.ndarray:
        """Rows Λᵀ flattened so that p = Re(born_matrix @ ρ.flatten())."""
        rows = [lam.T.reshape(-1) for group in self.pseudo_povm() for lam in group]
        return np.array(rows)

    def split(self, flat: np.ndarray) -> List[np.ndarray]:
        """Split a flat per-outcome vector into per-input pieces."""
        flat = np.asarray(flat)
        return [flat[..., s] for s in self.slices]

    def to_json(self) -> dict:
        return {
            "d": self.dim,
            "name": self.name,
            "inputs": [complex_to_json(rho) for rho in self.inputs],
            "povms": [[complex_to_json(el) for el in povm] for povm in self.povms],
        }


# ============================================================================
# STANDARD SCHEMES
# ============================================================================

TETRAHEDRON_VERTICES = np.array(
    [
        [-1.0, -1.0, -1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
    ]
)


def _bloch_operator(vector: np.ndarray) -> np.ndarray:
    return np.eye(2) + np.einsum("k,kab->ab", vector, PAULI)


def scheme_tetrahedron() -> TomographyScheme:
    """
    Qubit scheme: the four tetrahedron states as inputs, each measured with the tetrahedron POVM.

    Inputs are ½(𝟙 + a_i·σ) and outcomes ¼(𝟙 + a_k·σ) with a_i = v_i/√3.
    """
    directions = TETRAHEDRON_VERTICES / np.sqrt(3)
    inputs = [0.5 * _bloch_operator(a) for a in directions]
    povm = [0.25 * _bloch_operator(a) for a in directions]
    return TomographyScheme(dim=2, inputs=inputs, povms=[list(povm) for _ in inputs], name="tetrahedron")


def qutrit_sic_vectors() -> np.ndarray:
    """The nine SIC vectors |μ_i⟩ as the columns of a 3×9 matrix."""
    w = np.exp(2j * np.pi / 3)
    wc = np.conj(w)
    table = np.array(
        [
            [1, 1, 1, 0, 0, 0, w, wc, 1],
            [w, wc, 1, 1, 1, 1, 0, 0, 0],
            [0, 0, 0, w, wc, 1, 1, 1, 1],
        ],
        dtype=complex,
    )
    return table / np.sqrt(2)


def scheme_qutrit_sic() -> TomographyScheme:
    """Qutrit scheme: the nine SIC states as inputs, each measured with the SIC POVM |μ_i⟩⟨μ_i|/3."""
    vectors = qutrit_sic_vectors()
    projectors = [np.outer(v, v.conj()) for v in vectors.T]
    povm = [p / 3 for p in projectors]
    return TomographyScheme(
        dim=3,
        inputs=projectors,
        povms=[list(povm) for _ in projectors],
        name="qutrit-sic",
        tol=1e-10,
    )


NAMED_SCHEMES = {
    "tetrahedron": scheme_tetrahedron,
    "qutrit-sic": scheme_qutrit_sic,
}


# ============================================================================
# FILE I/O
# ============================================================================


def scheme_from_json(data: dict) -> TomographyScheme:
    """
    Build a scheme from ``{"d": int, "inputs": [...], "povms": [[...]]}``.

    Raises:
        ConfigError: If keys are missing or the scheme is invalid
    """
    try:
        inputs = [complex_from_json(m) for m in data["inputs"]]
        povms = [[complex_from_json(m) for m in povm] for povm in data["povms"]]
        return TomographyScheme(
            dim=int(data["d"]),
            inputs=inputs,
            povms=povms,
            name=data.get("name", "custom"),
            tol=1e-10,
        )
    except KeyError as e:
        raise ConfigError(f"Scheme JSON is missing key {e}") from e
    except ValueError as e:
        raise ConfigError(f"Invalid scheme: {e}") from e


def load_scheme(source: Union[str, Path]) -> TomographyScheme:
    """
    Load a scheme by name ("tetrahedron", "qutrit-sic") or from a JSON file.

    Raises:
        ConfigError: If the name is unknown or the file cannot be parsed
    """
    key = str(source)
    if key in NAMED_SCHEMES:
        return NAMED_SCHEMES[key]()
    path = Path(key)
    if not path.exists():
        raise ConfigError(f"Unknown scheme '{key}' (not a named scheme or an existing file)")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Scheme file {path} is not valid JSON: {e}") from e
    scheme = scheme_from_json(data)
    logger.info(f"Loaded scheme '{scheme.name}' from {path}: {scheme.n_inputs} inputs, {scheme.n_outcomes} outcomes")
    return scheme


def save_scheme(scheme: TomographyScheme, path: Union[str, Path]) -> None:
    """Write a scheme as JSON."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scheme.to_json(), f, indent=2)
