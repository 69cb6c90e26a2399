"""Channel-state duality kernel: vectorization, Kraus/Choi conversion, partial traces, fidelities.

Conventions used throughout the package:

- |ī⟩ = |i⟩ in the computational basis.
- vec(|ψ⟩⟨φ|) = |φ̄⟩ ⊗ |ψ⟩, i.e. vec(X) stacks the columns of X.
- The Choi state of E is ρ_E = Σ_a vec(E_a) vec(E_a)†, a d²×d² matrix with trace d whose
  row (i, j) (0-based) sits at index i*d + j for the basis vector |ī j⟩.
- E(X) = tr₁{ρ_E (Xᵀ ⊗ 𝟙)}; the channel is trace preserving iff tr₂(ρ_E) = 𝟙.

Functions whose names end in ``_batch`` accept a leading batch axis and skip validation;
they are the hot paths used by the samplers.
"""

from functools import lru_cache
from math import isqrt
from typing import TYPE_CHECKING, List, Sequence

import numpy as np

from utils.logging_config import get_logger

if TYPE_CHECKING:
    from tomography.schemes import TomographyScheme

logger = get_logger(__name__)

HERMITIAN_TOL = 1e-12
CP_TOL = 1e-10
TP_TOL = 1e-10
KRAUS_DROP_TOL = 1e-12

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


# ============================================================================
# VECTORIZATION
# ============================================================================


def vectorize(matrix: np.ndarray) -> np.ndarray:
    """
    Vectorize a square operator: vec(|ψ⟩⟨φ|) = |φ̄⟩ ⊗ |ψ⟩.

    Args:
        matrix: d×d complex matrix

    Returns:
        Complex vector of length d²

    Raises:
        ValueError: If the input is not square
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"vectorize expects a square matrix, got shape {matrix.shape}")
    return matrix.T.reshape(-1).astype(complex)


def unvectorize(vector: np.ndarray) -> np.ndarray:
    """Inverse of vectorize for a vector of perfect-square length."""
    vector = np.asarray(vector)
    d = _square_root_dim(vector.shape[0])
    return vector.reshape(d, d).T.astype(complex)


def _square_root_dim(n: int) -> int:
    d = isqrt(n)
    if d * d != n or d < 1:
        raise ValueError(f"Dimension {n} is not a perfect square")
    return d


def choi_dim(rho: np.ndarray) -> int:
    """
    Return d for a d²×d² Choi matrix.

    Raises:
        ValueError: If rho is not square or its size is not a perfect square
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"Choi matrix must be square, got shape {rho.shape}")
    return _square_root_dim(rho.shape[-1])


# ============================================================================
# KRAUS <-> CHOI
# ============================================================================


def choi_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """
    Build the Choi state ρ = Σ_a vec(E_a) vec(E_a)†.

    Args:
        kraus: Non-empty sequence of d×d Kraus operators

    Returns:
        d²×d² complex Choi matrix

    Raises:
        ValueError: If the set is empty or dimensions disagree
    """
    if len(kraus) == 0:
        raise ValueError("Kraus set is empty")
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    shape = ops[0].shape
    for op in ops:
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError(f"Kraus operators must be square, got shape {op.shape}")
        if op.shape != shape:
            raise ValueError(f"Kraus operators have mismatched dimensions {shape} and {op.shape}")
    vecs = np.stack([vectorize(op) for op in ops], axis=1)
    return vecs @ vecs.conj().T


def hermitian_part(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """
    Symmetrize a matrix that is Hermitian up to round-off.

    Raises:
        ValueError: If the anti-Hermitian part exceeds tol (relative to the matrix scale)
    """
    rho = np.asarray(rho, dtype=complex)
    asym = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    scale = max(1.0, float(np.max(np.abs(rho)))) if rho.size else 1.0
    if asym > tol * scale:
        raise ValueError(f"Matrix is not Hermitian (max |ρ - ρ†| = {asym:.3e})")
    return 0.5 * (rho + rho.conj().T)


def kraus_from_choi(rho: np.ndarray) -> List[np.ndarray]:
    """
    Recover a Kraus set from the eigendecomposition of a Choi matrix.

    Eigenvalues in [-1e-10, 0) are clipped to zero; eigenvalues below 1e-12 are dropped.

    Args:
        rho: Hermitian, positive semidefinite Choi matrix

    Returns:
        List of Kraus operators, one per retained eigenvalue

    Raises:
        ValueError: If rho is not Hermitian or has an eigenvalue below -1e-10
    """
    choi_dim(rho)
    rho = hermitian_part(rho)
    evals, evecs = np.linalg.eigh(rho)
    if evals[0] < -CP_TOL:
        raise ValueError(f"Choi matrix is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
    evals = np.clip(evals, 0.0, None)
    kraus = []
    for value, vec in zip(evals[::-1], evecs[:, ::-1].T):
        if value < KRAUS_DROP_TOL:
            continue
        kraus.append(np.sqrt(value) * unvectorize(vec))
    return kraus


# ============================================================================
# PARTIAL TRACES AND CHANNEL ACTION
# ============================================================================


def partial_trace(rho: np.ndarray, slot: int) -> np.ndarray:
    """
    Partial trace of a d²×d² operator over subsystem 1 (input) or 2 (output).

    Works on a leading batch axis as well.

    Args:
        rho: (..., d², d²) matrix
        slot: 1 or 2

    Returns:
        (..., d, d) reduced operator

    Raises:
        ValueError: If slot is not 1 or 2 or the size is not a perfect square
    """
    rho = np.asarray(rho)
    d = choi_dim(rho)
    blocks = rho.reshape(rho.shape[:-2] + (d, d, d, d))
    if slot == 1:
        return np.einsum("...ijil->...jl", blocks)
    if slot == 2:
        return np.einsum("...ijkj->...ik", blocks)
    raise ValueError(f"slot must be 1 or 2, got {slot}")


def apply_channel(rho: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Apply the channel with Choi state rho to an operator: E(X) = tr₁{ρ(Xᵀ ⊗ 𝟙)}.

    Args:
        rho: (..., d², d²) Choi matrix
        x: d×d operator

    Returns:
        (..., d, d) output operator

    Raises:
        ValueError: If dimensions disagree
    """
    d = choi_dim(rho)
    x = np.asarray(x, dtype=complex)
    if x.shape != (d, d):
        raise ValueError(f"Operator of shape {x.shape} does not match channel dimension {d}")
    blocks = np.asarray(rho).reshape(np.shape(rho)[:-2] + (d, d, d, d))
    return np.einsum("...ijkl,ik->...jl", blocks, x)


def is_tp(rho: np.ndarray, tol: float = TP_TOL) -> bool:
    """True iff ‖tr₂(ρ) − 𝟙‖_F ≤ tol."""
    d = choi_dim(rho)
    return bool(np.linalg.norm(partial_trace(rho, 2) - np.eye(d)) <= tol)


def is_unital(rho: np.ndarray, tol: float = TP_TOL) -> bool:
    """True iff ‖tr₁(ρ) − 𝟙‖_F ≤ tol, i.e. E(𝟙) = 𝟙."""
    d = choi_dim(rho)
    return bool(np.linalg.norm(partial_trace(rho, 1) - np.eye(d)) <= tol)


def validate_choi(rho: np.ndarray, require_tp: bool = True, tol: float = CP_TOL) -> np.ndarray:
    """
    Check the Choi-state invariants and return the symmetrized matrix.

    Raises:
        ValueError: Naming the first violated invariant
    """
    d = choi_dim(rho)
    rho = hermitian_part(rho)
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig < -tol:
        raise ValueError(f"Choi matrix is not completely positive (min eigenvalue {min_eig:.3e})")
    if require_tp and not is_tp(rho, tol):
        err = np.linalg.norm(partial_trace(rho, 2) - np.eye(d))
        raise ValueError(f"Choi matrix is not trace preserving (‖tr₂ρ − 𝟙‖ = {err:.3e})")
    return rho


def depolarize(rho: np.ndarray, epsilon: float) -> np.ndarray:
    """Mix a Choi state with the completely depolarizing channel: (1−ε)ρ + ε𝟙/d."""
    d = choi_dim(rho)
    return (1.0 - epsilon) * np.asarray(rho, dtype=complex) + epsilon * np.eye(d * d) / d


# ============================================================================
# BORN RULE
# ============================================================================


def born_probabilities(rho: np.ndarray, scheme: "TomographyScheme", check: bool = True) -> np.ndarray:
    """
    Born probabilities p_k⁽ⁱ⁾ = tr{ρ Λ_k⁽ⁱ⁾} for every input/outcome pair.

    Args:
        rho: TP Choi matrix
        scheme: Tomography scheme
        check: Validate trace preservation and normalization

    Returns:
        Flat probability vector ordered input-major (see TomographyScheme.split)

    Raises:
        ValueError: If rho is not TP or its dimension does not match the scheme
    """
    d = choi_dim(rho)
    if d != scheme.dim:
        raise ValueError(f"Channel dimension {d} does not match scheme dimension {scheme.dim}")
    if check and not is_tp(rho):
        err = np.linalg.norm(partial_trace(rho, 2) - np.eye(d))
        raise ValueError(f"Born probabilities require a TP Choi state (‖tr₂ρ − 𝟙‖ = {err:.3e})")
    probs = born_probabilities_batch(np.asarray(rho)[None], scheme)[0]
    if check:
        sums = np.array([probs[s].sum() for s in scheme.slices])
        if np.max(np.abs(sums - 1.0)) > TP_TOL:
            raise ValueError(f"Born probabilities are not normalized (row sums {sums})")
    return probs


def born_probabilities_batch(rhos: np.ndarray, scheme: "TomographyScheme") -> np.ndarray:
    """Born probabilities for a stack of Choi matrices, shape (B, n_outcomes)."""
    flat = np.asarray(rhos).reshape(len(rhos), -1)
    return np.real(flat @ scheme.born_matrix.T)


# ============================================================================
# FIDELITIES
# ============================================================================


@lru_cache(maxsize=8)
def traceless_basis(d: int) -> np.ndarray:
    """
    Orthonormal traceless Hermitian basis (generalized Gell-Mann, tr(O_i O_j) = δ_ij).

    Returns:
        Array of shape (d²−1, d, d); for d=2 these are σ/√2
    """
    ops = []
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            ops.append(sym / np.sqrt(2))
            anti = np.zeros((d, d), dtype=complex)
            anti[j, k] = -1j
            anti[k, j] = 1j
            ops.append(anti / np.sqrt(2))
    for level in range(1, d):
        diag = np.zeros(d)
        diag[:level] = 1.0
        diag[level] = -float(level)
        ops.append(np.diag(diag).astype(complex) / np.sqrt(level * (level + 1)))
    return np.array(ops)


@lru_cache(maxsize=8)
def _twirl_weights(d: int) -> np.ndarray:
    # Σ_i (O_iᵀ ⊗ O_i), flattened so that tr(ρ W) = ρ.flatten() · W.T.flatten()
    basis = traceless_basis(d)
    total = sum(np.kron(op.T, op) for op in basis)
    return total.T.reshape(-1)


def avg_fidelity_batch(rhos: np.ndarray) -> np.ndarray:
    """Average fidelity for a stack of TP Choi matrices (no validation)."""
    rhos = np.asarray(rhos)
    d = choi_dim(rhos)
    q = np.real(rhos.reshape(len(rhos), -1) @ _twirl_weights(d)) / (d * d - 1)
    return (1.0 + (d - 1) * q) / d


def avg_fidelity(rho: np.ndarray) -> float:
    """
    Haar-averaged fidelity F_avg = [1 + (d−1)q]/d.

    q = (1/(d²−1)) Σ_i tr{ρ (O_iᵀ ⊗ O_i)} over an orthonormal traceless basis, with ρ the
    trace-d Choi state. This normalization gives F_avg(identity) = 1 and F_avg = 1/d for the
    completely depolarizing channel.

    Raises:
        ValueError: If rho is not TP
    """
    if not is_tp(rho):
        raise ValueError("avg_fidelity requires a trace-preserving Choi state")
    return float(avg_fidelity_batch(np.asarray(rho)[None])[0])


def bloch_matrix_batch(rhos: np.ndarray) -> np.ndarray:
    """Linear part of the qubit Bloch map, M_ij = ½ tr{σ_i E(σ_j)}, for a stack of Choi matrices."""
    rhos = np.asarray(rhos)
    blocks = rhos.reshape(rhos.shape[:-2] + (2, 2, 2, 2))
    images = np.einsum("...ijkl,aik->...ajl", blocks, PAULI)
    return 0.5 * np.real(np.einsum("blj,...ajl->...ba", PAULI, images))


def min_fidelity_batch(rhos: np.ndarray) -> np.ndarray:
    """Minimum fidelity of unital qubit channels, ½(1 + μ_min(½(M+Mᵀ))), no validation."""
    m = bloch_matrix_batch(rhos)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    return 0.5 * (1.0 + np.linalg.eigvalsh(sym)[..., 0])


def min_fidelity_unital_qubit(rho: np.ndarray, tol: float = 1e-8) -> float:
    """
    Worst-case pure-state fidelity of a unital qubit channel.

    Args:
        rho: 4×4 TP and unital Choi matrix
        tol: Tolerance for the TP/unital checks

    Returns:
        F_min in [0, 1]

    Raises:
        ValueError: If d ≠ 2 or the channel is not TP and unital
    """
    if choi_dim(rho) != 2:
        raise ValueError("min_fidelity_unital_qubit is defined for qubit channels only")
    if not is_tp(rho, tol):
        raise ValueError("min_fidelity_unital_qubit requires a trace-preserving channel")
    if not is_unital(rho, tol):
        raise ValueError("min_fidelity_unital_qubit requires a unital channel (tr₁ρ ≠ 𝟙)")
    return float(min_fidelity_batch(np.asarray(rho)[None])[0])
