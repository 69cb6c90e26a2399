"""Exact angle parameterization of trace-preserving Choi states.

A TP Choi state is written ρ = A†A with A upper triangular. Grouping the d² columns of A by
input index i gives d stacked columns Φ_i (length d³) with Φ†Φ = 𝟙_d. A fixed row permutation
P moves the generically nonzero entries of every Φ_i to the top, so ψ_i = PΦ_i is supported on
its first K_i = i·d² − d(d−1)/2 rows. The ψ_i are then built level by level:

- level 0: ψ_d is a unit vector in spherical coordinates,
- level ℓ: ψ_{d−ℓ} = B_ℓ x_ℓ, where x_ℓ is a unit vector and the columns of B_ℓ span the vectors
  supported on the first K_{d−ℓ} rows that are orthogonal to ψ_d … ψ_{d−ℓ+1}.

The d² entries of the last column of A are real (row-phase gauge), which removes d² phases.
Angles are stored level-major; within a level the polar angles come first, then the unmasked
phases, both in ascending position order.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from channels.duality import born_probabilities_batch, choi_dim, hermitian_part, is_tp, partial_trace
from utils.logging_config import get_logger

logger = get_logger(__name__)

FD_STEP = 1e-5
MIN_EIGENVALUE = 1e-8
RANK_TOL = 1e-10


# ============================================================================
# STRUCTURE
# ============================================================================


@dataclass(frozen=True)
class ParamStructure:
    """Index bookkeeping for the parameterization of d-dimensional channels."""

    dim: int
    K: Tuple[int, ...]
    perm: np.ndarray
    zero_phase: Tuple[int, ...]
    level_lengths: Tuple[int, ...]
    level_masks: Tuple[Tuple[int, ...], ...]

    @property
    def n_angles(self) -> int:
        return sum(2 * m - 1 - len(mask) for m, mask in zip(self.level_lengths, self.level_masks))

    def level_free_phases(self, level: int) -> np.ndarray:
        """Positions of the stored (unmasked) phases within a level's unit vector."""
        mask = set(self.level_masks[level])
        return np.array([k for k in range(self.level_lengths[level]) if k not in mask], dtype=int)

    def level_slices(self) -> Tuple[Tuple[slice, slice], ...]:
        """(theta slice, phase slice) into the flat angle vector for every level."""
        out = []
        offset = 0
        for m, mask in zip(self.level_lengths, self.level_masks):
            thetas = slice(offset, offset + m - 1)
            offset += m - 1
            phases = slice(offset, offset + m - len(mask))
            offset += m - len(mask)
            out.append((thetas, phases))
        return tuple(out)


@lru_cache(maxsize=8)
def build_structure(d: int) -> ParamStructure:
    """
    Build the parameterization structure for channels on a d-dimensional space.

    The stacked column has d blocks of length d²; entry (k, m) (1-based) is sorted by the key
    (max(0, ⌈(m−k)/d⌉), k, m), which puts the K_i generically nonzero entries of every Φ_i first.

    Args:
        d: Hilbert-space dimension, at least 2

    Returns:
        ParamStructure for d

    Raises:
        ValueError: If d < 2
    """
    if d < 2:
        raise ValueError(f"Channel dimension must be at least 2, got {d}")
    d2 = d * d
    K = tuple(i * d2 - d * (d - 1) // 2 for i in range(1, d + 1))

    rows = []
    for k in range(1, d + 1):
        for m in range(1, d2 + 1):
            group = max(0, -((k - m) // d))  # ceil((m - k) / d) clipped at 0
            rows.append(((group, k, m), (k - 1) * d2 + (m - 1)))
    perm = np.array([index for _, index in sorted(rows)], dtype=int)

    # entries of the last block of Φ_d form the last column of A, kept real
    last_block_start = (d - 1) * d2
    zero_phase = tuple(int(r) for r in np.flatnonzero(perm >= last_block_start))

    level_lengths = (K[-1],) + tuple(K[d - 1 - level] - level for level in range(1, d))
    level_masks = (zero_phase,) + tuple(() for _ in range(1, d))

    structure = ParamStructure(
        dim=d,
        K=K,
        perm=perm,
        zero_phase=zero_phase,
        level_lengths=level_lengths,
        level_masks=level_masks,
    )
    logger.debug(f"Built parameter structure for d={d}: K={K}, {structure.n_angles} angles")
    return structure


def angle_count(d: int) -> int:
    """Number of angles for d-dimensional channels, d²(d²−1)."""
    return build_structure(d).n_angles


def dim_from_angle_count(n: int) -> int:
    """Recover d from a flat angle vector length."""
    for d in range(2, 8):
        if d * d * (d * d - 1) == n:
            return d
    raise ValueError(f"{n} angles do not correspond to any channel dimension")


# ============================================================================
# SPHERICAL COORDINATES
# ============================================================================


def _unit_vector(thetas: np.ndarray, phases: np.ndarray) -> np.ndarray:
    # thetas (B, K-1), phases (B, K) with masked entries already zero
    sines = np.sin(thetas)
    tail = np.ones(phases.shape)
    if thetas.shape[-1]:
        tail[:, :-1] = np.cumprod(sines[:, ::-1], axis=1)[:, ::-1]
    heads = np.ones(phases.shape)
    heads[:, 1:] = np.cos(thetas)
    return np.exp(1j * phases) * heads * tail


def _full_phases(phases: np.ndarray, length: int, mask: Sequence[int]) -> np.ndarray:
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    free = [k for k in range(length) if k not in set(mask)]
    if phases.shape[-1] != len(free):
        raise ValueError(f"Expected {len(free)} phases for length {length}, got {phases.shape[-1]}")
    full = np.zeros((phases.shape[0], length))
    full[:, free] = phases
    return full


def unit_sphere_vector(
    thetas: np.ndarray,
    phases: np.ndarray,
    length: int,
    mask: Sequence[int] = (),
) -> np.ndarray:
    """
    Complex unit vector ψ_k = e^{iφ_k} cos θ_{k−1} S_k with S_k = sin θ_k S_{k+1}.

    With 0-based positions: ψ_0 = e^{iφ_0} S_0 and ψ_{K−1} = e^{iφ_{K−1}} cos θ_{K−2}.
    Accepts a leading batch axis on thetas/phases.

    Args:
        thetas: K−1 polar angles
        phases: Phases for the unmasked positions
        length: Vector length K
        mask: Positions whose phase is fixed to zero

    Returns:
        Unit vector(s) of length K

    Raises:
        ValueError: On length mismatches
    """
    thetas = np.asarray(thetas, dtype=float)
    single = thetas.ndim == 1
    thetas = np.atleast_2d(thetas)
    if thetas.shape[-1] != length - 1:
        raise ValueError(f"Expected {length - 1} polar angles, got {thetas.shape[-1]}")
    vec = _unit_vector(thetas, _full_phases(phases, length, mask))
    return vec[0] if single else vec


def _complement(thetas: np.ndarray, phases: np.ndarray, count: int) -> np.ndarray:
    # Columns v_0..v_{count-1}; v_n lives on rows 0..n+1 and uses products of sines/cosines only.
    batch, length = phases.shape
    sines = np.sin(thetas)
    cosines = np.cos(thetas)
    heads = np.ones((batch, length))
    heads[:, 1:] = cosines
    weighted = np.exp(1j * phases) * heads
    out = np.zeros((batch, length, count), dtype=complex)
    running = np.zeros((batch, length))  # Π_{k≤j<n} sin θ_j for k ≤ n
    for n in range(count):
        running[:, n] = 1.0
        out[:, : n + 1, n] = weighted[:, : n + 1] * running[:, : n + 1] * cosines[:, n : n + 1]
        out[:, n + 1, n] = -np.exp(1j * phases[:, n + 1]) * sines[:, n]
        running[:, : n + 1] *= sines[:, n : n + 1]
    return out


def complement_basis(
    thetas: np.ndarray,
    phases: np.ndarray,
    count: int,
    mask: Sequence[int] = (),
) -> np.ndarray:
    """
    Orthonormal columns v_1..v_count orthogonal to the unit vector with the given angles.

    Column n (1-based) is supported on rows 1..n+1 only.

    Args:
        thetas: K−1 polar angles of the unit vector
        phases: Its unmasked phases
        count: Number of columns, at most K−1
        mask: Zero-phase positions

    Returns:
        K×count matrix (batched if thetas is 2-D)

    Raises:
        ValueError: If count exceeds K−1
    """
    thetas = np.asarray(thetas, dtype=float)
    single = thetas.ndim == 1
    thetas = np.atleast_2d(thetas)
    length = thetas.shape[-1] + 1
    if count > length - 1:
        raise ValueError(f"At most {length - 1} complement columns exist, {count} requested")
    basis = _complement(thetas, _full_phases(phases, length, mask), count)
    return basis[0] if single else basis


# ============================================================================
# FORWARD MAP
# ============================================================================


def _stacked_columns(angles: np.ndarray, structure: ParamStructure) -> np.ndarray:
    """Return ψ_1..ψ_d in the permuted frame, shape (B, d, K_d)."""
    d = structure.dim
    batch = angles.shape[0]
    psi = np.zeros((batch, d, structure.K[-1]), dtype=complex)
    basis = None
    for level, (theta_slice, phase_slice) in enumerate(structure.level_slices()):
        length = structure.level_lengths[level]
        thetas = angles[:, theta_slice]
        phases = np.zeros((batch, length))
        phases[:, structure.level_free_phases(level)] = angles[:, phase_slice]
        x = _unit_vector(thetas, phases)
        column = x if basis is None else np.einsum("bkm,bm->bk", basis, x)
        psi[:, d - 1 - level, :] = column
        if level < d - 1:
            v = _complement(thetas, phases, structure.level_lengths[level + 1])
            basis = v if basis is None else basis @ v
    return psi


def _assemble_factor(psi: np.ndarray, structure: ParamStructure) -> np.ndarray:
    """Undo the permutation and lay Φ_i out as the columns of A, shape (B, d², d²)."""
    d = structure.dim
    d2 = d * d
    batch = psi.shape[0]
    stacked = np.zeros((batch, d, d ** 3), dtype=complex)
    stacked[:, :, structure.perm[: structure.K[-1]]] = psi
    # stacked[b, i, k*d² + m] = A[b, m, i*d + k]
    return stacked.reshape(batch, d, d, d2).transpose(0, 3, 1, 2).reshape(batch, d2, d2)


def params_to_choi(angles: np.ndarray, d: Optional[int] = None) -> np.ndarray:
    """
    Map an angle vector to a trace-preserving Choi state ρ = A†A.

    Accepts a single vector or a batch of shape (B, n).

    Args:
        angles: d²(d²−1) real angles, any range
        d: Channel dimension (inferred from the angle count if omitted)

    Returns:
        d²×d² Choi matrix, or (B, d², d²) for a batch

    Raises:
        ValueError: If the angle count is wrong
    """
    angles = np.asarray(angles, dtype=float)
    single = angles.ndim == 1
    batch = np.atleast_2d(angles)
    if d is None:
        d = dim_from_angle_count(batch.shape[-1])
    structure = build_structure(d)
    if batch.shape[-1] != structure.n_angles:
        raise ValueError(f"Expected {structure.n_angles} angles for d={d}, got {batch.shape[-1]}")
    factor = _assemble_factor(_stacked_columns(batch, structure), structure)
    rho = np.einsum("bmi,bmj->bij", factor.conj(), factor)
    return rho[0] if single else rho


def stacked_columns(angles: np.ndarray, d: int) -> np.ndarray:
    """Stacked columns Φ = [Φ_1 … Φ_d] as a d³×d matrix for a single angle vector."""
    structure = build_structure(d)
    psi = _stacked_columns(np.atleast_2d(np.asarray(angles, dtype=float)), structure)[0]
    phi = np.zeros((d ** 3, d), dtype=complex)
    phi[structure.perm[: structure.K[-1]], :] = psi.T
    return phi


def random_angles(d: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform angles on [0, 2π) for d-dimensional channels."""
    n = angle_count(d)
    shape = (n,) if size is None else (size, n)
    return rng.uniform(0.0, 2 * np.pi, size=shape)


# ============================================================================
# INVERSE MAP
# ============================================================================


def _extract_angles(x: np.ndarray, mask: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Polar angles and unmasked phases of a unit vector (masked entries must be real)."""
    length = x.shape[0]
    masked = set(mask)
    signed = np.array([x[k].real if k in masked else abs(x[k]) for k in range(length)])
    prefix_norms = np.sqrt(np.cumsum(np.abs(x) ** 2))
    thetas = np.zeros(length - 1)
    if length > 1:
        thetas[0] = np.arctan2(signed[0], signed[1])
    for m in range(2, length):
        thetas[m - 1] = np.arctan2(prefix_norms[m - 1], signed[m])
    phases = np.array([np.angle(x[k]) for k in range(length) if k not in masked])
    return thetas, phases


def choi_to_params(rho: np.ndarray) -> np.ndarray:
    """
    Recover angles for a strictly positive-definite TP Choi state.

    Uses the Cholesky factorization ρ = A†A (A upper triangular), fixes the row phases so that
    the last column of A is real and nonnegative, then peels off the unit vectors level by level.

    Args:
        rho: d²×d² TP Choi matrix with all eigenvalues above 1e-8

    Returns:
        Angle vector with params_to_choi(angles) ≈ rho

    Raises:
        ValueError: If rho is not TP or is rank-deficient
    """
    d = choi_dim(rho)
    rho = hermitian_part(np.asarray(rho, dtype=complex))
    if not is_tp(rho):
        err = np.linalg.norm(partial_trace(rho, 2) - np.eye(d))
        raise ValueError(f"choi_to_params requires a TP Choi state (‖tr₂ρ − 𝟙‖ = {err:.3e})")
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig <= MIN_EIGENVALUE:
        raise ValueError(
            f"Choi state is rank-deficient (min eigenvalue {min_eig:.3e}); boundary channels are "
            "unsupported, mix with 1e-6 of the depolarizing channel first"
        )

    structure = build_structure(d)
    d2 = d * d
    factor = np.linalg.cholesky(rho).conj().T
    last = factor[:, -1]
    factor = factor * np.exp(-1j * np.angle(last))[:, None]

    # Φ_i[k*d² + m] = A[m, i*d + k]
    stacked = factor.reshape(d2, d, d).transpose(1, 2, 0).reshape(d, d ** 3)
    psi = stacked[:, structure.perm[: structure.K[-1]]]

    pieces = []
    basis = None
    for level in range(d):
        target = psi[d - 1 - level]
        x = target if basis is None else basis.conj().T @ target
        x = x / np.linalg.norm(x)
        thetas, phases = _extract_angles(x, structure.level_masks[level])
        pieces.extend([thetas, phases])
        if level < d - 1:
            full = np.zeros(structure.level_lengths[level])
            full[structure.level_free_phases(level)] = phases
            v = _complement(thetas[None], full[None], structure.level_lengths[level + 1])[0]
            basis = v if basis is None else basis @ v
    return np.concatenate(pieces)


# ============================================================================
# JACOBIANS
# ============================================================================


def free_probability_jacobian(
    params: np.ndarray,
    probabilities: Callable[[np.ndarray], np.ndarray],
    free_index: np.ndarray,
    h: float = FD_STEP,
) -> np.ndarray:
    """
    Central finite-difference Jacobian of the free probabilities with respect to the parameters.

    Args:
        params: (B, n) parameter points
        probabilities: Batched map (M, n) -> (M, n_outcomes)
        free_index: Outcome indices kept (one outcome per input dropped)
        h: Finite-difference step

    Returns:
        (B, n_free, n) Jacobians
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    batch, n = params.shape
    shift = np.eye(n) * h
    points = np.concatenate([params[:, None, :] + shift, params[:, None, :] - shift], axis=1)
    probs = probabilities(points.reshape(-1, n))[:, free_index]
    probs = probs.reshape(batch, 2, n, -1)
    return np.swapaxes((probs[:, 0] - probs[:, 1]) / (2 * h), 1, 2)


def log_volume_element(jacobians: np.ndarray) -> np.ndarray:
    """
    log|det J| for square Jacobians, ½ log det(JᵀJ) for tall ones; −∞ where J is singular.

    Args:
        jacobians: (B, rows, cols) with rows ≥ cols

    Returns:
        (B,) log volume elements
    """
    rows, cols = jacobians.shape[-2:]
    if rows < cols:
        raise ValueError(f"Jacobian has fewer free probabilities ({rows}) than parameters ({cols})")
    if rows == cols:
        sign, logdet = np.linalg.slogdet(jacobians)
        return np.where(sign == 0, -np.inf, logdet)
    singular = np.linalg.svd(jacobians, compute_uv=False)
    with np.errstate(divide="ignore"):
        logs = np.sum(np.log(singular), axis=-1)
    degenerate = singular[..., -1] <= RANK_TOL * singular[..., 0]
    return np.where(degenerate, -np.inf, logs)


def log_jacobian(angles: np.ndarray, scheme, h: float = FD_STEP) -> float:
    """
    log|det J| of the free Born probabilities with respect to the angles.

    Transports densities stated in probability space (priors, likelihoods) to angle space.

    Args:
        angles: Angle vector for the general family
        scheme: TomographyScheme whose free-probability count equals the angle count
        h: Finite-difference step

    Returns:
        Log-Jacobian, or −∞ at a singular point

    Raises:
        ValueError: If the scheme is not informationally complete for this parameterization
    """
    angles = np.asarray(angles, dtype=float)
    d = scheme.dim
    n = angle_count(d)
    if angles.shape != (n,):
        raise ValueError(f"Expected {n} angles for d={d}, got shape {angles.shape}")
    if scheme.n_free != n:
        raise ValueError(
            f"Scheme has {scheme.n_free} free probabilities but the parameterization has {n} angles; "
            "the Jacobian is not square"
        )

    def probabilities(points: np.ndarray) -> np.ndarray:
        return born_probabilities_batch(params_to_choi(points, d), scheme)

    value = float(log_volume_element(free_probability_jacobian(angles[None], probabilities, scheme.free_index, h))[0])
    if not np.isfinite(value):
        logger.warning("Singular Jacobian at evaluation point; density set to zero")
    return value
