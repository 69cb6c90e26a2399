"""Nine-angle parameterization of unital qubit channels and the qubit Bloch map.

A unital qubit Choi state is ρ = ½(𝟙 + Σ_kl C_kl σ_k ⊗ σ_l). Positivity holds exactly when
C = R₁ diag(c) R₂ᵀ with c in the tetrahedron spanned by v₁ … v₄, so the family is covered by
three convex-weight angles plus two Z-Y-Z Euler rotations.

In this frame the identity channel has C = diag(1, −1, 1) (vertex v₃) and the Bloch map is
M = Cᵀ S with S = diag(1, −1, 1). A rotation R of the Bloch map, M → R M Rᵀ, corresponds to
(R₁, R₂) → (S R S R₁, R R₂).
"""

import numpy as np

from channels.cptp_param import FD_STEP, free_probability_jacobian, log_volume_element
from channels.duality import (
    PAULI,
    bloch_matrix_batch,
    born_probabilities_batch,
    choi_dim,
    is_tp,
    is_unital,
)
from utils.logging_config import get_logger

logger = get_logger(__name__)

TETRAHEDRON = np.array(
    [
        [-1.0, -1.0, -1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
    ]
)
BLOCH_SIGN = np.diag([1.0, -1.0, 1.0])
N_UNITAL_ANGLES = 9

# σ_k ⊗ σ_l, shape (3, 3, 4, 4)
_SIGMA_PRODUCTS = np.array([[np.kron(PAULI[k], PAULI[l]) for l in range(3)] for k in range(3)])


# ============================================================================
# BUILDING BLOCKS
# ============================================================================


def tetra_weights(thetas: np.ndarray) -> np.ndarray:
    """
    Convex weights from three angles: cos²θ₁, sin²θ₁cos²θ₂, sin²θ₁sin²θ₂cos²θ₃, sin²θ₁sin²θ₂sin²θ₃.

    Args:
        thetas: (..., 3) angles

    Returns:
        (..., 4) nonnegative weights summing to 1
    """
    thetas = np.asarray(thetas, dtype=float)
    c2 = np.cos(thetas) ** 2
    s2 = np.sin(thetas) ** 2
    return np.stack(
        [
            c2[..., 0],
            s2[..., 0] * c2[..., 1],
            s2[..., 0] * s2[..., 1] * c2[..., 2],
            s2[..., 0] * s2[..., 1] * s2[..., 2],
        ],
        axis=-1,
    )


def weights_to_tetra_angles(weights: np.ndarray) -> np.ndarray:
    """
    Inverse of tetra_weights on [0, π/2]³.

    Args:
        weights: (..., 4) nonnegative weights summing to 1

    Returns:
        (..., 3) angles
    """
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    w = w / w.sum(axis=-1, keepdims=True)
    rest1 = w[..., 1] + w[..., 2] + w[..., 3]
    rest2 = w[..., 2] + w[..., 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(rest1 > 0, w[..., 1] / rest1, 1.0)
        r2 = np.where(rest2 > 0, w[..., 2] / rest2, 1.0)
    t1 = np.arccos(np.sqrt(np.clip(w[..., 0], 0.0, 1.0)))
    t2 = np.arccos(np.sqrt(np.clip(r1, 0.0, 1.0)))
    t3 = np.arccos(np.sqrt(np.clip(r2, 0.0, 1.0)))
    return np.stack([t1, t2, t3], axis=-1)


def rotation_zyz(angles: np.ndarray) -> np.ndarray:
    """Rotation matrices Rz(α) Ry(β) Rz(γ) for (..., 3) Euler angles."""
    angles = np.asarray(angles, dtype=float)
    a, b, g = angles[..., 0], angles[..., 1], angles[..., 2]
    ca, sa, cb, sb, cg, sg = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(g), np.sin(g)
    return np.stack(
        [
            np.stack([ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb], axis=-1),
            np.stack([sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb], axis=-1),
            np.stack([-sb * cg, sb * sg, cb], axis=-1),
        ],
        axis=-2,
    )


def choi_from_dyadic(dyadic: np.ndarray) -> np.ndarray:
    """ρ = ½(𝟙 + Σ C_kl σ_k ⊗ σ_l) for (..., 3, 3) dyadics."""
    dyadic = np.asarray(dyadic, dtype=float)
    correlations = np.einsum("...kl,klab->...ab", dyadic, _SIGMA_PRODUCTS)
    return 0.5 * (np.eye(4) + correlations)


def dyadic_from_choi(rho: np.ndarray) -> np.ndarray:
    """C_kl = ½ tr{ρ (σ_k ⊗ σ_l)}."""
    rho = np.asarray(rho)
    return 0.5 * np.real(np.einsum("...ab,klba->...kl", rho, _SIGMA_PRODUCTS))


# ============================================================================
# PARAMETERIZATIONS
# ============================================================================


def unital_dyadic(angles: np.ndarray) -> np.ndarray:
    """C = R₁ diag(Σ α_i v_i) R₂ᵀ from (..., 9) angles (tetra, rot1, rot2)."""
    angles = np.asarray(angles, dtype=float)
    c_diag = tetra_weights(angles[..., 0:3]) @ TETRAHEDRON
    r1 = rotation_zyz(angles[..., 3:6])
    r2 = rotation_zyz(angles[..., 6:9])
    return r1 @ (c_diag[..., :, None] * np.swapaxes(r2, -1, -2))


def unital_params_to_choi(angles: np.ndarray) -> np.ndarray:
    """
    Map nine angles (tetra θ₁..θ₃, R₁ Euler angles, R₂ Euler angles) to a unital qubit Choi state.

    The map is total; a leading batch axis is accepted.

    Args:
        angles: (9,) or (B, 9) angles

    Returns:
        4×4 Choi matrix (or a batch) with tr₁ρ = tr₂ρ = 𝟙

    Raises:
        ValueError: If the trailing dimension is not 9
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1] != N_UNITAL_ANGLES:
        raise ValueError(f"Unital qubit channels take {N_UNITAL_ANGLES} angles, got {angles.shape[-1]}")
    return choi_from_dyadic(unital_dyadic(angles)).astype(complex)


def symmetric_unital_params_to_choi(angles: np.ndarray) -> np.ndarray:
    """Unital channels with R₁ = R₂: six angles (tetra θ₁..θ₃, shared Euler angles)."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1] != 6:
        raise ValueError(f"Symmetric unital channels take 6 angles, got {angles.shape[-1]}")
    return unital_params_to_choi(np.concatenate([angles, angles[..., 3:6]], axis=-1))


def pauli_probabilities_to_weights(pauli: np.ndarray) -> np.ndarray:
    """Map (p_I, p_x, p_y, p_z) to tetrahedron weights (v₁ ↔ σ_y, v₂ ↔ σ_z, v₃ ↔ 𝟙, v₄ ↔ σ_x)."""
    pauli = np.asarray(pauli, dtype=float)
    return pauli[..., [2, 3, 0, 1]]


# ============================================================================
# BLOCH MAP
# ============================================================================


def bloch_map(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """
    Bloch map M with s_out = M s_in, M_ij = ½ tr{σ_i E(σ_j)}.

    Args:
        rho: TP, unital qubit Choi matrix
        tol: Tolerance for the TP and unital checks

    Returns:
        Real 3×3 matrix

    Raises:
        ValueError: If the channel is not a TP unital qubit channel
    """
    if choi_dim(rho) != 2:
        raise ValueError("bloch_map is defined for qubit channels only")
    if not is_tp(rho, tol):
        raise ValueError("bloch_map requires a trace-preserving channel")
    if not is_unital(rho, tol):
        raise ValueError("bloch_map requires a unital channel")
    return bloch_matrix_batch(np.asarray(rho)[None])[0]


def dyadic_to_bloch(dyadic: np.ndarray) -> np.ndarray:
    """M = Cᵀ S; the transpose on the input factor flips the sign of the σ_y column."""
    return np.swapaxes(np.asarray(dyadic), -1, -2) @ BLOCH_SIGN


# ============================================================================
# JACOBIAN
# ============================================================================


def unital_log_jacobian(angles: np.ndarray, scheme, h: float = FD_STEP) -> float:
    """
    Gram log-volume ½ log det(JᵀJ) of the free probabilities with respect to the nine angles.

    Args:
        angles: Nine unital angles
        scheme: Qubit tomography scheme (12 free probabilities for the tetrahedron)
        h: Finite-difference step

    Returns:
        Log volume element, −∞ if rank(J) < 9

    Raises:
        ValueError: On a non-qubit scheme or wrong angle count
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (N_UNITAL_ANGLES,):
        raise ValueError(f"Expected {N_UNITAL_ANGLES} angles, got shape {angles.shape}")
    if scheme.dim != 2:
        raise ValueError("unital_log_jacobian requires a qubit scheme")

    def probabilities(points: np.ndarray) -> np.ndarray:
        return born_probabilities_batch(unital_params_to_choi(points), scheme)

    jac = free_probability_jacobian(angles[None], probabilities, scheme.free_index, h)
    value = float(log_volume_element(jac)[0])
    if not np.isfinite(value):
        logger.warning("Unital Jacobian is rank-deficient at this point; point rejected")
    return value
