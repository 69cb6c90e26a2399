"""Tests for the nine-angle unital qubit parameterization."""

import numpy as np
import pytest
from scipy.optimize import minimize

from channels.catalog import dephasing_kraus, pauli_kraus
from channels.duality import choi_from_kraus, min_fidelity_batch, partial_trace
from channels.unital_qubit import (
    BLOCH_SIGN,
    bloch_map,
    choi_from_dyadic,
    dyadic_to_bloch,
    pauli_probabilities_to_weights,
    rotation_zyz,
    tetra_weights,
    unital_dyadic,
    unital_log_jacobian,
    unital_params_to_choi,
    weights_to_tetra_angles,
)


def bloch_oracle(m):
    """min over unit s of ½(1 + s·Ms): grid search refined with a local optimizer."""
    theta, phi = np.meshgrid(np.linspace(0, np.pi, 200), np.linspace(0, 2 * np.pi, 400))

    def value(angles):
        t, p = angles
        s = np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
        return 0.5 * (1 + s @ m @ s)

    s = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
    grid = 0.5 * (1 + np.einsum("...i,ij,...j->...", s, m, s))
    index = np.unravel_index(np.argmin(grid), grid.shape)
    result = minimize(value, [theta[index], phi[index]], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
    return min(result.fun, grid.min())


class TestParameterization:
    """unital_params_to_choi."""

    def test_first_vertex(self):
        angles = np.zeros(9)
        assert np.allclose(unital_dyadic(angles), -np.eye(3))
        eigenvalues = np.sort(np.linalg.eigvalsh(unital_params_to_choi(angles)))
        assert np.allclose(eigenvalues, [0, 0, 0, 2], atol=1e-12)

    def test_equal_weights_give_depolarizing(self):
        tetra = weights_to_tetra_angles(np.full(4, 0.25))
        rho = unital_params_to_choi(np.concatenate([tetra, np.zeros(6)]))
        assert np.allclose(rho, 0.5 * np.eye(4), atol=1e-12)

    def test_identity_vertex(self):
        angles = np.array([np.pi / 2, np.pi / 2, 0, 0, 0, 0, 0, 0, 0])
        assert np.allclose(unital_params_to_choi(angles), choi_from_kraus([np.eye(2)]), atol=1e-12)

    def test_pauli_convention(self):
        """Pauli weights (p_I, p_x, p_y, p_z) land on the matching tetrahedron vertices."""
        pauli = np.array([0.6, 0.05, 0.15, 0.2])
        tetra = weights_to_tetra_angles(pauli_probabilities_to_weights(pauli))
        rho = unital_params_to_choi(np.concatenate([tetra, np.zeros(6)]))
        assert np.allclose(rho, choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2)), atol=1e-12)

    def test_sweep(self, rng):
        rhos = unital_params_to_choi(rng.uniform(0, 2 * np.pi, (10_000, 9)))
        assert np.all(np.linalg.eigvalsh(rhos)[:, 0] >= -1e-10)
        assert np.all(np.linalg.norm(partial_trace(rhos, 2) - np.eye(2), axis=(1, 2)) <= 1e-12)
        assert np.all(np.linalg.norm(partial_trace(rhos, 1) - np.eye(2), axis=(1, 2)) <= 1e-12)

    def test_weights_sum_to_one(self, rng):
        weights = tetra_weights(rng.uniform(0, 2 * np.pi, (1000, 3)))
        assert np.all(weights >= 0)
        assert np.max(np.abs(weights.sum(axis=1) - 1.0)) <= 1e-15

    def test_weights_round_trip(self, rng):
        weights = rng.dirichlet(np.ones(4), size=50)
        assert np.allclose(tetra_weights(weights_to_tetra_angles(weights)), weights, atol=1e-12)

    def test_rotations_orthogonal(self, rng):
        r = rotation_zyz(rng.uniform(0, 2 * np.pi, (20, 3)))
        assert np.allclose(r @ np.swapaxes(r, -1, -2), np.eye(3), atol=1e-12)
        assert np.allclose(np.linalg.det(r), 1.0)

    def test_wrong_angle_count(self):
        with pytest.raises(ValueError, match="9 angles"):
            unital_params_to_choi(np.zeros(8))


class TestBlochMap:
    """Bloch map extraction and the C ↔ M convention."""

    def test_identity(self):
        assert np.allclose(bloch_map(choi_from_kraus([np.eye(2)])), np.eye(3))

    def test_pauli(self):
        m = bloch_map(choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2)))
        assert np.allclose(m, np.diag([0.3, 0.5, 0.6]))

    @pytest.mark.parametrize("p", [0.1, 0.25, 0.4])
    def test_dephasing(self, p):
        m = bloch_map(choi_from_kraus(dephasing_kraus(p)))
        assert np.allclose(m, np.diag([1 - 2 * p, 1 - 2 * p, 1]))

    def test_dyadic_convention(self, rng):
        for _ in range(20):
            angles = rng.uniform(0, 2 * np.pi, 9)
            rho = unital_params_to_choi(angles)
            assert np.allclose(bloch_map(rho), dyadic_to_bloch(unital_dyadic(angles)), atol=1e-12)

    def test_rejects_non_unital(self, amplitude_damping):
        with pytest.raises(ValueError, match="unital"):
            bloch_map(amplitude_damping)

    def test_min_fidelity_oracle(self, rng):
        for _ in range(20):
            rho = unital_params_to_choi(rng.uniform(0, 2 * np.pi, 9))
            m = bloch_map(rho)
            assert abs(min_fidelity_batch(rho[None])[0] - bloch_oracle(m)) <= 1e-5

    def test_common_rotation_invariance(self, rng):
        """(R₁, R₂) → (S R S R₁, R R₂) conjugates M by R."""
        angles = rng.uniform(0, 2 * np.pi, 9)
        rotation = rotation_zyz(rng.uniform(0, 2 * np.pi, 3))
        dyadic = unital_dyadic(angles)
        rotated = BLOCH_SIGN @ rotation @ BLOCH_SIGN @ dyadic @ rotation.T
        m = bloch_map(choi_from_dyadic(dyadic).astype(complex))
        m_rotated = bloch_map(choi_from_dyadic(rotated).astype(complex))
        assert np.allclose(m_rotated, rotation @ m @ rotation.T, atol=1e-12)
        spectrum = np.linalg.eigvalsh(0.5 * (m + m.T))
        spectrum_rotated = np.linalg.eigvalsh(0.5 * (m_rotated + m_rotated.T))
        assert np.allclose(spectrum, spectrum_rotated, atol=1e-12)


class TestUnitalJacobian:
    """Gram log-volume of the nine-angle family."""

    def test_generic_full_rank(self, rng, tetrahedron):
        for _ in range(5):
            assert np.isfinite(unital_log_jacobian(rng.uniform(0, 2 * np.pi, 9), tetrahedron))

    def test_step_halving(self, rng, tetrahedron):
        for _ in range(20):
            angles = rng.uniform(0, 2 * np.pi, 9)
            full = unital_log_jacobian(angles, tetrahedron, h=1e-5)
            half = unital_log_jacobian(angles, tetrahedron, h=5e-6)
            assert abs(full - half) <= 1e-4

    def test_degenerate_point_rejected(self, tetrahedron):
        """At θ₁ = 0 the remaining tetra angles have no effect."""
        assert unital_log_jacobian(np.zeros(9), tetrahedron) == -np.inf

    def test_rejects_qutrit_scheme(self, qutrit_sic):
        with pytest.raises(ValueError, match="qubit"):
            unital_log_jacobian(np.zeros(9), qutrit_sic)
