"""Tests for the angle parameterization of trace-preserving Choi states."""

import numpy as np
import pytest

from channels.catalog import depolarizing_choi
from channels.duality import choi_from_kraus, depolarize, partial_trace
from channels.cptp_param import (
    angle_count,
    build_structure,
    choi_to_params,
    complement_basis,
    dim_from_angle_count,
    log_jacobian,
    params_to_choi,
    random_angles,
    stacked_columns,
    unit_sphere_vector,
)


def assert_valid_choi(rhos, d, tol=1e-10):
    rhos = np.atleast_3d(rhos).reshape(-1, d * d, d * d)
    assert np.all(np.linalg.eigvalsh(rhos)[:, 0] >= -tol)
    traces = np.trace(rhos, axis1=1, axis2=2)
    assert np.all(np.abs(traces - d) <= tol)
    reduced = partial_trace(rhos, 2)
    assert np.all(np.linalg.norm(reduced - np.eye(d), axis=(1, 2)) <= tol)


class TestStructure:
    """Index bookkeeping."""

    def test_qutrit_levels(self):
        assert build_structure(3).K == (6, 15, 24)

    def test_qubit_levels(self):
        assert build_structure(2).K == (3, 7)

    @pytest.mark.parametrize("d,count", [(2, 12), (3, 72), (4, 240)])
    def test_angle_count(self, d, count):
        assert angle_count(d) == count
        assert dim_from_angle_count(count) == d

    def test_unknown_angle_count(self):
        with pytest.raises(ValueError):
            dim_from_angle_count(13)

    def test_qutrit_permutation(self):
        perm = build_structure(3).perm + 1
        assert list(perm[:9]) == [1, 10, 11, 19, 20, 21, 2, 3, 4]
        assert sorted(perm) == list(range(1, 28))

    def test_qutrit_zero_phases(self):
        assert tuple(p + 1 for p in build_structure(3).zero_phase) == (4, 5, 6, 13, 14, 15, 22, 23, 24)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_structure_invariants(self, d):
        structure = build_structure(d)
        assert structure.K[-1] - structure.K[-2] == d * d
        assert len(structure.zero_phase) == d * d

    def test_rejects_small_dimension(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_structure(1)


class TestSphericalCoordinates:
    """Unit vectors and their orthogonal complements."""

    def test_origin_is_last_unit_vector(self):
        vec = unit_sphere_vector(np.zeros(6), np.zeros(7), 7)
        expected = np.zeros(7)
        expected[-1] = 1.0
        assert np.allclose(vec, expected)

    def test_two_dimensional(self):
        vec = unit_sphere_vector(np.array([np.pi / 4]), np.zeros(2), 2)
        assert np.allclose(vec, [np.sqrt(0.5), np.sqrt(0.5)])

    def test_norm_and_partial_sums(self, rng):
        thetas = rng.uniform(0, 2 * np.pi, 23)
        vec = unit_sphere_vector(thetas, rng.uniform(0, 2 * np.pi, 24), 24)
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-14
        partial = np.cumsum(np.abs(vec) ** 2)
        # S_m = Π_{j ≥ m} sin θ_j in 0-based positions
        for m in range(23):
            s_m = np.prod(np.sin(thetas[m:]))
            assert abs(partial[m] - s_m ** 2) <= 1e-13

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="polar angles"):
            unit_sphere_vector(np.zeros(3), np.zeros(3), 3)

    def test_complement_orthonormal(self, rng):
        for _ in range(100):
            thetas = rng.uniform(0, 2 * np.pi, 23)
            phases = rng.uniform(0, 2 * np.pi, 24)
            psi = unit_sphere_vector(thetas, phases, 24)
            basis = complement_basis(thetas, phases, 14)
            assert np.allclose(basis.conj().T @ basis, np.eye(14), atol=1e-12)
            assert np.allclose(basis.conj().T @ psi, 0.0, atol=1e-12)

    def test_complement_support(self, rng):
        thetas = rng.uniform(0, 2 * np.pi, 9)
        basis = complement_basis(thetas, rng.uniform(0, 2 * np.pi, 10), 9)
        for n in range(9):
            assert np.allclose(basis[n + 2:, n], 0.0)

    def test_complement_right_angles(self, rng):
        phases = rng.uniform(0, 2 * np.pi, 5)
        basis = complement_basis(np.full(4, np.pi / 2), phases, 4)
        expected = np.zeros(5, dtype=complex)
        expected[1] = -np.exp(1j * phases[1])
        assert np.allclose(basis[:, 0], expected)

    def test_complement_degenerate_angles(self):
        thetas = np.array([0.3, 0.0, 1.1, np.pi, 0.7])
        phases = np.linspace(0.1, 0.6, 6)
        basis = complement_basis(thetas, phases, 5)
        psi = unit_sphere_vector(thetas, phases, 6)
        assert np.allclose(basis.conj().T @ basis, np.eye(5), atol=1e-12)
        assert np.allclose(basis.conj().T @ psi, 0.0, atol=1e-12)

    def test_complement_too_many_columns(self):
        with pytest.raises(ValueError, match="complement"):
            complement_basis(np.zeros(3), np.zeros(4), 4)


class TestForwardMap:
    """params_to_choi produces TP Choi states."""

    def test_origin(self):
        assert_valid_choi(params_to_choi(np.zeros(12)), 2, tol=1e-12)

    def test_qubit_sweep(self, rng):
        assert_valid_choi(params_to_choi(random_angles(2, rng, size=10_000)), 2)

    def test_qutrit_sweep(self, rng):
        assert_valid_choi(params_to_choi(random_angles(3, rng, size=1_000)), 3)

    def test_batch_matches_single(self, rng):
        angles = random_angles(2, rng, size=5)
        batch = params_to_choi(angles)
        for row, rho in zip(angles, batch):
            assert np.allclose(params_to_choi(row), rho, atol=1e-14)

    def test_wrong_angle_count(self):
        with pytest.raises(ValueError, match="angles"):
            params_to_choi(np.zeros(11), d=2)

    @pytest.mark.parametrize("d", [2, 3])
    def test_stacked_columns_orthonormal(self, rng, d):
        phi = stacked_columns(random_angles(d, rng), d)
        assert np.allclose(phi.conj().T @ phi, np.eye(d), atol=1e-12)

    def test_last_factor_column_real(self, rng):
        d = 3
        phi = stacked_columns(random_angles(d, rng), d)
        last = phi[(d - 1) * d * d:, d - 1]
        assert np.max(np.abs(last.imag)) <= 1e-14

    def test_qutrit_support_sizes(self, rng):
        structure = build_structure(3)
        phi = stacked_columns(random_angles(3, rng), 3)
        permuted = phi[structure.perm]
        for i, k in enumerate(structure.K):
            assert np.allclose(permuted[k:, i], 0.0)
            assert np.abs(permuted[k - 1, i]) > 0

    def test_periodicity(self, rng):
        angles = random_angles(2, rng)
        rho = params_to_choi(angles)
        for j in range(angles.size):
            shifted = angles.copy()
            shifted[j] += 2 * np.pi
            assert np.allclose(params_to_choi(shifted), rho, atol=1e-12)

    def test_second_order_differences(self, rng):
        angles = random_angles(2, rng)
        j = 5

        def derivative(h):
            step = np.zeros_like(angles)
            step[j] = h
            return (params_to_choi(angles + step) - params_to_choi(angles - step)) / (2 * h)

        reference = derivative(1e-5)
        coarse = np.linalg.norm(derivative(1e-2) - reference)
        fine = np.linalg.norm(derivative(5e-3) - reference)
        assert 3.0 < coarse / fine < 5.0


class TestInverseMap:
    """choi_to_params round trips."""

    def test_smoothed_identity(self):
        rho = depolarizing_choi(0.001)
        assert np.linalg.norm(params_to_choi(choi_to_params(rho)) - rho) <= 1e-8

    @pytest.mark.parametrize("d", [2, 3])
    def test_random_round_trip(self, rng, d):
        """Random channels pulled slightly inside the CP cone invert exactly."""
        for _ in range(10):
            rho = depolarize(params_to_choi(random_angles(d, rng)), 1e-4)
            assert np.linalg.norm(params_to_choi(choi_to_params(rho)) - rho) <= 1e-8

    def test_rank_deficient(self):
        hadamard = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        with pytest.raises(ValueError, match="rank-deficient"):
            choi_to_params(choi_from_kraus([hadamard]))

    def test_non_tp(self):
        with pytest.raises(ValueError, match="TP"):
            choi_to_params(np.eye(4) * 0.7)


class TestJacobian:
    """Log-Jacobian of the free probabilities."""

    def test_qubit_finite(self, rng, tetrahedron):
        assert np.isfinite(log_jacobian(random_angles(2, rng), tetrahedron))

    def test_step_halving(self, rng, tetrahedron):
        for _ in range(20):
            angles = random_angles(2, rng)
            full = log_jacobian(angles, tetrahedron, h=1e-5)
            half = log_jacobian(angles, tetrahedron, h=5e-6)
            assert abs(full - half) <= 1e-4

    @pytest.mark.slow
    def test_qutrit_square(self, rng, qutrit_sic):
        assert qutrit_sic.n_free == 72
        assert np.isfinite(log_jacobian(random_angles(3, rng), qutrit_sic))

    def test_non_square(self, rng, qutrit_sic):
        with pytest.raises(ValueError):
            log_jacobian(random_angles(2, rng), qutrit_sic)
