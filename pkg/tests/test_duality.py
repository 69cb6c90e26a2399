"""Tests for the channel-state duality kernel."""

import numpy as np
import pytest

from channels.catalog import amplitude_damping_kraus, dephasing_kraus, depolarizing_choi, pauli_kraus
from channels.duality import (
    apply_channel,
    avg_fidelity,
    avg_fidelity_batch,
    born_probabilities,
    choi_from_kraus,
    is_tp,
    is_unital,
    kraus_from_choi,
    min_fidelity_unital_qubit,
    partial_trace,
    vectorize,
)
from channels.cptp_param import params_to_choi, random_angles


def random_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def kraus_action(kraus, x):
    return sum(k @ x @ k.conj().T for k in kraus)


class TestVectorize:
    """Vectorization convention vec(|ψ⟩⟨φ|) = |φ̄⟩ ⊗ |ψ⟩."""

    def test_identity(self):
        assert np.allclose(vectorize(np.eye(2)), [1, 0, 0, 1])

    def test_sigma_x(self):
        sigma_x = np.array([[0, 1], [1, 0]])
        assert np.allclose(vectorize(sigma_x), [0, 1, 1, 0])

    def test_outer_product_ordering(self):
        """|0⟩⟨1| lands on |1̄⟩ ⊗ |0⟩, index 2."""
        x = np.array([[0, 1], [0, 0]])
        assert np.allclose(vectorize(x), [0, 0, 1, 0])

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_product_identity(self, rng, d):
        """vec(ABC) = (Cᵀ ⊗ A) vec(B)."""
        for _ in range(20):
            a, b, c = (random_complex(rng, (d, d)) for _ in range(3))
            lhs = vectorize(a @ b @ c)
            rhs = np.kron(c.T, a) @ vectorize(b)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            vectorize(np.zeros((2, 3)))


class TestKrausChoi:
    """Kraus ↔ Choi conversion."""

    def test_identity_channel(self):
        rho = choi_from_kraus([np.eye(2)])
        expected = np.zeros((4, 4))
        expected[0, 0] = expected[0, 3] = expected[3, 0] = expected[3, 3] = 1.0
        assert np.allclose(rho, expected)
        assert np.isclose(np.trace(rho).real, 2.0)

    def test_amplitude_damping_entries(self):
        rho = choi_from_kraus(amplitude_damping_kraus(0.4))
        expected = np.zeros((4, 4))
        expected[0, 0] = 1.0
        expected[0, 3] = expected[3, 0] = np.sqrt(0.6)
        expected[3, 3] = 0.6
        expected[2, 2] = 0.4
        assert np.allclose(rho, expected, atol=1e-12)

    def test_unitary_remixing_invariance(self, rng):
        kraus = amplitude_damping_kraus(0.3)
        q, _ = np.linalg.qr(random_complex(rng, (2, 2)))
        mixed = [q[0, 0] * kraus[0] + q[0, 1] * kraus[1], q[1, 0] * kraus[0] + q[1, 1] * kraus[1]]
        assert np.allclose(choi_from_kraus(kraus), choi_from_kraus(mixed), atol=1e-12)

    def test_empty_set(self):
        with pytest.raises(ValueError, match="empty"):
            choi_from_kraus([])

    def test_mismatched_dimensions(self):
        with pytest.raises(ValueError, match="mismatched"):
            choi_from_kraus([np.eye(2), np.eye(3)])

    def test_identity_kraus_recovered(self):
        kraus = kraus_from_choi(choi_from_kraus([np.eye(2)]))
        assert len(kraus) == 1
        ratio = kraus[0] / kraus[0][0, 0]
        assert np.allclose(ratio, np.eye(2), atol=1e-10)

    def test_amplitude_damping_action_preserved(self, rng):
        original = amplitude_damping_kraus(0.4)
        recovered = kraus_from_choi(choi_from_kraus(original))
        assert len(recovered) == 2
        for _ in range(5):
            x = random_complex(rng, (2, 2))
            assert np.allclose(kraus_action(original, x), kraus_action(recovered, x), atol=1e-10)

    def test_rank_deficient(self, rng):
        rho = params_to_choi(random_angles(3, rng))
        kraus = kraus_from_choi(choi_from_kraus(kraus_from_choi(rho)[:2]))
        assert len(kraus) == 2

    @pytest.mark.parametrize("d", [2, 3])
    def test_round_trip(self, rng, d):
        for _ in range(10):
            rho = params_to_choi(random_angles(d, rng))
            assert np.linalg.norm(choi_from_kraus(kraus_from_choi(rho)) - rho) <= 1e-9

    def test_rejects_non_hermitian(self):
        rho = np.eye(4, dtype=complex)
        rho[0, 1] = 0.5
        with pytest.raises(ValueError, match="Hermitian"):
            kraus_from_choi(rho)

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="positive"):
            kraus_from_choi(np.diag([1.0, 1.0, 1.0, -0.1]))


class TestChannelAction:
    """Partial traces and E(X) = tr₁{ρ(Xᵀ ⊗ 𝟙)}."""

    def test_identity_channel_action(self, rng, identity_channel):
        x = random_complex(rng, (2, 2))
        assert np.allclose(apply_channel(identity_channel, x), x)

    def test_amplitude_damping_excited_state(self, amplitude_damping):
        out = apply_channel(amplitude_damping, np.diag([0.0, 1.0]))
        assert np.allclose(out, np.diag([0.4, 0.6]))

    def test_dephasing_half_kills_coherence(self):
        rho = choi_from_kraus(dephasing_kraus(0.5))
        out = apply_channel(rho, np.array([[0, 1], [1, 0]], dtype=complex))
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_matches_kraus_action(self, rng):
        for _ in range(100):
            rho = params_to_choi(random_angles(2, rng))
            kraus = kraus_from_choi(rho)
            state = random_complex(rng, (2, 2))
            state = state @ state.conj().T
            state /= np.trace(state)
            assert np.allclose(apply_channel(rho, state), kraus_action(kraus, state), atol=1e-10)

    def test_dimension_mismatch(self, identity_channel):
        with pytest.raises(ValueError, match="does not match"):
            apply_channel(identity_channel, np.eye(3))

    def test_partial_traces(self, identity_channel, amplitude_damping):
        assert np.allclose(partial_trace(identity_channel, 2), np.eye(2))
        assert np.allclose(partial_trace(amplitude_damping, 1), np.diag([1.4, 0.6]))
        assert np.isclose(np.trace(partial_trace(amplitude_damping, 1)), np.trace(amplitude_damping))

    def test_partial_trace_bad_size(self):
        with pytest.raises(ValueError, match="perfect square"):
            partial_trace(np.eye(5), 1)

    def test_tp_and_unital_flags(self, amplitude_damping):
        assert is_tp(amplitude_damping)
        assert not is_unital(amplitude_damping)
        assert is_unital(choi_from_kraus(pauli_kraus(0.1, 0.2, 0.3)))


class TestBornRule:
    """Born probabilities through the pseudo-POVM."""

    def test_identity_tetrahedron(self, identity_channel, tetrahedron):
        probs = born_probabilities(identity_channel, tetrahedron)
        assert np.allclose(probs[:4], [0.5, 1 / 6, 1 / 6, 1 / 6])

    def test_depolarizing_uniform(self, tetrahedron):
        probs = born_probabilities(depolarizing_choi(1.0), tetrahedron)
        assert np.allclose(probs, 0.25)

    def test_matches_channel_action(self, amplitude_damping, tetrahedron):
        probs = born_probabilities(amplitude_damping, tetrahedron)
        oracle = [
            np.trace(element @ apply_channel(amplitude_damping, rho)).real
            for rho, povm in zip(tetrahedron.inputs, tetrahedron.povms)
            for element in povm
        ]
        assert np.allclose(probs, oracle, atol=1e-12)

    def test_rows_normalized(self, rng, qutrit_sic):
        for _ in range(10):
            probs = born_probabilities(params_to_choi(random_angles(3, rng)), qutrit_sic)
            assert probs.min() >= -1e-12
            for piece in qutrit_sic.split(probs):
                assert abs(piece.sum() - 1.0) <= 1e-10

    def test_rejects_non_tp(self, tetrahedron):
        with pytest.raises(ValueError, match="TP"):
            born_probabilities(np.eye(4) * 0.7, tetrahedron)


class TestFidelities:
    """Average and minimum fidelity."""

    def test_identity(self, identity_channel):
        assert np.isclose(avg_fidelity(identity_channel), 1.0)
        assert np.isclose(min_fidelity_unital_qubit(identity_channel), 1.0)

    def test_pauli_average_fidelity(self):
        rho = choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2))
        assert np.isclose(avg_fidelity(rho), 0.7333, atol=1e-4)

    def test_depolarizing_average_fidelity(self):
        assert np.isclose(avg_fidelity(depolarizing_choi(1.0)), 0.5)

    def test_haar_average(self, rng):
        """Average of ⟨ψ|E(ψ)|ψ⟩ over random pure states."""
        rho = choi_from_kraus(amplitude_damping_kraus(0.4))
        kraus = amplitude_damping_kraus(0.4)
        psi = random_complex(rng, (200_000, 2))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        values = sum(np.abs(np.einsum("ni,ij,nj->n", psi.conj(), k, psi)) ** 2 for k in kraus)
        assert np.isclose(avg_fidelity(rho), values.mean(), atol=3e-3)

    def test_qutrit_range(self, rng):
        values = avg_fidelity_batch(np.array([params_to_choi(random_angles(3, rng)) for _ in range(50)]))
        assert np.all(values >= 0.25 - 1e-12)
        assert np.all(values <= 1.0 + 1e-12)

    def test_affine(self, rng):
        a = params_to_choi(random_angles(2, rng))
        b = params_to_choi(random_angles(2, rng))
        mixed = 0.3 * a + 0.7 * b
        assert abs(avg_fidelity(mixed) - (0.3 * avg_fidelity(a) + 0.7 * avg_fidelity(b))) <= 1e-12

    def test_min_fidelity_values(self):
        pauli = choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2))
        dephasing = choi_from_kraus(dephasing_kraus(0.25))
        assert np.isclose(min_fidelity_unital_qubit(pauli), 0.65, atol=1e-10)
        assert np.isclose(min_fidelity_unital_qubit(dephasing), 0.75, atol=1e-10)

    def test_min_fidelity_grid_oracle(self):
        """Minimize ½(1 + s·Ms) over a Bloch-sphere grid."""
        m = np.diag([0.3, 0.5, 0.6])
        theta, phi = np.meshgrid(np.linspace(0, np.pi, 1000), np.linspace(0, 2 * np.pi, 1000))
        s = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
        oracle = 0.5 * (1 + np.einsum("...i,ij,...j->...", s, m, s)).min()
        rho = choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2))
        assert abs(min_fidelity_unital_qubit(rho) - oracle) <= 1e-5

    def test_min_fidelity_rejects_non_unital(self, amplitude_damping):
        with pytest.raises(ValueError, match="unital"):
            min_fidelity_unital_qubit(amplitude_damping)

    def test_min_fidelity_rejects_qutrit(self, rng):
        with pytest.raises(ValueError, match="qubit"):
            min_fidelity_unital_qubit(params_to_choi(random_angles(3, rng)))
