"""Tests for the nested channel families."""

import numpy as np
import pytest

from channels.catalog import dephasing_kraus, pauli_kraus
from channels.cptp_param import log_jacobian
from channels.duality import choi_from_kraus, is_tp, is_unital, partial_trace
from channels.families import NESTED_FAMILIES, get_family
from channels.unital_qubit import unital_log_jacobian


class TestRegistry:
    """Family lookup."""

    @pytest.mark.parametrize(
        "name,count",
        [("dephasing", 1), ("pauli", 3), ("symmetric-unital", 6), ("unital", 9), ("general", 12)],
    )
    def test_parameter_counts(self, name, count):
        assert get_family(name).n_params == count

    def test_general_qutrit(self):
        family = get_family("general", 3)
        assert family.n_params == 72
        assert family.parent is None

    def test_nesting_order(self):
        counts = [get_family(name).n_params for name in NESTED_FAMILIES]
        assert counts == sorted(counts)
        for smaller, larger in zip(NESTED_FAMILIES, NESTED_FAMILIES[1:]):
            assert get_family(larger).parent == smaller

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="Unknown channel family"):
            get_family("amplitude")

    def test_qutrit_only_general(self):
        with pytest.raises(ValueError, match="qubits"):
            get_family("pauli", 3)


class TestBuilders:
    """Batched Choi builders."""

    @pytest.mark.parametrize("name", NESTED_FAMILIES)
    def test_valid_channels(self, rng, name):
        family = get_family(name)
        chois = family.choi_batch(family.random_params(rng, 200))
        assert np.all(np.linalg.eigvalsh(chois)[:, 0] >= -1e-10)
        assert np.all(np.linalg.norm(partial_trace(chois, 2) - np.eye(2), axis=(1, 2)) <= 1e-10)

    @pytest.mark.parametrize("name", ["dephasing", "pauli", "symmetric-unital", "unital"])
    def test_unital_families(self, rng, name):
        family = get_family(name)
        for params in family.random_params(rng, 20):
            assert is_unital(family.choi(params))

    def test_dephasing_matches_kraus(self):
        family = get_family("dephasing")
        t = np.arcsin(np.sqrt(0.25))
        assert np.allclose(family.choi(np.array([t])), choi_from_kraus(dephasing_kraus(0.25)), atol=1e-12)

    def test_pauli_matches_kraus(self):
        from channels.unital_qubit import weights_to_tetra_angles

        family = get_family("pauli")
        params = weights_to_tetra_angles(np.array([0.6, 0.05, 0.15, 0.2]))
        assert np.allclose(family.choi(params), choi_from_kraus(pauli_kraus(0.05, 0.15, 0.2)), atol=1e-12)

    def test_wrong_parameter_count(self):
        with pytest.raises(ValueError, match="takes 3 parameters"):
            get_family("pauli").choi_batch(np.zeros((2, 4)))

    def test_probabilities_normalized(self, rng, tetrahedron):
        family = get_family("unital")
        probs = family.probabilities(family.random_params(rng, 10), tetrahedron)
        assert probs.shape == (10, 16)
        assert np.allclose(probs.reshape(10, 4, 4).sum(axis=-1), 1.0)


class TestEmbedding:
    """Each family reproduces channels of the next-smaller one."""

    @pytest.mark.parametrize("name", ["pauli", "symmetric-unital", "unital"])
    def test_exact_embedding(self, rng, name):
        family = get_family(name)
        parent = get_family(family.parent)
        for params in parent.random_params(rng, 10):
            embedded = family.embed_from_parent(params)
            assert embedded.shape == (family.n_params,)
            assert np.allclose(family.choi(embedded), parent.choi(params), atol=1e-10)

    def test_unital_in_general(self, rng):
        family = get_family("general")
        parent = get_family("unital")
        for params in parent.random_params(rng, 5):
            rho = family.choi(family.embed_from_parent(params))
            assert is_tp(rho)
            assert np.linalg.norm(rho - parent.choi(params)) <= 1e-4

    def test_batch_embedding(self, rng):
        family = get_family("pauli")
        params = get_family("dephasing").random_params(rng, 4)
        assert family.embed_from_parent(params).shape == (4, 3)

    def test_smallest_has_no_parent(self):
        with pytest.raises(ValueError, match="no smaller family"):
            get_family("dephasing").embed_from_parent(np.zeros(1))


class TestJacobians:
    """Batched log volume elements."""

    def test_general_matches_kernel(self, rng, tetrahedron):
        family = get_family("general")
        params = family.random_params(rng, 3)
        batch = family.log_jacobian_batch(params, tetrahedron)
        for row, value in zip(params, batch):
            assert np.isclose(value, log_jacobian(row, tetrahedron), atol=1e-8)

    def test_unital_matches_kernel(self, rng, tetrahedron):
        family = get_family("unital")
        params = family.random_params(rng, 3)
        batch = family.log_jacobian_batch(params, tetrahedron)
        for row, value in zip(params, batch):
            assert np.isclose(value, unital_log_jacobian(row, tetrahedron), atol=1e-8)

    @pytest.mark.parametrize("name", ["dephasing", "pauli", "symmetric-unital"])
    def test_small_families_finite(self, rng, tetrahedron, name):
        family = get_family(name)
        values = family.log_jacobian_batch(family.random_params(rng, 10), tetrahedron)
        assert np.all(np.isfinite(values))

    def test_dimension_mismatch(self, rng, qutrit_sic):
        family = get_family("unital")
        with pytest.raises(ValueError, match="does not match"):
            family.log_jacobian_batch(family.random_params(rng, 1), qutrit_sic)


class TestDirectSamplers:
    """Exact primitive-prior draws for the two smallest families."""

    def test_dephasing_uniform_p(self, rng):
        from channels.families import dephasing_probability

        family = get_family("dephasing")
        p = dephasing_probability(family.direct_sampler(rng, 20_000))
        assert abs(p.mean() - 0.5) < 0.01
        assert abs(np.mean(p < 0.25) - 0.25) < 0.01

    def test_pauli_uniform_simplex(self, rng):
        from channels.families import pauli_probabilities

        family = get_family("pauli")
        weights = pauli_probabilities(family.direct_sampler(rng, 20_000))
        assert np.allclose(weights.sum(axis=1), 1.0)
        assert np.allclose(weights.mean(axis=0), 0.25, atol=0.01)

    def test_larger_families_use_hmc(self):
        assert get_family("unital").direct_sampler is None
        assert get_family("general").direct_sampler is None
