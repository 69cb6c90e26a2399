"""Tests for the HMC sampler and its chain diagnostics."""

import numpy as np
import pytest

from sampling.diagnostics import (
    autocovariance,
    chain_summary,
    effective_sample_size,
    integrated_autocorrelation_time,
)
from sampling.hmc import (
    HmcConfig,
    TargetDensity,
    TrajectoryDiverged,
    adapt_step_size,
    finite_difference_gradient,
    leapfrog,
    merge_chains,
    run_chains,
    sample,
)
from utils.errors import NumericalError

COVARIANCE = np.array([[1.0, 0.6], [0.6, 2.0]])
PRECISION = np.linalg.inv(COVARIANCE)
MEAN = np.array([1.0, -0.5])


def gaussian_target(analytic_gradient: bool = True) -> TargetDensity:
    def log_w(theta):
        delta = theta - MEAN
        return -0.5 * delta @ PRECISION @ delta

    def grad(theta):
        return -PRECISION @ (theta - MEAN)

    return TargetDensity(dimension=2, log_w=log_w, grad_log_w=grad if analytic_gradient else None)


def standard_normal_target(dimension: int = 3) -> TargetDensity:
    return TargetDensity(dimension=dimension, log_w=lambda t: -0.5 * t @ t, grad_log_w=lambda t: -t)


def exact_flow(theta, momentum, step_size, n_steps, grad_log_w):
    """Exact Hamiltonian flow for the standard normal, a rotation in phase space."""
    t = step_size * n_steps
    return theta * np.cos(t) + momentum * np.sin(t), -theta * np.sin(t) + momentum * np.cos(t)


class TestConfig:
    """HmcConfig defaults and validation."""

    def test_burn_in_default(self):
        assert HmcConfig(draws=10_000).resolved_burn_in() == 1000
        assert HmcConfig(draws=100).resolved_burn_in() == 500
        assert HmcConfig(draws=100, burn_in=7).resolved_burn_in() == 7

    def test_total_iterations(self):
        assert HmcConfig(draws=100, burn_in=10, thin=3).total_iterations == 310

    def test_trajectory_time(self):
        assert HmcConfig().trajectory_time is None
        assert HmcConfig(step_size=0.1, leapfrog_steps=20).trajectory_time == pytest.approx(2.0)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            HmcConfig(step_size=0.0)
        with pytest.raises(ValueError):
            HmcConfig(leapfrog_steps=0)
        with pytest.raises(ValueError):
            HmcConfig(unknown_option=1)


class TestTarget:
    """Target density and gradients."""

    def test_finite_difference_matches_analytic(self, rng):
        target = gaussian_target(analytic_gradient=False)
        for _ in range(5):
            theta = rng.normal(size=2)
            assert np.allclose(target.gradient(theta), -PRECISION @ (theta - MEAN), atol=1e-6)

    def test_batched_log_density(self, rng):
        calls = []

        def batch(points):
            calls.append(points.shape)
            return -0.5 * np.einsum("ni,ni->n", points, points)

        target = TargetDensity(dimension=3, log_w=lambda t: -0.5 * t @ t, log_w_batch=batch)
        theta = rng.normal(size=3)
        assert np.allclose(finite_difference_gradient(target, theta), -theta, atol=1e-6)
        assert calls == [(6, 3)]

    def test_nan_is_zero_density(self):
        target = TargetDensity(dimension=1, log_w=lambda t: np.nan)
        assert target.log_density(np.zeros(1)) == -np.inf


class TestLeapfrog:
    """Leapfrog integration."""

    def test_reversible(self, rng):
        target = gaussian_target()
        theta, momentum = rng.normal(size=2), rng.normal(size=2)
        forward_theta, forward_momentum = leapfrog(theta, momentum, 0.1, 25, target.gradient)
        back_theta, back_momentum = leapfrog(forward_theta, -forward_momentum, 0.1, 25, target.gradient)
        assert np.max(np.abs(back_theta - theta)) <= 1e-12
        assert np.max(np.abs(back_momentum + momentum)) <= 1e-12

    def test_energy_error_second_order(self, rng):
        target = standard_normal_target()
        theta, momentum = rng.normal(size=3), rng.normal(size=3)
        h0 = 0.5 * theta @ theta + 0.5 * momentum @ momentum

        def energy_error(step_size):
            t, p = leapfrog(theta, momentum, step_size, int(round(1.0 / step_size)), target.gradient)
            return abs(0.5 * t @ t + 0.5 * p @ p - h0)

        assert energy_error(0.05) < energy_error(0.2)

    def test_rejects_bad_arguments(self):
        grad = standard_normal_target().gradient
        with pytest.raises(ValueError, match="positive"):
            leapfrog(np.zeros(3), np.zeros(3), 0.0, 5, grad)
        with pytest.raises(ValueError, match="at least one"):
            leapfrog(np.zeros(3), np.zeros(3), 0.1, 0, grad)

    def test_non_finite_gradient(self):
        with pytest.raises(TrajectoryDiverged):
            leapfrog(np.zeros(1), np.ones(1), 0.1, 3, lambda t: np.array([np.nan]))


class TestAdaptation:
    """Robbins–Monro step-size updates."""

    def test_direction(self):
        assert adapt_step_size(0.1, 0.9, 0.65, 0) > 0.1
        assert adapt_step_size(0.1, 0.2, 0.65, 0) < 0.1
        assert adapt_step_size(0.1, 0.65, 0.65, 0) == pytest.approx(0.1)

    def test_gain_decays(self):
        early = adapt_step_size(0.1, 0.9, 0.65, 0)
        late = adapt_step_size(0.1, 0.9, 0.65, 99)
        assert early > late > 0.1


class TestSampling:
    """Chains on analytic targets."""

    def test_gaussian_moments(self):
        cfg = HmcConfig(draws=6000, burn_in=500, leapfrog_steps=10, seed=11)
        chain = sample(gaussian_target(), cfg, np.zeros(2))
        assert chain.n_kept == 6000
        assert np.allclose(chain.draws.mean(axis=0), MEAN, atol=0.12)
        assert np.allclose(np.cov(chain.draws.T), COVARIANCE, rtol=0.15, atol=0.1)
        assert 0.3 < chain.acceptance_rate <= 1.0

    def test_exact_flow_always_accepts(self):
        cfg = HmcConfig(draws=300, burn_in=50, step_size=0.3, leapfrog_steps=5, adapt=False, seed=2)
        chain = sample(standard_normal_target(), cfg, np.zeros(3), integrator=exact_flow)
        assert chain.acceptance_rate == 1.0

    def test_deterministic(self):
        cfg = HmcConfig(draws=200, burn_in=100, leapfrog_steps=5, seed=5)
        first = sample(gaussian_target(), cfg, np.zeros(2))
        second = sample(gaussian_target(), cfg, np.zeros(2))
        assert np.array_equal(first.draws, second.draws)
        other = sample(gaussian_target(), cfg.model_copy(update={"seed": 6}), np.zeros(2))
        assert not np.array_equal(first.draws, other.draws)

    def test_thinning(self):
        cfg = HmcConfig(draws=50, burn_in=20, thin=4, leapfrog_steps=3, seed=1)
        chain = sample(standard_normal_target(), cfg, np.zeros(3))
        assert chain.draws.shape == (50, 3)
        assert chain.thin == 4

    def test_to_frame(self):
        cfg = HmcConfig(draws=20, burn_in=10, leapfrog_steps=3, seed=1)
        frame = sample(standard_normal_target(2), cfg, np.zeros(2)).to_frame()
        assert list(frame.columns) == ["theta_0", "theta_1", "log_w"]
        assert len(frame) == 20

    def test_zero_density_start(self):
        target = TargetDensity(dimension=1, log_w=lambda t: -np.inf)
        with pytest.raises(ValueError, match="zero target density"):
            sample(target, HmcConfig(draws=10), np.zeros(1))

    def test_wrong_start_shape(self):
        with pytest.raises(ValueError, match="shape"):
            sample(standard_normal_target(3), HmcConfig(draws=10), np.zeros(2))

    def test_step_size_collapse(self):
        """Every trajectory leaves the support, so no step size is accepted."""
        target = TargetDensity(dimension=1, log_w=lambda t: 0.0 if abs(t[0]) < 1e-9 else -np.inf)
        with pytest.raises(NumericalError):
            sample(target, HmcConfig(draws=10, burn_in=10), np.zeros(1))


class TestRunChains:
    """Several seeded chains merged into one."""

    def test_draw_split_and_merge(self):
        cfg = HmcConfig(draws=301, burn_in=50, leapfrog_steps=5, seed=3)
        merged = run_chains(gaussian_target(), cfg, [np.zeros(2), np.ones(2), -np.ones(2)])
        assert merged.n_kept == 301
        assert len(merged.diagnostics["chain_acceptance"]) == 3
        assert merged.ess <= merged.n_kept * 10

    def test_independent_of_workers(self):
        cfg = HmcConfig(draws=120, burn_in=50, leapfrog_steps=5, seed=3)
        starts = [np.zeros(2), np.ones(2)]
        serial = run_chains(gaussian_target(), cfg, starts, max_workers=1)
        parallel = run_chains(gaussian_target(), cfg, starts, max_workers=2)
        assert np.array_equal(serial.draws, parallel.draws)

    def test_chain_seeds(self):
        cfg = HmcConfig(draws=60, burn_in=50, leapfrog_steps=5, seed=3)
        merged = run_chains(gaussian_target(), cfg, [np.zeros(2), np.zeros(2)])
        second = sample(gaussian_target(), cfg.model_copy(update={"seed": 4, "draws": 30}), np.zeros(2))
        assert np.array_equal(merged.draws[30:], second.draws)

    def test_no_starts(self):
        with pytest.raises(ValueError, match="start point"):
            run_chains(gaussian_target(), HmcConfig(draws=10), [])

    def test_fewer_draws_than_starts(self):
        cfg = HmcConfig(draws=2, burn_in=50, leapfrog_steps=5, seed=3)
        merged = run_chains(gaussian_target(), cfg, [np.zeros(2), np.ones(2), -np.ones(2)])
        assert merged.n_kept == 2
        assert len(merged.diagnostics["chain_acceptance"]) == 2

    def test_merge_empty(self):
        with pytest.raises(ValueError):
            merge_chains([])


class TestDiagnostics:
    """Autocorrelation times and ESS."""

    def test_autocovariance_lag_zero(self, rng):
        x = rng.normal(size=500)
        assert autocovariance(x)[0] == pytest.approx(np.var(x))

    def test_iid_ess(self, rng):
        ess = effective_sample_size(rng.normal(size=(20_000, 2)))
        assert np.all(np.abs(ess / 20_000 - 1.0) < 0.15)

    def test_ar1_autocorrelation_time(self, rng):
        phi = 0.9
        noise = rng.normal(size=100_000)
        x = np.empty_like(noise)
        x[0] = noise[0]
        for t in range(1, x.size):
            x[t] = phi * x[t - 1] + noise[t]
        tau = integrated_autocorrelation_time(x)
        assert abs(tau / ((1 + phi) / (1 - phi)) - 1.0) < 0.2

    def test_constant_series(self):
        assert integrated_autocorrelation_time(np.ones(100)) == 1.0

    def test_short_series(self):
        assert integrated_autocorrelation_time(np.arange(3.0)) == 1.0

    def test_summary(self, rng):
        summary = chain_summary(rng.normal(size=(1000, 3)))
        assert summary["ess"].shape == (3,)
        assert summary["min_ess"] == pytest.approx(summary["ess"].min())

    def test_empty_summary(self):
        assert chain_summary(np.empty((0, 2)))["min_ess"] == 0.0


@pytest.mark.slow
class TestHardTargets:
    """Adaptation on curved targets and the primitive channel prior."""

    def test_banana_acceptance(self):
        bend = 0.5

        def log_w(theta):
            x, y = theta
            return -0.5 * x**2 - 0.5 * (y - bend * x**2) ** 2

        def grad(theta):
            x, y = theta
            residual = y - bend * x**2
            return np.array([-x + 2 * bend * x * residual, -residual])

        cfg = HmcConfig(draws=20_000, burn_in=1000, leapfrog_steps=10, seed=8)
        chain = sample(TargetDensity(dimension=2, log_w=log_w, grad_log_w=grad), cfg, np.zeros(2))
        assert 0.5 <= chain.acceptance_rate <= 0.85
        assert np.all(np.isfinite(chain.draws))
        assert chain.draws[:, 0].mean() == pytest.approx(0.0, abs=0.1)
        assert chain.draws[:, 1].mean() == pytest.approx(bend, abs=0.1)

    def test_pauli_prior_is_uniform_on_weights(self, tetrahedron):
        from channels.families import get_family, pauli_probabilities
        from services.sampling_service import ChannelSampler, build_target
        from tomography.likelihood import PriorSpec

        family = get_family("pauli")
        target = build_target(family, tetrahedron, PriorSpec())
        start = ChannelSampler().start_points(target, family, np.random.default_rng(0), 1)[0]
        chain = sample(target, HmcConfig(draws=8000, burn_in=500, leapfrog_steps=8, seed=2), start)
        weights = pauli_probabilities(chain.draws)

        # uniform on the weight simplex is Dirichlet(1, 1, 1, 1): each weight is Beta(1, 3)
        assert np.allclose(weights.mean(axis=0), 0.25, atol=0.03)
        assert np.median(weights[:, 0]) == pytest.approx(1 - 0.5 ** (1 / 3), abs=0.03)
        assert weights.var(axis=0).mean() == pytest.approx(3 / 80, abs=0.008)

    def test_general_prior_probabilities_centered(self, tetrahedron):
        from channels.families import get_family
        from services.sampling_service import ChannelSampler, build_target
        from tomography.likelihood import PriorSpec

        family = get_family("general")
        target = build_target(family, tetrahedron, PriorSpec())
        start = ChannelSampler().start_points(target, family, np.random.default_rng(0), 1)[0]
        chain = sample(target, HmcConfig(draws=6000, burn_in=500, leapfrog_steps=10, seed=4), start)
        probabilities = family.probabilities(chain.draws, tetrahedron)
        assert np.allclose(probabilities.mean(axis=0), 0.25, atol=0.03)
