"""Pytest configuration and fixtures."""

from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(autouse=True)
def mock_env_vars(tmp_path):
    """Quiet logging, a temporary output directory and fresh cached settings for every test."""
    env_vars = {
        "LOG_LEVEL": "ERROR",  # Reduce log noise in tests
        "OUTPUT_DIR": str(tmp_path / "results"),
        "MAX_WORKERS": "1",
    }
    import services.config_manager as config_module
    import services.sampling_service as sampling_module

    with pytest.MonkeyPatch.context() as mp:
        for key, value in env_vars.items():
            mp.setenv(key, value)
        mp.delenv("LOG_FILE", raising=False)
        config_module.get_settings.cache_clear()
        mp.setattr(config_module, "config_manager", None)
        mp.setattr(sampling_module, "channel_sampler", None)
        yield
    config_module.get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tetrahedron():
    from tomography.schemes import scheme_tetrahedron

    return scheme_tetrahedron()


@pytest.fixture
def qutrit_sic():
    from tomography.schemes import scheme_qutrit_sic

    return scheme_qutrit_sic()


@pytest.fixture
def table1_counts():
    """Qubit tetrahedron counts, 24 copies per input, amplitude damping γ = 0.4."""
    from tomography.likelihood import read_counts_csv

    return read_counts_csv(DATA_DIR / "table1.csv")


@pytest.fixture
def table2_counts():
    """Qutrit SIC counts, 27 copies per input."""
    from tomography.likelihood import read_counts_csv

    return read_counts_csv(DATA_DIR / "table2.csv")


@pytest.fixture
def table3_counts():
    """Qubit tetrahedron counts, 24 copies per input, used for the fidelity pipeline."""
    from tomography.likelihood import read_counts_csv

    return read_counts_csv(DATA_DIR / "table3.csv")


@pytest.fixture
def amplitude_damping():
    from channels.catalog import parse_channel_spec

    return parse_channel_spec("amplitude-damping:gamma=0.4")


@pytest.fixture
def identity_channel():
    from channels.catalog import parse_channel_spec

    return parse_channel_spec("identity")


@pytest.fixture
def conjugate_prior(tetrahedron):
    """Conjugate prior with β = 48 around amplitude damping γ = 0.5."""
    from tomography.likelihood import parse_prior_spec

    return parse_prior_spec("conjugate:beta=48,ref=amplitude-damping:gamma=0.5", tetrahedron)
