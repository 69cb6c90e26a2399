"""Named channels, channel-spec strings and channel JSON files.

A channel spec is either a path to a JSON file ``{"d": int, "kraus": [complex matrices]}`` or
``name`` / ``name:key=value,key=value``, for example ``amplitude-damping:gamma=0.4``.
"""

import json
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Union

import numpy as np

from channels.duality import PAULI, choi_from_kraus, kraus_from_choi, validate_choi
from utils.errors import ConfigError
from utils.helpers import complex_from_json, complex_to_json
from utils.logging_config import get_logger

logger = get_logger(__name__)


# ============================================================================
# KRAUS SETS
# ============================================================================


def identity_kraus(d: int = 2) -> List[np.ndarray]:
    return [np.eye(d, dtype=complex)]


def amplitude_damping_kraus(gamma: float) -> List[np.ndarray]:
    """Qubit amplitude damping: E₀ = diag(1, √(1−γ)), E₁ = √γ |0⟩⟨1|."""
    _check_probability("gamma", gamma)
    e0 = np.diag([1.0, np.sqrt(1.0 - gamma)]).astype(complex)
    e1 = np.zeros((2, 2), dtype=complex)
    e1[0, 1] = np.sqrt(gamma)
    return [e0, e1]


def qutrit_amplitude_damping_kraus(gamma1: float, gamma2: float) -> List[np.ndarray]:
    """Qutrit amplitude damping with decay |1⟩→|0⟩ (γ₁) and |2⟩→|0⟩ (γ₂)."""
    _check_probability("gamma1", gamma1)
    _check_probability("gamma2", gamma2)
    e0 = np.diag([1.0, np.sqrt(1.0 - gamma1), np.sqrt(1.0 - gamma2)]).astype(complex)
    e1 = np.zeros((3, 3), dtype=complex)
    e1[0, 1] = np.sqrt(gamma1)
    e2 = np.zeros((3, 3), dtype=complex)
    e2[0, 2] = np.sqrt(gamma2)
    return [e0, e1, e2]


def pauli_kraus(px: float, py: float, pz: float) -> List[np.ndarray]:
    """Pauli channel ρ ↦ p_I ρ + Σ p_a σ_a ρ σ_a."""
    p_identity = 1.0 - px - py - pz
    for name, value in (("px", px), ("py", py), ("pz", pz), ("1-px-py-pz", p_identity)):
        _check_probability(name, value)
    weights = [p_identity, px, py, pz]
    ops = [np.eye(2, dtype=complex)] + list(PAULI)
    return [np.sqrt(w) * op for w, op in zip(weights, ops) if w > 0]


def dephasing_kraus(p: float) -> List[np.ndarray]:
    """Dephasing ρ ↦ (1−p)ρ + p σ_z ρ σ_z."""
    return pauli_kraus(0.0, 0.0, p)


def depolarizing_choi(p: float, d: int = 2) -> np.ndarray:
    """(1−p)·identity + p·(completely depolarizing), as a Choi matrix."""
    _check_probability("p", p)
    identity = choi_from_kraus(identity_kraus(d))
    return (1.0 - p) * identity + p * np.eye(d * d, dtype=complex) / d


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0 + 1e-12):
        raise ConfigError(f"Channel parameter {name}={value} must lie in [0, 1]")


CHANNEL_BUILDERS: Dict[str, Callable[..., np.ndarray]] = {
    "identity": lambda d=2: choi_from_kraus(identity_kraus(int(d))),
    "amplitude-damping": lambda gamma: choi_from_kraus(amplitude_damping_kraus(gamma)),
    "qutrit-amplitude-damping": lambda gamma1, gamma2: choi_from_kraus(
        qutrit_amplitude_damping_kraus(gamma1, gamma2)
    ),
    "dephasing": lambda p: choi_from_kraus(dephasing_kraus(p)),
    "pauli": lambda px=0.0, py=0.0, pz=0.0: choi_from_kraus(pauli_kraus(px, py, pz)),
    "depolarizing": lambda p, d=2: depolarizing_choi(p, int(d)),
}


# ============================================================================
# SPEC STRINGS AND FILES
# ============================================================================


def parse_parameters(text: str) -> Dict[str, float]:
    """
    Parse ``key=value,key=value`` into floats.

    Raises:
        ConfigError: On malformed pairs or non-numeric values
    """
    params: Dict[str, float] = {}
    if not text:
        return params
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"Expected key=value, got '{item}'")
        key, value = item.split("=", 1)
        try:
            params[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"Parameter {key.strip()} has non-numeric value '{value}'") from e
    return params


def parse_channel_spec(spec: str) -> np.ndarray:
    """
    Turn a channel spec into a validated TP Choi matrix.

    Args:
        spec: JSON file path or ``name[:key=value,...]``

    Returns:
        d²×d² Choi matrix

    Raises:
        ConfigError: Unknown channel, bad parameters or invalid file
    """
    spec = spec.strip()
    if spec.endswith(".json") or Path(spec).is_file():
        return load_channel_json(spec)

    name, _, rest = spec.partition(":")
    builder = CHANNEL_BUILDERS.get(name)
    if builder is None:
        raise ConfigError(f"Unknown channel '{name}'. Available: {', '.join(sorted(CHANNEL_BUILDERS))}")
    params = parse_parameters(rest)
    try:
        rho = builder(**params)
    except TypeError as e:
        raise ConfigError(f"Bad parameters for channel '{name}': {e}") from e
    logger.debug(f"Built channel '{name}' with {params}")
    return validate_choi(rho)


def load_channel_json(path: Union[str, Path]) -> np.ndarray:
    """
    Load ``{"d": int, "kraus": [...]}`` (or ``{"d": int, "choi": ...}``) as a TP Choi matrix.

    Raises:
        ConfigError: If the file is missing, malformed or not CPTP
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Channel file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if "kraus" in data:
            rho = choi_from_kraus([complex_from_json(k) for k in data["kraus"]])
        elif "choi" in data:
            rho = complex_from_json(data["choi"])
        else:
            raise ConfigError(f"Channel file {path} needs a 'kraus' or 'choi' entry")
        if "d" in data and rho.shape != (int(data["d"]) ** 2,) * 2:
            raise ConfigError(f"Channel file {path}: matrices do not match d={data['d']}")
        return validate_choi(rho)
    except (json.JSONDecodeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid channel file {path}: {e}") from e


def save_channel_json(rho: np.ndarray, path: Union[str, Path]) -> None:
    """Write a channel as a Kraus-set JSON file."""
    kraus: Sequence[np.ndarray] = kraus_from_choi(rho)
    d = kraus[0].shape[0]
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"d": d, "kraus": [complex_to_json(k) for k in kraus]}, f, indent=2)
