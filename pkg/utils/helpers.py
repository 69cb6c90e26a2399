"""Helper functions for serialization and seeding."""

from datetime import datetime
from pathlib import Path
from typing import Any, List, Sequence, Union

import numpy as np


def complex_to_json(matrix: np.ndarray) -> Any:
    """
    Encode a complex array as nested lists of [re, im] pairs.

    Args:
        matrix: Complex (or real) array of any shape

    Returns:
        Nested lists with each scalar replaced by [re, im]
    """
    arr = np.asarray(matrix, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(data: Any) -> np.ndarray:
    """
    Decode nested [re, im] pairs into a complex array.

    Real scalars are accepted in place of pairs.

    Args:
        data: Nested lists as produced by complex_to_json

    Returns:
        Complex numpy array

    Raises:
        ValueError: If the nesting is ragged or pairs are malformed
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim >= 3 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == 2:
        # a plain real matrix
        return arr.astype(complex)
    raise ValueError(f"Cannot decode complex matrix from array of shape {arr.shape}")


def sanitize_for_json(obj: Any) -> Any:
    """
    Sanitize object for JSON serialization.

    Args:
        obj: Object to sanitize

    Returns:
        JSON-serializable object
    """
    if isinstance(obj, datetime):
        return obj.isoformat()
    elif isinstance(obj, Path):
        return str(obj)
    elif isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return complex_to_json(obj)
        return sanitize_for_json(obj.tolist())
    elif isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        if np.isnan(value):
            return None
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, dict):
        return {str(k): sanitize_for_json(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [sanitize_for_json(v) for v in obj]
    else:
        return obj


def spawn_seeds(seed: int, count: int, *key: int) -> List[int]:
    """
    Derive independent integer seeds from a run seed.

    Args:
        seed: Run seed
        count: Number of seeds to derive
        *key: Extra integers identifying the task (cell indices etc.)

    Returns:
        List of 63-bit seeds, stable for a given (seed, key)
    """
    root = np.random.SeedSequence([int(seed), *[int(k) for k in key]])
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for s in root.spawn(count)]


def split_total(total: int, parts: int) -> List[int]:
    """
    Split a total count as evenly as possible, remainder to the first parts.

    Args:
        total: Non-negative total
        parts: Number of parts

    Returns:
        List of part sizes summing to total
    """
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    base, extra = divmod(int(total), int(parts))
    return [base + (1 if i < extra else 0) for i in range(parts)]


def as_int_list(values: Union[int, Sequence[int]], length: int) -> List[int]:
    """Broadcast an int or sequence of ints to a list of the given length."""
    if isinstance(values, (int, np.integer)):
        return [int(values)] * length
    values = [int(v) for v in values]
    if len(values) != length:
        raise ValueError(f"Expected {length} values, got {len(values)}")
    return values
