from datetime import datetime, timezone
from typing import Optional, Sequence
import logging
import hashlib

import numpy as np
from scipy.stats import rankdata

from cpcm_errors import PreconditionError


def get_utc_now() -> datetime:
    """Get current UTC datetime"""
    return datetime.now(timezone.utc)


def format_iso_datetime(dt: datetime) -> str:
    """
    Format datetime to ISO format used in run metadata: YYYY-MM-DDTHH:MM:SS.sssZ
    """
    return dt.strftime('%Y-%m-%dT%H:%M:%S.%f')[:-3] + 'Z'


def clean_string(value) -> Optional[str]:
    """Clean and normalize string values"""
    if value is None:
        return None
    return str(value).strip() if str(value).strip() else None


def safe_float(value) -> Optional[float]:
    """Safely convert value to float"""
    if value is None or value == '':
        return None
    try:
        return float(value)
    except (ValueError, TypeError):
        return None


def derive_seed(seed: int, *labels, max_seed: int = 2 ** 32 - 1) -> int:
    """Derive a stable sub-seed from a base seed and any number of labels

    SHA256 over the joined labels, first 4 bytes as an integer, so the same
    (seed, labels) pair maps to the same stream across runs and workers.
    """
    key = ':'.join([str(int(seed))] + [str(label) for label in labels])
    hash_bytes = hashlib.sha256(key.encode('utf-8')).digest()[:4]
    return int.from_bytes(hash_bytes, byteorder='big') % (max_seed + 1)


def make_rng(seed: int, *labels) -> np.random.Generator:
    """numpy Generator seeded from a derived seed"""
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.default_rng(seed)


def as_column_matrix(x, name: str = 'x') -> np.ndarray:
    """Coerce a vector or matrix to a 2-D float array with observations in rows"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise PreconditionError(f"{name} must be a vector or a matrix, got shape {arr.shape}")
    return arr


def as_vector(y, name: str = 'y') -> np.ndarray:
    """Coerce input to a 1-D float array"""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise PreconditionError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def empirical_pit(values: Sequence[float]) -> np.ndarray:
    """Empirical-CDF probability transform using midranks: rank / (n + 1)"""
    arr = as_vector(values, 'values')
    return rankdata(arr, method='average') / (arr.size + 1.0)


def require_finite(arr: np.ndarray, name: str):
    """Raise if any entry is NaN or infinite"""
    if not np.all(np.isfinite(arr)):
        bad = int(np.sum(~np.isfinite(arr)))
        logging.error(f"{name} contains {bad} non-finite values")
        raise PreconditionError(f"{name} contains {bad} non-finite values")
