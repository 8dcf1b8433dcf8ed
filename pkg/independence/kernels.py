import logging

import numpy as np
from scipy.spatial.distance import pdist, squareform

from cpcm_errors import DegenerateInputError, PreconditionError
from data_utils import as_column_matrix


def check_not_constant(values: np.ndarray, name: str):
    arr = as_column_matrix(values, name)
    if np.all(np.ptp(arr, axis=0) == 0):
        raise DegenerateInputError(f"{name} is constant; independence tests need variation")


def median_bandwidth(x, max_points: int = 1000) -> float:
    """Median-heuristic Gaussian kernel width: sqrt(median(squared distances) / 2)

    Large samples are thinned to at most max_points evenly spaced rows.
    """
    arr = as_column_matrix(x, 'x')
    n = arr.shape[0]
    if n > max_points:
        arr = arr[np.linspace(0, n - 1, max_points).astype(int)]
    sq = pdist(arr, 'sqeuclidean')
    median = float(np.median(sq))
    if median <= 0:
        positive = sq[sq > 0]
        if positive.size == 0:
            raise DegenerateInputError("all points coincide; kernel bandwidth undefined")
        median = float(np.median(positive))
        logging.debug("More than half the pairwise distances are zero; median taken over positive distances")
    return float(np.sqrt(0.5 * median))


def gaussian_gram(x, bandwidth: float) -> np.ndarray:
    arr = as_column_matrix(x, 'x')
    if bandwidth <= 0:
        raise PreconditionError(f"kernel bandwidth must be positive, got {bandwidth}")
    sq = squareform(pdist(arr, 'sqeuclidean'))
    return np.exp(-sq / (2.0 * bandwidth ** 2))


def centre_gram(gram: np.ndarray) -> np.ndarray:
    """H K H with H the centring matrix"""
    row = gram.mean(axis=0, keepdims=True)
    col = gram.mean(axis=1, keepdims=True)
    return gram - row - col + gram.mean()
