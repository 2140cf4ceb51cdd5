"""
Input checks shared by the numerical modules. Each check raises
through utils.log_and_raise_error so failures reach the log file
before propagating.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from vigpc.utils import utils
from vigpc.utils.custom_exceptions import (
    DatasetError,
    NumericalConsistencyError,
)

# Relative tolerance below which negative variances are treated as
# round-off and clamped to zero.
VARIANCE_TOLERANCE = 1e-8


def check_finite(array: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(array)):
        utils.log_and_raise_error(
            f"'{name}' contains non-finite values (NaN or Inf).",
            ValueError,
        )


def check_matrix(
    array: np.ndarray, name: str, num_cols: Optional[int] = None
) -> np.ndarray:
    """
    Coerce to a 2-D float array and check finiteness
    and, if given, the number of columns.
    """
    array = np.asarray(array, dtype=float)

    if array.ndim == 1:
        array = array[:, np.newaxis]

    if array.ndim != 2:
        utils.log_and_raise_error(
            f"'{name}' must be a 2-D matrix, got {array.ndim} dimensions.",
            ValueError,
        )

    if num_cols is not None and array.shape[1] != num_cols:
        utils.log_and_raise_error(
            f"Dimension mismatch: '{name}' has {array.shape[1]} columns "
            f"but {num_cols} were expected.",
            ValueError,
        )

    check_finite(array, name)
    return array


def check_same_num_cols(x1: np.ndarray, x2: np.ndarray) -> None:
    if x1.shape[1] != x2.shape[1]:
        utils.log_and_raise_error(
            f"Dimension mismatch: inputs have {x1.shape[1]} and "
            f"{x2.shape[1]} columns.",
            ValueError,
        )


def check_labels(y: np.ndarray) -> np.ndarray:
    """
    Labels must be a vector with entries in {-1, +1}.
    """
    y = np.asarray(y, dtype=float).ravel()

    bad = ~np.isin(y, [-1.0, 1.0])
    if np.any(bad):
        utils.log_and_raise_error(
            f"Labels must be -1 or +1, found {np.unique(y[bad])[:5]}.",
            DatasetError,
        )
    return y


def check_length(vector: np.ndarray, length: int, name: str) -> None:
    if vector.shape[0] != length:
        utils.log_and_raise_error(
            f"Dimension mismatch: '{name}' has length {vector.shape[0]} "
            f"but {length} was expected.",
            ValueError,
        )


def clamp_variances(
    variances: np.ndarray, scale: float, name: str
) -> np.ndarray:
    """
    Clamp round-off negatives in computed variances to zero. Values
    more negative than VARIANCE_TOLERANCE * scale indicate an
    inconsistent computation and raise.
    """
    tolerance = VARIANCE_TOLERANCE * (scale if scale > 0 else 1.0)

    if variances.size and np.min(variances) < -tolerance:
        utils.log_and_raise_error(
            f"Computed '{name}' has a negative entry "
            f"({np.min(variances):.3e}) beyond the tolerance "
            f"{tolerance:.1e}.",
            NumericalConsistencyError,
        )

    return np.maximum(variances, 0.0)
