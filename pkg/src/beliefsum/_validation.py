"""Input validation helpers shared by the estimators and the functional core."""

import math
from numbers import Integral, Real

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidParameterError


def check_counts(X, name="counts", allow_empty=False):
    """Return ``X`` as a 1-D int64 array of nonnegative counts.

    Accepts lists, 1-D arrays and single-column 2-D arrays (the sklearn
    ``(n_samples, 1)`` layout).  Float input is accepted only when every value
    is integral.
    """
    arr = check_array(
        X,
        ensure_2d=False,
        dtype=None,
        ensure_all_finite=True,
        ensure_min_samples=0 if allow_empty else 1,
        input_name=name,
    )
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise InvalidParameterError(
                f"{name} must be 1-D or a single column, got shape {arr.shape}"
            )
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.dtype.kind == "b":
        raise InvalidParameterError(f"{name} must be integers, got booleans")
    if arr.dtype.kind == "f":
        if np.any(arr != np.floor(arr)):
            raise InvalidParameterError(f"{name} must be integer valued")
    elif arr.dtype.kind not in "iu":
        raise InvalidParameterError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise InvalidParameterError(f"{name} must be nonnegative")
    return arr


def check_count(y, name="count"):
    if isinstance(y, (bool, np.bool_)) or not isinstance(y, (Integral, np.integer)):
        if isinstance(y, (Real, np.floating)) and float(y).is_integer():
            y = int(y)
        else:
            raise InvalidParameterError(f"{name} must be an integer, got {y!r}")
    y = int(y)
    if y < 0:
        raise InvalidParameterError(f"{name} must be nonnegative, got {y}")
    return y


def check_rate(rate, name="rate"):
    try:
        rate = float(rate)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} must be a real number, got {rate!r}")
    if not math.isfinite(rate) or rate <= 0:
        raise InvalidParameterError(f"{name} must be finite and positive, got {rate}")
    return rate


def check_probability(p, name):
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_open_unit(p, name):
    p = float(p)
    if not (0.0 < p < 1.0):
        raise InvalidParameterError(f"{name} must lie in (0, 1), got {p}")
    return p


def check_positive_int(n, name, minimum=1):
    if isinstance(n, bool) or not isinstance(n, (Integral, np.integer)):
        raise InvalidParameterError(f"{name} must be an integer, got {n!r}")
    if n < minimum:
        raise InvalidParameterError(f"{name} must be >= {minimum}, got {n}")
    return int(n)
