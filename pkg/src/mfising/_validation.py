"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


# Absolute slack when matching a float against a spectrum atom (a few ulps of 1.0).
SPECTRUM_ATOL = 4 * np.finfo(float).eps


def check_theta(theta):
    """Return ``theta`` as a finite float array of shape (3,) in (K, J, h) order."""
    arr = np.asarray(theta, dtype=float)
    if arr.shape != (3,):
        raise DomainError(f"theta must have exactly 3 components (K, J, h), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"theta must be finite, got {arr.tolist()}")
    return arr


def check_size(N, name="N"):
    if isinstance(N, (bool, np.bool_)) or not isinstance(N, numbers.Integral):
        raise DomainError(f"{name} must be a positive integer, got {N!r}")
    if N < 1:
        raise DomainError(f"{name} must be a positive integer, got {N}")
    return int(N)


def check_magnetization(m):
    arr = np.asarray(m, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise DomainError("magnetization must lie in [-1, 1]")
    return arr


def spectrum_index(values, N):
    """Map magnetization values to spectrum indices k with m = -1 + 2k/N.

    Raises DomainError naming the first offending position and its nearest
    atoms when a value is not on the spectrum.
    """
    N = check_size(N)
    vals = np.atleast_1d(np.asarray(values, dtype=float))
    if vals.ndim != 1:
        vals = vals.ravel()
    if vals.size and not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        err = DomainError(f"value at row {bad} is not finite")
        err.row = bad
        raise err
    pos = N * (1.0 + vals) / 2.0
    k = np.rint(pos).astype(np.int64)
    atoms = (2.0 * k - N) / N
    off = (k < 0) | (k > N) | (np.abs(vals - atoms) > SPECTRUM_ATOL)
    if np.any(off):
        i = int(np.flatnonzero(off)[0])
        lo = int(np.clip(np.floor(pos[i]), 0, N))
        hi = int(np.clip(np.ceil(pos[i]), 0, N))
        err = DomainError(
            f"value {float(vals[i])!r} at row {i} is not on the spectrum for N={N}; "
            f"nearest atoms are {(2 * lo - N) / N!r} and {(2 * hi - N) / N!r}"
        )
        err.row = i
        raise err
    return k
