"""Exact quantities of the mean-field Ising model with a three-body coupling.

The energy per spin of a configuration with magnetization ``m`` is

    U(m) = K/3 m^3 + J/2 m^2 + h m,

and the Gibbs weight of ``m`` is ``C(N, N(1+m)/2) * exp(N U(m))``.  Every
quantity here is computed on the ``N + 1`` atoms of the magnetization
spectrum, in log space.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp, xlogy

from ._validation import (
    ConvergenceError,
    DomainError,
    check_magnetization,
    check_size,
    check_theta,
    spectrum_index,
)

__all__ = [
    "Theta",
    "ModelSummary",
    "spectrum",
    "log_count_table",
    "entropy_I",
    "log_count",
    "hamiltonian_density",
    "model_summary",
    "log_partition_batch",
    "free_energy_density",
    "pressure_limit",
    "solve_consistency",
    "lemma1_gap",
]


class Theta(NamedTuple):
    """Parameter triple in canonical (K, J, h) order."""

    K: float
    J: float
    h: float

    @classmethod
    def coerce(cls, value):
        return cls(*check_theta(value).tolist())


@lru_cache(maxsize=64)
def _spectrum(N):
    atoms = (2.0 * np.arange(N + 1) - N) / N
    atoms.setflags(write=False)
    return atoms


def spectrum(N):
    """Atoms ``-1 + 2k/N`` for ``k = 0..N`` (read-only array)."""
    return _spectrum(check_size(N))


@lru_cache(maxsize=64)
def _log_count_table(N):
    k = np.arange(N // 2 + 1)
    half = gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0)
    half[0] = 0.0
    table = np.empty(N + 1)
    table[: half.size] = half
    # mirror so the table is exactly symmetric
    table[N - k] = half
    table.setflags(write=False)
    return table


def log_count_table(N):
    """``log C(N, k)`` for ``k = 0..N``; exactly symmetric, ``logA[0] == 0``."""
    return _log_count_table(check_size(N))


@lru_cache(maxsize=64)
def _features(N):
    m = _spectrum(N)
    powers = np.vstack([m**j for j in range(1, 7)])
    # sufficient statistic in (K, J, h) order
    v = np.vstack([m**3 / 3.0, m**2 / 2.0, m])
    powers.setflags(write=False)
    v.setflags(write=False)
    return powers, v


def entropy_I(m):
    """Entropy term ``I(m) = a log a + b log b`` with ``a = (1-m)/2, b = (1+m)/2``.

    Uses ``0 log 0 = 0`` so the boundary atoms give 0.  Values lie in
    ``[-log 2, 0]``.
    """
    m = check_magnetization(m)
    a = (1.0 - m) / 2.0
    b = (1.0 + m) / 2.0
    out = xlogy(a, a) + xlogy(b, b)
    return float(out) if out.ndim == 0 else out


def log_count(N, m):
    """``log A_N(m)``: log of the number of configurations with magnetization m."""
    N = check_size(N)
    k = spectrum_index(m, N)
    out = _log_count_table(N)[k]
    return float(out[0]) if np.ndim(m) == 0 else out


def hamiltonian_density(theta, m):
    """Energy per spin ``U(m)``; the Hamiltonian is ``-N U(m)``."""
    K, J, h = check_theta(theta)
    m = check_magnetization(m)
    out = ((K / 3.0) * m + J / 2.0) * m * m + h * m
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModelSummary:
    """Per-(theta, N) distribution of the magnetization.

    ``mu[j-1]`` is the raw moment ``E[m^j]`` for ``j = 1..6``; ``cov`` is the
    covariance of ``(m^3/3, m^2/2, m)`` under ``pmf``.
    """

    theta: Theta
    N: int
    logZ: float
    pmf: np.ndarray
    mu: np.ndarray
    cov: np.ndarray

    @property
    def atoms(self):
        return _spectrum(self.N)


def model_summary(theta, N):
    """Log partition function, pmf over the spectrum and the first six moments."""
    arr = check_theta(theta)
    N = check_size(N)
    m = _spectrum(N)
    powers, v = _features(N)
    K, J, h = arr
    w = _log_count_table(N) + N * (((K / 3.0) * m + J / 2.0) * m * m + h * m)
    shift = w.max()
    pmf = np.exp(w - shift)
    total = pmf.sum()
    pmf /= total
    logZ = float(shift + np.log(total))
    # fold atom k onto its mirror N-k: odd moments see pmf_k - pmf_{N-k}, which
    # is exactly zero for symmetric pmfs; the m = 0 atom contributes nothing
    half = (N + 1) // 2
    folded_lo = pmf[:half]
    folded_hi = pmf[N : N - half : -1]
    odd = powers[0::2, :half] @ (folded_lo - folded_hi)
    even = powers[1::2, :half] @ (folded_lo + folded_hi)
    mu = np.empty(6)
    mu[0::2] = odd
    mu[1::2] = even
    mean_v = np.array([mu[2] / 3.0, mu[1] / 2.0, mu[0]])
    centred = v - mean_v[:, None]
    cov = (centred * pmf) @ centred.T
    cov = 0.5 * (cov + cov.T)
    return ModelSummary(Theta(*arr.tolist()), N, logZ, pmf, mu, cov)


def log_partition_batch(thetas, N):
    """``log Z`` for many parameter triples at once; ``thetas`` has shape (n, 3)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    N = check_size(N)
    _, v = _features(N)
    # v rows are (m^3/3, m^2/2, m), so theta @ v is U(m)
    w = _log_count_table(N)[None, :] + N * (thetas @ v)
    return logsumexp(w, axis=1)


def free_energy_density(theta, m):
    """``f(m) = U(m) - I(m)``; its maximum over [-1, 1] is the limiting pressure."""
    return hamiltonian_density(theta, m) - entropy_I(m)


def _consistency_residual(theta, m):
    K, J, h = theta
    return np.tanh((K * m + J) * m + h) - m


def pressure_limit(theta, tol=1e-10):
    """Maximum of the free-energy density over [-1, 1] and all its maximizers.

    A grid of step 1e-3 brackets every sign change of ``tanh(K m^2 + J m + h) - m``
    (which has the sign of ``f'``); each + to - crossing is polished with Brent's
    method.  Returns ``(p, argmax_set)`` where ``argmax_set`` holds every local
    maximizer whose value is within ``tol`` of ``p``.
    """
    arr = check_theta(theta)
    if not tol > 0:
        raise DomainError("tol must be positive")
    grid = np.linspace(-1.0, 1.0, 2001)
    r = _consistency_residual(arr, grid)
    candidates = []
    for i in range(grid.size - 1):
        a, b = r[i], r[i + 1]
        if a > 0 and b <= 0:
            if b == 0:
                candidates.append(grid[i + 1])
            else:
                candidates.append(
                    brentq(lambda x: _consistency_residual(arr, x), grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
                )
    if r[0] <= 0:
        # f decreasing from the left boundary (only possible when tanh saturates)
        candidates.append(-1.0)
    candidates = sorted(set(float(c) for c in candidates))
    values = np.array([free_energy_density(arr, c) for c in candidates])
    p = float(values.max())
    argmax = [c for c, val in zip(candidates, values) if val >= p - tol]
    return p, argmax


def solve_consistency(theta, m0=0.0, tol=1e-12, max_iter=100_000):
    """Fixed point of ``m = tanh(K m^2 + J m + h)`` reached from ``m0``.

    Plain iteration is damped by 0.5 once successive steps change sign.  When
    the contraction is slow (step ratio above 0.9, e.g. at a critical point)
    a Newton step is taken if it lowers the residual.
    """
    arr = check_theta(theta)
    if abs(m0) > 1:
        raise DomainError(f"m0 must lie in [-1, 1], got {m0}")
    K, J, h = arr
    m = float(m0)
    damping = 1.0
    prev_step = None
    res = _consistency_residual(arr, m)
    for _ in range(max_iter):
        if abs(res) < tol:
            return m
        step = damping * res
        if prev_step is not None and step * prev_step < 0:
            damping = 0.5
            step = damping * res
        new = m + step
        if prev_step is not None and abs(step) > 0.9 * abs(prev_step):
            t = np.tanh((K * m + J) * m + h)
            deriv = (1.0 - t * t) * (2.0 * K * m + J) - 1.0
            if deriv != 0.0:
                newton = m - res / deriv
                if abs(newton) <= 1.0 and abs(_consistency_residual(arr, newton)) < abs(
                    _consistency_residual(arr, new)
                ):
                    new = newton
        prev_step = new - m
        m = float(np.clip(new, -1.0, 1.0))
        res = _consistency_residual(arr, m)
    if abs(res) < tol:
        return m
    raise ConvergenceError(
        f"consistency iteration did not converge in {max_iter} steps (last m={m}, residual={res:.3e})",
        last=m,
        residual=float(res),
    )


def lemma1_gap(N, m):
    """``log A_N(m) + N I(m)``, the log ratio of the exact count to ``exp(-N I(m))``.

    Non-positive for every interior atom; only defined strictly inside (-1, 1).
    """
    N = check_size(N)
    m = float(m)
    if abs(m) >= 1.0:
        raise DomainError("lemma1_gap is only defined for interior atoms |m| < 1")
    return log_count(N, m) + N * entropy_I(m)
