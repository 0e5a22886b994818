"""Log-posterior, gradient and Fisher metric of theta given a dataset.

The model is an exponential family in theta with sufficient statistic
``N * (m^3/3, m^2/2, m)`` per observation, so the log-likelihood of M
observations is

    N * theta . (S3/3, S2/2, S1) - M log Z(theta) + sum_i log A_N(m_i),

its gradient is ``N * (T - M E[v])`` and its negative Hessian is
``M N^2 Cov(v)`` with ``v = (m^3/3, m^2/2, m)``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, check_theta
from .core import ModelSummary, model_summary

__all__ = [
    "PriorSpec",
    "PosteriorEval",
    "log_likelihood",
    "log_posterior",
    "grad_log_posterior",
    "metric_G",
    "evaluate",
    "IsingPosterior",
]


@dataclass(frozen=True)
class PriorSpec:
    """Independent zero-mean normal priors with standard deviations ``sd`` (K, J, h).

    ``N(0, 2)`` is read as variance 2.  An infinite ``sd`` switches that
    component's prior off.
    """

    sd: tuple = (np.sqrt(2.0),) * 3

    def __post_init__(self):
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), (3,))
        if np.any(~(sd > 0)):
            raise DomainError(f"prior sd must be positive, got {sd.tolist()}")
        object.__setattr__(self, "sd", tuple(sd.tolist()))

    @classmethod
    def flat(cls):
        return cls((np.inf,) * 3)

    @property
    def precision(self):
        return 1.0 / np.square(np.asarray(self.sd))

    def logpdf(self, theta):
        return float(-0.5 * np.sum(self.precision * np.square(theta)))

    def grad(self, theta):
        return -self.precision * np.asarray(theta)


@dataclass(frozen=True)
class PosteriorEval:
    logpost: float
    loglik: float
    grad: np.ndarray
    metric: np.ndarray
    summary: ModelSummary


def _stat_vector(data):
    S1, S2, S3 = data.suffstats
    return np.array([S3 / 3.0, S2 / 2.0, S1])


def _loglik(theta, data, summary):
    return float(data.N * theta @ _stat_vector(data) - data.M * summary.logZ + data.log_count_sum)


def _grad_loglik(data, summary):
    mean_v = np.array([summary.mu[2] / 3.0, summary.mu[1] / 2.0, summary.mu[0]])
    return data.N * (_stat_vector(data) - data.M * mean_v)


def log_likelihood(theta, data):
    theta = check_theta(theta)
    return _loglik(theta, data, model_summary(theta, data.N))


def log_posterior(theta, data, prior=PriorSpec()):
    theta = check_theta(theta)
    return log_likelihood(theta, data) + prior.logpdf(theta)


def grad_log_posterior(theta, data, prior=PriorSpec()):
    """Gradient in (K, J, h) order; pass ``PriorSpec.flat()`` for the likelihood part only."""
    theta = check_theta(theta)
    summary = model_summary(theta, data.N)
    return _grad_loglik(data, summary) + prior.grad(theta)


def _metric_from_summary(summary, M, chi):
    if not 0.0 <= chi <= 1.0:
        raise DomainError(f"chi must lie in [0, 1], got {chi}")
    G = M * summary.N**2 * summary.cov
    if chi:
        off = ~np.eye(3, dtype=bool)
        G = G.copy()
        G[off] *= 1.0 - chi
    return G


def metric_G(theta, data, chi=0.0):
    """``M N^2 Cov(m^3/3, m^2/2, m)`` with off-diagonals scaled by ``1 - chi``.

    At ``chi = 0`` this is the exact negative Hessian of the log-likelihood.
    Degenerate matrices are returned unchanged.
    """
    theta = check_theta(theta)
    return _metric_from_summary(model_summary(theta, data.N), data.M, chi)


def evaluate(theta, data, prior=PriorSpec(), chi=0.0):
    theta = check_theta(theta)
    summary = model_summary(theta, data.N)
    loglik = _loglik(theta, data, summary)
    return PosteriorEval(
        logpost=loglik + prior.logpdf(theta),
        loglik=loglik,
        grad=_grad_loglik(data, summary) + prior.grad(theta),
        metric=_metric_from_summary(summary, data.M, chi),
        summary=summary,
    )


class IsingPosterior:
    """Sampling target bound to one dataset and prior.

    ``gradient`` chooses whether the leapfrog force includes the prior
    (``"posterior"``, default) or not (``"likelihood"``).  The most recent
    model summary is cached, since a leapfrog step asks for the gradient and
    then the log density at the same point.
    """

    def __init__(self, data, prior=PriorSpec(), gradient="posterior"):
        if gradient not in ("posterior", "likelihood"):
            raise DomainError(f"gradient must be 'posterior' or 'likelihood', got {gradient!r}")
        self.data = data
        self.prior = prior
        self.gradient = gradient
        self._key = None
        self._summary = None

    def _summarize(self, theta):
        key = tuple(theta)
        if key != self._key:
            self._summary = model_summary(theta, self.data.N)
            self._key = key
        return self._summary

    def logp(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            return -np.inf
        s = self._summarize(theta)
        return _loglik(theta, self.data, s) + self.prior.logpdf(theta)

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        g = _grad_loglik(self.data, self._summarize(theta))
        if self.gradient == "posterior":
            g = g + self.prior.grad(theta)
        return g

    def metric(self, theta, chi=0.0):
        theta = np.asarray(theta, dtype=float)
        return _metric_from_summary(self._summarize(theta), self.data.M, chi)
