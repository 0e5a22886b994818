"""scikit-learn style wrapper around the sampler and diagnostics."""

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import DomainError, check_size
from .core import Theta, model_summary
from .diagnostics import summarize
from .posterior import PriorSpec
from .samplers import SamplerConfig, dispersed_starts, run_chains
from .simulate import Dataset, RngSpec, sample_dataset

__all__ = ["MeanFieldIsing"]


class MeanFieldIsing(DensityMixin, BaseEstimator):
    """Bayesian fit of (K, J, h) to observed magnetizations.

    ``X`` holds one magnetization per row (shape ``(M,)`` or ``(M, 1)``), each
    on the spectrum of ``n_spins`` spins.  After ``fit``, ``theta_`` is the
    posterior mean, ``ci_`` the equal-tailed intervals and ``report_`` the full
    :class:`~mfising.diagnostics.DiagnosticsReport`.

    ``init=None`` starts chain 0 at the grid argmax and the others at the next
    best grid points; an explicit ``(K, J, h)`` starts every chain there.
    """

    def __init__(
        self,
        n_spins=300,
        kernel="hybrid",
        n_iter=5000,
        burn_in=2500,
        n_chains=4,
        step_size=0.01,
        leapfrog_steps=10,
        prior_sd=np.sqrt(2.0),
        level=0.95,
        init=None,
        seed=0,
        stream=0,
        workers=None,
    ):
        self.n_spins = n_spins
        self.kernel = kernel
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.n_chains = n_chains
        self.step_size = step_size
        self.leapfrog_steps = leapfrog_steps
        self.prior_sd = prior_sd
        self.level = level
        self.init = init
        self.seed = seed
        self.stream = stream
        self.workers = workers

    def _validate_X(self, X):
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise DomainError(f"expected one magnetization per row, got {X.shape[1]} columns")
            X = X[:, 0]
        return X

    def _config(self):
        return SamplerConfig(
            n_iter=self.n_iter,
            burn_in=self.burn_in,
            step_size=self.step_size,
            leapfrog_steps=self.leapfrog_steps,
            kernel=self.kernel,
            rng=RngSpec(self.seed, self.stream),
        )

    def fit(self, X, y=None):
        X = self._validate_X(X)
        N = check_size(self.n_spins, "n_spins")
        cfg = self._config()
        prior = PriorSpec((self.prior_sd,) * 3 if np.ndim(self.prior_sd) == 0 else tuple(self.prior_sd))
        data = Dataset(N=N, values=X)
        n_chains = check_size(self.n_chains, "n_chains")
        if self.init is None:
            starts = dispersed_starts(data, prior, n_chains)
        else:
            starts = [Theta.coerce(self.init)] * n_chains
        self.dataset_ = data
        self.starts_ = starts
        self.chains_ = run_chains(data, prior, cfg, starts, self.workers)
        self.report_ = summarize(self.chains_, cfg.burn_in, self.level)
        self.theta_ = Theta.coerce(self.report_.post_mean)
        self.ci_ = self.report_.ci
        self.psrf_ = self.report_.psrf
        self.n_features_in_ = 1
        return self

    def pmf(self):
        """Model pmf over the spectrum at the posterior mean."""
        check_is_fitted(self, "theta_")
        return model_summary(self.theta_, self.n_spins).pmf

    def score_samples(self, X):
        """Log-probability of each magnetization under the posterior-mean model."""
        check_is_fitted(self, "theta_")
        data = Dataset(N=self.n_spins, values=self._validate_X(X))
        return np.log(self.pmf())[data.index]

    def score(self, X, y=None):
        return float(self.score_samples(X).mean())

    def sample(self, n_samples=1, random_state=0):
        """Draw magnetizations from the posterior-mean model."""
        check_is_fitted(self, "theta_")
        rng = RngSpec(int(random_state), 0)
        return sample_dataset(self.theta_, self.n_spins, n_samples, rng).values.copy()
