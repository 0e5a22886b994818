"""MCMC kernels: adaptive random-walk Metropolis (AMH), Fisher-metric HMC
(RMAHMC) and the hybrid that alternates them, plus grid-search starts.

A sampling *target* is any object exposing ``logp(theta)``, ``grad(theta)``
and ``metric(theta, chi)``; :class:`~mfising.posterior.IsingPosterior` is the
model target and :class:`StandardGaussian` a tractable one for checks.
"""

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve

from ._validation import DomainError
from .core import Theta, log_partition_batch
from .posterior import IsingPosterior, PriorSpec
from .simulate import Dataset, RngSpec

__all__ = [
    "AMH",
    "RMAHMC",
    "HYBRID",
    "KERNELS",
    "SamplerConfig",
    "Chain",
    "NumericalError",
    "StandardGaussian",
    "AMHHistory",
    "grid_init",
    "grid_ranking",
    "amh_step",
    "rmahmc_step",
    "leapfrog",
    "frozen_mass",
    "run_chain",
    "run_chains",
    "dispersed_starts",
    "default_workers",
]

AMH = "AMH"
RMAHMC = "RMAHMC"
HYBRID = "HYBRID"
KERNELS = (AMH, RMAHMC, HYBRID)


class NumericalError(RuntimeError):
    """The momentum covariance could not be factorized even after jitter."""


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 5000
    burn_in: int = 2500
    leapfrog_steps: int = 10
    step_size: float = 0.01
    adapt_step_size: bool = False
    target_accept: float = 0.7
    chi_burnin: float = 1e-4
    chi_after: float = 0.0
    amh_scale: float = 1.0 / 3.0
    amh_warmup: int = 100
    amh_fallback_sd: float = 0.05
    jitter: float = 1e-10
    kernel: str = HYBRID
    rng: RngSpec = field(default_factory=RngSpec)

    def __post_init__(self):
        kernel = str(self.kernel).upper()
        if kernel not in KERNELS:
            raise DomainError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        object.__setattr__(self, "kernel", kernel)
        if self.n_iter < 1:
            raise DomainError("n_iter must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise DomainError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.leapfrog_steps < 1:
            raise DomainError("leapfrog_steps must be at least 1")
        if not self.step_size > 0:
            raise DomainError("step_size must be positive")
        if not self.amh_scale > 0:
            raise DomainError("amh_scale must be positive")
        if self.amh_warmup < 1:
            raise DomainError("amh_warmup must be positive")
        if not self.jitter > 0:
            raise DomainError("jitter must be positive")
        for chi in (self.chi_burnin, self.chi_after):
            if not 0.0 <= chi <= 1.0:
                raise DomainError(f"chi values must lie in [0, 1], got {chi}")

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "rng"}
        d["seed"] = int(self.rng.seed)
        d["stream"] = int(self.rng.stream)
        return d


@dataclass(eq=False)
class Chain:
    """Posterior draws with per-iteration kernel tags and acceptance flags."""

    draws: np.ndarray
    kernel_tag: np.ndarray
    accepted: np.ndarray
    logpost_trace: np.ndarray
    theta0: np.ndarray = None
    step_size: float = None

    def __len__(self):
        return len(self.draws)

    def acceptance_rates(self):
        return {
            tag: float(self.accepted[self.kernel_tag == tag].mean())
            for tag in (RMAHMC, AMH)
            if np.any(self.kernel_tag == tag)
        }

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "kernel", "accepted", "K", "J", "h", "logpost"])
        for i, (tag, acc, th, lp) in enumerate(
            zip(self.kernel_tag, self.accepted, self.draws, self.logpost_trace), start=1
        ):
            w.writerow([i, tag, int(acc), repr(float(th[0])), repr(float(th[1])), repr(float(th[2])), repr(float(lp))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise DomainError("empty chain CSV")
        return cls(
            draws=np.array([[float(r["K"]), float(r["J"]), float(r["h"])] for r in rows]),
            kernel_tag=np.array([r["kernel"] for r in rows]),
            accepted=np.array([r["accepted"] == "1" for r in rows]),
            logpost_trace=np.array([float(r["logpost"]) for r in rows]),
        )


class StandardGaussian:
    """Standard normal target in ``dim`` dimensions, with identity metric."""

    def __init__(self, dim=3):
        self.dim = dim

    def logp(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta @ theta) if np.all(np.isfinite(theta)) else -np.inf

    def grad(self, theta):
        return -np.asarray(theta, dtype=float)

    def metric(self, theta, chi=0.0):
        return np.eye(self.dim)


# -- grid search ---------------------------------------------------------------


def _axis(lo, hi, step):
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    if n < 1:
        raise DomainError(f"empty grid axis [{lo}, {hi}] with step {step}")
    return np.round(lo + step * np.arange(n), 12)


def grid_ranking(data, prior=PriorSpec(), lo=(-2.0, -2.0, -2.0), hi=(2.0, 2.0, 2.0), step=0.2, tie_rtol=1e-12):
    """Grid points sorted by decreasing log-posterior.

    Values within ``tie_rtol`` (relative) of each other count as ties and
    are ordered by smallest norm, then lexicographically in (K, J, h).
    Returns ``(points, logpost)``.
    """
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (3,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (3,))
    if not step > 0:
        raise DomainError("grid step must be positive")
    if np.any(lo > hi):
        raise DomainError("grid needs lo <= hi componentwise")
    axes = [_axis(a, b, step) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    S1, S2, S3 = data.suffstats
    stat = np.array([S3 / 3.0, S2 / 2.0, S1])
    logpost = np.empty(len(pts))
    for start in range(0, len(pts), 4096):
        chunk = pts[start : start + 4096]
        logpost[start : start + len(chunk)] = (
            data.N * chunk @ stat - data.M * log_partition_batch(chunk, data.N) + data.log_count_sum
        )
    logpost += -0.5 * (np.square(pts) @ prior.precision)
    # quantize so near-equal values tie exactly, then order by norm and K, J, h
    scale = max(1.0, np.max(np.abs(logpost)))
    quant = np.round(logpost / (scale * tie_rtol))
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], np.round(np.linalg.norm(pts, axis=1), 12), -quant))
    return pts[order], logpost[order]


def grid_init(data, prior=PriorSpec(), lo=(-2.0, -2.0, -2.0), hi=(2.0, 2.0, 2.0), step=0.2):
    """Grid point with the largest log-posterior (a starting value for the chains)."""
    pts, _ = grid_ranking(data, prior, lo, hi, step)
    return Theta(*pts[0].tolist())


# -- kernels -------------------------------------------------------------------


class AMHHistory:
    """Draw counter plus running covariance of the post-warm-up draws.

    The first ``warmup`` draws are counted but left out of the covariance.
    """

    def __init__(self, dim=3, warmup=0):
        self.warmup = warmup
        self.n_seen = 0
        self.n = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def add(self, x):
        self.n_seen += 1
        if self.n_seen <= self.warmup:
            return
        x = np.asarray(x, dtype=float)
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self._m2 += np.outer(delta, x - self.mean)

    def cov(self):
        if self.n < 2:
            return None
        c = self._m2 / (self.n - 1)
        return 0.5 * (c + c.T)


def _proposal_cov(history, cfg, dim):
    fallback = np.eye(dim) * cfg.amh_fallback_sd**2
    if history is None or history.n_seen < cfg.amh_warmup:
        return fallback, True
    C = history.cov()
    if C is None:
        return fallback, True
    evals = np.linalg.eigvalsh(C)
    if evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1]:
        return fallback, True
    return cfg.amh_scale * C + cfg.jitter * np.eye(dim), False


def amh_step(state, history, target, cfg, rng, logp_state=None):
    """One adaptive random-walk Metropolis update.

    Proposes from ``N(state, amh_scale * C + jitter I)`` with ``C`` the
    covariance of the post-warm-up draws in ``history``; falls back to a diagonal
    proposal with sd ``amh_fallback_sd`` during warm-up or when ``C`` is
    numerically singular.  Returns ``(theta, accepted, logp)``.
    """
    state = np.asarray(state, dtype=float)
    if logp_state is None:
        logp_state = target.logp(state)
    cov, _ = _proposal_cov(history, cfg, state.size)
    proposal = state + np.linalg.cholesky(cov) @ rng.standard_normal(state.size)
    logp_prop = target.logp(proposal)
    log_u = np.log(rng.random())
    if np.isfinite(logp_prop) and log_u < logp_prop - logp_state:
        return proposal, True, logp_prop
    return state, False, logp_state


def leapfrog(theta, p, target, step_size, n_steps, inv_mass):
    """``n_steps`` leapfrog steps under a fixed inverse mass matrix.

    Returns ``(theta, p)``; stops early with non-finite values if the
    trajectory diverges.
    """
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    half = 0.5 * step_size
    for _ in range(n_steps):
        p = p + half * target.grad(theta)
        theta = theta + step_size * (inv_mass @ p)
        if not np.all(np.isfinite(theta)):
            return theta, p
        p = p + half * target.grad(theta)
    return theta, p


def frozen_mass(target, state, chi, jitter):
    """``(chol, inv_mass)`` for the mass ``G(state) + jitter * trace(G) I``."""
    G = np.array(target.metric(state, chi), dtype=float)
    trace = np.trace(G)
    if not np.isfinite(trace) or trace <= 0:
        raise NumericalError(f"metric at {np.asarray(state).tolist()} has trace {trace}; increase jitter or chi")
    mass = G + jitter * trace * np.eye(len(G))
    try:
        chol = np.linalg.cholesky(mass)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"metric at {np.asarray(state).tolist()} is not positive definite after jitter {jitter}; "
            "increase jitter or chi"
        ) from exc
    inv_mass = cho_solve((chol, True), np.eye(len(G)))
    return chol, 0.5 * (inv_mass + inv_mass.T)


def rmahmc_step(state, target, cfg, chi, rng, logp_state=None, step_size=None):
    """One HMC transition whose momentum covariance is the metric at ``state``.

    The mass is frozen for the whole trajectory and used in the kinetic
    energy at both ends, so the move is exactly reversible only when the
    metric does not vary with theta.  Returns
    ``(theta, accepted, logp, accept_prob)``.
    """
    state = np.asarray(state, dtype=float)
    eps = cfg.step_size if step_size is None else step_size
    if logp_state is None:
        logp_state = target.logp(state)
    chol, inv_mass = frozen_mass(target, state, chi, cfg.jitter)
    p0 = chol @ rng.standard_normal(state.size)
    h0 = -logp_state + 0.5 * p0 @ inv_mass @ p0
    with np.errstate(all="ignore"):
        theta, p = leapfrog(state, p0, target, eps, cfg.leapfrog_steps, inv_mass)
        logp_new = target.logp(theta) if np.all(np.isfinite(theta)) else -np.inf
        h1 = -logp_new + 0.5 * p @ inv_mass @ p
    log_u = np.log(rng.random())
    if not np.isfinite(h1):
        return state, False, logp_state, 0.0
    log_ratio = h0 - h1
    accept_prob = float(np.exp(min(log_ratio, 0.0)))
    if log_u < log_ratio:
        return theta, True, logp_new, accept_prob
    return state, False, logp_state, accept_prob


class _DualAveraging:
    """Step-size adaptation toward a target acceptance probability."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.t = 0
        self.hbar = 0.0
        self.log_eps_bar = np.log(eps0)

    def update(self, accept_prob):
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.hbar = (1 - w) * self.hbar + w * (self.target - accept_prob)
        log_eps = self.mu - np.sqrt(self.t) / self.gamma * self.hbar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1 - eta) * self.log_eps_bar
        return float(np.exp(log_eps))

    @property
    def final(self):
        return float(np.exp(self.log_eps_bar))


def _kernel_for(i, kernel):
    if kernel == HYBRID:
        return RMAHMC if i % 2 == 1 else AMH
    return kernel


def _resolve_target(data, prior):
    if isinstance(data, Dataset):
        return IsingPosterior(data, PriorSpec() if prior is None else prior)
    if prior is not None:
        raise DomainError("prior must be None when a target object is given")
    return data


def run_chain(data, prior, cfg, theta0):
    """Run one chain of ``cfg.n_iter`` iterations from ``theta0``.

    ``data`` is a :class:`Dataset` (combined with ``prior``) or any target
    object, in which case ``prior`` must be ``None``.  The hybrid kernel runs
    RMAHMC on odd iterations and AMH on even ones, with ``chi_burnin`` up to
    ``burn_in`` and ``chi_after`` afterwards.  AMH adapts on every previous
    post-warm-up draw, whichever kernel produced it.
    """
    target = _resolve_target(data, prior)
    theta = np.array(theta0, dtype=float).ravel()
    if not np.all(np.isfinite(theta)):
        raise DomainError(f"theta0 must be finite, got {theta.tolist()}")
    dim = theta.size
    rng = cfg.rng.generator()
    n = cfg.n_iter
    draws = np.empty((n, dim))
    tags = np.empty(n, dtype="<U6")
    accepted = np.zeros(n, dtype=bool)
    trace = np.empty(n)
    history = AMHHistory(dim, cfg.amh_warmup)
    logp = target.logp(theta)
    eps = cfg.step_size
    adapter = _DualAveraging(eps, cfg.target_accept) if cfg.adapt_step_size else None
    for i in range(1, n + 1):
        tag = _kernel_for(i, cfg.kernel)
        if tag == RMAHMC:
            chi = cfg.chi_burnin if i <= cfg.burn_in else cfg.chi_after
            theta, acc, logp, prob = rmahmc_step(theta, target, cfg, chi, rng, logp, eps)
            if adapter is not None and i <= cfg.burn_in:
                eps = adapter.update(prob)
        else:
            theta, acc, logp = amh_step(theta, history, target, cfg, rng, logp)
        if adapter is not None and i == cfg.burn_in:
            eps = adapter.final
        draws[i - 1] = theta
        tags[i - 1] = tag
        accepted[i - 1] = acc
        trace[i - 1] = logp
        history.add(theta)
    return Chain(
        draws=draws,
        kernel_tag=tags,
        accepted=accepted,
        logpost_trace=trace,
        theta0=np.array(theta0, dtype=float),
        step_size=float(eps),
    )


def dispersed_starts(data, prior=PriorSpec(), n_chains=4, exclude=None, **grid):
    """Starting points for several chains: the grid argmax, then the next-best
    distinct grid points.  Points matching ``exclude`` (e.g. a known truth)
    are skipped.
    """
    pts, _ = grid_ranking(data, prior, **grid)
    if exclude is not None:
        keep = np.any(np.abs(pts - np.asarray(exclude, dtype=float)) > 1e-9, axis=1)
        pts = pts[keep]
    if len(pts) < n_chains:
        raise DomainError(f"grid has only {len(pts)} usable points for {n_chains} chains")
    return [Theta(*p.tolist()) for p in pts[:n_chains]]


def _run_one(args):
    data, prior, cfg, theta0 = args
    return run_chain(data, prior, cfg, theta0)


def default_workers():
    value = os.environ.get("MFISING_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise DomainError(f"MFISING_WORKERS must be an integer, got {value!r}") from None


def run_chains(data, prior, cfg, starts, workers=None):
    """Run one chain per start, chain ``c`` on the stream ``cfg.rng.chain(c)``.

    Results do not depend on ``workers`` (default: ``$MFISING_WORKERS`` or 1).
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(data, prior, replace(cfg, rng=cfg.rng.chain(c)), s) for c, s in enumerate(starts)]
    if workers == 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))
