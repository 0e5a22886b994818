"""Convergence diagnostics, posterior summaries and the coverage study."""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._validation import DomainError, check_size
from .core import Theta, model_summary
from .posterior import PriorSpec
from .samplers import SamplerConfig, grid_init, run_chain
from .simulate import RngSpec, sample_dataset

__all__ = [
    "DiagnosticsReport",
    "CoverageResult",
    "gelman_rubin",
    "summarize",
    "theoretical_mean",
    "theoretical_mean_trace",
    "density_compare",
    "pmf_modes",
    "coverage_study",
    "report_from_dict",
]


def _draws(chain):
    return np.asarray(getattr(chain, "draws", chain), dtype=float)


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class DiagnosticsReport:
    psrf: np.ndarray
    post_mean: np.ndarray
    ci: np.ndarray
    ci_level: float = 0.95
    n_chains: int = 1
    draws_used: int = 0

    def to_dict(self):
        return {
            "psrf": [_json_float(v) for v in self.psrf],
            "mean": [float(v) for v in self.post_mean],
            "ci": [[float(lo), float(hi)] for lo, hi in self.ci],
            "level": float(self.ci_level),
            "n_chains": int(self.n_chains),
            "draws_used": int(self.draws_used),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def covers(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.ci[:, 0] <= theta) & (theta <= self.ci[:, 1])

    @property
    def widths(self):
        return self.ci[:, 1] - self.ci[:, 0]


def gelman_rubin(chains, burn_in=0, split=False):
    """Potential scale reduction factor per parameter.

    Classic form: with ``c`` chains of ``n`` kept draws, ``W`` is the mean
    within-chain variance, ``B/n`` the variance of the chain means,
    ``V = (n-1)/n W + B/n`` and ``PSRF = sqrt(V / W)``, floored at 1.
    ``split=True`` halves every chain first.  Parameters whose chains are all
    constant (``W = 0``) get ``inf``.
    """
    arrays = [_draws(c)[burn_in:] for c in chains]
    if split:
        halves = []
        for a in arrays:
            n2 = len(a) // 2
            halves.extend([a[:n2], a[len(a) - n2 :]])
        arrays = halves
    if len(arrays) < 2:
        raise DomainError("Gelman-Rubin needs at least two chains")
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise DomainError(f"chains must have equal lengths after burn-in, got {sorted(lengths)}")
    n = lengths.pop()
    if n < 2:
        raise DomainError("each chain needs at least two draws after burn-in")
    X = np.stack(arrays)
    W = X.var(axis=1, ddof=1).mean(axis=0)
    B_over_n = X.mean(axis=1).var(axis=0, ddof=1)
    V = (n - 1) / n * W + B_over_n
    with np.errstate(divide="ignore", invalid="ignore"):
        psrf = np.sqrt(V / W)
    psrf = np.where(W > 0, np.maximum(psrf, 1.0), np.inf)
    return psrf


def summarize(chains, burn_in=0, level=0.95):
    """Pooled posterior mean and equal-tailed ``level`` intervals, plus PSRF.

    PSRF is reported as NaN when fewer than two chains are given.
    """
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    kept = [_draws(c)[burn_in:] for c in chains]
    pooled = np.concatenate(kept, axis=0)
    if len(pooled) == 0:
        raise DomainError("no draws left after burn-in")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(pooled, [alpha, 1.0 - alpha], axis=0)
    psrf = gelman_rubin(chains, burn_in) if len(chains) >= 2 else np.full(pooled.shape[1], np.nan)
    # centre on one draw first; exact for constant chains
    anchor = pooled[0]
    return DiagnosticsReport(
        psrf=psrf,
        post_mean=anchor + (pooled - anchor).mean(axis=0),
        ci=np.column_stack([lo, hi]),
        ci_level=level,
        n_chains=len(chains),
        draws_used=len(pooled),
    )


def theoretical_mean(theta, N):
    """Model mean magnetization ``E[m]`` at ``theta``."""
    return float(model_summary(theta, N).mu[0])


def theoretical_mean_trace(draws, N):
    """``E[m]`` evaluated at every draw (the trace of the identifiable mean)."""
    return np.array([model_summary(t, N).mu[0] for t in _draws(draws)])


def density_compare(theta_a, theta_b, N):
    """Total variation distance between the two magnetization pmfs."""
    N = check_size(N)
    pa = model_summary(theta_a, N).pmf
    pb = model_summary(theta_b, N).pmf
    return float(0.5 * np.abs(pa - pb).sum())


def pmf_modes(theta, N):
    """Spectrum atoms where the model pmf has a strict local maximum."""
    s = model_summary(theta, N)
    p = s.pmf
    left = np.concatenate([[-np.inf], p[:-1]])
    right = np.concatenate([p[1:], [-np.inf]])
    return s.atoms[(p > left) & (p > right)].tolist()


@dataclass
class CoverageResult:
    theta_true: Theta
    n_replications: int
    coverage: np.ndarray
    mean_width: np.ndarray
    hits: np.ndarray = None
    level: float = 0.95
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "theta_true": list(self.theta_true),
            "n_replications": int(self.n_replications),
            "coverage": [float(v) for v in self.coverage],
            "mean_width": [_json_float(v) for v in self.mean_width],
            "hits": [int(v) for v in self.hits],
            "level": float(self.level),
            "failures": self.failures,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _one_replication(theta_true, N, M, cfg, level, rng, prior, grid, r):
    spec = RngSpec(rng.seed, r)
    data = sample_dataset(theta_true, N, M, spec)
    start = grid_init(data, prior, **grid)
    chain = run_chain(data, prior, replace(cfg, rng=spec.chain(0)), start)
    report = summarize([chain], cfg.burn_in, level)
    return report.covers(theta_true), report.widths


def coverage_study(
    theta_true,
    N=300,
    M=1000,
    n_reps=20,
    cfg=None,
    level=0.95,
    rng=RngSpec(),
    prior=PriorSpec(),
    grid=None,
    workers=1,
):
    """Frequentist coverage of the hybrid sampler's credible intervals.

    Replication ``r`` simulates a dataset on stream ``r``, starts one chain at
    the grid argmax and records whether each interval holds the truth.
    Replications that raise are listed in ``failures`` and count as misses.
    """
    theta_true = Theta.coerce(theta_true)
    if n_reps < 1:
        raise DomainError("n_reps must be at least 1")
    cfg = SamplerConfig() if cfg is None else cfg
    grid = {} if grid is None else dict(grid)
    args = [(theta_true, N, M, cfg, level, rng, prior, grid, r) for r in range(n_reps)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_one_replication, *a) for a in args]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except Exception as exc:  # recorded, not dropped
                    outcomes.append(exc)
    else:
        outcomes = []
        for a in args:
            try:
                outcomes.append(_one_replication(*a))
            except Exception as exc:
                outcomes.append(exc)
    hits = np.zeros(3, dtype=int)
    widths = []
    failures = []
    for r, out in enumerate(outcomes):
        if isinstance(out, Exception):
            failures.append({"replication": r, "error": f"{type(out).__name__}: {out}"})
            continue
        covered, w = out
        hits += covered.astype(int)
        widths.append(w)
    mean_width = np.mean(widths, axis=0) if widths else np.full(3, np.nan)
    return CoverageResult(
        theta_true=theta_true,
        n_replications=n_reps,
        coverage=hits / n_reps,
        mean_width=mean_width,
        hits=hits,
        level=level,
        failures=failures,
    )


def report_from_dict(doc):
    return DiagnosticsReport(
        psrf=np.array([np.nan if v is None else v for v in doc["psrf"]], dtype=float),
        post_mean=np.asarray(doc["mean"], dtype=float),
        ci=np.asarray(doc["ci"], dtype=float),
        ci_level=doc["level"],
        n_chains=doc["n_chains"],
        draws_used=doc["draws_used"],
    )

