"""Exact forward sampling of magnetization datasets and their file formats.

Random streams: ``RngSpec(seed, stream, sub)`` maps to
``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(stream, *sub))))``.
Datasets use ``sub=()``; chain ``c`` fitted to stream ``s`` uses
``(s, 1, c)``.  The generator and the key layout are fixed for this release;
identical specs reproduce identical draws.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._validation import DomainError, check_size, spectrum_index
from .core import Theta, log_count_table, model_summary

__all__ = [
    "RngSpec",
    "Dataset",
    "sample_dataset",
    "empirical_moments",
    "read_dataset",
]

_UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class RngSpec:
    seed: int = 0
    stream: int = 0
    sub: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _UINT64_MAX:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream) < 0:
            raise DomainError(f"stream must be nonnegative, got {self.stream}")

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *map(int, self.sub)))
        return np.random.Generator(np.random.PCG64(ss))

    def chain(self, index):
        """Spec for the ``index``-th chain fitted to data drawn from this stream."""
        return RngSpec(self.seed, self.stream, (1, int(index)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """M observed magnetizations on the size-N spectrum.

    ``suffstats`` is ``(sum m, sum m^2, sum m^3)`` and ``log_count_sum`` is
    ``sum log A_N(m_i)``; both are computed once at construction.
    """

    N: int
    values: np.ndarray
    theta_true: Optional[Theta] = None
    seed: Optional[int] = None
    stream: Optional[int] = None
    index: np.ndarray = field(init=False, repr=False, compare=False)
    suffstats: np.ndarray = field(init=False, repr=False, compare=False)
    log_count_sum: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        N = check_size(self.N)
        values = np.array(self.values, dtype=float).ravel()
        if values.size == 0:
            raise DomainError("a dataset needs at least one observation")
        k = spectrum_index(values, N)
        # snap to the exact atoms
        values = (2.0 * k - N) / N
        values.setflags(write=False)
        k.setflags(write=False)
        stats = np.array([values.sum(), (values**2).sum(), (values**3).sum()])
        stats.setflags(write=False)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index", k)
        object.__setattr__(self, "suffstats", stats)
        object.__setattr__(self, "log_count_sum", float(log_count_table(N)[k].sum()))
        if self.theta_true is not None:
            object.__setattr__(self, "theta_true", Theta.coerce(self.theta_true))

    @property
    def M(self):
        return int(self.values.size)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["m"])
        for v in self.values:
            writer.writerow([repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path=None):
        doc = {
            "n": self.N,
            "m_count": self.M,
            "seed": self.seed,
            "stream": self.stream,
            "theta_true": None if self.theta_true is None else list(self.theta_true),
            "values": [float(v) for v in self.values],
        }
        text = json.dumps(doc, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("m_count") is not None and doc["m_count"] != len(doc["values"]):
            raise DomainError(f"m_count={doc['m_count']} does not match {len(doc['values'])} values")
        return cls(
            N=doc["n"],
            values=doc["values"],
            theta_true=doc.get("theta_true"),
            seed=doc.get("seed"),
            stream=doc.get("stream"),
        )

    @classmethod
    def from_csv(cls, text, N, **meta):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["m"]:
            raise DomainError("dataset CSV must start with the header 'm'")
        try:
            values = [float(r[0]) for r in rows[1:] if r]
        except ValueError as exc:
            raise DomainError(f"unparseable dataset CSV: {exc}") from exc
        return cls(N=N, values=values, **meta)


def read_dataset(path, N=None):
    """Load a dataset from a ``.json`` envelope or a ``.csv`` file (CSV needs ``N``)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        ds = Dataset.from_json(text)
        if N is not None and N != ds.N:
            raise DomainError(f"N={N} conflicts with n={ds.N} stored in {path}")
        return ds
    if N is None:
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            return Dataset.from_csv(
                text, meta["n"], theta_true=meta.get("theta_true"), seed=meta.get("seed"), stream=meta.get("stream")
            )
        raise DomainError(f"N is required to read {path} (no JSON envelope next to it)")
    return Dataset.from_csv(text, N)


def sample_dataset(theta, N, M, rng=RngSpec()):
    """Draw M i.i.d. magnetizations from the exact Gibbs law by inverse CDF."""
    theta = Theta.coerce(theta)
    N = check_size(N)
    M = check_size(M, "M")
    summary = model_summary(theta, N)
    cdf = np.cumsum(summary.pmf)
    cdf[-1] = 1.0
    u = rng.generator().random(M)
    k = np.searchsorted(cdf, u, side="right")
    k = np.minimum(k, N)
    values = (2.0 * k - N) / N
    return Dataset(N=N, values=values, theta_true=theta, seed=int(rng.seed), stream=int(rng.stream))


def empirical_moments(data):
    """``(S1/M, S2/M, S3/M)``."""
    if data.M == 0:
        raise DomainError("empty dataset")
    return data.suffstats / data.M
