"""Photon-count distributions and the first-photon time-bin law.

Count models are small frozen dataclasses; ``pmf``, ``moments`` and
``sample_counts`` dispatch on the model type. Samplers take an explicit
seed and build their own generator, so repeated calls are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .seeding import make_rng
from .stats_core import normal_cdf

__all__ = [
    "Poisson",
    "Geometric",
    "BoseEinstein",
    "NormalCounts",
    "RegularSource",
    "AlphaPoisson",
    "PhotonModel",
    "parse_model",
    "model_to_spec",
    "pmf",
    "moments",
    "support_upper",
    "sample_counts",
    "TimeBinPmf",
    "timebin_pmf",
    "uniform_pmf",
    "first_photon_prob_given_n",
    "all_in_bin_prob",
]


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        _positive("lam", self.lam)


@dataclass(frozen=True)
class Geometric:
    """``P(k) = (1-p)^(k-offset) p`` for ``k = offset, offset+1, ...``."""

    p: float
    offset: int = 1

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"geometric p must lie in (0, 1], got {self.p!r}")
        if self.offset not in (0, 1):
            raise ValueError("geometric offset must be 0 or 1")


@dataclass(frozen=True)
class BoseEinstein:
    """Thermal light: ``P(n) = mu^n / (mu+1)^(n+1)``."""

    mu: float

    def __post_init__(self):
        _positive("mu", self.mu)


@dataclass(frozen=True)
class NormalCounts:
    """Gaussian counts.

    With ``discretize=False`` samples are the raw real-valued draws. With
    ``discretize=True`` they are rounded to the nearest integer and clamped
    at zero; ``pmf`` always describes the discretized law.
    """

    mean: float
    var: float
    discretize: bool = False

    def __post_init__(self):
        _positive("var", self.var)
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")


@dataclass(frozen=True)
class RegularSource:
    """Emitter with a fixed spacing ``interval`` observed over ``window``."""

    window: float
    interval: float

    def __post_init__(self):
        _positive("window", self.window)
        _positive("interval", self.interval)

    @property
    def count(self) -> int:
        return int(math.floor(self.window / self.interval + 1e-12))


@dataclass(frozen=True)
class AlphaPoisson:
    """Poisson law on the lattice ``{j / alpha}``: mean ``mu``, variance ``mu / alpha``."""

    mu: float
    alpha: float

    def __post_init__(self):
        _positive("mu", self.mu)
        _positive("alpha", self.alpha)


PhotonModel = Union[Poisson, Geometric, BoseEinstein, NormalCounts, RegularSource, AlphaPoisson]

_SPEC_NAMES = {
    "poisson": (Poisson, 1),
    "geometric": (Geometric, 1),
    "geometric0": (Geometric, 1),
    "bose": (BoseEinstein, 1),
    "normal": (NormalCounts, 2),
    "normal-int": (NormalCounts, 2),
    "regular": (RegularSource, 2),
    "alpha": (AlphaPoisson, 2),
}


def parse_model(spec: str) -> PhotonModel:
    """Build a model from a ``name:arg[:arg]`` string such as ``poisson:0.5``."""
    name, *raw = spec.strip().split(":")
    name = name.lower()
    if name not in _SPEC_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(_SPEC_NAMES)}")
    cls, nargs = _SPEC_NAMES[name]
    if len(raw) != nargs:
        raise ValueError(f"model {name!r} takes {nargs} parameter(s), got {len(raw)}")
    try:
        args = [float(v) for v in raw]
    except ValueError as exc:
        raise ValueError(f"bad numeric parameter in model spec {spec!r}") from exc
    if name == "geometric0":
        return Geometric(args[0], offset=0)
    if name == "normal-int":
        return NormalCounts(*args, discretize=True)
    return cls(*args)


def model_to_spec(model: PhotonModel) -> str:
    if isinstance(model, Poisson):
        return f"poisson:{model.lam!r}"
    if isinstance(model, Geometric):
        return f"{'geometric' if model.offset == 1 else 'geometric0'}:{model.p!r}"
    if isinstance(model, BoseEinstein):
        return f"bose:{model.mu!r}"
    if isinstance(model, NormalCounts):
        return f"{'normal-int' if model.discretize else 'normal'}:{model.mean!r}:{model.var!r}"
    if isinstance(model, RegularSource):
        return f"regular:{model.window!r}:{model.interval!r}"
    if isinstance(model, AlphaPoisson):
        return f"alpha:{model.mu!r}:{model.alpha!r}"
    raise TypeError(f"not a photon model: {model!r}")


def _poisson_pmf(k: int, lam: float) -> float:
    if k < 0:
        return 0.0
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1.0))


def pmf(model: PhotonModel, n: float) -> float:
    """Probability of observing ``n`` counts under ``model``.

    For :class:`AlphaPoisson` ``n`` may be any lattice point ``j / alpha``;
    off-lattice values have probability zero.
    """
    if isinstance(model, Poisson):
        return _poisson_pmf(int(n), model.lam) if n == int(n) else 0.0
    if isinstance(model, Geometric):
        if n != int(n) or n < model.offset:
            return 0.0
        return (1.0 - model.p) ** (int(n) - model.offset) * model.p
    if isinstance(model, BoseEinstein):
        if n != int(n) or n < 0:
            return 0.0
        ratio = model.mu / (model.mu + 1.0)
        return ratio ** int(n) / (model.mu + 1.0)
    if isinstance(model, NormalCounts):
        if n != int(n) or n < 0:
            return 0.0
        sd = math.sqrt(model.var)
        upper = normal_cdf((n + 0.5 - model.mean) / sd)
        if n == 0:
            return upper
        return upper - normal_cdf((n - 0.5 - model.mean) / sd)
    if isinstance(model, RegularSource):
        return 1.0 if n == model.count else 0.0
    if isinstance(model, AlphaPoisson):
        j = model.alpha * n
        jr = round(j)
        if jr < 0 or abs(j - jr) > 1e-9 * max(1.0, abs(j)):
            return 0.0
        return _poisson_pmf(int(jr), model.alpha * model.mu)
    raise TypeError(f"not a photon model: {model!r}")


def moments(model: PhotonModel) -> tuple[float, float]:
    """Exact ``(mean, variance)``.

    For :class:`NormalCounts` these are the parameters of the underlying
    Gaussian, not of the discretized law.
    """
    if isinstance(model, Poisson):
        return model.lam, model.lam
    if isinstance(model, Geometric):
        p = model.p
        return 1.0 / p - 1.0 + model.offset, (1.0 - p) / (p * p)
    if isinstance(model, BoseEinstein):
        mu = model.mu
        return mu, mu + mu * mu
    if isinstance(model, NormalCounts):
        return model.mean, model.var
    if isinstance(model, RegularSource):
        return float(model.count), 0.0
    if isinstance(model, AlphaPoisson):
        return model.mu, model.mu / model.alpha
    raise TypeError(f"not a photon model: {model!r}")


def support_upper(model: PhotonModel, tail: float = 1e-12) -> float:
    """Smallest support point ``n`` with cumulative mass ``>= 1 - tail``."""
    if isinstance(model, RegularSource):
        return float(model.count)
    step = 1.0 / model.alpha if isinstance(model, AlphaPoisson) else 1.0
    n = float(model.offset) if isinstance(model, Geometric) else 0.0
    total = 0.0
    while True:
        total += pmf(model, n)
        if total >= 1.0 - tail:
            return n
        n += step
        if isinstance(model, AlphaPoisson):
            n = round(n * model.alpha) / model.alpha


def sample_counts(model: PhotonModel, size: int, seed: int) -> np.ndarray:
    """Draw ``size`` i.i.d. counts from ``model`` with a generator built from ``seed``."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = make_rng(seed)
    if isinstance(model, Poisson):
        return rng.poisson(model.lam, size)
    if isinstance(model, Geometric):
        draws = rng.geometric(model.p, size)
        return draws - 1 + model.offset
    if isinstance(model, BoseEinstein):
        # geometric on {0, 1, ...} with success probability 1/(mu+1)
        return rng.geometric(1.0 / (model.mu + 1.0), size) - 1
    if isinstance(model, NormalCounts):
        draws = rng.normal(model.mean, math.sqrt(model.var), size)
        if model.discretize:
            return np.maximum(np.rint(draws), 0.0).astype(np.int64)
        return draws
    if isinstance(model, RegularSource):
        return np.full(size, model.count, dtype=np.int64)
    if isinstance(model, AlphaPoisson):
        return rng.poisson(model.alpha * model.mu, size) / model.alpha
    raise TypeError(f"not a photon model: {model!r}")


# ---------------------------------------------------------------------------
# time-bin statistics


@dataclass(frozen=True)
class TimeBinPmf:
    """Law of the first detected photon's bin index ``i = 1..N``.

    ``probs[i - 1]`` holds ``f(i)``.
    """

    n_bins: int
    load: float
    probs: np.ndarray = field(repr=False)


def timebin_pmf(N: int, load: float) -> TimeBinPmf:
    """First-detection bin law for ``N`` bins and load ``x = mu*T*d``.

    ``f(i) = (e^(x/N) - 1) / (1 - e^(-x)) * e^(-i x / N)``, conditioned on at
    least one detection in the cycle.
    """
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")
    if not load > 0:
        raise ValueError(f"load must be positive, got {load!r}; use uniform_pmf for the ideal case")
    N = int(N)
    y = load / N
    scale = math.expm1(y) / -math.expm1(-load)
    i = np.arange(1, N + 1, dtype=np.float64)
    probs = scale * np.exp(-i * y)
    return TimeBinPmf(n_bins=N, load=float(load), probs=probs)


def uniform_pmf(N: int) -> TimeBinPmf:
    """The ideal (zero-load) limit: every bin has probability ``1/N``."""
    return TimeBinPmf(n_bins=int(N), load=0.0, probs=np.full(int(N), 1.0 / N))


def first_photon_prob_given_n(i: int, n: int, N: int, d: float = 1.0) -> float:
    """P(first *detected* photon in bin ``i`` | ``n`` photons in the cycle).

    Each photon is uniform on the cycle and detected independently with
    probability ``d``: ``(1 - (i-1) d/N)^n - (1 - i d/N)^n``.
    """
    if not 1 <= i <= N:
        raise ValueError(f"bin index must lie in [1, {N}], got {i!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < d <= 1.0:
        raise ValueError(f"detection efficiency must lie in (0, 1], got {d!r}")
    return (1.0 - (i - 1) * d / N) ** n - (1.0 - i * d / N) ** n


def all_in_bin_prob(n: int, N: int) -> float:
    """P(all ``n`` photons land in one given bin) ``= N**-n``."""
    if n < 1 or N < 1:
        raise ValueError("n and N must be >= 1")
    return float(N) ** (-n)
