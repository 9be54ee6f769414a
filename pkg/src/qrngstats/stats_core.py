"""Statistical primitives: sample moments, normal and chi-square distributions.

Everything here is a pure function. The incomplete gamma function is
evaluated with the usual series / continued-fraction split, and quantiles
are found by a bracketed Newton iteration that falls back to bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "SampleSummary",
    "summarize",
    "normal_cdf",
    "normal_quantile",
    "gammainc_lower",
    "gammainc_upper",
    "chisq_pdf",
    "chisq_cdf",
    "chisq_sf",
    "chisq_quantile",
]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


@dataclass(frozen=True)
class SampleSummary:
    """Sufficient statistics of a count sample.

    ``var_biased`` uses divisor n, ``var_unbiased`` uses n - 1 and ``m4`` is
    the fourth central moment (divisor n).
    """

    n: int
    mean: float
    var_biased: float
    var_unbiased: float
    m4: float

    @property
    def std_unbiased(self) -> float:
        return math.sqrt(self.var_unbiased)


def summarize(sample: Sequence[float] | np.ndarray) -> SampleSummary:
    """Two-pass centered moments of ``sample``.

    >>> summarize([1, 2, 3]).var_unbiased
    1.0
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise ValueError("insufficient sample: need at least 2 observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    # math.fsum keeps the first pass exact enough for 1e8-point samples
    mean = math.fsum(x) / n
    dev = x - mean
    dev2 = dev * dev
    m2 = math.fsum(dev2) / n
    m4 = math.fsum(dev2 * dev2) / n
    return SampleSummary(
        n=n,
        mean=mean,
        var_biased=m2,
        var_unbiased=m2 * n / (n - 1),
        m4=m4,
    )


# ---------------------------------------------------------------------------
# normal distribution


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _two_sided_tail(y: float) -> float:
    # P(|Z| >= y)
    return math.erfc(y / math.sqrt(2.0))


def normal_quantile(epsilon: float) -> float:
    """Symmetric quantile ``y`` with ``P(-y < Z < y) = 1 - epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    lo, hi = 0.0, 40.0
    # starting point from the logistic-ish approximation; Newton polishes it
    y = math.sqrt(max(-2.0 * math.log(epsilon / 2.0) - 1.0, 0.0)) if epsilon < 0.5 else 0.5
    y = min(max(y, lo), hi)
    for _ in range(200):
        g = _two_sided_tail(y) - epsilon
        if abs(g) <= 1e-15 * max(epsilon, 1e-300):
            return y
        if g > 0:
            lo = y
        else:
            hi = y
        dg = -2.0 * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)
        step = y - g / dg if dg != 0 else 0.5 * (lo + hi)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - y) <= 1e-15 * max(1.0, y):
            return step
        y = step
    return y


# ---------------------------------------------------------------------------
# incomplete gamma


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) via the power series, good for x < a + 1
    log_prefix = a * math.log(x) - x - math.lgamma(a + 1.0)
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            break
    else:
        raise ArithmeticError(f"gamma series did not converge for a={a}, x={x}")
    return total * math.exp(log_prefix)


def _gamma_cont_frac(a: float, x: float) -> float:
    # Q(a, x) via Lentz's continued fraction, good for x >= a + 1
    log_prefix = a * math.log(x) - x - math.lgamma(a)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"gamma continued fraction did not converge for a={a}, x={x}")
    return math.exp(log_prefix) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_cont_frac(a, x), 0.0)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(1.0 - _gamma_series(a, x), 0.0)
    return min(_gamma_cont_frac(a, x), 1.0)


# ---------------------------------------------------------------------------
# chi-square


def _check_dof(k: float) -> None:
    if not k >= 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {k!r}")


def chisq_pdf(x: float, k: float) -> float:
    _check_dof(k)
    if x < 0:
        return 0.0
    if x == 0:
        if k == 2:
            return 0.5
        return math.inf if k < 2 else 0.0
    h = 0.5 * k
    return math.exp((h - 1.0) * math.log(x) - 0.5 * x - h * math.log(2.0) - math.lgamma(h))


def chisq_cdf(x: float, k: float) -> float:
    """``F(x) = P(k/2, x/2)`` for the chi-square law with ``k`` dof."""
    _check_dof(k)
    if x < 0:
        raise ValueError(f"chi-square argument must be non-negative, got {x!r}")
    return gammainc_lower(0.5 * k, 0.5 * x)


def chisq_sf(x: float, k: float) -> float:
    """Upper tail ``1 - F(x)``, computed without cancellation."""
    _check_dof(k)
    if x < 0:
        raise ValueError(f"chi-square argument must be non-negative, got {x!r}")
    return gammainc_upper(0.5 * k, 0.5 * x)


@lru_cache(maxsize=1024)
def chisq_quantile(p: float, k: float) -> float:
    """Inverse of :func:`chisq_cdf`; ``chisq_cdf(result, k) == p`` to ~1e-12."""
    _check_dof(k)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    # Wilson-Hilferty start
    z = 0.0 if p == 0.5 else math.copysign(normal_quantile(2.0 * min(p, 1.0 - p)), p - 0.5)
    c = 2.0 / (9.0 * k)
    x = k * max(1.0 - c + z * math.sqrt(c), 1e-3) ** 3
    # bracket
    lo, hi = 0.0, max(2.0 * x, k + 10.0 * math.sqrt(2.0 * k) + 10.0)
    while chisq_cdf(hi, k) < p:
        lo = hi
        hi *= 2.0
    upper_half = p > 0.5
    for _ in range(500):
        if upper_half:
            g = (1.0 - p) - chisq_sf(x, k)  # same sign convention as cdf - p
        else:
            g = chisq_cdf(x, k) - p
        if g == 0.0:
            return x
        if g < 0:
            lo = x
        else:
            hi = x
        dens = chisq_pdf(x, k)
        cand = x - g / dens if dens > 0 and math.isfinite(dens) else 0.5 * (lo + hi)
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        if abs(cand - x) <= 1e-14 * x:
            return cand
        x = cand
        if hi - lo <= 1e-15 * hi:
            break
    return x
