"""Closed-form design metrics for arrival-time QRNGs.

All entropies are in bits. The load ``x = mu*T*d`` is the expected number
of detected photons per reference cycle; the symbol law depends on the
design point only through ``x`` and ``N``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .photon_models import TimeBinPmf, timebin_pmf

__all__ = [
    "DesignMetrics",
    "shannon_entropy_closed",
    "min_entropy_closed",
    "epsilon_exact",
    "epsilon_closed",
    "load_from_epsilon",
    "empty_cycle_prob",
    "expected_cycles",
    "cycles_pmf",
    "generation_rate",
    "min_reference_cycle",
    "max_rate",
    "min_entropy_of_epsilon",
    "cost",
    "required_compression",
    "adaptive_simpson",
    "mandel_excess_from_g2",
    "xou_mandel_g2",
    "design_metrics",
]

_LN2 = math.log(2.0)


def _check_load(x: float) -> None:
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"load x must be positive and finite, got {x!r}")


def _check_bins(N: int) -> None:
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")


def _log2_bins(N: int) -> float:
    return math.log2(N)


def shannon_entropy_closed(x: float, N: int) -> float:
    """Shannon entropy of the time-bin law, in bits.

    With ``y = x/N`` the law is ``f(i) = c e^{-i y}``, so
    ``H = (y E[i] - ln c) / ln 2``. ``E[i]`` is evaluated as
    ``1/(1-e^{-y}) - N e^{-x}/(1-e^{-x})``, which equals
    ``(1-(N+1)e^{-x}+N e^{-(N+1)y}) / ((1-e^{-x})(1-e^{-y}))`` but keeps
    full precision when ``y`` is tiny.
    """
    _check_load(x)
    _check_bins(N)
    y = x / N
    one_minus_q = -math.expm1(-y)
    one_minus_qn = -math.expm1(-x)
    mean_index = 1.0 / one_minus_q - N * math.exp(-x) / one_minus_qn
    log_c = math.log(math.expm1(y)) - math.log(one_minus_qn)
    return (y * mean_index - log_c) / _LN2


def min_entropy_closed(x: float, N: int) -> float:
    """``-log2 f(1) = -log2[(1-e^{-x/N}) / (1-e^{-x})]``."""
    _check_load(x)
    _check_bins(N)
    return -(math.log(-math.expm1(-x / N)) - math.log(-math.expm1(-x))) / _LN2


def epsilon_exact(pmf: TimeBinPmf | np.ndarray) -> float:
    """Half the L1 distance to the uniform law on ``N`` points."""
    probs = np.asarray(pmf.probs if isinstance(pmf, TimeBinPmf) else pmf, dtype=np.float64)
    return 0.5 * math.fsum(np.abs(probs - 1.0 / probs.size))


def epsilon_closed(x: float) -> float:
    """``0.5 (1-e^{-x/2}) / (1+e^{-x/2}) = 0.5 tanh(x/4)``.

    Exact for ``N = 2``; for larger ``N`` it assumes the law crosses ``1/N``
    between bins ``N/2`` and ``N/2 + 1``. The crossing sits near
    ``N/2 - N x/24 + 1/2``, so this holds only for ``x`` below about ``12/N``.
    Use :func:`epsilon_exact` otherwise.
    """
    if x < 0:
        raise ValueError("load must be non-negative")
    return 0.5 * math.tanh(0.25 * x)


def load_from_epsilon(epsilon: float) -> float:
    """Inverse of :func:`epsilon_closed`: ``2 ln((1+2e)/(1-2e))``."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must lie in [0, 1/2), got {epsilon!r}")
    return 4.0 * math.atanh(2.0 * epsilon)


def empty_cycle_prob(x: float) -> float:
    """Probability that a reference cycle sees no detection, ``e^{-x}``."""
    _check_load(x)
    return math.exp(-x)


def _symbols_needed(k_bits: int, N: int) -> int:
    if k_bits < 1:
        raise ValueError("k_bits must be >= 1")
    _check_bins(N)
    return math.ceil(k_bits / _log2_bins(N))


def expected_cycles(k_bits: int, N: int, x: float) -> float:
    """Mean number of cycles to collect ``k_bits`` bits: ``k'/(1-e^{-x})``."""
    _check_load(x)
    return _symbols_needed(k_bits, N) / -math.expm1(-x)


def cycles_pmf(c: int, k_bits: int, N: int, x: float) -> float:
    """P(exactly ``c`` cycles are needed), a negative binomial in ``c``."""
    _check_load(x)
    kp = _symbols_needed(k_bits, N)
    if c < kp:
        return 0.0
    p = -math.expm1(-x)
    log_comb = math.lgamma(c) - math.lgamma(kp) - math.lgamma(c - kp + 1)
    return math.exp(log_comb + kp * math.log(p) - (c - kp) * x)


def generation_rate(mu: float, T: float, d: float, N: int, approx: bool = False) -> float:
    """Raw bits per unit time.

    Exact: ``(1 - e^{-mu T d}) / T * log2 N``. With ``approx=True`` the
    short-cycle limit ``mu d log2 N`` is returned.
    """
    for name, value in (("mu", mu), ("T", T), ("d", d)):
        if not value > 0:
            raise ValueError(f"{name} must be positive")
    _check_bins(N)
    if approx:
        return mu * d * _log2_bins(N)
    return -math.expm1(-mu * T * d) / T * _log2_bins(N)


def min_reference_cycle(N: int, p_tol: float, delta_t: float) -> float:
    """Shortest cycle keeping misregistration below ``p_tol``: ``N (2/p_tol) delta_t``."""
    if not 0.0 < p_tol < 1.0:
        raise ValueError("p_tol must lie in (0, 1)")
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    _check_bins(N)
    return N * (2.0 / p_tol) * delta_t


def max_rate(epsilon: float, N: int, k_tol: float, delta_t: float) -> float:
    """Largest rate at randomness ``epsilon`` when ``T = N k_tol delta_t``."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must lie in [0, 1/2), got {epsilon!r}")
    if not (k_tol > 0 and delta_t > 0):
        raise ValueError("k_tol and delta_t must be positive")
    _check_bins(N)
    return 2.0 * _log2_bins(N) / (N * k_tol * delta_t) * 2.0 * math.atanh(2.0 * epsilon)


def min_entropy_of_epsilon(epsilon: float, N: int) -> float:
    """``log2(8e / ((1+2e)^2 (1 - q^{2/N})))`` with ``q = (1-2e)/(1+2e)``."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon!r}")
    _check_bins(N)
    log_q = math.log1p(-2.0 * epsilon) - math.log1p(2.0 * epsilon)
    denom = (1.0 + 2.0 * epsilon) ** 2 * -math.expm1(2.0 / N * log_q)
    return math.log2(8.0 * epsilon / denom)


def cost(mu: float, d: float, alpha: float = 1.0 / 20.0, beta: float = 40.0) -> float:
    """``alpha/mu + beta*d`` in abstract cost units."""
    if not (mu > 0 and d > 0 and alpha > 0 and beta > 0):
        raise ValueError("mu, d, alpha and beta must be positive")
    return alpha / mu + beta * d


def required_compression(min_entropy_bits: float, n_raw_bits: int, bins: int = 256) -> int:
    """Output length ``floor(n * H_min / log2 N)`` an extractor may keep."""
    _check_bins(bins)
    ratio = min_entropy_bits / _log2_bins(bins)
    if not 0.0 < ratio <= 1.0 + 1e-12:
        raise ValueError("min-entropy per bit must lie in (0, 1]")
    if n_raw_bits < 0:
        raise ValueError("n_raw_bits must be non-negative")
    return int(math.floor(n_raw_bits * min(ratio, 1.0) + 1e-9))


# ---------------------------------------------------------------------------
# g2 and the Mandel relation


def adaptive_simpson(fn: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    def value(t):
        v = float(fn(t))
        if not math.isfinite(v):
            raise ValueError(f"integrand is not finite at {t!r}")
        return v

    fa, fb, fm = value(a), value(b), value(0.5 * (a + b))
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        f1 = value(0.5 * (lo + mid))
        f2 = value(0.5 * (mid + hi))
        left = simpson(flo, f1, fmid, mid - lo)
        right = simpson(fmid, f2, fhi, hi - mid)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((lo, mid, flo, f1, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, f2, fhi, right, 0.5 * eps, depth + 1))
    return total


def mandel_excess_from_g2(g2: Callable[[float], float], mean_N: float, T: float,
                          tol: float = 1e-10) -> float:
    """``<(dN)^2> - <N> = <N>^2/T^2 * int_{-T}^{T} (T-|tau|)(g2(tau)-1) dtau``.

    Negative values mean sub-Poissonian counting statistics.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    integrand = lambda tau: (T - abs(tau)) * (g2(tau) - 1.0)  # noqa: E731
    # split at the kink of |tau|
    integral = adaptive_simpson(integrand, -T, 0.0, tol) + adaptive_simpson(integrand, 0.0, T, tol)
    return mean_N * mean_N / (T * T) * integral


def xou_mandel_g2(delta_omega: float, n: float) -> Callable[[float], float]:
    """Two-mode field with ``g2(tau) = cos(delta_omega tau)/2 - 1/n + 1``."""
    if n <= 0:
        raise ValueError("n must be positive")
    return lambda tau: 0.5 * math.cos(delta_omega * tau) - 1.0 / n + 1.0


# ---------------------------------------------------------------------------
# summary record


@dataclass(frozen=True)
class DesignMetrics:
    load: float
    shannon_entropy: float
    min_entropy: float
    epsilon: float
    empty_prob: float
    expected_cycles_per_symbol: float
    rate: float
    cost: float
    t_min: float

    def to_dict(self) -> dict:
        return asdict(self)


def design_metrics(
    mu: float,
    T: float,
    d: float = 1.0,
    N: int = 256,
    delta_t: float = 0.0,
    p_tol: float = 0.01,
    alpha: float = 1.0 / 20.0,
    beta: float = 40.0,
) -> DesignMetrics:
    """Every metric of one design point. ``epsilon`` is the exact half-L1 value."""
    x = mu * T * d
    return DesignMetrics(
        load=x,
        shannon_entropy=shannon_entropy_closed(x, N),
        min_entropy=min_entropy_closed(x, N),
        epsilon=epsilon_exact(timebin_pmf(N, x)),
        empty_prob=empty_cycle_prob(x),
        expected_cycles_per_symbol=1.0 / -math.expm1(-x),
        rate=generation_rate(mu, T, d, N),
        cost=cost(mu, d, alpha, beta),
        t_min=min_reference_cycle(N, p_tol, delta_t) if delta_t > 0 else 0.0,
    )
