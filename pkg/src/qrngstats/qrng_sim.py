"""Simulators for arrival-time QRNG architectures.

Three architectures are covered:

* external reference (a clock of period ``T`` split into ``N`` bins; the
  first detected photon's bin index is the symbol),
* free running (the waiting time between detections, measured in bins of
  length ``T/N``),
* interval comparison (one bit from two consecutive waiting times).

All randomness comes from per-chunk generators derived from ``seed`` (see
:mod:`qrngstats.seeding`); work is split into fixed-size chunks, so output
does not depend on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .photon_models import timebin_pmf
from .seeding import make_rng

__all__ = [
    "QrngParams",
    "SymbolStream",
    "BitStream",
    "CHUNK_CYCLES",
    "exponential",
    "simulate_external_reference",
    "simulate_free_running",
    "simulate_interval_comparison",
    "symbols_to_bits",
    "bits_to_array",
    "inject_timing_error",
    "iter_symbol_chunks",
    "iter_pmf_symbol_chunks",
]

CHUNK_CYCLES = 1 << 18

# generator streams, one per architecture, so equal seeds never couple them
_STREAM_EVENT, _STREAM_PMF, _STREAM_FREE, _STREAM_INTERVAL, _STREAM_TIMING = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class QrngParams:
    mu: float
    T: float
    d: float = 1.0
    N: int = 256
    delta_t: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0.0 < self.d <= 1.0:
            raise ValueError("detection efficiency d must lie in (0, 1]")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 2, got {self.N!r}")
        if self.delta_t < 0:
            raise ValueError("delta_t must be non-negative")

    @classmethod
    def from_load(cls, load: float, N: int = 256, seed: int = 0, T: float = 1.0, d: float = 1.0,
                  delta_t: float = 0.0) -> "QrngParams":
        """Design point with ``mu`` chosen so that ``mu*T*d == load``."""
        return cls(mu=load / (T * d), T=T, d=d, N=N, delta_t=delta_t, seed=seed)

    @property
    def load(self) -> float:
        return self.mu * self.T * self.d

    @property
    def bin_length(self) -> float:
        return self.T / self.N

    @property
    def bits_per_symbol(self) -> int:
        return self.N.bit_length() - 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SymbolStream:
    """Symbols in ``[0, N-1]`` plus cycle accounting.

    ``cycles_total`` counts every reference cycle consumed, including the
    ``cycles_empty`` ones that produced no detection. For the free-running
    model a "cycle" is one observation window of ``N`` bins.
    """

    symbols: np.ndarray
    cycles_total: int
    cycles_empty: int
    N: int

    def histogram(self) -> np.ndarray:
        return np.bincount(self.symbols, minlength=self.N)


@dataclass
class BitStream:
    """MSB-first packed bits (``numpy.packbits`` big-endian order)."""

    packed: np.ndarray
    bit_count: int

    def to_bytes(self) -> bytes:
        return self.packed.tobytes()

    def unpacked(self) -> np.ndarray:
        return np.unpackbits(self.packed, count=self.bit_count)


def exponential(rng: np.random.Generator, rate: float, size) -> np.ndarray:
    """Inverse-CDF exponential draws, ``-log(1 - U) / rate`` with 53-bit ``U``."""
    return -np.log1p(-rng.random(size)) / rate


def _run_chunks(fn: Callable[[int], object], n_chunks: int, workers: int) -> list:
    if workers <= 1 or n_chunks <= 1:
        return [fn(i) for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_chunks)))


# ---------------------------------------------------------------------------
# external reference (model III)


def _first_detection_times(rng: np.random.Generator, mu: float, T: float, d: float, size: int) -> np.ndarray:
    """Time of the first detected photon in each of ``size`` cycles (inf if none).

    Arrivals are a rate-``mu`` Poisson process; each arrival is detected
    with probability ``d``. Only cycles still waiting for a detection keep
    drawing.
    """
    t = exponential(rng, mu, size)
    first = np.full(size, np.inf)
    active = np.flatnonzero(t < T)
    t = t[active]
    while active.size:
        hit = rng.random(active.size) < d
        first[active[hit]] = t[hit]
        active = active[~hit]
        t = t[~hit] + exponential(rng, mu, active.size)
        keep = t < T
        active = active[keep]
        t = t[keep]
    return first


def _iter_chunks(chunk_fn, n_symbols: int, workers: int) -> Iterator[tuple]:
    """Yield ``(symbols, cycles)`` per chunk until ``n_symbols`` are produced."""
    have = 0
    index = 0
    batch = max(workers, 1)
    while have < n_symbols:
        results = _run_chunks(lambda j: chunk_fn(index + j), batch, workers)
        for bins, cycles, positions in results:
            need = n_symbols - have
            if bins.size >= need:
                # the cycle that produced the last needed symbol closes the stream
                yield bins[:need], int(positions[need - 1]) + 1
                have = n_symbols
                break
            have += bins.size
            yield bins, cycles
        index += batch


def _symbols_from_chunks(chunk_fn, n_symbols: int, N: int, workers: int) -> SymbolStream:
    parts = []
    cycles_total = 0
    for bins, cycles in _iter_chunks(chunk_fn, n_symbols, workers):
        parts.append(bins)
        cycles_total += cycles
    out = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    return SymbolStream(symbols=out, cycles_total=cycles_total, cycles_empty=cycles_total - n_symbols, N=N)


def _event_chunk_positions(params: QrngParams, index: int):
    rng = make_rng(params.seed, index, _STREAM_EVENT)
    times = _first_detection_times(rng, params.mu, params.T, params.d, CHUNK_CYCLES)
    positions = np.flatnonzero(np.isfinite(times))
    bins = np.floor(times[positions] / params.bin_length).astype(np.int64)
    np.minimum(bins, params.N - 1, out=bins)
    return bins, CHUNK_CYCLES, positions


def _pmf_chunk(params: QrngParams, cdf: np.ndarray, p_hit: float, index: int):
    rng = make_rng(params.seed, index, _STREAM_PMF)
    u = rng.random(CHUNK_CYCLES)
    bins = np.searchsorted(cdf, u, side="right").astype(np.int64)
    np.minimum(bins, params.N - 1, out=bins)
    # cycles spent per symbol: geometric (>= 1) with success prob 1 - e^-x
    spent = rng.geometric(p_hit, CHUNK_CYCLES)
    positions = np.cumsum(spent) - 1
    return bins, int(positions[-1]) + 1, positions


def _pmf_cdf(N: int, load: float) -> np.ndarray:
    cdf = np.cumsum(timebin_pmf(N, load).probs)
    cdf /= cdf[-1]
    return cdf


def _chunk_fn(params: QrngParams, architecture: str, mode: str = "event"):
    if architecture == "free":
        return lambda i: _free_running_chunk(params, i)
    if architecture != "external":
        raise ValueError(f"unknown architecture {architecture!r}; expected 'external' or 'free'")
    if mode == "event":
        return lambda i: _event_chunk_positions(params, i)
    if mode == "pmf":
        cdf = _pmf_cdf(params.N, params.load)
        p_hit = -math.expm1(-params.load)
        return lambda i: _pmf_chunk(params, cdf, p_hit, i)
    raise ValueError(f"unknown mode {mode!r}; expected 'event' or 'pmf'")


def iter_symbol_chunks(params: QrngParams, n_symbols: int, architecture: str = "external",
                       mode: str = "event", workers: int = 1) -> Iterator[tuple]:
    """Stream ``(symbols, cycles)`` chunks; concatenated they equal the in-memory simulators."""
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    return _iter_chunks(_chunk_fn(params, architecture, mode), n_symbols, workers)


def iter_pmf_symbol_chunks(params: QrngParams, n_symbols: int) -> Iterator[np.ndarray]:
    """Stream pmf-mode symbols chunk by chunk (same values as ``mode='pmf'``)."""
    for bins, _ in iter_symbol_chunks(params, n_symbols, "external", "pmf"):
        yield bins


def simulate_external_reference(
    params: QrngParams, n_symbols: int, mode: str = "event", workers: int = 1
) -> SymbolStream:
    """External-clock architecture.

    ``mode='event'`` simulates photon arrivals and detections explicitly;
    ``mode='pmf'`` draws symbols straight from the time-bin law and the
    number of empty cycles from the matching geometric law.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    return _symbols_from_chunks(_chunk_fn(params, "external", mode), n_symbols, params.N, workers)


# ---------------------------------------------------------------------------
# free running (model II)


def _free_running_chunk(params: QrngParams, index: int):
    rng = make_rng(params.seed, index, _STREAM_FREE)
    rate = params.mu * params.d
    window = params.N * params.bin_length
    waits = exponential(rng, rate, CHUNK_CYCLES)
    # waits beyond the N-bin window are discarded and re-drawn
    positions = np.flatnonzero(waits < window)
    bins = np.ceil(waits[positions] / params.bin_length).astype(np.int64) - 1
    np.clip(bins, 0, params.N - 1, out=bins)
    return bins, CHUNK_CYCLES, positions


def simulate_free_running(params: QrngParams, n_symbols: int, workers: int = 1) -> SymbolStream:
    """Waiting-time architecture with bin length ``T/N``.

    Waiting times between detections are exponential with rate ``mu*d``;
    the symbol is ``ceil(t_w / t_l) - 1``. Waits longer than ``N`` bins are
    re-drawn and counted in ``cycles_empty``. The sleep time between
    windows is taken as zero.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    return _symbols_from_chunks(_chunk_fn(params, "free"), n_symbols, params.N, workers)


# ---------------------------------------------------------------------------
# interval comparison (model I)


def simulate_interval_comparison(
    params: QrngParams,
    n_bits: int,
    interval_source: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
    max_redraws: int = 64,
) -> BitStream:
    """One bit per pair of waiting times: 0 if the first is shorter.

    ``interval_source(rng, size)`` may replace the exponential(mu*d) waits;
    exact ties are re-drawn up to ``max_redraws`` times.
    """
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    rate = params.mu * params.d
    if interval_source is None:
        interval_source = lambda rng, size: exponential(rng, rate, size)  # noqa: E731
    bits = []
    done = 0
    index = 0
    while done < n_bits:
        rng = make_rng(params.seed, index, _STREAM_INTERVAL)
        size = min(CHUNK_CYCLES, n_bits - done)
        first = np.asarray(interval_source(rng, size), dtype=np.float64)
        second = np.asarray(interval_source(rng, size), dtype=np.float64)
        tied = np.flatnonzero(first == second)
        redraws = 0
        while tied.size:
            if redraws >= max_redraws:
                raise RuntimeError(
                    f"interval comparison: {tied.size} tied pairs persist after {max_redraws} re-draws"
                )
            first[tied] = interval_source(rng, tied.size)
            second[tied] = interval_source(rng, tied.size)
            tied = tied[first[tied] == second[tied]]
            redraws += 1
        bits.append((first > second).astype(np.uint8))
        done += size
        index += 1
    raw = np.concatenate(bits)
    return BitStream(packed=np.packbits(raw), bit_count=int(raw.size))


# ---------------------------------------------------------------------------
# bits


def symbols_to_bits(stream: SymbolStream | np.ndarray, N: int) -> BitStream:
    """Each symbol becomes ``log2 N`` bits, most significant bit first."""
    if N < 2 or N & (N - 1):
        raise ValueError(f"N must be a power of two >= 2, got {N!r}")
    symbols = stream.symbols if isinstance(stream, SymbolStream) else np.asarray(stream)
    width = N.bit_length() - 1
    symbols = symbols.astype(np.uint64)
    if symbols.size and int(symbols.max()) >= N:
        raise ValueError("symbol out of range for N")
    if width == 8:
        return BitStream(packed=symbols.astype(np.uint8), bit_count=8 * symbols.size)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    raw = ((symbols[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).ravel()
    return BitStream(packed=np.packbits(raw), bit_count=int(raw.size))


def bits_to_array(data: bytes | np.ndarray, bit_count: Optional[int] = None) -> np.ndarray:
    """Unpack MSB-first bytes into a 0/1 ``uint8`` array."""
    buf = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8)
    return np.unpackbits(buf, count=bit_count)


# ---------------------------------------------------------------------------
# timing error


def inject_timing_error(
    params: QrngParams,
    k: Optional[float] = None,
    n_events: int = 1_000_000,
    offset: str = "uniform",
) -> float:
    """Fraction of detections registered in the wrong bin.

    Detection times follow the external-reference model; each is shifted by
    an offset in ``[-delta_t, +delta_t]`` (``offset='uniform'``) or by exactly
    ``+-delta_t`` (``offset='extreme'``). If ``k`` is given, ``T`` is replaced
    by ``N * k * delta_t`` so that each bin is ``k`` timing errors wide.
    """
    if params.delta_t == 0:
        return 0.0
    if k is not None:
        if k < 1:
            raise ValueError("k must be >= 1")
        T = params.N * k * params.delta_t
        params = QrngParams(mu=params.load / (T * params.d), T=T, d=params.d, N=params.N,
                            delta_t=params.delta_t, seed=params.seed)
    t_l = params.bin_length
    if params.delta_t >= t_l:
        raise ValueError("bins narrower than timing error")
    wrong = 0
    seen = 0
    index = 0
    while seen < n_events:
        rng = make_rng(params.seed, index, _STREAM_TIMING)
        times = _first_detection_times(rng, params.mu, params.T, params.d, CHUNK_CYCLES)
        times = times[np.isfinite(times)][: n_events - seen]
        if offset == "uniform":
            shift = rng.uniform(-params.delta_t, params.delta_t, times.size)
        elif offset == "extreme":
            shift = np.where(rng.random(times.size) < 0.5, -params.delta_t, params.delta_t)
        else:
            raise ValueError(f"unknown offset distribution {offset!r}")
        true_bin = np.floor(times / t_l)
        seen_bin = np.floor((times + shift) / t_l)
        wrong += int(np.count_nonzero(true_bin != seen_bin))
        seen += times.size
        index += 1
    return wrong / seen
