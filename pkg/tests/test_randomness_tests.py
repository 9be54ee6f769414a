import math

import numpy as np
import pytest
from scipy import stats

from qrngstats.metrics import shannon_entropy_closed
from qrngstats.photon_models import timebin_pmf
from qrngstats.qrng_sim import QrngParams, iter_pmf_symbol_chunks, symbols_to_bits
from qrngstats.randomness_tests import (
    battery_reports,
    battery_trend,
    block_frequency,
    ent_battery,
    monobit,
    run_battery,
    runs,
)
from qrngstats.seeding import make_rng


def _uniform_bits(seed, n):
    return make_rng(seed).integers(0, 2, n, dtype=np.uint8)


def test_ent_all_zero():
    r = ent_battery(bytes(1000))
    assert r["entropy"].statistic == 0 and r["mean"].statistic == 0
    assert r["serial_correlation"].statistic == 0 and r["serial_correlation"].note
    assert not r["serial_correlation"].passed


def test_ent_too_short():
    with pytest.raises(ValueError):
        ent_battery(b"\x01\x02")


def test_ent_uniform_bytes_pass():
    data = make_rng(1).integers(0, 256, 2_000_000, dtype=np.uint8)
    r = ent_battery(data)
    assert r.pass_count == 5
    assert r["monte_carlo_pi"].statistic == pytest.approx(math.pi, rel=3 * 1.64 / math.sqrt(2e6 / 6))


def test_ent_statistics_against_independent_formulas():
    data = make_rng(2).integers(0, 256, 60_000, dtype=np.uint8)
    r = ent_battery(data)
    counts = np.bincount(data, minlength=256)
    assert r["entropy"].statistic == pytest.approx(stats.entropy(counts, base=2), abs=1e-12)
    assert r["chi_square"].statistic == pytest.approx(stats.chisquare(counts).statistic)
    assert r["chi_square"].pvalue == pytest.approx(stats.chisquare(counts).pvalue, rel=1e-8)
    x = data.astype(float)
    ref_corr = np.corrcoef(x, np.roll(x, -1))[0, 1]
    assert r["serial_correlation"].statistic == pytest.approx(ref_corr, abs=1e-4)
    # pi: 24-bit big-endian coordinates from consecutive 6-byte groups
    g = data[: len(data) // 6 * 6].reshape(-1, 6).astype(np.int64)
    xs = (g[:, 0] << 16) | (g[:, 1] << 8) | g[:, 2]
    ys = (g[:, 3] << 16) | (g[:, 4] << 8) | g[:, 5]
    inside = np.sum(xs * xs + ys * ys <= (2**24 - 1) ** 2)
    assert r["monte_carlo_pi"].statistic == 4 * inside / len(g)


def test_ent_entropy_on_exact_frequencies():
    # byte frequencies proportional to the pmf give the closed-form entropy
    probs = timebin_pmf(256, 0.3).probs
    p = probs / probs.sum()
    assert -np.sum(p * np.log2(p)) == pytest.approx(shannon_entropy_closed(0.3, 256), abs=1e-9)


def test_ent_entropy_from_simulated_stream():
    p = QrngParams.from_load(0.05, N=256, seed=3)
    symbols = np.concatenate(list(iter_pmf_symbol_chunks(p, 10**7)))
    h = ent_battery(symbols.astype(np.uint8))["entropy"].statistic
    assert abs(h - shannon_entropy_closed(0.05, 256)) < 1e-3


def test_relative_deviation_definition():
    r = ent_battery(make_rng(5).integers(0, 256, 10_000, dtype=np.uint8))
    m = r["mean"]
    assert m.relative_deviation == pytest.approx(abs(127.5 - m.statistic) / 127.5)
    s = r["serial_correlation"]
    assert s.relative_deviation == abs(s.statistic)


def test_alternating_bits():
    bits = np.tile([0, 1], 5000)
    assert monobit(bits) == pytest.approx(1.0)
    assert runs(bits) < 1e-10


def test_nist_reference_example():
    # the 100-bit worked example (epsilon = binary expansion of e) of the NIST runs and frequency tests
    eps = ("11001001000011111101101010100010001000010110100011"
           "00001000110100110001001100011001100010100010111000")
    bits = np.array([int(c) for c in eps])
    assert monobit(bits) == pytest.approx(0.109599, abs=1e-6)
    assert block_frequency(bits, 10) == pytest.approx(0.706438, abs=1e-6)
    assert runs(bits) == pytest.approx(0.500798, abs=1e-6)


def test_runs_precondition():
    bits = np.r_[np.ones(700), np.zeros(300)].astype(int)
    assert runs(bits) == 0.0


def test_length_checks():
    for fn in (monobit, runs, block_frequency):
        with pytest.raises(ValueError):
            fn(np.zeros(50, dtype=int))
    with pytest.raises(ValueError):
        monobit(np.array([0, 2] * 100))


def test_null_pass_rate():
    ok = 0
    for seed in range(100):
        bits = _uniform_bits(seed, 10**6)
        ok += min(monobit(bits), block_frequency(bits), runs(bits)) >= 0.01
    assert ok >= 95


def test_null_rejection_rate_near_one_percent():
    rejections = np.zeros(3)
    trials = 1000
    for seed in range(trials):
        bits = _uniform_bits(10_000 + seed, 10**5)
        rejections += [monobit(bits) < 0.01, block_frequency(bits) < 0.01, runs(bits) < 0.01]
    rate = rejections / trials
    assert np.all(np.abs(rate - 0.01) <= 0.01)


def test_monobit_fails_at_high_load():
    p = QrngParams.from_load(0.4, N=256, seed=4)
    symbols = np.concatenate(list(iter_pmf_symbol_chunks(p, 125_000)))
    assert monobit(symbols_to_bits(symbols, 256).unpacked()) < 0.01
    msb_zero = np.mean(symbols < 128)
    expected = 1 / (1 + math.exp(-0.2))
    assert abs(msb_zero - expected) < 3 * math.sqrt(expected * (1 - expected) / symbols.size)


def test_run_battery_layout():
    data = make_rng(8).integers(0, 256, 10_000, dtype=np.uint8).tobytes()
    r = run_battery(data)
    assert r.names() == ["entropy", "chi_square", "mean", "monte_carlo_pi", "serial_correlation",
                         "monobit", "block_frequency", "runs"]
    d = r.to_dict()
    assert d["pass_count"] == r.pass_count and len(d["records"]) == 8
    for rec in r.records:
        if rec.pvalue is not None:
            assert rec.passed == (rec.pvalue >= 0.01)


def test_battery_trend_near_uniform_and_degrading():
    counts = battery_trend([1e-6, 0.05, 0.4], n_bits=10_000_000, seed=1)
    assert counts[0] == 8
    assert counts[1] >= counts[2]
    reports = battery_reports([1e-6, 0.4], n_bits=800_000, seed=1)
    assert reports[1]["monobit"].passed is False
    with pytest.raises(ValueError):
        battery_trend([0.1])
