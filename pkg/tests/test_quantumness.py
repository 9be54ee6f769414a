import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qrngstats.photon_models import (
    AlphaPoisson,
    BoseEinstein,
    Geometric,
    NormalCounts,
    Poisson,
    RegularSource,
    sample_counts,
)
from qrngstats.quantumness import (
    FinalVerdict,
    Phase1Method,
    Verdict,
    calibrate_direct_tolerance,
    chi2_from_cells,
    direct_comparison,
    dispersion_index,
    phase1_dispersion_tests,
    phase1_mean_interval,
    phase1_variance_interval,
    phase2_poisson_gof,
    poisson_gof_cells,
    run_phase1,
    two_fold,
)
from qrngstats.seeding import chunk_seed
from qrngstats.stats_core import SampleSummary, normal_quantile, summarize

INTERVAL = [phase1_mean_interval, phase1_variance_interval, phase1_dispersion_tests]


def _summary(n, mean, var):
    return SampleSummary(n=n, mean=mean, var_biased=var * (n - 1) / n, var_unbiased=var, m4=0.0)


def _rate(model, fn, runs=100, n=10**5, seed=0):
    hits = 0
    for i in range(runs):
        hits += fn(summarize(sample_counts(model, n, chunk_seed(seed, i))))
    return hits / runs


@pytest.mark.parametrize("phase1", INTERVAL)
def test_constant_sample_is_sub(phase1):
    s = summarize(sample_counts(RegularSource(10, 1), 2000, 0))
    assert phase1(s, 0.01) is Verdict.SUB_POISSONIAN


def test_all_zero_sample_raises():
    with pytest.raises(ValueError, match="degenerate"):
        phase1_dispersion_tests(summarize(np.zeros(100)), 0.01)


def test_mean_interval_equality_inside_band():
    assert phase1_mean_interval(_summary(10**5, 0.5, 0.5), 0.01) is Verdict.MEAN_VAR_CLOSE


def test_mean_interval_thresholds_exact():
    n, var = 10**5, 0.5
    s = math.sqrt(var)
    y = normal_quantile(0.01)
    edge = 1 + y / (s * math.sqrt(n))
    assert phase1_mean_interval(_summary(n, var * edge * (1 + 1e-9), var)) is Verdict.SUB_POISSONIAN
    assert phase1_mean_interval(_summary(n, var * edge * (1 - 1e-9), var)) is Verdict.MEAN_VAR_CLOSE
    low = 1 - y / (s * math.sqrt(n))
    assert phase1_mean_interval(_summary(n, var * low * (1 - 1e-9), var)) is Verdict.SUPER_POISSONIAN


def test_mean_interval_warns_on_small_n():
    with pytest.warns(UserWarning):
        phase1_mean_interval(_summary(100, 1.0, 1.0))


def test_variance_interval_thresholds_match_scipy():
    n, var = 5000, 2.0
    S2 = var * (n - 1) / n
    hi = n * S2 / stats.chi2.ppf(0.005, n - 1)  # mean above this -> sub
    lo = n * S2 / stats.chi2.ppf(0.995, n - 1)  # mean below this -> super
    assert phase1_variance_interval(_summary(n, hi * 1.0001, var)) is Verdict.SUB_POISSONIAN
    assert phase1_variance_interval(_summary(n, hi * 0.9999, var)) is Verdict.MEAN_VAR_CLOSE
    assert phase1_variance_interval(_summary(n, lo * 0.9999, var)) is Verdict.SUPER_POISSONIAN
    assert phase1_variance_interval(_summary(n, lo * 1.0001, var)) is Verdict.MEAN_VAR_CLOSE


def test_dispersion_orientation():
    n = 10**4
    assert dispersion_index(_summary(n, 2.0, 2.0)) == pytest.approx(n - 1)
    q_lo = stats.chi2.ppf(0.01, n - 1)
    q_hi = stats.chi2.ppf(0.99, n - 1)
    # a small index means variance below the mean
    assert phase1_dispersion_tests(_summary(n, 1.0, 0.99 * q_lo / (n - 1))) is Verdict.SUB_POISSONIAN
    assert phase1_dispersion_tests(_summary(n, 1.0, 1.01 * q_hi / (n - 1))) is Verdict.SUPER_POISSONIAN
    assert phase1_dispersion_tests(_summary(n, 1.0, 1.0)) is Verdict.MEAN_VAR_CLOSE


def test_direct_comparison_examples():
    assert direct_comparison(_summary(100, 2.0, 2.0)) is Verdict.MEAN_VAR_CLOSE
    assert direct_comparison(_summary(100, 10.0, 9.0), 0.01) is Verdict.SUB_POISSONIAN
    assert direct_comparison(_summary(100, 10.0, 11.0), 0.01) is Verdict.SUPER_POISSONIAN


def test_direct_comparison_rate_is_a_few_percent():
    rate = _rate(Poisson(0.5), lambda s: direct_comparison(s) is Verdict.MEAN_VAR_CLOSE, runs=400)
    assert 0.01 <= rate <= 0.09


def test_calibration_hits_target():
    sums = [summarize(sample_counts(Poisson(0.5), 10**4, i)) for i in range(200)]
    tol = calibrate_direct_tolerance(sums, 0.25)
    rate = np.mean([direct_comparison(s, tol) is Verdict.MEAN_VAR_CLOSE for s in sums])
    assert abs(rate - 0.25) <= 0.01


def test_variance_interval_poisson10_rate():
    rate = _rate(Poisson(10.0), lambda s: phase1_variance_interval(s) is Verdict.MEAN_VAR_CLOSE)
    assert rate >= 0.95


def test_variance_interval_bose_is_super():
    rate = _rate(BoseEinstein(3.0), lambda s: phase1_variance_interval(s) is Verdict.SUPER_POISSONIAN)
    assert rate >= 0.99


@pytest.mark.parametrize("phase1", INTERVAL, ids=lambda f: f.__name__)
def test_alpha_poisson_power(phase1):
    rate = _rate(AlphaPoisson(2.0, 4.0), lambda s: phase1(s) is Verdict.SUB_POISSONIAN, runs=200)
    assert rate >= 0.99


@settings(max_examples=200)
@given(
    st.integers(100, 10**6),
    st.floats(0.05, 50),
    st.floats(0.2, 5),
    st.floats(1e-4, 0.5),
    st.floats(1e-4, 0.5),
)
def test_wider_epsilon_never_reopens(n, mean, ratio, e1, e2):
    lo, hi = sorted((e1, e2))
    s = _summary(n, mean, mean / ratio)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for fn in INTERVAL:
            if fn(s, lo) is not Verdict.MEAN_VAR_CLOSE:
                assert fn(s, hi) is fn(s, lo)


def test_dispersion_order_invariant():
    x = sample_counts(Geometric(0.5), 5000, 1)
    y = np.random.default_rng(0).permutation(x)
    assert phase1_dispersion_tests(summarize(x)) is phase1_dispersion_tests(summarize(y))


def test_gof_exact_frequencies_give_zero():
    # observed set equal to the tabulated expectations, for several binnings
    for lam in (0.5, 2.0, 10.0):
        x = sample_counts(Poisson(lam), 10**4, 1)
        cells, _, exp = poisson_gof_cells(x, lam)
        assert chi2_from_cells(exp, exp) == 0.0
        assert cells[-1][1] is None


def test_gof_cells_respect_min_expectation():
    x = sample_counts(Poisson(0.5), 10**5, 3)
    cells, obs, exp = poisson_gof_cells(x, float(x.mean()))
    assert np.all(exp >= 5) and obs.sum() == x.size
    assert exp.sum() == pytest.approx(x.size, rel=1e-12)


def test_gof_matches_scipy_chisquare():
    x = sample_counts(Poisson(4.0), 20_000, 8)
    res = phase2_poisson_gof(x, 0.01, lambda_known=4.0)
    _, obs, exp = poisson_gof_cells(x, 4.0)
    ref = stats.chisquare(obs, exp)
    assert res.chi2 == pytest.approx(ref.statistic, rel=1e-10)
    assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-8)
    assert res.dof == len(res.cells) - 1
    assert phase2_poisson_gof(x, 0.01).dof == len(res.cells) - 2


def test_gof_rejects_geometric_and_normal():
    assert not phase2_poisson_gof(sample_counts(Geometric(0.5), 10**5, 1)).poisson
    assert not phase2_poisson_gof(sample_counts(NormalCounts(0.5, 0.5), 10**5, 1)).poisson


def test_gof_errors():
    with pytest.raises(ValueError, match="too small"):
        phase2_poisson_gof(np.ones(10))
    with pytest.raises(ValueError, match="too small"):
        phase2_poisson_gof(np.r_[np.zeros(60), 1])


def test_gof_poisson_accept_rate():
    rate = np.mean([phase2_poisson_gof(sample_counts(Poisson(0.5), 10**5, chunk_seed(5, i))).poisson
                    for i in range(100)])
    assert rate >= 0.95


def test_two_fold_regular_source():
    rep = two_fold(sample_counts(RegularSource(10, 1), 1000, 0))
    assert rep.final is FinalVerdict.SUB_POISSONIAN and not rep.phase2_ran
    assert rep.phase2_pvalue is None and rep.confidence == 0.99


def test_two_fold_report_fields():
    rep = two_fold(sample_counts(Poisson(10.0), 10**5, 2), phase1="var-interval")
    d = rep.to_dict()
    assert set(d) == {"phase1_method", "phase1_verdict", "phase2_ran", "phase2_chi2", "phase2_dof",
                      "phase2_pvalue", "final", "confidence"}
    assert d["phase2_ran"] == (d["phase1_verdict"] == "MeanVarClose")
    if rep.phase2_ran:
        assert 0 <= rep.phase2_pvalue <= 1


def test_two_fold_normal_dataset_flags_non_poisson():
    rep = two_fold(sample_counts(NormalCounts(0.5, 0.5), 10**5, 1))
    assert rep.phase1_verdict is Verdict.MEAN_VAR_CLOSE
    assert rep.final is FinalVerdict.NON_POISSON_EQUAL_MOMENTS


def test_method_parse():
    assert Phase1Method.parse("mean-interval") is Phase1Method.MEAN_INTERVAL
    assert Phase1Method.parse("Dispersion") is Phase1Method.DISPERSION
    with pytest.raises(ValueError):
        Phase1Method.parse("bayes")
    s = _summary(10**5, 0.5, 0.5)
    assert run_phase1(s, method="direct") is Verdict.MEAN_VAR_CLOSE
