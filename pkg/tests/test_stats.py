"""Statistics tests: hand-checked oracles plus cross-checks against scipy."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from opdsim.engine import StrategyConfig, run_experiment
from opdsim.errors import ValidationError
from opdsim.stats import (
    METRIC_FIELDS,
    betainc_regularized,
    cohen_d,
    p95,
    summarize_runs,
    summary_table,
    t_cdf,
    t_sf_two_sided,
    welch_t,
    wilson_ci,
)

# Hand-worked Welch case: {1..5} vs {2..6}.  Equal variances (2.5), equal
# sizes, mean gap -1, so t = -1/sqrt(2*2.5/5) = -1 and the Welch df formula
# collapses to n_a + n_b - 2 = 8.  p and d evaluated once and frozen.
WELCH_A = [1.0, 2.0, 3.0, 4.0, 5.0]
WELCH_B = [2.0, 3.0, 4.0, 5.0, 6.0]
WELCH_T = -1.0
WELCH_DF = 8.0
WELCH_P = 0.34659
WELCH_D = -0.63246


def test_welch_hand_case():
    res = welch_t(WELCH_A, WELCH_B)
    assert res.mean_a == 3.0 and res.mean_b == 4.0
    assert abs(res.t_stat - WELCH_T) < 1e-12
    assert abs(res.df - WELCH_DF) < 1e-12
    assert abs(res.p_value - WELCH_P) < 5e-6
    assert abs(res.cohen_d - WELCH_D) < 5e-6
    assert not res.degenerate


def test_welch_matches_scipy():
    rng = np.random.default_rng(123)
    for na, nb, shift, scale in [(30, 30, 0.0, 1.0), (12, 40, 1.5, 3.0), (5, 7, -2.0, 0.4)]:
        a = rng.normal(0.0, 1.0, na)
        b = rng.normal(shift, scale, nb)
        ours = welch_t(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert abs(ours.t_stat - ref.statistic) < 1e-10
        assert abs(ours.p_value - ref.pvalue) < 1e-10
        if hasattr(ref, "df"):
            assert abs(ours.df - ref.df) < 1e-10


def test_welch_antisymmetric():
    fwd = welch_t(WELCH_A, WELCH_B)
    rev = welch_t(WELCH_B, WELCH_A)
    assert fwd.t_stat == -rev.t_stat
    assert fwd.p_value == rev.p_value
    assert fwd.cohen_d == -rev.cohen_d
    assert fwd.df == rev.df


def test_welch_degenerate_groups():
    same = welch_t([5.0, 5.0, 5.0], [5.0, 5.0, 5.0])
    assert same.degenerate
    assert same.t_stat == 0.0 and same.p_value == 1.0

    apart = welch_t([5.0, 5.0, 5.0], [6.0, 6.0, 6.0])
    assert apart.degenerate
    assert math.isinf(apart.t_stat) and apart.t_stat < 0
    assert apart.p_value == 0.0


def test_welch_needs_two_per_group():
    with pytest.raises(ValidationError):
        welch_t([1.0], [2.0, 3.0])
    with pytest.raises(ValidationError):
        cohen_d([1.0, 2.0], [3.0])


def test_cohen_d_zero_pooled_variance():
    assert cohen_d([2.0, 2.0], [2.0, 2.0]) == 0.0
    assert math.isinf(cohen_d([3.0, 3.0], [2.0, 2.0]))


# ------------------------------------------------------------ t distribution


def test_t_cdf_published_critical_values():
    # Two-sided 95% critical values from standard t tables (3 decimals).
    for t_crit, df in [(2.776, 4), (2.228, 10), (2.042, 30)]:
        assert abs(t_cdf(t_crit, df) - 0.975) < 2e-4
    # One-sided 95%.
    for t_crit, df in [(2.132, 4), (1.812, 10)]:
        assert abs(t_cdf(t_crit, df) - 0.95) < 2e-4
    assert t_cdf(0.0, 7) == 0.5
    assert t_cdf(math.inf, 3) == 1.0
    assert t_cdf(-math.inf, 3) == 0.0


def test_t_cdf_matches_scipy_on_grid():
    for df in (1.0, 2.5, 4.0, 8.0, 17.3, 58.0):
        for t in (-6.0, -2.2, -0.7, 0.0, 0.4, 1.9, 3.3, 7.5):
            assert abs(t_cdf(t, df) - scipy.stats.t.cdf(t, df)) < 1e-10


def test_t_cdf_rejects_bad_df():
    with pytest.raises(ValidationError):
        t_cdf(1.0, 0.0)


def test_two_sided_p_symmetry():
    assert t_sf_two_sided(2.0, 9) == t_sf_two_sided(-2.0, 9)
    assert abs(t_sf_two_sided(0.0, 9) - 1.0) < 1e-12


def test_betainc_matches_scipy_on_grid():
    for a in (0.5, 1.0, 2.5, 10.0):
        for b in (0.5, 1.0, 3.0):
            for x in (0.0, 0.05, 0.31, 0.5, 0.77, 0.99, 1.0):
                ours = betainc_regularized(a, b, x)
                ref = float(scipy.special.betainc(a, b, x))
                assert abs(ours - ref) < 1e-10


# ------------------------------------------------------------ Wilson interval


def test_wilson_118_of_120():
    ci = wilson_ci(118, 120)
    assert round(ci.low * 100, 2) == 94.13
    assert round(ci.high * 100, 2) == 99.54


def test_wilson_173_of_368():
    ci = wilson_ci(173, 368)
    assert round(ci.low * 100, 2) == 41.97
    assert round(ci.high * 100, 2) == 52.11


def test_wilson_edge_cases():
    zero = wilson_ci(0, 10)
    assert zero.low == 0.0 and zero.p_hat == 0.0 and zero.high > 0.0
    full = wilson_ci(10, 10)
    assert full.high == pytest.approx(1.0) and full.high <= 1.0
    assert full.low < 1.0


def test_wilson_width_shrinks_with_n():
    narrow = wilson_ci(500, 1000)
    wide = wilson_ci(50, 100)
    assert (narrow.high - narrow.low) < (wide.high - wide.low)


def test_wilson_validates_inputs():
    with pytest.raises(ValidationError):
        wilson_ci(1, 0)
    with pytest.raises(ValidationError):
        wilson_ci(-1, 10)
    with pytest.raises(ValidationError):
        wilson_ci(11, 10)


# ------------------------------------------------------------ percentiles


def test_p95_linear_interpolation():
    assert abs(p95(range(1, 101)) - 95.05) < 1e-12
    assert p95([7.0]) == 7.0
    with pytest.raises(ValidationError):
        p95([])


# ------------------------------------------------------------ summaries


def test_summarize_runs_across_sessions(dataset42):
    patients, history = dataset42
    cfg = StrategyConfig(strategy="agentic")
    runs = [r.metrics for r in run_experiment(patients, history, cfg, n_runs=3, base_seed=50)]
    summary = summarize_runs(runs)
    for name in METRIC_FIELDS:
        assert name in summary
        assert summary[name].n == 3
    for level in ("critical", "high", "medium", "low"):
        assert f"composition_{level}" in summary
        assert f"wait_eff_{level}" in summary
    comp_total = sum(summary[f"composition_{lv}"].mean for lv in ("critical", "high", "medium", "low"))
    assert abs(comp_total - 368.0) < 1e-9
    # Order of runs must not matter (up to float summation order).
    again = summarize_runs(list(reversed(runs)))
    assert set(again) == set(summary)
    for name, s in summary.items():
        assert again[name].mean == pytest.approx(s.mean, rel=1e-12)
        assert again[name].std == pytest.approx(s.std, rel=1e-12)
        assert again[name].n == s.n


def test_summarize_runs_rejects_empty():
    with pytest.raises(ValidationError):
        summarize_runs([])


def test_summary_table_renders_markdown(dataset42):
    patients, history = dataset42
    runs = {
        arm: summarize_runs(
            [r.metrics for r in run_experiment(
                patients, history, StrategyConfig(strategy=arm), n_runs=2, base_seed=50)]
        )
        for arm in ("fcfs", "agentic")
    }
    table = summary_table(runs, fields=["avg_wait", "escalation_count"])
    lines = table.splitlines()
    assert lines[0] == "| metric | fcfs | agentic |"
    assert lines[1].startswith("|---")
    assert len(lines) == 4
    assert lines[2].startswith("| avg_wait |")
    assert "±" in lines[2]
