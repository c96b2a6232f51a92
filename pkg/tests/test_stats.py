import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitmood import stats
from gaitmood.errors import DataError, DegenerateDataError, ParseError
from gaitmood.stats import (
    GroupedSample,
    PairedSample,
    one_way_anova,
    paired_t_test,
    wilcoxon_signed_rank,
)


def paired_from_diffs(diffs):
    diffs = np.asarray(diffs, dtype=float)
    return PairedSample(np.zeros_like(diffs), diffs)


# ---------------------------------------------------------------------------
# paired t-test


def test_t_zero_variance_is_degenerate():
    with pytest.raises(DegenerateDataError):
        paired_t_test(PairedSample([10.0, 12.0, 14.0], [10.0, 12.0, 14.0]))


def test_t_symmetric_differences():
    r = paired_t_test(paired_from_diffs([1.0, -1.0, 1.0, -1.0]))
    assert r.t == 0.0
    assert r.p == 1.0
    assert r.df == 3


def test_t_hand_computed_example():
    # d = [2, 2, 2, 3]: mean 2.25, sample sd 0.5, t = 2.25 / (0.5 / 2) = 9
    # p frozen from the closed-form df=3 CDF evaluated at 40 digits
    r = paired_t_test(paired_from_diffs([2.0, 2.0, 2.0, 3.0]))
    assert r.t == pytest.approx(9.0, abs=1e-12)
    assert r.df == 3
    assert r.p == pytest.approx(0.00289581216186, abs=1e-9)


@given(
    diffs=st.lists(st.floats(-20, 20, allow_nan=False), min_size=3, max_size=25),
)
@settings(max_examples=60, deadline=None)
def test_t_antisymmetry(diffs):
    diffs = np.asarray(diffs)
    if diffs.std(ddof=1) == 0:
        return
    pre = np.zeros_like(diffs)
    forward = paired_t_test(PairedSample(pre, diffs))
    backward = paired_t_test(PairedSample(diffs, pre))
    assert backward.t == pytest.approx(-forward.t, rel=1e-12, abs=1e-12)
    assert backward.p == pytest.approx(forward.p, rel=1e-12, abs=1e-12)
    assert 0.0 < forward.p <= 1.0


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


def test_wilcoxon_antisymmetric_differences():
    r = wilcoxon_signed_rank(paired_from_diffs([3.0, -3.0, 1.0, -1.0]))
    assert r.z == 0.0
    assert r.p == 1.0


def test_wilcoxon_hand_computed_example():
    # d = [1..5]: W+ = 15, mean = 7.5, var = 13.75, Z = 7.5 / sqrt(13.75)
    r = wilcoxon_signed_rank(paired_from_diffs([1.0, 2.0, 3.0, 4.0, 5.0]))
    assert r.z == pytest.approx(2.0225995873897262, abs=1e-9)
    assert r.p == pytest.approx(0.0431144467831, abs=1e-9)
    assert r.n_nonzero == 5


def test_wilcoxon_sign_flip_negates_z():
    d = [1.0, 2.5, -0.5, 4.0, 3.0, -2.0]
    forward = wilcoxon_signed_rank(paired_from_diffs(d))
    backward = wilcoxon_signed_rank(paired_from_diffs([-v for v in d]))
    assert backward.z == pytest.approx(-forward.z, abs=1e-12)
    assert backward.p == pytest.approx(forward.p, abs=1e-12)


def test_wilcoxon_drops_zero_differences():
    r = wilcoxon_signed_rank(paired_from_diffs([0.0, 0.0, 1.0, 2.0, 3.0]))
    assert r.n_nonzero == 3


def test_wilcoxon_all_zero_is_degenerate():
    with pytest.raises(DegenerateDataError):
        wilcoxon_signed_rank(paired_from_diffs([0.0, 0.0, 0.0]))


def test_wilcoxon_ties_get_midranks():
    # |d| = [1, 1, 2, 2]: ranks 1.5, 1.5, 3.5, 3.5; positives carry 1.5 + 3.5
    r = wilcoxon_signed_rank(paired_from_diffs([1.0, -1.0, 2.0, -2.0]))
    assert r.z == 0.0


# ---------------------------------------------------------------------------
# one-way ANOVA


def test_anova_identical_group_means():
    r = one_way_anova(GroupedSample((np.array([1.0, 2, 3]), np.array([1.0, 2, 3]))))
    assert r.f == 0.0
    assert r.p == 1.0


def test_anova_hand_computed_example():
    # SSB = 6, SSW = 6, F = (6/2) / (6/6) = 3, p = (1 + 2*3/6)^(-3) = 0.125 exactly
    r = one_way_anova(
        GroupedSample((np.array([1.0, 2, 3]), np.array([2.0, 3, 4]), np.array([3.0, 4, 5])))
    )
    assert r.f == pytest.approx(3.0, abs=1e-12)
    assert (r.df_between, r.df_within) == (2, 6)
    assert r.p == pytest.approx(0.125, abs=1e-12)


def test_anova_all_identical_is_degenerate():
    with pytest.raises(DegenerateDataError):
        one_way_anova(GroupedSample((np.array([2.0, 2.0]), np.array([2.0, 2.0]))))


def test_anova_needs_more_observations_than_groups():
    with pytest.raises(DataError):
        one_way_anova(GroupedSample((np.array([1.0]), np.array([2.0]))))


@given(
    shift=st.floats(-100, 100, allow_nan=False),
    scale=st.floats(0.01, 50),
)
@settings(max_examples=40, deadline=None)
def test_anova_shift_and_scale_invariance(shift, scale):
    rng = np.random.default_rng(3)
    groups = tuple(rng.normal(loc=i, size=8) for i in range(3))
    base = one_way_anova(GroupedSample(groups))
    shifted = one_way_anova(GroupedSample(tuple(g + shift for g in groups)))
    scaled = one_way_anova(GroupedSample(tuple(g * scale for g in groups)))
    assert shifted.f == pytest.approx(base.f, rel=1e-9, abs=1e-9)
    assert scaled.f == pytest.approx(base.f, rel=1e-9, abs=1e-9)
    assert 0.0 < base.p <= 1.0


# ---------------------------------------------------------------------------
# Monte-Carlo cross-checks of the CDF evaluations (fixed seeds)


def test_t_cdf_matches_monte_carlo():
    r = paired_t_test(paired_from_diffs([2.0, 2.0, 2.0, 3.0]))
    rng = np.random.default_rng(2024)
    draws = rng.standard_t(df=3, size=1_000_000)
    p_mc = float(np.mean(np.abs(draws) >= abs(r.t)))
    se = np.sqrt(p_mc * (1 - p_mc) / 1_000_000)
    assert abs(r.p - p_mc) <= 3 * se + 1e-12


def test_normal_cdf_matches_monte_carlo():
    r = wilcoxon_signed_rank(paired_from_diffs([1.0, 2.0, 3.0, 4.0, 5.0]))
    rng = np.random.default_rng(2025)
    draws = rng.standard_normal(1_000_000)
    p_mc = float(np.mean(np.abs(draws) >= abs(r.z)))
    se = np.sqrt(p_mc * (1 - p_mc) / 1_000_000)
    assert abs(r.p - p_mc) <= 3 * se


def test_f_cdf_matches_monte_carlo():
    r = one_way_anova(
        GroupedSample((np.array([1.0, 2, 3]), np.array([2.0, 3, 4]), np.array([3.0, 4, 5])))
    )
    rng = np.random.default_rng(2026)
    draws = rng.f(dfnum=2, dfden=6, size=1_000_000)
    p_mc = float(np.mean(draws >= r.f))
    se = np.sqrt(p_mc * (1 - p_mc) / 1_000_000)
    assert abs(r.p - p_mc) <= 3 * se


# ---------------------------------------------------------------------------
# CSV inputs and report assembly


PANAS = """participant,condition,emotion,phase,positive_affect,negative_affect
p1,1,sad,pre,25,19
p1,1,sad,post,26,15
p2,1,sad,pre,30,22
p2,1,sad,post,28,14
p3,1,sad,pre,27,18
p3,1,sad,post,27,13
p1,1,happy,pre,28,12
p1,1,happy,post,31,11
p2,1,happy,pre,22,13
p2,1,happy,post,27,12
p3,1,happy,pre,25,14
p3,1,happy,post,28,12
"""

HR = """participant,condition,emotion,mean_bpm
p1,1,happy,104.2
p1,1,sad,91.0
p1,1,neutral,106.1
p2,1,happy,100.5
p2,1,sad,95.2
p2,1,neutral,103.3
p3,1,happy,108.9
p3,1,sad,89.4
p3,1,neutral,101.0
"""


def test_load_panas_and_report(tmp_path):
    path = tmp_path / "panas.csv"
    path.write_text(PANAS)
    rows = stats.load_panas_csv(path)
    assert len(rows) == 12
    report = stats.panas_report(rows)
    sad = report["1"]["sad"]["negative_affect"]
    assert sad["n"] == 3
    assert sad["pre_mean"] == pytest.approx(np.mean([19, 22, 18]))
    assert "t" in sad["t_test"] and "p" in sad["t_test"]
    assert sad["t_test"]["t"] < 0  # negative affect decreased
    assert "z" in sad["wilcoxon"]


def test_panas_rejects_bad_phase(tmp_path):
    path = tmp_path / "panas.csv"
    path.write_text("participant,condition,emotion,phase,positive_affect,negative_affect\np1,1,sad,mid,20,20\n")
    with pytest.raises(ParseError):
        stats.load_panas_csv(path)


def test_heart_rate_report(tmp_path):
    path = tmp_path / "hr.csv"
    path.write_text(HR)
    rows = stats.load_hr_summary_csv(path)
    doc = stats.heart_rate_report(rows)
    assert set(doc["emotions"]) == {"happy", "neutral", "sad"}
    assert doc["emotions"]["happy"]["n"] == 3
    anova = doc["anova"]
    assert anova["df_between"] == 2
    assert anova["df_within"] == 6
    assert 0 < anova["p"] <= 1
