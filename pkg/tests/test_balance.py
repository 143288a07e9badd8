from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import table3
from thermopinn.balance import (
    UNIT, BalanceCoefficients, ClassStats, SearchGrid, apply_balance, calibrate,
    collect_initial_stats, edge_aligned, iou, read_coefficients, scaled_range, write_report,
)
from thermopinn.collocation import build_grid
from thermopinn.physics import C1, C2, C3, TERM_IDS


def interval_iou(a, b):
    """Exact rational intersection/hull ratio."""
    a0, a1, b0, b1 = (Fraction(v) for v in (*a, *b))
    inter = max(Fraction(0), min(a1, b1) - max(a0, b0))
    return float(inter / (max(a1, b1) - min(a0, b0)))


def test_iou_examples():
    assert iou((1, 3), (1, 3)) == 1.0
    assert iou((0, 1), (2, 3)) == 0.0
    val = iou((62.4, 142), (1.84, 139.5))
    assert val == pytest.approx(interval_iou((62.4, 142), (1.84, 139.5)), rel=1e-14)
    assert val == pytest.approx(77.1 / 140.16, rel=1e-12)
    assert round(val, 3) == 0.550
    with pytest.raises(ValueError):
        iou((2, 1), (0, 1))


ranges = st.tuples(st.floats(0, 1e6), st.floats(0, 1e6)).map(sorted)


@settings(max_examples=200, deadline=None)
@given(a=ranges, b=ranges)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == 1.0
    if a[1] > a[0] or b[1] > b[0]:
        assert v == pytest.approx(interval_iou(a, b), rel=1e-12, abs=1e-15)


def test_scaled_range_examples():
    s = table3.stats()
    assert scaled_range(s, C1, 1.0) == table3.RANGES[C1]
    assert scaled_range(s, C1, 0.0) == (0.0, 0.0)
    lo, hi = scaled_range(s, C1, 1e-2)
    assert (lo, hi) == pytest.approx((62.4, 142.0), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(k=st.floats(1e-9, 1e3))
def test_scaled_range_homogeneity(k):
    s = table3.stats()
    for c in (C1, C2, C3):
        lo, hi = scaled_range(s, c, k)
        lo1, hi1 = scaled_range(s, c, 1.0)
        assert (lo, hi) == pytest.approx((k * k * lo1, k * k * hi1), rel=1e-14)


def test_table3_calibration_matches_edge_alignment():
    s = table3.stats()
    beta_cf, gamma_cf = edge_aligned(s)
    assert beta_cf == pytest.approx(1.28e-4, rel=5e-3)
    assert gamma_cf == pytest.approx(4.76e-8, rel=5e-3)
    cal = calibrate(s)
    step = SearchGrid().step_ratio
    for found, closed in ((cal.coeffs.beta, beta_cf), (cal.coeffs.gamma, gamma_cf)):
        assert 1 / step <= found / closed <= step
    # the published values lie within 1% of the closed form
    assert abs(cal.coeffs.beta / 1.27e-4 - 1) < 0.01
    assert abs(cal.coeffs.gamma / 4.72e-8 - 1) < 0.01
    assert cal.coeffs.alpha == 1e-2


def test_table3_upper_edges_align():
    s = table3.stats()
    cal = calibrate(s)
    top1 = scaled_range(s, C1, cal.coeffs.alpha)[1]
    step2 = SearchGrid().step_ratio ** 2
    assert 1 / step2 <= scaled_range(s, C2, cal.coeffs.beta)[1] / top1 <= step2
    assert 1 / step2 <= scaled_range(s, C3, cal.coeffs.gamma)[1] / top1 <= step2


def test_degenerate_balanced_stats():
    s = ClassStats.from_term_means({t: 5.0 for t in TERM_IDS})
    cal = calibrate(s)
    assert cal.coeffs.beta == pytest.approx(1e-2, rel=1e-12)
    assert cal.coeffs.gamma == pytest.approx(1e-2, rel=1e-12)


def test_all_zero_stats_rejected():
    with pytest.raises(ValueError, match="zero"):
        calibrate(ClassStats.from_term_means({t: 0.0 for t in TERM_IDS}))


def test_ties_prefer_larger_coefficient():
    # a zero-width C2 range never overlaps the wide C1 target: every candidate
    # scores 0, and the tie goes to the top of the search range
    means = {t: 1.0 for t in TERM_IDS}
    means["o_shl"] = 4.0
    cal = calibrate(ClassStats.from_term_means(means), alpha=1.0)
    assert cal.iou12 == 0.0
    assert cal.coeffs.beta == 1.0


def test_apply_balance_examples():
    assert apply_balance("r_shl", 7.5, UNIT) == 7.5
    c = BalanceCoefficients(1e-2, 1.27e-4, 4.72e-8)
    assert apply_balance("r_msr", 1e8, c) == pytest.approx(4.72, rel=1e-14)
    assert apply_balance("o_lin", -310.15, c) == pytest.approx(-3.1015, rel=1e-14)
    with pytest.raises(ValueError):
        BalanceCoefficients(-1.0, 1.0, 1.0)


def test_collect_stats_equal_seeds_identical(env):
    g = build_grid(env, (5, 6, 10, 12))
    s = collect_initial_stats(env, g, seeds=(4, 4))
    assert s.runs[0].tobytes() == s.runs[1].tobytes()
    assert np.all(s.runs.var(axis=0) == 0)
    with pytest.raises(ValueError):
        collect_initial_stats(env, g, n_exp=1)


def test_report_roundtrip(tmp_path):
    s = table3.stats()
    cal = calibrate(s)
    p = write_report(s, cal, tmp_path / "r.csv", "abc")
    assert p.read_text().startswith("# manifest abc\n")
    assert read_coefficients(p) == cal.coeffs
