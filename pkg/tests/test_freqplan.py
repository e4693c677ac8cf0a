import numpy as np
import pytest
from scipy import stats

from nbfi.core import PALETTE, ConstraintViolation
from nbfi.freqplan import (
    FreqDiffDist,
    SubbandPlan,
    guard_halfwidth,
    sample_center_frequency,
    sample_pair_gaps,
    ul_center_frequency,
    ul_gain,
    ul_offset,
)

B = 51_200.0
PAIRS = [(a, b) for a in PALETTE for b in PALETTE]


def test_subband_plan():
    plan = SubbandPlan(868.8e6, w_ul=3, o_ul=-2)
    assert plan.b_ul == 51200
    assert plan.center == 868.8e6 - 2 * 51200
    with pytest.raises(ConstraintViolation):
        SubbandPlan(0, w_ul=8)
    with pytest.raises(ConstraintViolation):
        SubbandPlan(0, o_ul=64)


def test_gain_and_offset():
    assert ul_gain(50, B) == (B - 100 - 2000) / 2
    assert ul_gain(25600, B) == 0.0
    g = ul_gain(400, B)
    assert ul_offset(400, B, 1, 255) == pytest.approx(g)
    assert ul_offset(400, B, 0, 255) == pytest.approx(-g)
    assert ul_offset(400, B, 1, 0) == 0.0


def test_center_frequency_uses_low_byte():
    plan = SubbandPlan(868.8e6)
    f1 = ul_center_frequency(plan, PALETTE[0], 1, 10, 0x123405)
    f2 = ul_center_frequency(plan, PALETTE[0], 1, 10, 0x000005)
    assert f1 == f2


@pytest.mark.parametrize("c", PALETTE, ids=lambda c: f"BN{c.bn}")
def test_samples_stay_in_band(c, rng):
    w = guard_halfwidth(c)
    for variant in ("initial", "retry"):
        f = sample_center_frequency(c, B, variant, rng, 1000)
        if 2 * w >= B:
            assert np.all(f == B / 2)
        else:
            assert f.min() >= w - 1e-9 and f.max() <= B - w + 1e-9


def test_wide_classification():
    kinds = {(a.bn, b.bn): FreqDiffDist.for_pair(a, b, B).case_id for a, b in PAIRS}
    assert kinds[(4, 4)] == 1
    assert kinds[(1, 4)] == 2
    assert kinds[(4, 1)] == 3
    assert kinds[(1, 3)] == 4


@pytest.mark.parametrize("a,b", PAIRS, ids=lambda c: f"BN{c.bn}")
@pytest.mark.parametrize("variant", ["initial", "retry"])
def test_cdf_monotone_and_bounded(a, b, variant):
    d = FreqDiffDist.for_pair(a, b, B, variant)
    x = np.linspace(-10, B, 2001)
    F = d.cdf(x)
    assert np.all(np.diff(F) >= -1e-15)
    assert F[0] == 0.0 and F[-1] == pytest.approx(1.0)
    if d.case_id != 1:
        assert d.cdf(d.support_max) == pytest.approx(1.0)


@pytest.mark.parametrize("a,b", [(PALETTE[0], PALETTE[2]), (PALETTE[1], PALETTE[1])], ids=["1-3", "2-2"])
@pytest.mark.parametrize("variant", ["initial", "retry"])
def test_pdf_integrates_to_cdf(a, b, variant):
    d = FreqDiffDist.for_pair(a, b, B, variant)
    x = np.linspace(0, d.support_max, 40001)
    F = np.concatenate([[0], np.cumsum(0.5 * (d.pdf(x[1:]) + d.pdf(x[:-1])) * np.diff(x))])
    assert np.max(np.abs(F - d.cdf(x))) < 1e-6


@pytest.mark.parametrize("a,b", PAIRS[::5], ids=lambda c: f"BN{c.bn}")
@pytest.mark.parametrize("variant", ["initial", "retry"])
def test_cdf_against_sampling(a, b, variant, rng):
    d = FreqDiffDist.for_pair(a, b, B, variant)
    gaps = sample_pair_gaps(d, 200_000, rng)
    if d.case_id == 1:
        assert np.all(gaps == 0)
        return
    ks = stats.kstest(gaps, d.cdf).statistic
    assert ks < 0.006
