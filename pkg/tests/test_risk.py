"""Closed-form risk measures.

Reference values were frozen from a 40-digit mpmath derivation of the
noise-tail algebra; everything else is checked against independent scipy
oracles (optimizer, Dirichlet sampler) or against internal identities the
formulas must satisfy (two-category specialization, homogeneous
specialization, zero-truncation factor).
"""

import math

import numpy as np
import pytest
from scipy import optimize

from conftest import make_homog_table, make_table, random_table
from hadr import (
    CellSizeModel,
    PrivacyParams,
    average_local_risk,
    evaluate_measure,
    expected_risk,
    expected_risk_k2,
    global_risk,
    global_risk_k2,
    global_risk_variant,
    homogeneous_risk,
    invert_epsilon,
    local_risk,
    noise_model,
    risk_curve,
    scenario8_peak_epsilon,
    shrinkage_risk,
    shrinkage_risk_k2,
)
from hadr.risk import MEASURES, curve_to_csv
from hadr.tabulation import CellRecord

LAP1 = PrivacyParams("laplace", 1.0)

# frozen at derivation time, 40 significant digits, rounded to 12
HOMOG_N10_K2_LAP1 = 0.696708594211
HOMOG_N10_K2_SIGMA1 = 0.691462461274
STAY_ABSENT_SQ_LAP1 = 0.48543920058
SECOND_TERM_11_LAP1 = 0.105647734782
PEAK_N3 = 0.462098120373


def test_homogeneous_frozen_laplace():
    t = make_table([(10, 0)])
    rv = homogeneous_risk(t, LAP1)
    assert rv.value == pytest.approx(HOMOG_N10_K2_LAP1, rel=1e-11)
    assert rv.scenario1 == rv.value and rv.scenario8 == 0.0


def test_homogeneous_frozen_gaussian_unit_sigma():
    # delta = 1 makes the pDP sigma 1/sqrt(2 eps); eps = 0.5 gives sigma = 1
    params = PrivacyParams("gaussian_pdp", 0.5, delta=1.0)
    assert params.scale == pytest.approx(1.0, rel=1e-14)
    rv = homogeneous_risk(make_table([(10, 0)]), params)
    assert rv.value == pytest.approx(HOMOG_N10_K2_SIGMA1, rel=1e-11)


def test_homogeneous_k3_saturates_to_absent_factor():
    # for huge n the stay-present factor is 1 at double precision, leaving
    # cdf(0.5)^(K-1)
    rv = homogeneous_risk(make_table([(300, 0, 0)]), LAP1)
    assert rv.value == pytest.approx(STAY_ABSENT_SQ_LAP1, rel=1e-11)


@pytest.mark.parametrize("k", [2, 3, 5])
@pytest.mark.parametrize("epsilon", [1e-4, 0.3, 1.0, 10.0])
def test_homogeneous_bounds(k, epsilon):
    t = make_homog_table([1, 2, 5, 17, 40], k=k)
    v = homogeneous_risk(t, PrivacyParams("laplace", epsilon)).value
    assert 2.0**-k < v < 1.0


def test_homogeneous_rejects_heterogeneous():
    t = make_table([(5, 0), (3, 1)])
    with pytest.raises(ValueError, match="heterogeneous"):
        homogeneous_risk(t, LAP1)


def test_homogeneous_floor_and_ceiling():
    # at eps = 1e-4 the n = 10 stay-present factor still carries
    # (n - 0.5) eps / 2 ~ 4.8e-4 above the 2^-K floor
    t = make_table([(10, 0)])
    assert homogeneous_risk(t, PrivacyParams("laplace", 1e-4)).value == pytest.approx(0.25, abs=1e-3)
    assert homogeneous_risk(t, PrivacyParams("laplace", 10.0)).value > 0.99
    t3 = make_table([(10, 0, 0)])
    assert homogeneous_risk(t3, PrivacyParams("laplace", 1e-4)).value == pytest.approx(0.125, abs=1e-3)


def test_expected_second_term_frozen():
    rv = expected_risk(make_table([(1, 1)]), LAP1)
    assert rv.scenario8 == pytest.approx(SECOND_TERM_11_LAP1, rel=1e-11)
    assert rv.value == pytest.approx(rv.scenario1 + rv.scenario8, abs=1e-15)


def test_expected_no_second_term_for_singletons():
    rv = expected_risk(make_table([(1, 0), (0, 1)]), LAP1)
    assert rv.scenario8 == 0.0


@pytest.mark.parametrize(
    "params",
    [
        PrivacyParams("laplace", 0.25),
        PrivacyParams("laplace", 3.0),
        PrivacyParams("gaussian_pdp", 0.7, delta=1e-5),
        PrivacyParams("gaussian_adp", 0.7, delta=1e-3),
    ],
    ids=["lap-lo", "lap-hi", "pdp", "adp"],
)
def test_expected_matches_k2_form(params, rng):
    for _ in range(30):
        t = random_table(rng, m=10, k=2, n_max=40)
        a = expected_risk(t, params)
        b = expected_risk_k2(t, params)
        assert abs(a.value - b.value) <= 1e-12
        assert abs(a.scenario1 - b.scenario1) <= 1e-12
        assert abs(a.scenario8 - b.scenario8) <= 1e-12


@pytest.mark.parametrize("k", [2, 3, 5])
def test_expected_specializes_to_homogeneous_exactly(k):
    t = make_homog_table([1, 2, 3, 7, 19, 40], k=k)
    for eps in np.geomspace(1e-3, 30.0, 12):
        params = PrivacyParams("laplace", float(eps))
        a = expected_risk(t, params)
        b = homogeneous_risk(t, params)
        assert a.value == b.value
        assert a.scenario1 == b.scenario1
        assert a.scenario8 == 0.0


def test_average_local_matches_homogeneous():
    t = make_homog_table([1, 4, 9], k=3)
    a = average_local_risk(t, LAP1)
    b = homogeneous_risk(t, LAP1)
    assert a.value == pytest.approx(b.value, rel=1e-13)
    assert a.scenario8 == 0.0


def test_local_risk_branches():
    hom = local_risk(CellRecord(key=("a",), counts=(0, 7)), LAP1)
    assert hom.exact and hom.scenario1 == hom.value and hom.scenario8 == 0.0
    het = local_risk([2, 3], LAP1)
    assert not het.exact and het.scenario8 == het.value and het.scenario1 == 0.0
    assert 0.0 < het.value < 1.0


def test_local_risk_validation():
    with pytest.raises(ValueError):
        local_risk([0, 0], LAP1)
    with pytest.raises(ValueError):
        local_risk([5], LAP1)
    with pytest.raises(ValueError):
        local_risk([3, -1], LAP1)


def test_local_risk_union_of_disjoint_collapses():
    # the event decomposes over which occupied category survives alone
    counts = np.array([2, 3, 4])
    nm = noise_model(LAP1)
    stay = nm.sf(0.5 - counts.astype(float))
    gone = nm.cdf(0.5 - counts.astype(float))
    expect = sum(stay[k] * np.prod(np.delete(gone, k)) for k in range(3))
    assert local_risk(counts, LAP1).value == pytest.approx(expect, rel=1e-14)


def test_monotone_in_epsilon():
    t = make_homog_table([1, 3, 8], k=2)
    grid = np.geomspace(1e-3, 50.0, 40)
    vals = [homogeneous_risk(t, PrivacyParams("laplace", float(e))).value for e in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    gvals = [
        homogeneous_risk(t, PrivacyParams("gaussian_pdp", float(e), delta=1e-5)).value
        for e in grid
    ]
    assert all(b > a for a, b in zip(gvals, gvals[1:]))


def test_components_sum_to_value(rng):
    t = random_table(rng, m=12, k=3, n_max=25)
    rv = expected_risk(t, LAP1)
    assert rv.value == pytest.approx(rv.scenario1 + rv.scenario8, abs=1e-12)


def test_presence_tail_thresholds():
    nm = noise_model(LAP1)
    assert nm.sf(0.5 - 2.0) == pytest.approx(0.888434, abs=1e-6)
    assert nm.sf(0.5 - 2.0) >= 0.888
    # the rounded thresholds overstate the exact values by under 5e-4
    assert nm.sf(0.5 - 3.0) >= 0.959 - 5e-4
    assert nm.sf(0.5 - 4.0) >= 0.985 - 5e-4


def test_scenario8_peak_frozen_and_oracle():
    assert scenario8_peak_epsilon(3) == pytest.approx(PEAK_N3, rel=1e-11)
    assert scenario8_peak_epsilon(3) == pytest.approx(math.log(2.0) / 1.5, rel=1e-15)
    for n in (3, 5, 12, 30):

        def neg_factor(eps, n=n):
            return -(1.0 - 0.5 * math.exp(eps * (1.5 - n))) * math.exp(-0.5 * eps)

        res = optimize.minimize_scalar(
            neg_factor, bounds=(1e-4, 5.0), method="bounded", options={"xatol": 1e-10}
        )
        assert scenario8_peak_epsilon(n) == pytest.approx(res.x, abs=1e-6)


def test_scenario8_peak_rejects_small_n():
    for n in (1, 2, 2.0):
        with pytest.raises(ValueError, match="no interior maximum"):
            scenario8_peak_epsilon(n)


@pytest.mark.parametrize("params", [LAP1, PrivacyParams("gaussian_pdp", 2.0, delta=1e-4)])
def test_shrinkage_matches_k2_form(params, rng):
    sizes = np.arange(1, 31)
    for _ in range(20):
        alpha = rng.uniform(0.2, 5.0, size=2)
        a = shrinkage_risk(sizes, alpha, params)
        b = shrinkage_risk_k2(sizes, alpha, params)
        assert abs(a.value - b.value) <= 1e-12
        assert abs(a.scenario1 - b.scenario1) <= 1e-12
        assert abs(a.scenario8 - b.scenario8) <= 1e-12


def test_shrinkage_input_validation():
    with pytest.raises(ValueError):
        shrinkage_risk([0, 3], [1.0, 1.0], LAP1)
    with pytest.raises(ValueError):
        shrinkage_risk([1.5], [1.0, 1.0], LAP1)
    with pytest.raises(ValueError):
        shrinkage_risk([3], [1.0, -1.0], LAP1)
    with pytest.raises(ValueError):
        shrinkage_risk([3], [2.0], LAP1)


@pytest.mark.parametrize(
    "alpha,n",
    [((0.7, 1.3, 2.0), 7), ((0.5, 0.5), 3), ((2.0, 1.0, 0.4, 3.0), 12)],
)
def test_dirichlet_moments_match_sampling(alpha, n, rng):
    """Gamma-ratio moment sums agree with direct Dirichlet averaging."""
    alpha = np.asarray(alpha)
    draws = rng.dirichlet(alpha, size=400_000)
    s1 = (draws**n).sum(axis=1)
    s2 = (draws ** (n - 1) * (1.0 - draws)).sum(axis=1)
    from hadr.risk import _dirichlet_moments

    m1, m2 = _dirichlet_moments(np.array([n]), alpha.astype(float))
    for sample, closed in ((s1, m1[0]), (s2, m2[0])):
        se = sample.std(ddof=1) / math.sqrt(sample.size)
        assert abs(sample.mean() - closed) < 3.0 * se


def test_global_zero_truncation_factor():
    sm = CellSizeModel(family="poisson", lam=4.6)
    alpha = np.array([1.0, 2.0])
    raw = global_risk(alpha, sm, LAP1)
    trunc = global_risk(alpha, sm, LAP1, zero_truncated=True)
    f0 = sm.zero_mass()
    assert raw.value == pytest.approx((1.0 - f0) * trunc.value, rel=1e-12)
    assert raw.scenario1 == pytest.approx((1.0 - f0) * trunc.scenario1, rel=1e-12)
    assert raw.truncated_at == trunc.truncated_at


def test_global_matches_sizewise_shrinkage():
    """The series equals the size-weighted average of per-size evaluations."""
    sm = CellSizeModel(family="poisson", lam=3.2)
    alpha = np.array([0.8, 1.7])
    rv = global_risk(alpha, sm, LAP1, zero_truncated=True)
    n = np.arange(1, rv.truncated_at + 1)
    w = sm.pmf(n) / (1.0 - sm.zero_mass())
    acc = sum(
        float(wi) * shrinkage_risk([int(ni)], alpha, LAP1).value for ni, wi in zip(n, w)
    )
    assert rv.value == pytest.approx(acc, rel=1e-12)


@pytest.mark.parametrize("epsilon", [0.1, 1.0, 10.0])
def test_global_matches_k2_form(epsilon):
    params = PrivacyParams("laplace", epsilon)
    sm = CellSizeModel(family="poisson", lam=3.0)
    alpha = np.array([1.2, 0.8])
    a = global_risk(alpha, sm, params)
    b = global_risk_k2(alpha, sm, params)
    assert abs(a.value - b.value) <= 1e-12
    assert a.truncated_at == b.truncated_at


def test_global_series_cap_error():
    sm = CellSizeModel(family="poisson", lam=2e6)
    with pytest.raises(ValueError, match="exceeding the cap"):
        global_risk(np.array([1.0, 1.0]), sm, LAP1)


def test_variant_s_shape():
    sm = CellSizeModel(family="poisson", lam=2.43)
    lo = global_risk_variant(sm, PrivacyParams("laplace", 1e-3), 2, zero_truncated=True)
    hi = global_risk_variant(sm, PrivacyParams("laplace", 1e2), 2, zero_truncated=True)
    assert lo.value == pytest.approx(0.25, abs=0.01)
    assert hi.value == pytest.approx(1.0, abs=0.01)
    grid = np.geomspace(1e-3, 1e2, 25)
    vals = [
        global_risk_variant(sm, PrivacyParams("laplace", float(e)), 2, zero_truncated=True).value
        for e in grid
    ]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert lo.scenario8 == 0.0 and hi.scenario8 == 0.0


def test_evaluate_measure_dispatch(rng):
    t = random_table(rng, m=6, k=2, n_max=20)
    alpha = np.array([1.0, 2.0])
    sm = CellSizeModel(family="poisson", lam=3.0)
    assert evaluate_measure("local", LAP1, table=t) == average_local_risk(t, LAP1)
    assert evaluate_measure("expected", LAP1, table=t) == expected_risk(t, LAP1)
    assert evaluate_measure("shrinkage", LAP1, table=t, alpha=alpha) == shrinkage_risk(
        t.sizes(), alpha, LAP1
    )
    assert evaluate_measure("global", LAP1, alpha=alpha, size_model=sm) == global_risk(
        alpha, sm, LAP1
    )
    assert evaluate_measure(
        "global_variant", LAP1, size_model=sm, n_categories=2
    ) == global_risk_variant(sm, LAP1, 2)


def test_evaluate_measure_requirements(rng):
    t = random_table(rng, m=4)
    with pytest.raises(ValueError, match="unknown measure"):
        evaluate_measure("total", LAP1, table=t)
    with pytest.raises(ValueError, match="requires a table"):
        evaluate_measure("expected", LAP1)
    with pytest.raises(ValueError, match="alpha"):
        evaluate_measure("shrinkage", LAP1, table=t)
    with pytest.raises(ValueError, match="size model"):
        evaluate_measure("global", LAP1, alpha=[1.0, 1.0])
    with pytest.raises(ValueError, match="n_categories"):
        evaluate_measure("global_variant", LAP1, size_model=CellSizeModel(family="poisson", lam=2.0))
    assert MEASURES == ("local", "expected", "shrinkage", "global", "global_variant")


def test_risk_curve_sorted_and_thread_invariant(rng):
    t = random_table(rng, m=6, k=2, n_max=20)
    params = [PrivacyParams("laplace", e) for e in (3.0, 0.1, 1.0, 0.5)]
    params += [PrivacyParams("gaussian_pdp", 0.5, delta=d) for d in (1e-3, 1e-5)]
    pts = risk_curve("expected", params, table=t)
    keys = [(p.epsilon, -1.0 if p.delta is None else p.delta) for p in pts]
    assert keys == sorted(keys)
    pts4 = risk_curve("expected", params, table=t, threads=4)
    assert pts == pts4


def test_curve_csv_format(rng):
    t = random_table(rng, m=5, k=2, n_max=15)
    pts = risk_curve("expected", [LAP1, PrivacyParams("gaussian_pdp", 2.0, delta=1e-4)], table=t)
    text = curve_to_csv(pts)
    lines = text.splitlines()
    assert lines[0] == "epsilon,delta,mechanism,measure,value,scenario1_component,scenario8_component"
    assert len(lines) == 3
    lap_row = lines[1].split(",")
    assert lap_row[1] == "" and lap_row[2] == "laplace" and lap_row[3] == "expected"
    assert lap_row[4] == format(pts[0].value, ".12g")
    assert text.endswith("\n")


def test_invert_round_trip():
    t = make_table([(10, 0)])
    res = invert_epsilon("expected", 0.7, "laplace", table=t)
    assert res.risk <= 0.7
    assert res.risk == pytest.approx(0.7, abs=1e-5)
    above = expected_risk(t, PrivacyParams("laplace", res.epsilon + 1e-4)).value
    assert above > 0.7
    # the known reference point: risk 0.6967... sits just below epsilon 1
    assert invert_epsilon("expected", HOMOG_N10_K2_LAP1 + 1e-7, "laplace", table=t).epsilon == pytest.approx(
        1.0, abs=1e-4
    )


def test_invert_floor_error():
    t = make_table([(10, 0)])
    with pytest.raises(ValueError, match="below the achievable floor"):
        invert_epsilon("expected", 0.2, "laplace", table=t)


def test_invert_ceiling_error():
    t = make_table([(10, 0)])
    with pytest.raises(ValueError, match="never exceeded"):
        invert_epsilon("expected", 0.9, "gaussian_adp", delta=1e-5, table=t)


def test_invert_target_validation():
    t = make_table([(10, 0)])
    for target in (0.0, 1.0, -0.3, 1.7):
        with pytest.raises(ValueError):
            invert_epsilon("expected", target, "laplace", table=t)
