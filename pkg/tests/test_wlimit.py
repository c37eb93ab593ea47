import math

import numpy as np
import pytest
from scipy.special import loggamma

from btree.rules import make_rule, btree_start
from spectral.eigen import clock_product
from spectral.roots import compute_spectrum
from wlimit.cascade import (
    cascade_sample, fixpoint_iterate, contraction_ratio, wasserstein2,
)
from wlimit.moments import (
    moments_W, mixed_moments, cascade_variance, intermediate_moments, intermediate_tables,
    laplace_residual, exp_moment_check, default_anchor, martingale_connection_gap,
    contraction_factor,
)
from utils.errors import (
    InvalidInputError, InvalidParameterError, NonContractiveError, ResourceLimitError,
)


def lambda2(m):
    return compute_spectrum(m).lambda2


def test_depth_zero_returns_anchor():
    samples = cascade_sample("CT", 60, lambda2(60), 0, 50, seed=1)
    assert np.all(samples.samples == 60)


def test_non_contractive_and_budget():
    with pytest.raises(NonContractiveError):
        cascade_sample("CT", 10, lambda2(10), 5, 10, seed=1)
    with pytest.raises(NonContractiveError):
        moments_W("CT", 10, lambda2(10), 10, 4)
    with pytest.raises(ResourceLimitError):
        cascade_sample("CT", 60, lambda2(60), 12, 10, seed=1, budget=1024)
    with pytest.raises(InvalidParameterError):
        cascade_sample("XT", 60, lambda2(60), 3, 10, seed=1)


@pytest.mark.parametrize("variant", ["CT", "DT"])
def test_cascade_is_a_martingale(variant):
    spectrum = compute_spectrum(60)
    anchor = default_anchor(variant, spectrum)
    result = cascade_sample(variant, 60, spectrum.lambda2, 10, 4000, seed=3, anchor=anchor)
    x = result.samples
    se_re = x.real.std() / math.sqrt(x.size)
    se_im = x.imag.std() / math.sqrt(x.size)
    assert abs(x.real.mean() - anchor.real) < 4 * se_re
    assert abs(x.imag.mean() - anchor.imag) < 4 * se_im + 1e-12


def test_cascade_is_seeded():
    a = cascade_sample("CT", 60, lambda2(60), 6, 300, seed=9, budget=4096)
    b = cascade_sample("CT", 60, lambda2(60), 6, 300, seed=9, budget=4096)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_cascade_variance_and_second_moment():
    m, depth = 60, 10
    lam = lambda2(m)
    result = cascade_sample("CT", m, lam, depth, 4000, seed=4)
    expected = cascade_variance("CT", m, lam, m, depth)
    assert result.summary["variance"] == pytest.approx(expected, rel=0.15)

    table = moments_W("CT", m, lam, m, 3, depth=depth)
    mean, se = result.empirical_moment(2)
    assert abs(mean - table.moments[2]) < 4 * se * math.sqrt(2)


def test_variance_formula_matches_mixed_moments():
    m = 100
    lam = lambda2(m)
    q = clock_product(m, 2 * lam.real).real
    closed = m ** 2 * (4 * q - 1) / (1 - 2 * q)
    assert cascade_variance("CT", m, lam, m) == pytest.approx(closed, rel=1e-12)
    M = mixed_moments("CT", m, lam, m, 2)
    assert M[1, 1].real - m ** 2 == pytest.approx(closed, rel=1e-10)
    assert cascade_variance("CT", m, lam, m, depth=0) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("variant", ["CT", "DT"])
def test_moment_recursion(variant):
    m = 100
    spectrum = compute_spectrum(m)
    anchor = default_anchor(variant, spectrum)
    table = moments_W(variant, m, spectrum.lambda2, anchor, 6)
    assert table.moments[0] == 1
    assert table.moments[1] == pytest.approx(anchor)
    M = mixed_moments(variant, m, spectrum.lambda2, anchor, 4)
    for p in range(5):
        assert M[p, 0] == pytest.approx(table.moments[p], rel=1e-10)
    assert table.to_frame().shape == (7, 3)
    deep = moments_W(variant, m, spectrum.lambda2, anchor, 4, depth=200)
    np.testing.assert_allclose(deep.moments, table.moments[:5], rtol=1e-6)
    shallow = moments_W(variant, m, spectrum.lambda2, anchor, 4, depth=0)
    np.testing.assert_allclose(shallow.moments, anchor ** np.arange(5))


def test_default_anchor():
    spectrum = compute_spectrum(60)
    assert default_anchor("CT", spectrum) == pytest.approx(60)
    target = complex(np.exp(loggamma(61) - loggamma(60 + spectrum.lambda2)))
    assert default_anchor("DT", spectrum) == pytest.approx(target, rel=1e-12)


def test_intermediate_moments():
    m = 60
    lam = lambda2(m)
    first = intermediate_moments(m, lam, m, 1)
    for k in range(1, m + 1):
        j = np.arange(k - 1)
        expected = (m + k - 1) * np.prod((lam + m + j) / (1 + m + j))
        assert first[k - 1] == pytest.approx(expected, rel=1e-10)
    ratios = np.prod([(m + k - 1) / (m + k - 1 + lam) for k in range(1, m + 1)])
    assert ratios == pytest.approx(0.5, rel=1e-10)
    assert intermediate_moments(m, lam, m, 0)[m - 1] == pytest.approx(1)
    with pytest.raises(InvalidParameterError):
        intermediate_moments(m, lam, m, -1)


def test_laplace_system():
    m = 60
    lam = lambda2(m)
    assert laplace_residual(m, lam, 1).max() < 1e-12
    assert laplace_residual(m, lam, 12).max() < 1e-10

    tables = intermediate_tables(m, lam, m, 4)
    tables[0, 2] += 1e-3 * abs(tables[0, 2])
    assert laplace_residual(m, lam, 4, tables=tables).max() >= 1e-4
    with pytest.raises(InvalidInputError):
        laplace_residual(m, lam, 4, tables=tables[:10])


def test_fixpoint_iteration_contracts():
    m = 60
    spectrum = compute_spectrum(m)
    lam = spectrum.lambda2
    sample_set, trace = fixpoint_iterate("CT", m, lam, m, 1000, 25, seed=6)
    assert trace.size == 25
    bound = math.sqrt(contraction_factor(m, lam))
    assert contraction_ratio(trace) <= bound + 0.05
    assert sample_set.summary["mean"] == pytest.approx(m)

    one_step, _ = fixpoint_iterate("CT", m, lam, m, 4000, 1, seed=6, recenter=False)
    x = one_step.samples
    assert abs(x.real.mean() - m) < 4 * x.real.std() / math.sqrt(x.size)
    assert abs(x.imag.mean()) < 4 * x.imag.std() / math.sqrt(x.size)


def test_fixpoint_mean_without_recentering():
    m = 100
    lam = lambda2(m)
    n_samples, n_iters = 4000, 20
    sample_set, _ = fixpoint_iterate("CT", m, lam, m, n_samples, n_iters, seed=12, recenter=False)
    x = sample_set.samples
    # the resampled mean is a martingale over iterations
    drift = math.sqrt(n_iters) / math.sqrt(n_samples)
    assert abs(x.real.mean() - m) < 4 * x.real.std() * drift
    assert abs(x.imag.mean()) < 4 * x.imag.std() * drift

    wrong, _ = fixpoint_iterate("CT", m, 1.1 * lam, m, n_samples, 1, seed=12, recenter=False)
    y = wrong.samples
    assert abs(y.mean() - m) > 4 * y.std() / math.sqrt(y.size)


def test_fixpoint_second_moment():
    m = 100
    lam = lambda2(m)
    sample_set, _ = fixpoint_iterate("CT", m, lam, m, 4000, 40, seed=7)
    exact = mixed_moments("CT", m, lam, m, 2)[1, 1].real
    assert sample_set.summary["second_abs_moment"] == pytest.approx(exact, rel=0.1)


@pytest.mark.slow
def test_fixpoint_second_moment_tight():
    m = 100
    lam = lambda2(m)
    sample_set, _ = fixpoint_iterate("CT", m, lam, m, 20_000, 60, seed=8)
    exact = mixed_moments("CT", m, lam, m, 2)[1, 1].real
    assert sample_set.summary["second_abs_moment"] == pytest.approx(exact, rel=0.05)


def test_wasserstein2():
    x = np.array([0, 1, 2j])
    assert wasserstein2(x, x[::-1]) == pytest.approx(0)
    assert wasserstein2(x, x + 3) == pytest.approx(3)
    with pytest.raises(InvalidInputError):
        wasserstein2(x, x[:2])
    with pytest.raises(InvalidInputError):
        contraction_ratio([1.0, 0.5])


def test_exp_moment_check():
    m = 60
    samples = cascade_sample("CT", m, lambda2(m), 8, 4000, seed=2)
    table = exp_moment_check(samples, [0, 0.002, 0.005, -0.005, 0.004j])
    assert table.loc[0, "empirical"] == pytest.approx(1)
    assert table.loc[0, "bound"] >= 1
    assert not table["violation"].any()
    twice = exp_moment_check(samples, [0.002, 0.004])
    assert twice.loc[1, "bound"] >= twice.loc[0, "bound"]
    with pytest.raises(InvalidInputError):
        exp_moment_check(samples, [0.5])


def test_martingale_connection():
    for m in (60, 100):
        spectrum = compute_spectrum(m)
        assert martingale_connection_gap(spectrum, btree_start(make_rule(m))) < 1e-10


@pytest.mark.parametrize("variant", ["CT", "DT"])
def test_finite_depth_moments_keep_mass_and_mean(variant):
    m = 100
    spectrum = compute_spectrum(m)
    anchor = default_anchor(variant, spectrum)
    limit = moments_W(variant, m, spectrum.lambda2, anchor, 4).moments
    for depth in (5, 20, 50, 200):
        table = moments_W(variant, m, spectrum.lambda2, anchor, 4, depth=depth)
        assert table.moments[0] == 1
        assert table.moments[1] == anchor
        if depth >= 50:
            np.testing.assert_allclose(table.moments, limit, rtol=1e-6)
    M = mixed_moments(variant, m, spectrum.lambda2, anchor, 2, depth=100)
    assert M[0, 0] == 1
    assert M[1, 1].real == pytest.approx(mixed_moments(variant, m, spectrum.lambda2, anchor, 2)[1, 1].real,
                                         rel=1e-6)


def test_exp_moment_check_reports_both_bounds():
    m = 60
    samples = cascade_sample("CT", m, lambda2(m), 6, 2000, seed=14)
    table = exp_moment_check(samples, [0, 0.001, 0.003j])
    assert {"abs_empirical", "abs_stderr", "abs_bound"} <= set(table.columns)
    assert table.loc[0, "abs_empirical"] == pytest.approx(1)
    assert table.loc[0, "abs_bound"] == pytest.approx(4)
    assert (table["abs_empirical"] >= table["empirical"] - 1e-12).all()
    assert (table["abs_empirical"] <= table["abs_bound"]).all()


@pytest.mark.slow
def test_cascade_at_full_depth():
    m, depth, n = 60, 15, 10_000
    lam = lambda2(m)
    result = cascade_sample("CT", m, lam, depth, n, seed=15)
    x = result.samples
    assert abs(x.real.mean() - m) < 3 * x.real.std() / math.sqrt(n)
    assert abs(x.imag.mean()) < 3 * x.imag.std() / math.sqrt(n)

    mu2 = moments_W("CT", m, lam, m, 2, depth=depth).moments[2]
    mean, se = result.empirical_moment(2)
    assert abs(mean.real - mu2.real) < 3 * se
    assert abs(mean.imag - mu2.imag) < 3 * se
