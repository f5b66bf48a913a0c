"""
Test the Monte Carlo samplers: laws of the jumps, of the first terms and of the functionals,
determinism under a seed and the handling of the term cap.
"""

import numpy as np
import sciris as sc
import pytest
import scipy.stats as sps
import expfunc as ef
from expfunc import series as efser
import utilities as ut

q_e = 1 / np.e
poisson = ef.make_process(dict(kind='poisson', **{'lambda': 1.0}))
mipp = ef.make_process(dict(kind='mipp', n=2, **{'lambda': 1.0}))


def test_first_term_is_exponential():
    ''' Capped at one term, I_q is the first sojourn E_1 ~ Exp(lambda) '''
    lam = 2.0
    spec = ef.make_process(dict(kind='poisson', **{'lambda': lam}))
    samples = ef.sample_exp_functional(spec, q_e, n_samples=100_000, seed=1, max_terms=1)
    ks = ef.ks_statistic(samples, lambda x: 1 - np.exp(-lam * np.maximum(x, 0)))
    assert ks < 0.01


def test_poisson_mean():
    samples = ef.sample_exp_functional(poisson, q_e, n_samples=100_000, seed=2)
    se = samples.std() / np.sqrt(len(samples))
    assert abs(samples.mean() - 1 / (1 - np.exp(-1))) < 3 * se
    assert np.all(samples > 0)


def test_against_series():
    for name, spec in ut.catalog_processes().items():
        model = ef.build_coefficients(spec, q_e)
        samples = ef.sample_exp_functional(spec, q_e, n_samples=50_000, seed=3)
        ks = ef.ks_statistic(samples, model.cdf)
        print(name, ks)
        assert ks < 1.63 / np.sqrt(len(samples)) + 2e-3, name


def test_drifted_support():
    spec = poisson.with_drift(2.0)
    samples = ef.sample_exp_functional(spec, q_e, n_samples=20_000, seed=4)
    assert np.all(samples <= 0.5 + 1e-12)
    pd = ef.build_piecewise(spec, q_e)
    assert ef.ks_statistic(samples, pd.cdf) < 1.63 / np.sqrt(len(samples)) + 2e-3


def test_determinism():
    kw = dict(n_samples=20_000, seed=5, block_size=4096)
    a = ef.sample_exp_functional(mipp, q_e, **kw)
    b = ef.sample_exp_functional(mipp, q_e, **kw)
    assert np.array_equal(a, b)
    c = ef.sample_exp_functional(mipp, q_e, **sc.mergedicts(kw, dict(seed=6)))
    assert not np.array_equal(a, c)
    mc = ef.McConfig(n_samples=1000, seed=7)
    assert np.array_equal(ef.sample_inverse_power(mipp, 2, mc), ef.sample_inverse_power(mipp, 2, mc))


def test_raising_the_cap():
    ''' When no sample reaches the cap, a larger cap changes nothing '''
    kw = dict(n_samples=10_000, seed=8)
    a = ef.sample_exp_functional(mipp, q_e, max_terms=1000, **kw)
    b = ef.sample_exp_functional(mipp, q_e, max_terms=2000, **kw)
    assert np.array_equal(a, b)


def test_cap_actions():
    with pytest.raises(ef.MaxTermsExceeded):
        ef.sample_exp_functional(poisson, q_e, n_samples=100, seed=9, max_terms=2, on_cap='raise')
    samples = ef.sample_exp_functional(poisson, q_e, n_samples=100, seed=9, max_terms=2)
    assert len(samples) == 100
    with pytest.raises(ValueError):
        ef.McConfig(on_cap='ignore')
    with pytest.raises(ValueError):
        ef.McConfig(n_samples=0)


def test_jump_law():
    ''' Chi-square of drawn jumps against the alias table probabilities '''
    pmf = ef.space_fractional_jumps(0.9, max_atoms=20)
    table = ef.AliasTable(pmf)
    assert len(table.probs) == 21
    assert table.probs.sum() == pytest.approx(1, abs=1e-12)
    n = 200_000
    jumps = ef.sample_jumps(pmf, n, seed=10)
    assert jumps.min() >= 1 and jumps.max() <= 21
    counts = np.bincount(jumps, minlength=22)[1:]
    ut.statistic_test(n * table.probs, counts, test='x', comments='space-fractional jumps')

    zero = ef.mipp_jumps(2, lam=1.0)
    jumps = ef.sample_jumps(zero, 10_000, seed=11)
    assert jumps.min() >= 1


def test_ks_statistic():
    constant = ef.ks_statistic(np.full(100, 0.5), lambda x: np.clip(x, 0, 1))
    assert constant == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ef.ks_statistic([], lambda x: x)


def test_inverse_transform_reference():
    model = ef.build_coefficients(poisson, q_e)
    n = 20_000
    samples = ut.inverse_transform(model.cdf, n, model.x_max(), seed=12)
    assert ef.ks_statistic(samples, model.cdf) < 1.63 / np.sqrt(n)


def test_inverse_power():
    ''' For large p only the first sojourn matters '''
    samples = ef.sample_inverse_power(mipp, 30, n_samples=20_000, seed=13)
    lam = mipp.lambda_eff
    assert np.all(samples > 0)
    ks = ef.ks_statistic(samples, lambda x: 1 - np.exp(-lam * np.maximum(x, 0)))
    assert ks < 1.63 / np.sqrt(len(samples))

    model = ef.InversePowerModel(poisson, 2, K=10, nested_depth=1)
    samples = ef.sample_inverse_power(poisson, 2, n_terms=10, n_samples=50_000, seed=14)
    se = samples.std() / np.sqrt(len(samples))
    assert abs(samples.mean() - model.mean()) < 4 * se


def test_inverse_power_truncation():
    ''' Adaptive stopping against a plain sum long enough for the remainder to vanish '''
    p, n = 3, 20_000
    adaptive = ef.sample_inverse_power(mipp, p, n_samples=n, seed=21, series_tol=1e-6)
    full = ef.sample_inverse_power(mipp, p, n_terms=3000, n_samples=n, seed=22)
    se = np.sqrt(adaptive.var() / n + full.var() / n)
    assert abs(adaptive.mean() - full.mean()) < 4 * se
    assert sps.ks_2samp(adaptive, full).statistic < 1.63 * np.sqrt(2 / n)


def test_driftless_acceptance():
    ''' 1e5 samples per catalog process against the series CDF '''
    for name, spec in ut.catalog_processes().items():
        model = ef.build_coefficients(spec, q_e)
        samples = ef.sample_exp_functional(spec, q_e, n_samples=100_000, seed=23)
        ks = ef.ks_statistic(samples, model.cdf)
        print(name, ks)
        assert ks < 0.01, name


def test_general_functional():
    ''' g(x) = q^x reproduces the exponential functional '''
    df = ef.exponential_functional(q_e)
    samples = ef.sample_decreasing_functional(df, mipp, n_samples=20_000, seed=15)
    model = ef.build_coefficients(mipp, q_e)
    assert ef.ks_statistic(samples, model.cdf) < 1.63 / np.sqrt(len(samples)) + 2e-3


def test_empirical_laplace():
    samples = ef.sample_exp_functional(poisson, q_e, n_samples=50_000, seed=16)
    est, se = ef.empirical_laplace(samples, 0.0)
    assert est == 1.0 and se == 0.0
    model = ef.build_coefficients(poisson, q_e, n_terms=31)
    est, se = ef.empirical_laplace(samples, np.array([0.5, 2.0]))
    assert np.all(np.abs(est - efser.laplace(model, np.array([0.5, 2.0]))) < 4 * se)


def test_tabulated_cdf():
    model = ef.build_coefficients(poisson, q_e)
    grid = np.linspace(0, model.x_max(), 2001)
    cdf = ef.tabulated_cdf(model.cdf, grid)
    x = np.array([0.3, 1.0, 2.5])
    assert np.allclose(cdf(x), model.cdf(x), atol=1e-5)
    assert cdf(-1.0) == 0.0
    assert cdf(1e6) == 1.0


def test_save_samples(tmp_path):
    samples = ef.sample_exp_functional(poisson, q_e, n_samples=100, seed=17)
    filename = str(tmp_path / 'samples.csv')
    ef.save_samples(filename, samples)
    loaded = np.loadtxt(filename, delimiter=',', skiprows=1)
    assert np.array_equal(loaded, samples)


if __name__ == '__main__':
    T = sc.tic()
    test_first_term_is_exponential()
    test_poisson_mean()
    test_against_series()
    test_drifted_support()
    test_determinism()
    test_raising_the_cap()
    test_cap_actions()
    test_jump_law()
    test_ks_statistic()
    test_inverse_transform_reference()
    test_inverse_power()
    test_inverse_power_truncation()
    test_driftless_acceptance()
    test_general_functional()
    test_empirical_laplace()
    test_tabulated_cdf()
    sc.toc(T)
    print('Done.')
