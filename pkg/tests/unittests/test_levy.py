"""
Test the Poisson approximation of general subordinators: lattice masses, the error
functional rho, and the compound Poisson exponential case whose functional is Gamma(2, 1).
"""

import os
import numpy as np
import sciris as sc
import pytest
import mpmath
import scipy.special as spsp
import scipy.stats as sps
import expfunc as ef
import utilities as ut

cpe = ef.cpe_measure(1, 1)
gamma = ef.tempered_stable_measure(1, 1, 0)
gamma_moments = [2, 6, 24, 120]


def test_cpe_grid():
    eps = 0.01
    grid = ef.discretize(cpe, eps)
    assert grid.total == pytest.approx(np.exp(-eps), abs=1e-12)
    k = np.arange(1, 51)
    expected = np.exp(-eps * k) - np.exp(-eps * (k + 1))
    assert np.allclose(grid.masses[:50], expected, rtol=1e-12)
    assert grid.q == pytest.approx(np.exp(-eps))
    assert grid.log_q == -eps
    jumps = grid.jumps()
    assert jumps.masses.sum() + jumps.tail_mass == pytest.approx(1, abs=1e-12)


def test_gamma_grid():
    ''' The gamma subordinator has tail E_1(z) '''
    eps = 0.01
    grid = ef.discretize(gamma, eps)
    k = np.arange(1, 201)
    expected = spsp.exp1(eps * k) - spsp.exp1(eps * (k + 1))
    assert np.allclose(grid.masses[:200], expected, rtol=1e-9)
    assert grid.total == pytest.approx(spsp.exp1(eps), rel=1e-10)


@pytest.mark.parametrize('s', [0, -0.3, -0.7])
def test_upper_gamma(s):
    y = np.array([1e-3, 0.05, 0.5, 0.999, 1.0, 3.0, 20.0])
    expected = np.array([float(mpmath.gammainc(s, yi)) for yi in y])
    assert np.allclose(ef.upper_gamma(s, y), expected, rtol=1e-10)


def test_upper_gamma_edges():
    assert ef.upper_gamma(0, 1.0) == pytest.approx(0.21938393439552029, rel=1e-12)
    assert ef.upper_gamma(0, 0.0) == np.inf
    with pytest.raises(ValueError):
        ef.upper_gamma(0.5, 1.0)
    with pytest.raises(ValueError):
        ef.upper_gamma(-1, 1.0)


def test_rho():
    ''' rho(eps)^2 = int_0^eps tail, of order eps for a finite measure '''
    ratios = [ef.rho(cpe, eps) / np.sqrt(eps) for eps in [0.1, 0.01, 0.001]]
    assert all(0.9 < r <= 1.0 for r in ratios)
    values = [ef.rho(gamma, eps) for eps in [0.1, 0.01, 1e-3, 1e-4, 1e-6]]
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 0.01


@pytest.mark.parametrize('chi', [0.0, 0.5])
def test_rho_closed_form(chi):
    ''' The tempered stable closed form against quadrature of the tail '''
    ts = ef.tempered_stable_measure(1.5, 2.0, chi)
    custom = ef.LevyMeasure(ts.tail)
    for eps in [0.05, 0.01]:
        assert ef.rho(ts, eps) == pytest.approx(ef.rho(custom, eps), rel=1e-6)


def test_gamma_benchmark():
    ''' cpe(1, 1) gives I ~ Gamma(2, 1), density x exp(-x) '''
    x = np.linspace(0.05, 6, 200)
    oracle = sps.gamma(2).pdf(x)
    approx = ef.approx_density(ef.discretize(cpe, 0.01), n_terms=100)
    assert np.max(np.abs(approx.density(x) - oracle)) < 0.05

    errors = []
    for eps in [0.02, 0.01, 0.005]:
        approx = ef.approx_density(ef.discretize(cpe, eps))
        assert len(approx.coeffs) == int(np.ceil(1 / eps))
        errors.append(np.max(np.abs(approx.density(x) - oracle)))
    print(errors)
    assert np.all(np.diff(errors) < 0)


@pytest.mark.parametrize('b', [1, 2])
def test_limit_coefficients(b):
    ''' As eps -> 0 the coefficients tend to (-1)^j binom(b, j) '''
    grid = ef.discretize(ef.cpe_measure(1, b), 1e-3)
    approx = ef.approx_density(grid, n_terms=11)
    j = np.arange(11)
    expected = (-1.0) ** j * spsp.binom(b, j)
    n = 11 if b == 1 else 5
    assert np.allclose(approx.coeffs[:n], expected[:n], rtol=0, atol=1e-2)


def test_moments():
    grid = ef.discretize(cpe, 0.005)
    approx = ef.approx_density(grid, n_terms=10)
    for m, expected in enumerate(gamma_moments, 1):
        assert approx.moment(m) == pytest.approx(expected, rel=0.02)
        assert ef.grid_moment(grid, m) == approx.moment(m)
        # moments of the series density itself, not only of the lattice process
        assert approx.model.moment_series(m) == pytest.approx(expected, rel=0.02)
        assert approx.model.moment_series(m) == pytest.approx(approx.moment(m), rel=1e-6)
    exact = [spsp.factorial(m) / np.prod(np.log1p(np.arange(1, m + 1))) for m in range(1, 4)]
    # small jumps of the gamma subordinator are all dropped, so its lattice must be much finer
    grid = ef.discretize(gamma, 1e-4)
    for m in range(1, 4):
        assert ef.grid_moment(grid, m) == pytest.approx(exact[m - 1], rel=0.01)


def test_laplace_exponents():
    u = np.array([0.5, 1.0, 5.0])
    for measure in [cpe, gamma]:
        values = []
        for eps in [0.02, 0.01, 0.005]:
            grid = ef.discretize(measure, eps)
            psi = grid.laplace_exponent(u)
            assert np.all(psi <= measure.laplace_exponent(u))
            catalog = ef.laplace_exponent(grid.to_spec(), u * eps)
            assert np.allclose(psi, catalog, rtol=1e-12)
            values.append(psi)
        assert np.all(np.diff(values, axis=0) >= -1e-10)
    assert np.allclose(gamma.laplace_exponent(u), np.log1p(u))
    assert np.allclose(cpe.laplace_exponent(u), u / (1 + u))


def test_cdf_error_bound():
    x = np.linspace(0.05, 6, 60)
    grids = [ef.discretize(cpe, eps) for eps in [0.02, 0.01, 0.005]]
    out = ef.cdf_error_bound(grids, x)
    print(out)
    assert out.monotone
    assert out.consistent
    assert np.allclose(out.rho_ratios, [np.sqrt(0.5)], rtol=1e-2)

    same = ef.cdf_error_bound([grids[0]] * 3, x)
    assert np.all(same.sup_diffs == 0)
    with pytest.raises(ValueError):
        ef.cdf_error_bound(grids[:2], x)


def test_cdf_error_bound_gamma():
    ''' Infinite activity: the sup-differences shrink with eps at a rate comparable to rho '''
    x = np.linspace(0.05, 6, 60)
    epsilons = [0.02, 0.01, 0.005]
    grids = [ef.discretize(gamma, eps) for eps in epsilons]
    out = ef.cdf_error_bound(grids, x)
    print(out)
    assert out.monotone
    assert out.consistent
    rhos = [ef.rho(gamma, eps) for eps in epsilons]
    assert np.allclose(out.rho_ratios, [rhos[2] / rhos[1]], rtol=1e-10)
    assert np.all(np.array(out.rho_ratios) > np.sqrt(0.5))


def test_parse_epsilon():
    assert ef.parse_epsilon('1/2500') == pytest.approx(4e-4, rel=1e-15)
    assert ef.parse_epsilon(0.01) == 0.01
    with pytest.raises(ValueError):
        ef.parse_epsilon(1.5)


def test_invalid_tails():
    with pytest.raises(ef.InvalidTail):
        ef.LevyMeasure(lambda z: np.asarray(z, dtype=float))
    with pytest.raises(ef.InvalidTail):
        ef.LevyMeasure(lambda z: np.asarray(z, dtype=float) ** -2.0)
    with pytest.raises(ef.InvalidTail):
        ef.LevyMeasure(lambda z: 1 / np.asarray(z, dtype=float))
    with pytest.raises(ValueError):
        ef.tempered_stable_measure(1, 1, 1.0)


def test_tail_table(tmp_path):
    measure = ef.load_tail_table(os.path.join(ut.taildir, 'cpe_tail.csv'))
    grid = ef.discretize(measure, 0.01)
    assert grid.total == pytest.approx(np.exp(-0.01), abs=1e-3)
    for eps in [0.05, 0.01, 1e-3]:
        assert ef.rho(measure, eps) == pytest.approx(ef.rho(cpe, eps), rel=1e-3)
    assert grid.rho == pytest.approx(ef.rho(cpe, 0.01), rel=1e-3)
    approx = ef.approx_density(grid, n_terms=100)
    x = np.linspace(0.05, 6, 100)
    assert np.max(np.abs(approx.density(x) - sps.gamma(2).pdf(x))) < 0.05

    bad = tmp_path / 'bad.csv'
    bad.write_text('x,y\n1,2\n2,1\n')
    with pytest.raises(ef.ConfigError):
        ef.load_tail_table(str(bad))


def test_make_measure():
    measure = ef.make_measure(dict(kind='cpe', a=2, b=3))
    assert measure.params.a == 2 and measure.params.b == 3
    measure = ef.make_measure(dict(kind='tail_table', path=os.path.join(ut.taildir, 'cpe_tail.csv')))
    assert measure.kind == 'custom'
    with pytest.raises(ef.ConfigError) as E:
        ef.make_measure(dict(kind='tempered_stable', chi=1.5))
    assert E.value.path == 'process'
    with pytest.raises(ef.ConfigError) as E:
        ef.make_measure(dict(kind='tail_table'))
    assert E.value.path == 'process.path'
    with pytest.raises(ef.ConfigError) as E:
        ef.make_measure(dict(kind='stable'))
    assert E.value.path == 'process.kind'


def test_against_sampler():
    ''' The series of the discretized process against sampling of the same process '''
    grid = ef.discretize(cpe, 0.01)
    approx = ef.approx_density(grid, n_terms=200)
    samples = ef.sample_exp_functional(grid.to_spec(), grid.q, n_samples=20_000, seed=13)
    assert ef.ks_statistic(samples, approx.cdf) < 0.02


@pytest.mark.skipif(not os.environ.get('EXPFUNC_LONG_TESTS'), reason='Takes minutes; set EXPFUNC_LONG_TESTS=1 to run')
def test_gamma_fine_grid():
    ''' The gamma subordinator at eps = 1/2500 with 5000 terms against sampling of the same process '''
    grid = ef.discretize(gamma, '1/2500')
    approx = ef.approx_density(grid, n_terms=5000)
    samples = ef.sample_exp_functional(grid.to_spec(), grid.q, n_samples=100_000, seed=8)
    ks = ef.ks_statistic(samples, approx.cdf)
    print(ks)
    assert ks < 0.02


if __name__ == '__main__':
    T = sc.tic()
    test_cpe_grid()
    test_gamma_grid()
    for s in [0, -0.3, -0.7]:
        test_upper_gamma(s)
    test_upper_gamma_edges()
    test_rho()
    for chi in [0.0, 0.5]:
        test_rho_closed_form(chi)
    test_gamma_benchmark()
    for b in [1, 2]:
        test_limit_coefficients(b)
    test_moments()
    test_laplace_exponents()
    test_cdf_error_bound()
    test_cdf_error_bound_gamma()
    test_parse_epsilon()
    test_invalid_tails()
    test_make_measure()
    test_against_sampler()
    test_gamma_fine_grid()
    sc.toc(T)
    print('Done.')
