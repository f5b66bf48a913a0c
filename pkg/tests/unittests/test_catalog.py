"""
Test the jump laws and process specifications of the catalog.
"""

import numpy as np
import sciris as sc
import pytest
import scipy.stats as sps
import expfunc as ef


def test_poisson_jumps():
    pmf = ef.poisson_jumps()
    assert pmf.kmax == 1
    assert pmf.masses[0] == 1.0
    assert pmf.tail_mass == 0 and pmf.zero_mass == 0
    assert pmf.expect_power(0.3) == pytest.approx(0.3)


def test_mipp_two_is_poisson():
    ''' V^(2) jumps are Poisson(lambda) with the zero atom kept aside '''
    pmf = ef.mipp_jumps(2, lam=1.0)
    k = np.arange(1, pmf.kmax + 1)
    assert pmf.zero_mass == pytest.approx(np.exp(-1), rel=1e-14)
    assert np.allclose(pmf.masses, sps.poisson.pmf(k, 1.0), rtol=1e-12, atol=0)
    assert pmf.zero_mass + pmf.masses.sum() + pmf.tail_mass == pytest.approx(1, abs=1e-12)
    assert pmf.tail_mass < 1e-12


def test_mipp_three_zero_atom():
    ''' P{V^(2)_1 = 0} = E exp(-lambda V) for V ~ Poisson(lambda) '''
    lam = 0.8
    pmf = ef.mipp_jumps(3, lam=lam)
    expected = np.exp(lam * (np.exp(-lam) - 1))
    assert pmf.zero_mass == pytest.approx(expected, rel=1e-10)
    assert pmf.zero_mass + pmf.masses.sum() + pmf.tail_mass == pytest.approx(1, abs=1e-12)
    assert np.all(pmf.masses >= 0)


def test_space_fractional_jumps():
    alpha = 0.9
    pmf = ef.space_fractional_jumps(alpha)
    assert pmf.masses[0] == pytest.approx(alpha)
    assert pmf.masses[1] == pytest.approx(alpha * (1 - alpha) / 2)
    assert pmf.masses.sum() + pmf.tail_mass == pytest.approx(1, abs=1e-12)
    assert pmf.support_kind == 'truncated-infinite'


def test_space_fractional_heavy_tail():
    ''' A small alpha cannot reach pmf_tol within max_atoms; the exact remainder is kept '''
    pmf = ef.space_fractional_jumps(0.2, max_atoms=1000)
    assert pmf.kmax == 1000
    assert pmf.tail_mass > 1e-3
    assert pmf.masses.sum() + pmf.tail_mass == pytest.approx(1, abs=1e-12)


def test_negative_binomial():
    p0 = 0.5
    pmf = ef.negative_binomial_jumps(p0)
    assert pmf.masses[0] == pytest.approx(p0 / np.log(2))
    assert pmf.masses.sum() + pmf.tail_mass == pytest.approx(1, abs=1e-12)
    assert pmf.tail_mass < 1e-12
    assert ef.negative_binomial_intensity(2, p0) == pytest.approx(2 * np.log(2))
    assert pmf.meta.intensity_per_r == pytest.approx(np.log(2))


def test_intensities():
    assert ef.space_fractional_intensity(4.0, 0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ef.negative_binomial_intensity(1, 1.5)


def test_normalized_spec():
    spec = ef.make_process(dict(kind='mipp', n=2, **{'lambda': 1.0}))
    norm = spec.normalized()
    assert spec.lambda_eff == pytest.approx(1 - np.exp(-1))
    assert norm.intensity == pytest.approx(spec.lambda_eff)
    assert norm.jumps.zero_mass == 0
    assert norm.jumps.masses.sum() + norm.jumps.tail_mass == pytest.approx(1, abs=1e-12)
    assert spec.jump_mean() == pytest.approx(1 / (1 - np.exp(-1)), rel=1e-10)
    assert norm.normalized() is norm


def test_laplace_exponent():
    spec = ef.make_process(dict(kind='poisson', **{'lambda': 2.0}))
    u = np.array([0.0, 0.5, 3.0])
    assert np.allclose(ef.laplace_exponent(spec, u), 2 * (1 - np.exp(-u)))
    assert ef.laplace_exponent(spec, 0.0) == 0.0
    z = ef.laplace_exponent(spec, 1 + 2j)
    assert z == pytest.approx(2 * (1 - np.exp(-(1 + 2j))))
    drifted = spec.with_drift(0.5)
    assert drifted.laplace_exponent(1.0) == pytest.approx(0.5 + 2 * (1 - np.exp(-1)))
    with pytest.raises(ValueError):
        ef.laplace_exponent(spec, -1.0)


def test_expect_power_counts_tail():
    pmf = ef.custom_jumps([0.5, 0.3], tail_mass=0.2)
    q = 0.5
    assert pmf.expect_power(q) == pytest.approx(0.5 * q + 0.3 * q ** 2 + 0.2 * q ** 3)
    assert pmf.expect_power(1.0) == pytest.approx(1.0)


def test_invalid_pmfs():
    with pytest.raises(ValueError):
        ef.custom_jumps([0.5, 0.4])
    with pytest.raises(ValueError):
        ef.custom_jumps([-0.1, 1.1])
    with pytest.raises(ValueError):
        ef.custom_jumps([0.0], zero_mass=1.0)
    with pytest.raises(ValueError):
        ef.mipp_jumps(1)
    with pytest.raises(ValueError):
        ef.space_fractional_jumps(1.2)
    with pytest.raises(ValueError):
        ef.negative_binomial_jumps(0)
    with pytest.raises(ValueError):
        ef.IvsSpec(-1, ef.poisson_jumps())


def test_make_process():
    spec = ef.make_process(dict(kind='negative_binomial', r=2, p0=0.5, drift=0.3))
    assert spec.drift == 0.3
    assert spec.intensity == pytest.approx(2 * np.log(2))
    custom = ef.make_process(dict(kind='custom', intensity=2.0, masses=[0.25, 0.25], zero_mass=0.5))
    assert custom.lambda_eff == pytest.approx(1.0)
    sc.objdict(custom.to_dict())

    with pytest.raises(ef.ConfigError) as E:
        ef.make_process(dict(kind='levy'))
    assert E.value.path == 'process.kind'
    with pytest.raises(ef.ConfigError) as E:
        ef.make_process(dict(kind='space_fractional'))
    assert E.value.path == 'process.alpha'
    with pytest.raises(ef.ConfigError):
        ef.make_process(dict(kind='mipp', n=1))


def test_pochhammer():
    q = 0.5
    assert ef.pochhammer(q, q, 3) == pytest.approx(0.5 * 0.75 * 0.875)
    assert ef.pochhammer(0.0, q) == 1.0
    assert ef.pochhammer(q, q) == pytest.approx(0.288788095086602, rel=1e-12)


if __name__ == '__main__':
    T = sc.tic()
    test_poisson_jumps()
    test_mipp_two_is_poisson()
    test_mipp_three_zero_atom()
    test_space_fractional_jumps()
    test_space_fractional_heavy_tail()
    test_negative_binomial()
    test_intensities()
    test_normalized_spec()
    test_laplace_exponent()
    test_expect_power_counts_tail()
    test_invalid_pmfs()
    test_make_process()
    test_pochhammer()
    sc.toc(T)
    print('Done.')
