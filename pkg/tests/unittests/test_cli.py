"""
Test the command-line surface: configuration checks, overrides, the tables of each command
and the exit codes.
"""

import os
import numpy as np
import pandas as pd
import sciris as sc
import pytest
import expfunc as ef
from expfunc import cli
import utilities as ut

poisson_doc = dict(
    process    = {'kind': 'poisson', 'lambda': 1.0},
    functional = {'kind': 'exp', 'q': 1 / np.e},
    output     = {'x': {'min': 0.05, 'max': 4, 'points': 50}, 'u': [0.0, 0.5, 1.0], 'm_max': 3},
    mc         = {'n_samples': 20_000},
    seed       = 3,
)


def make(doc=None, overrides=None):
    return cli.RunConfig.from_dict(doc or poisson_doc, overrides)


def write(tmp_path, doc, name='run.json'):
    filename = str(tmp_path / name)
    sc.savejson(filename, doc)
    return filename


def test_overrides():
    rc = make(overrides=['functional.q=0.5', 'seed=9', 'mc.n_samples=100'])
    assert rc.functional.q == 0.5
    assert rc.seed == 9
    assert rc.mc_config().n_samples == 100
    with pytest.raises(ef.ConfigError):
        make(overrides=['q=0.5'])
    with pytest.raises(ef.ConfigError):
        make(overrides=['functional.q'])


def test_invalid_configs():
    with pytest.raises(ef.ConfigError) as E:
        make(overrides=['functional.q=1.5'])
    assert E.value.path == 'functional.q'

    doc = sc.mergedicts(poisson_doc, dict(tolerances={'not_a_tolerance': 1}))
    with pytest.raises(ef.ConfigError) as E:
        make(doc)
    assert E.value.path == 'tolerances.not_a_tolerance'

    doc = sc.dcp(poisson_doc)
    doc['functional'] = {'kind': 'exp_drifted', 'q': [0.2, 0.3], 'mu': [1, 2]}
    with pytest.raises(ef.ConfigError) as E:
        make(doc)
    assert E.value.path == 'functional.mu'

    doc = sc.dcp(poisson_doc)
    doc['output'] = {'x': {'min': 2, 'max': 1}}
    with pytest.raises(ef.ConfigError) as E:
        make(doc)
    assert E.value.path == 'output.x.min'

    with pytest.raises(ef.ConfigError):
        make(sc.mergedicts(poisson_doc, dict(extra={})))
    with pytest.raises(ef.ConfigError):
        make(overrides=['functional.kind="lognormal"'])


def test_exit_codes(tmp_path):
    filename = write(tmp_path, poisson_doc)
    out = str(tmp_path / 'density.csv')
    assert cli.main(['density', filename, '--out', out]) == 0
    assert os.path.exists(out)
    assert cli.main(['density', filename, '--set', 'functional.q=1.5', '--out', out]) == 2
    assert cli.main(['density', str(tmp_path / 'missing.json'), '--out', out]) == 2
    bad = tmp_path / 'bad.json'
    bad.write_text('{"process": ')
    assert cli.main(['density', str(bad), '--out', out]) == 2
    assert cli.main(['density', filename, '--set', 'process.drift=1.0', '--out', out]) == 2


def test_density_table():
    result = cli.run('density', make(), out=False)
    df = result.table
    assert list(df.columns) == ['x', 'density']
    model = ef.build_coefficients(ef.make_process(poisson_doc['process']), 1 / np.e)
    assert np.allclose(df.density, model.density(df.x.values), rtol=1e-12)
    assert result.text.startswith('# command: density')
    assert '\r' not in result.text
    assert result.meta.K == model.K


def test_drifted_support():
    ''' Zero beyond 1/mu; positive down to the left end of the last evaluated interval '''
    doc = sc.dcp(poisson_doc)
    doc['functional'] = {'kind': 'exp_drifted', 'q': 1 / np.e, 'mu': 2.0}
    doc['output']['x'] = {'min': 0.01, 'max': 1, 'points': 100}
    df = cli.run('density', make(doc), out=False).table
    pd_model = ef.build_piecewise(ef.make_process(dict(kind='poisson', drift=2.0, **{'lambda': 1.0})), 1 / np.e)
    left = pd_model.breakpoints[pd_model.K + 1]
    assert left == pytest.approx(np.exp(-(pd_model.K + 1)) / 2)
    assert np.all(df.density[df.x > 0.5] == 0)
    inside = (df.x > left) & (df.x < 0.5)
    assert inside.sum() > 40
    assert np.all(df.density[inside] > 0)


def test_moments_and_laplace():
    df = cli.run('moments', make(), out=False).table
    assert df.moment[0] == 1.0
    assert df.moment[1] == pytest.approx(1 / (1 - np.exp(-1)))
    df = cli.run('laplace', make(), out=False).table
    assert df.laplace[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(df.laplace) < 0)


def test_validate():
    result = cli.run('validate', make(overrides=['mc.n_samples=100000']), out=False)
    print(result.table)
    assert result.status == 0
    assert result.meta.result == 'pass'
    assert set(result.table.check) == {'ks', 'mean_z', 'normalization'}


def test_validate_capped():
    ''' A model cut at k_max fails validation on its truncation row '''
    rc = make(overrides=['tolerances.k_max=2', 'mc.n_samples=5000'])
    result = cli.run('validate', rc, out=False)
    assert result.status == 1
    row = result.table[result.table.check == 'truncation']
    assert len(row) == 1 and not row.passed.iloc[0]
    with pytest.raises(ef.CapExceeded):
        cli.run('density', rc, out=False)
    assert ef.get_defaults()['k_max'] == 10000


def test_reports_are_reproducible(tmp_path):
    rc = make(overrides=['mc.n_samples=2000'])
    a = str(tmp_path / 'a.csv')
    b = str(tmp_path / 'b.csv')
    cli.run('validate', rc, out=a)
    cli.run('validate', rc, out=b)
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        assert fa.read() == fb.read()
    df = pd.read_csv(a, comment='#')
    assert list(df.columns) == ['check', 'value', 'threshold', 'passed']


def test_sample():
    rc = make(overrides=['mc.n_samples=1234'])
    result = cli.run('sample', rc, out=False)
    assert len(result.table) == 1234
    assert result.meta.seed == 3
    with pytest.raises(ef.ConfigError):
        cli.run('sample', cli.RunConfig.from_dict(ut.load_figure('figure1')), out=False)


def test_sweep_columns():
    rc = cli.RunConfig.from_dict(ut.load_figure('figure1'), ['output.x={"min": 0.1, "max": 3, "points": 20}'])
    df = cli.run('density', rc, out=False).table
    expected = ['x'] + [f'density@q={q:.6g}' for q in ut.q_values]
    assert list(df.columns) == expected
    assert np.all(df.iloc[:, 1:].values >= 0)


def test_approx():
    ''' The cpe(1, 1) approximation next to its Gamma(2, 1) density '''
    rc = cli.RunConfig.from_dict(ut.load_figure('figure7a'))
    result = cli.run('approx', rc, out=False)
    df = result.table
    assert list(df.columns) == ['x', 'density', 'cdf', 'oracle']
    assert np.max(np.abs(df.density - df.oracle)) < 0.05
    assert result.meta.epsilon == 0.01
    with pytest.raises(ef.ConfigError):
        cli.run('approx', make(), out=False)


def test_version(capsys):
    with pytest.raises(SystemExit) as E:
        cli.main(['--version'])
    assert E.value.code == 0
    out = capsys.readouterr().out
    assert ef.__version__ in out
    assert ''.join(out.split()) == ''.join(ef.version_info().split())  # argparse rewraps long lines


if __name__ == '__main__':
    T = sc.tic()
    test_overrides()
    test_invalid_configs()
    test_density_table()
    test_drifted_support()
    test_moments_and_laplace()
    test_validate()
    test_validate_capped()
    test_sample()
    test_sweep_columns()
    test_approx()
    sc.toc(T)
    print('Done.')
