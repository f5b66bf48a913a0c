'''
End-to-end runs of the figure configurations shipped in data/figures through the
command-line entry points.
'''

import os
import numpy as np
import sciris as sc
import pytest
import expfunc as ef
from expfunc import cli

figuredir = os.path.join(ef.datadir, 'figures')
figures = ['figure1', 'figure2', 'figure3', 'figure4', 'figure5', 'figure6', 'figure7a', 'figure7b']

# The finest grid of the gamma figure takes minutes; a coarser one exercises the same path
quick = dict(figure7b=['functional.epsilon=0.01', 'functional.n_terms=200'])


def load(name, overrides=None):
    filename = os.path.join(figuredir, f'{name}.json')
    return cli.RunConfig.load(filename, quick.get(name, []) + (overrides or []))


@pytest.mark.parametrize('name', figures)
def test_figure_density(name):
    ''' Every figure configuration yields a finite, nonnegative density table '''
    ef.logger.info(f'Running {name}')
    rc = load(name)
    command = 'approx' if rc.kind == 'levy_approx' else 'density'
    result = cli.run(command, rc, out=False)
    values = result.table.drop(columns='x').values
    assert result.status == 0
    assert np.all(np.isfinite(values))
    density = result.table[[c for c in result.table.columns if c.startswith('density')]].values
    assert np.all(density >= 0)
    assert np.any(density > 0)


def test_figure_moments():
    rc = load('figure1')
    df = cli.run('moments', rc, out=False).table
    assert np.allclose(df.iloc[0, 1:], 1.0)
    assert np.all(df.iloc[1, 1:].diff().dropna() > 0)  # the mean grows with q


def test_validate_drifted():
    rc = load('figure4', ['functional.mu=1.0', 'mc.n_samples=50000'])
    result = cli.run('validate', rc, out=False)
    print(result.table)
    assert result.status == 0


def test_validate_inverse_power():
    rc = load('figure6', ['functional.p=2', 'mc.n_samples=50000'])
    result = cli.run('validate', rc, out=False)
    print(result.table)
    assert result.status == 0
    df = cli.run('laplace', load('figure6'), out=False).table
    assert np.allclose(df.iloc[0, 1:], 1.0)


if __name__ == '__main__':
    T = sc.tic()
    for name in figures:
        test_figure_density(name)
    test_figure_moments()
    test_validate_drifted()
    test_validate_inverse_power()
    sc.toc(T)
    print('Done.')
