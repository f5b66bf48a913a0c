"""
Monte Carlo samplers of the functionals, used as the reference for the analytic engines.

Samples are produced in blocks of ``block_size``; every block draws from its own
generator spawned from one SeedSequence, so the output depends only on the seed and the
block size, whatever the number of workers.
"""

import numpy as np
import numba as nb
import sciris as sc
import pandas as pd
import scipy.stats as sps
import scipy.special as spsp
import scipy.interpolate as spi
from .config import logger as log
from . import config as cfg
from . import base as efb

__all__ = ['McConfig', 'AliasTable', 'sample_jumps', 'sample_exp_functional', 'sample_inverse_power',
           'sample_decreasing_functional', 'ks_statistic', 'tabulated_cdf', 'empirical_laplace', 'save_samples']

cap_actions = ['truncate', 'raise']


class McConfig(sc.prettyobj):

    def __init__(self, n_samples=100_000, seed=None, series_tol=None, max_terms=None, on_cap='truncate', block_size=None):
        '''
        Monte Carlo settings.

        Args:
            n_samples (int)    : number of samples
            seed (int)         : seed of the SeedSequence; None draws fresh entropy
            series_tol (float) : per-sample truncation, relative to the running value
            max_terms (int)    : hard cap on the number of terms per sample
            on_cap (str)       : 'truncate' keeps the partial sums, 'raise' raises MaxTermsExceeded
            block_size (int)   : samples per random stream
        '''
        self.n_samples = int(n_samples)
        self.seed = seed
        self.series_tol = cfg.default('series_tol', series_tol)
        self.max_terms = int(cfg.default('max_terms', max_terms))
        self.on_cap = on_cap
        self.block_size = int(cfg.default('block_size', block_size))
        if self.n_samples < 1:
            raise ValueError(f'n_samples must be at least 1, not {n_samples}')
        efb.check_open_unit('series_tol', self.series_tol)
        if self.max_terms < 1 or self.block_size < 1:
            raise ValueError('max_terms and block_size must be positive')
        if on_cap not in cap_actions:
            raise ValueError(f'on_cap must be one of {cap_actions}, not "{on_cap}"')
        return

    @classmethod
    def make(cls, mc=None, **kwargs):
        ''' Return mc updated with kwargs, or a new config from kwargs '''
        if mc is None:
            return cls(**kwargs)
        if not kwargs:
            return mc
        pars = sc.mergedicts(dict(n_samples=mc.n_samples, seed=mc.seed, series_tol=mc.series_tol,
                                  max_terms=mc.max_terms, on_cap=mc.on_cap, block_size=mc.block_size), kwargs)
        return cls(**pars)


# %% Jumps

@nb.njit(cache=True)
def _vose(probs):
    ''' Alias table of Vose's method '''
    n = len(probs)
    scaled = probs * n
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        l = large[nl]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        if scaled[l] < 1.0:
            small[ns] = l
            ns += 1
        else:
            large[nl] = l
            nl += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0
    return prob, alias


class AliasTable(sc.prettyobj):

    def __init__(self, pmf):
        '''
        Constant-time sampler of a jump law conditioned on Z >= 1. The tail mass is an
        overflow atom at kmax + 1, as in JumpPmf.expect_power().
        '''
        pmf = pmf.normalized()
        probs = np.array(pmf.masses, dtype=float)
        if pmf.tail_mass > 0:
            probs = np.append(probs, pmf.tail_mass)
        probs /= probs.sum()
        self.probs = probs
        self.prob, self.alias = _vose(probs)
        return

    def draw(self, rng, size):
        i = rng.integers(len(self.prob), size=size)
        u = rng.random(size)
        return np.where(u < self.prob[i], i, self.alias[i]) + 1


def sample_jumps(pmf, n, seed=None):
    ''' n independent jumps from the law conditioned on Z >= 1 '''
    return AliasTable(pmf).draw(np.random.default_rng(seed), int(n))


# %% Streams

def _run_blocks(mc, func, *args):
    ''' Run func over the blocks of mc and concatenate in index order '''
    n_blocks = int(np.ceil(mc.n_samples / mc.block_size))
    seqs = np.random.SeedSequence(mc.seed).spawn(n_blocks)
    tasks = [(i * mc.block_size, min(mc.n_samples, (i + 1) * mc.block_size), seq) for i, seq in enumerate(seqs)]
    if cfg.nthreads and cfg.nthreads > 1 and n_blocks > 1:
        results = sc.parallelize(func, iterarg=tasks, args=args, ncpus=cfg.nthreads)
    else:
        results = [func(task, *args) for task in tasks]
    values = [r[0] for r in results]
    capped = sum(r[1] for r in results)
    if capped:
        errormsg = f'{capped} of {mc.n_samples} samples reached max_terms={mc.max_terms} before the truncation tolerance'
        if mc.on_cap == 'raise':
            raise efb.MaxTermsExceeded(errormsg)
        log.warning(errormsg + '; their partial sums are kept')
    if isinstance(values[0], tuple):
        return tuple(np.concatenate(v) for v in zip(*values))
    return np.concatenate(values)


def _exponentials(rng, n, rate):
    ''' Exp(rate) variates by inversion '''
    return -np.log1p(-rng.random(n)) / rate


def _exp_block(task, table, lam, log_q, mu_q, mean_q, mc):
    start, stop, seq = task
    rng = np.random.default_rng(seq)
    n = stop - start
    v = np.zeros(n)
    S = np.zeros(n, dtype=np.int64)
    T = np.zeros(n)
    active = np.arange(n)
    terms = 0
    while len(active) and terms < mc.max_terms:
        E = _exponentials(rng, len(active), lam)
        qs = np.exp(S[active] * log_q)
        if mu_q == 0:
            v[active] += qs * E
        else:
            t0 = T[active]
            t1 = t0 + E
            v[active] += qs * (np.exp(-mu_q * t0) - np.exp(-mu_q * t1)) / mu_q
            T[active] = t1
        S[active] += table.draw(rng, len(active))
        terms += 1
        qs = np.exp(S[active] * log_q)
        if mu_q == 0:
            bound = qs / (lam * (1 - mean_q))
        else:
            bound = qs * np.exp(-mu_q * T[active]) / mu_q
        active = active[bound >= mc.series_tol * v[active]]
    return v, len(active)


def sample_exp_functional(spec, q, mc=None, **kwargs):
    '''
    Samples of I_q = int q^{S_t + mu t} dt.

    Without drift each sample is sum_k q^{Z_1 + ... + Z_k} E_{k+1}, stopped when the mean
    remainder q^S / (lambda (1 - E q^Z)) falls below series_tol times the running value.
    With drift, every inter-jump segment is integrated exactly and the remainder is bounded
    by q^S exp(-mu_q T) / mu_q, so every sample is at most 1 / mu_q.

    Args:
        spec (IvsSpec) : the process
        q (float)      : base in (0, 1)
        mc (McConfig)  : sampler settings; keyword arguments override its fields

    Returns:
        Array of n_samples values.

    **Example**::

        samples = ef.sample_exp_functional(spec, np.exp(-1), n_samples=10_000, seed=1)
    '''
    efb.check_open_unit('q', q)
    mc = McConfig.make(mc, **kwargs)
    spec = spec.normalized()
    table = AliasTable(spec.jumps)
    log_q = np.log(q)
    mu_q = -log_q * spec.drift
    mean_q = float(spec.mean_q(q))
    return _run_blocks(mc, _exp_block, table, spec.lambda_eff, log_q, mu_q, mean_q, mc)


def _power_bound(S, p, lam):
    ''' Mean of the omitted terms if every remaining jump had the minimum size 1, zeta(p, S + 1) / lam '''
    return spsp.zeta(p, S + 1.0) / lam


def _power_tail(S, p, lam, step):
    ''' Mean of the omitted terms with jumps replaced by their mean, sum_m 1 / (lam (S + 1 + m step)^p) '''
    return spsp.zeta(p, (S + 1.0) / step) / (lam * step ** p)


def _power_block(task, table, lam, p, step, n_terms, mc):
    start, stop, seq = task
    rng = np.random.default_rng(seq)
    n = stop - start
    v = np.zeros(n)
    S = np.zeros(n, dtype=np.int64)
    if n_terms:
        for k in range(n_terms):
            v += _exponentials(rng, n, lam) / (S + 1.0) ** p
            S += table.draw(rng, n)
        return v, 0
    active = np.arange(n)
    terms = 0
    while len(active) and terms < mc.max_terms:
        E = _exponentials(rng, len(active), lam)
        v[active] += E / (S[active] + 1.0) ** p
        S[active] += table.draw(rng, len(active))
        terms += 1
        done = _power_bound(S[active], p, lam) < mc.series_tol * v[active]
        stopped = active[done]
        v[stopped] += _power_tail(S[stopped], p, lam, step)
        active = active[~done]
    if len(active):
        v[active] += _power_tail(S[active], p, lam, step)
    return v, len(active)


def sample_inverse_power(spec, p, mc=None, n_terms=None, **kwargs):
    '''
    Samples of J_p = int (S_t + 1)^{-p} dt = sum_k E_k / (Z_1 + ... + Z_{k-1} + 1)^p.

    Jumps are at least 1, so the mean of the omitted terms is at most zeta(p, S + 1) / lambda.
    Summation stops once that bound is below series_tol times the running value. The mean
    remainder with the jumps replaced by their mean, which lies below the bound, is then added.

    Args:
        spec (IvsSpec) : driftless process
        p (float)      : power > 1
        mc (McConfig)  : sampler settings; keyword arguments override its fields
        n_terms (int)  : if given, the plain sum of exactly this many terms, the law of
                         InversePowerModel with K = n_terms
    '''
    if p <= 1:
        raise ValueError(f'The inverse-power functional needs p > 1, not {p}')
    mc = McConfig.make(mc, **kwargs)
    spec = spec.normalized()
    table = AliasTable(spec.jumps)
    step = float(table.probs @ np.arange(1, len(table.probs) + 1))
    n_terms = int(n_terms) if n_terms else 0
    return _run_blocks(mc, _power_block, table, spec.lambda_eff, float(p), step, n_terms, mc)


def _functional_block(task, table, lam, df, split, mc):
    start, stop, seq = task
    rng = np.random.default_rng(seq)
    n = stop - start
    v = np.zeros(n)
    first = np.zeros(n)
    S = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    terms = 0
    while len(active) and terms < mc.max_terms:
        E = _exponentials(rng, len(active), lam)
        term = df.g(S[active].astype(float)) * E
        v[active] += term
        if terms == 0:
            first[active] = term
        S[active] += table.draw(rng, len(active))
        terms += 1
        Sa = S[active].astype(float)
        bound = (df.g(Sa) + df.tail(Sa)) / lam
        active = active[bound >= mc.series_tol * v[active]]
    if split:
        return (v, v - first), len(active)
    return v, len(active)


def sample_decreasing_functional(df, spec, mc=None, split=False, **kwargs):
    '''
    Samples of int g(S_t) dt = sum_k g(Z_1 + ... + Z_k) E_{k+1}, stopped when
    (g(S) + int_S^inf g) / lambda drops below series_tol times the running value.

    Args:
        df (DecreasingFunctional) : the integrand
        spec (IvsSpec)            : driftless process
        mc (McConfig)             : sampler settings; keyword arguments override its fields
        split (bool)              : also return Lambda = I - g(0) E_1, the part independent of the first sojourn

    Returns:
        The samples, or the pair (I, Lambda) when split is True.
    '''
    mc = McConfig.make(mc, **kwargs)
    spec = spec.normalized()
    table = AliasTable(spec.jumps)
    return _run_blocks(mc, _functional_block, table, spec.lambda_eff, df, split, mc)


# %% Comparisons

def ks_statistic(samples, cdf):
    '''
    Two-sided Kolmogorov-Smirnov distance between the samples and a model CDF.

    Args:
        samples (array)  : nonempty sample vector
        cdf (callable)   : vectorized distribution function
    '''
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError('The KS statistic needs at least one sample')
    return float(sps.kstest(samples, cdf).statistic)


def tabulated_cdf(cdf, grid):
    '''
    A cheap monotone stand-in for an expensive CDF: values on the grid joined by a shape
    preserving cubic, 0 below and 1 above the grid.
    '''
    grid = np.asarray(grid, dtype=float)
    values = np.maximum.accumulate(np.clip(cdf(grid), 0, 1))
    interp = spi.PchipInterpolator(grid, values, extrapolate=False)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = interp(x)
        out = np.where(x < grid[0], values[0], out)
        out = np.where(x > grid[-1], 1.0, out)
        return out

    return evaluate


def empirical_laplace(samples, u):
    '''
    Sample mean of exp(-u X) and its standard error.

    Returns:
        Tuple (estimate, standard error), with the shape of u.
    '''
    u, scalar = efb.toarray(u, dtype=complex)
    samples = np.asarray(samples, dtype=float)
    vals = np.exp(-np.outer(u, samples))
    est = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(len(samples))
    return efb.unwrap(est, scalar), efb.unwrap(se, scalar)


def save_samples(filename, samples):
    ''' Write the samples as a single-column CSV '''
    df = pd.DataFrame({'sample': np.asarray(samples, dtype=float)})
    df.to_csv(filename, index=False, float_format='%.17g', lineterminator='\n')
    return filename
