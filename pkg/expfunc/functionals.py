"""
Integrals of decreasing functions of an IVS, int g(S_t) dt: convergence certificates, the
Laplace transform as a limit of products, and the inverse-power functional
J_p = int (S_t + 1)^{-p} dt, whose truncations are hypoexponential mixtures.
"""

import numpy as np
import sciris as sc
import scipy.integrate as spi
import scipy.special as spsp
import scipy.interpolate as spip
from .config import logger as log
from . import config as cfg
from . import base as efb
from . import sampling as efs

__all__ = ['DecreasingFunctional', 'power_functional', 'exponential_functional', 'converges',
           'laplace_limit', 'hypoexponential_weights', 'lagrange_weights', 'hypoexponential_density',
           'InversePowerModel', 'inverse_power_density', 'inverse_power_cdf', 'inverse_power_laplace',
           'inverse_power_moment', 'log_tail_bound']

statuses = ['converges', 'diverges', 'unknown']


class DecreasingFunctional(sc.prettyobj):

    def __init__(self, g, g0=None, eventually_convex=False, tail=None, label='custom'):
        '''
        A nonincreasing, nonnegative integrand g of the functional int g(S_t) dt.

        Args:
            g (callable)             : vectorized g(x) for x >= 0
            g0 (float)               : g(0); computed when None
            eventually_convex (bool) : whether g is convex beyond some point, which lets the
                                       integral test certify convergence
            tail (callable)          : int_x^inf g, if known in closed form
            label (str)              : name used in metadata
        '''
        self.g = g
        self.g0 = float(g(np.zeros(1))[0]) if g0 is None else float(g0)
        self.eventually_convex = bool(eventually_convex)
        self._tail = tail
        self.label = label
        self._tail_cache = {}
        efb.check_positive('g(0)', self.g0)
        grid = np.concatenate([np.linspace(0, 10, 101), np.logspace(1, 6, 51)[1:]])
        values = np.asarray(g(grid), dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f'g must be finite and nonnegative; check "{label}"')
        if np.any(np.diff(values) > 1e-12 * self.g0):
            raise ValueError(f'g must be nonincreasing; check "{label}"')
        return

    def __call__(self, x):
        return self.g(x)

    def tail(self, x):
        ''' int_x^inf g, elementwise; by quadrature when no closed form was given '''
        x, scalar = efb.toarray(x)
        if self._tail is not None:
            return efb.unwrap(np.asarray(self._tail(x), dtype=float), scalar)
        out = np.empty(len(x))
        for i, xi in enumerate(x):
            if xi not in self._tail_cache:
                self._tail_cache[xi] = spi.quad(self.g, xi, np.inf, limit=200)[0]
            out[i] = self._tail_cache[xi]
        return efb.unwrap(out, scalar)


def power_functional(p):
    ''' g(x) = (x + 1)^{-p}, giving the inverse-power functional J_p '''
    efb.check_positive('p', p)
    p = float(p)
    tail = (lambda x: (x + 1.0) ** (1 - p) / (p - 1)) if p > 1 else (lambda x: np.full(np.shape(x), np.inf))
    return DecreasingFunctional(lambda x: (np.asarray(x, dtype=float) + 1.0) ** -p, g0=1.0,
                                eventually_convex=True, tail=tail, label=f'power(p={p:g})')


def exponential_functional(q):
    ''' g(x) = q^x, giving the exponential functional I_q '''
    efb.check_open_unit('q', q)
    log_q = np.log(q)
    return DecreasingFunctional(lambda x: np.exp(np.asarray(x, dtype=float) * log_q), g0=1.0,
                                eventually_convex=True, tail=lambda x: np.exp(x * log_q) / -log_q,
                                label=f'exponential(q={q:g})')


def converges(df, k_probe=10_000):
    '''
    Three-valued test of whether sum_k g(k) is finite, which decides whether int g(S_t) dt
    exists.

    The sum diverges when k g(k) fails to decay along the probes k_probe * 10^i, i = 0..6,
    i.e. the last probe is still at least 0.9 times the first. It converges when g is flagged
    eventually convex and int_{k_probe}^inf g is finite, and that integral bounds the tail of
    the sum. Anything else is reported as unknown.

    Args:
        df (DecreasingFunctional) : the integrand
        k_probe (int)             : depth of the partial sum and of the first probe

    Returns:
        objdict with status, partial_sum, tail_bound (None unless certified) and witness values.

    **Example**::

        ef.converges(ef.power_functional(2)).status  # 'converges'
    '''
    if k_probe < 10:
        raise ValueError(f'k_probe must be at least 10, not {k_probe}')
    k = np.arange(int(k_probe) + 1, dtype=float)
    partial = float(efb.neumaier_sum(np.asarray(df.g(k), dtype=float)))
    probes = k_probe * 10.0 ** np.arange(7)
    witness = probes * np.asarray(df.g(probes), dtype=float)
    out = sc.objdict(status='unknown', partial_sum=partial, tail_bound=None, witness=witness)
    if witness[0] > 0 and witness[-1] >= 0.9 * witness[0]:
        out.status = 'diverges'
    elif df.eventually_convex:
        if df._tail is not None:
            tail = float(df.tail(float(k_probe)))
            err = 0.0
        else:
            tail, err = spi.quad(df.g, k_probe, np.inf, limit=200)
        if np.isfinite(tail) and err <= 1e-6 * max(abs(tail), 1e-300):
            out.status = 'converges'
            out.tail_bound = tail
    log.debug(f'Convergence of {df.label}: {out.status} (partial sum {partial:.6g})')
    return out


def laplace_limit(df, spec, u, K=None, n_mc=10_000, seed=None, tol=1e-6):
    '''
    E exp(-u int g(S_t) dt) as the limit of E prod_{k=0}^{K} lambda / (lambda + g(S_k) u),
    with lambda the intensity of the positive jumps, averaged over n_mc jump sequences.

    Args:
        df (DecreasingFunctional) : the integrand; must not be certified divergent
        spec (IvsSpec)            : driftless process
        u (complex)               : argument, Re u > -lambda / g(0)
        K (int)                   : product depth; by default the smallest depth whose
                                    remainder bound |u| (g(K) + int_K^inf g) / lambda is below tol, at most 10_000
        n_mc (int)                : number of sampled jump sequences
        seed (int)                : random seed
        tol (float)               : remainder target of the automatic depth

    Returns:
        objdict with value, stderr, K and tail_bound.
    '''
    cert = converges(df)
    if cert.status == 'diverges':
        raise efb.DivergentFunctional(f'int g(S_t) dt diverges for {df.label}: k g(k) does not vanish')
    elif cert.status == 'unknown':
        log.warning(f'Convergence of {df.label} could not be certified; the limit may not exist')
    spec = spec.normalized()
    if spec.drift:
        raise ValueError('Laplace limits are only available without drift')
    lam = spec.lambda_eff
    u = complex(u)
    if u.real <= -lam / df.g0:
        raise ValueError(f'Re u must exceed -lambda/g(0) = {-lam / df.g0:.6g}, not {u.real}')
    as_real = u.imag == 0

    def bound(k):
        return abs(u) * float(df.g(np.array([float(k)]))[0] + df.tail(float(k))) / lam

    if u == 0:
        return sc.objdict(value=1.0, stderr=0.0, K=0, tail_bound=0.0)
    if K is None:
        K = 1
        while K < 10_000 and bound(K) >= tol:
            K = min(2 * K, 10_000)
    K = int(K)
    rng = np.random.default_rng(seed)
    table = efs.AliasTable(spec.jumps)
    S = np.zeros(n_mc)
    logprod = np.zeros(n_mc, dtype=complex)
    for k in range(K + 1):
        logprod += np.log(lam / (lam + df.g(S) * u))
        S += table.draw(rng, n_mc)
    vals = np.exp(logprod)
    if as_real:
        vals = vals.real
    value = vals.mean()
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else np.nan
    return sc.objdict(value=value, stderr=stderr, K=K, tail_bound=bound(K + 1))


# %% Hypoexponential laws

def _check_rates(rates):
    rates = np.asarray(rates, dtype=float).ravel()
    if np.any(rates <= 0):
        raise ValueError('Rates must be positive')
    srt = np.sort(rates)
    if len(srt) > 1 and np.min(np.diff(srt) / srt[1:]) < 1e-12:
        raise efb.DegenerateRates('Hypoexponential rates must be distinct')
    return rates


def hypoexponential_weights(rates):
    '''
    Partial-fraction weights prod_{j != i} r_j / (r_j - r_i) of the law of a sum of
    independent exponentials with distinct rates r.
    '''
    rates = _check_rates(rates)
    ratio = rates[None, :] / (rates[None, :] - rates[:, None] + np.eye(len(rates)))
    np.fill_diagonal(ratio, 1.0)
    return ratio.prod(axis=1)


def lagrange_weights(rates):
    ''' The same weights as values at 0 of the Lagrange basis polynomials on the rates '''
    rates = _check_rates(rates)
    if len(rates) == 1:
        return np.ones(1)
    return spip.BarycentricInterpolator(rates, np.eye(len(rates)))(0.0)


def hypoexponential_density(rates, x):
    ''' Density sum_i w_i r_i exp(-r_i x) of the sum of exponentials, clamped at 0 '''
    rates = _check_rates(rates)
    w = hypoexponential_weights(rates)
    x, scalar = efb.toarray(x)
    out = np.exp(-np.outer(x, rates)) @ (w * rates)
    return efb.unwrap(np.maximum(out, 0), scalar)


# %% Inverse power

class InversePowerModel(sc.prettyobj):

    def __init__(self, spec, p, K=10, nested_depth=5, max_work=None):
        '''
        The K-term truncation J = sum_{k<=K} E_k / (S_{k-1} + 1)^p of the inverse-power
        functional, with the jump law truncated at nested_depth and renormalised.

        Given the visited partial sums, J is hypoexponential with rates lambda (s + 1)^p, so
        its law is a mixture sum_s A_s Exp(lambda (s + 1)^p) over the partial-sum states
        s = 0..(K-1) nested_depth. The weights A_s are computed exactly by a forward/backward
        recursion over the states.

        Args:
            spec (IvsSpec)     : driftless process
            p (float)          : power > 1
            K (int)            : number of exponential terms; K=1 is Exp(lambda)
            nested_depth (int) : largest jump kept
            max_work (int)     : bound on K times the squared number of states
        '''
        if p <= 1:
            raise ValueError(f'The inverse-power functional needs p > 1, not {p}')
        if spec.drift:
            raise ValueError('The inverse-power functional is only available without drift')
        if int(K) < 1 or int(nested_depth) < 1:
            raise ValueError('K and nested_depth must be positive integers')
        max_work = cfg.default('max_work', max_work)
        self.spec = spec.normalized()
        self.p = float(p)
        self.K = int(K)
        self.nested_depth = int(nested_depth)
        self.lambda_eff = self.spec.lambda_eff

        masses = np.zeros(self.nested_depth)
        stored = self.spec.jumps.masses[:self.nested_depth]
        masses[:len(stored)] = stored
        self.coverage = float(masses.sum())
        if self.coverage < 1 - 1e-3:
            errormsg = f'Jumps up to {self.nested_depth} cover only {self.coverage:.6f} of the jump law; increase nested_depth'
            raise efb.TruncationBudgetExceeded(errormsg)
        self.jump_weights = masses / self.coverage
        self.n_states = (self.K - 1) * self.nested_depth + 1
        if self.K * self.n_states ** 2 > max_work:
            errormsg = f'{self.n_states} states over {self.K} terms exceed max_work={max_work}'
            raise efb.TruncationBudgetExceeded(errormsg)
        self.rates = self.lambda_eff * (np.arange(self.n_states) + 1.0) ** self.p
        if np.any(np.diff(self.rates) <= 0):
            raise efb.DegenerateRates('Rates of distinct partial sums coincide')
        T = sc.tic()
        self.weights = self._mixture_weights()
        log.debug(f'Inverse-power weights over {self.n_states} states: {sc.toc(T, output=True):.3f} s, sum {self.weights.sum():.12f}')
        return

    def _step(self, v):
        ''' Push mass one jump forward along the last axis '''
        out = np.zeros_like(v)
        for z, w in enumerate(self.jump_weights, 1):
            if w and z < v.shape[-1]:
                out[..., z:] += w * v[..., :-z]
        return out

    def _back(self, v):
        ''' Expectation over one jump of a function of the next state '''
        out = np.zeros_like(v)
        for z, w in enumerate(self.jump_weights, 1):
            if w and z < v.shape[-1]:
                out[..., :-z] += w * v[..., z:]
        return out

    def _mixture_weights(self):
        n = self.n_states
        r = self.rates
        idx = np.arange(n)
        # ratio[t, s] = r_s / (r_s - r_t), the factor of every other state on the path of t
        diff = r[None, :] - r[:, None]
        np.fill_diagonal(diff, 1.0)
        ratio = r[None, :] / diff
        np.fill_diagonal(ratio, 0.0)
        before = ratio * (idx[None, :] < idx[:, None])

        fwd = np.zeros((n, n))
        fwd[:, 0] = 1.0
        fdiag = [np.diag(fwd).copy()]
        for i in range(1, self.K):
            fwd = self._step(fwd * before)
            fdiag.append(np.diag(fwd).copy())

        bwd = np.ones((n, n))
        total = fdiag[self.K - 1] * np.diag(bwd)
        for i in range(self.K - 2, -1, -1):
            bwd = self._back(ratio * bwd)
            total += fdiag[i] * np.diag(bwd)
        return total

    def density(self, x):
        return inverse_power_density(self, x)

    def cdf(self, x):
        return inverse_power_cdf(self, x)

    def laplace(self, u):
        return inverse_power_laplace(self, u)

    def moment(self, m):
        return inverse_power_moment(self, m)

    def mean(self):
        return inverse_power_moment(self, 1)

    def to_dict(self):
        return dict(p=self.p, K=self.K, nested_depth=self.nested_depth, lambda_eff=self.lambda_eff,
                    coverage=self.coverage, rates=self.rates.tolist(), weights=self.weights.tolist())


def inverse_power_density(model, x):
    '''
    Density sum_s A_s r_s exp(-r_s x) of the truncated inverse-power functional.

    Rounding in the alternating sum is clamped at 0.
    '''
    x, scalar = efb.toarray(x)
    if np.any(x < 0):
        raise ValueError('x must be nonnegative')
    out = np.exp(-np.outer(x, model.rates)) @ (model.weights * model.rates)
    return efb.unwrap(np.maximum(out, 0), scalar)


def inverse_power_cdf(model, x):
    x, scalar = efb.toarray(x)
    out = 1 - np.exp(-np.outer(np.maximum(x, 0), model.rates)) @ model.weights
    out[x <= 0] = 0
    return efb.unwrap(np.clip(out, 0, 1), scalar)


def inverse_power_moment(model, m):
    ''' E J^m = sum_s A_s m! / r_s^m '''
    if m < 0 or int(m) != m:
        raise ValueError(f'm must be a nonnegative integer, not {m}')
    return float(np.exp(spsp.gammaln(m + 1)) * np.sum(model.weights / model.rates ** m))


def log_tail_bound(model, u, n_sum=100_000):
    '''
    Bound on |log| of the Laplace factors dropped by the truncation,
    sum_{k > K} -log(1 - |u| / (lambda k^p)), using S_{k-1} + 1 >= k. The sum runs to
    n_sum and is closed by an integral bound.

    Returns:
        The bound, or inf when |u| >= lambda (K+1)^p.
    '''
    lam = model.lambda_eff
    a = abs(complex(u)) / lam
    if a == 0:
        return 0.0
    k = np.arange(model.K + 1, max(n_sum, model.K + 2), dtype=float)
    z = a / k ** model.p
    if z[0] >= 1:
        return np.inf
    rest = a * (k[-1] ** (1 - model.p)) / (model.p - 1) / (1 - z[-1])
    return float(np.sum(-np.log1p(-z)) + rest)


def inverse_power_laplace(model, u, tail_budget=None):
    '''
    E exp(-u J) of the truncated model, E prod_{k<=K} r / (r + u) over the visited rates,
    by a backward recursion over the partial-sum states.

    Args:
        model (InversePowerModel) : the model
        u (complex or array)      : arguments with Re u > -lambda
        tail_budget (float)       : largest allowed log_tail_bound(); inf disables the check

    Returns:
        Values with the shape of u; real when u is real.
    '''
    tail_budget = cfg.default('tail_budget', tail_budget)
    u_arr, scalar = efb.toarray(u, dtype=complex)
    if np.any(u_arr.real <= -model.lambda_eff):
        raise ValueError(f'Re u must exceed -lambda = {-model.lambda_eff:.6g}')
    bound = max(log_tail_bound(model, ui) for ui in u_arr)
    if bound > tail_budget:
        errormsg = f'The terms beyond K={model.K} may change log E exp(-uJ) by up to {bound:.3g} > {tail_budget:g}; increase K or reduce |u|'
        raise efb.TruncationBudgetExceeded(errormsg)
    factor = model.rates[None, :] / (model.rates[None, :] + u_arr[:, None])
    val = factor.copy()
    for i in range(model.K - 1):
        val = factor * model._back(val)
    out = val[:, 0]
    if np.all(np.isreal(np.asarray(u))):
        out = out.real
    return efb.unwrap(out, scalar)
