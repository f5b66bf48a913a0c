"""
Driftless exponential functionals I_q = int_0^inf q^{S_t} dt of an integer-valued
subordinator S, represented by the generalized Dirichlet series

    phi_q(x) = a / (sum_j c_j q^j) * sum_j c_j exp(-a q^{-j} x),

with a = lambda P{Z >= 1} and coefficients from the recurrence

    c_j = -(1 - q^j)^{-1} sum_{k=1}^{j} P{Z~ = k} q^{j-k} c_{j-k},   c_0 = 1.

The recurrence is written for d_j = q^j c_j so that no large q^{-k} factors appear. The
double-precision path runs in a numba kernel with compensated summation; when too many
digits cancel, the coefficients are rebuilt with mpmath.
"""

import numpy as np
import numba as nb
import sciris as sc
from mpmath import mp
import scipy.optimize as spo
import scipy.special as spsp
from .config import logger as log
from . import config as cfg
from . import base as efb
from . import catalog as efc
from .base import neumaier_sum

# density, cdf, etc. collide with the drifted engine and are reached as ef.series.density()
__all__ = ['ExpFunctionalModel', 'build_coefficients', 'poisson_coefficients']


@nb.njit(cache=True)
def _extend_double(c, d, p, log_q, start, stop):
    ''' Fill c[start:stop] and d[start:stop] from the earlier entries '''
    kmax = len(p)
    buf = np.empty(kmax)
    for j in range(start, stop):
        m = min(j, kmax)
        for k in range(m):
            buf[k] = p[k] * d[j - 1 - k]
        s = neumaier_sum(buf[:m])
        c[j] = s / np.expm1(j * log_q)
        d[j] = c[j] * np.exp(j * log_q)
    return


def _digits_lost(cmax, denom):
    ''' Decimal digits lost to cancellation in the series sums '''
    return np.log10(max(1.0, float(cmax))) + max(0.0, -np.log10(max(abs(float(denom)), 1e-300)))


class ExpFunctionalModel(sc.prettyobj):
    '''
    A built Dirichlet-series model of I_q; see build_coefficients().

    Attributes:
        q (float)               : base in (0, 1)
        log_q (float)           : log q, exact when supplied by the caller
        scale_a (float)         : lambda P{Z >= 1}
        coeffs (array)          : c_0..c_{K_eval}
        scaled (array)          : d_j = c_j q^j
        denom (float)           : sum_j c_j q^j
        K (int)                 : truncation index selected by the criterion
        K_eval (int)            : last index of the evaluated series, >= K; the terms after it carry
                                  less than omitted_mass_tol of the mass
        criterion_value (float) : a |sum c_j| / |sum c_j q^j| at K
        c_next (float)          : c_{K_eval+1}, used by the remainder estimate
        precision               : 'double' or the mpmath working precision in digits
        x_crossover (float)     : below it the truncated series is dominated by its remainder
    '''

    def __init__(self, spec, q, log_q, coeffs, scaled, c_next, K, criterion_value, threshold, precision='double', mp_data=None):
        self.spec = spec
        self.q = float(q)
        self.log_q = log_q
        self.scale_a = spec.lambda_eff
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.scaled = np.asarray(scaled, dtype=float)
        self.K = int(K)
        self.K_eval = len(self.coeffs) - 1
        self.criterion_value = float(criterion_value)
        self.threshold = threshold
        self.c_next = float(c_next)
        self.precision = precision
        self._mp = mp_data  # (c, d, denom, rates) as mpf lists when built in extended precision
        if mp_data is not None:
            self.denom = float(mp_data[2])
        else:
            self.denom = float(neumaier_sum(self.scaled))
        self.rates = self.scale_a * np.exp(-np.arange(self.K_eval + 1) * float(log_q))
        self._peak = None
        self.x_crossover = self._crossover()
        return

    @property
    def extended(self):
        return self._mp is not None

    def _crossover(self, small_x_tol=None):
        small_x_tol = cfg.default('small_x_tol', small_x_tol)
        rate_next = self.scale_a * np.exp(-(self.K_eval + 1) * float(self.log_q))
        amp = self.scale_a / abs(self.denom) * abs(self.c_next)
        if amp <= small_x_tol:
            return 0.0
        return float(np.log(amp / small_x_tol) / rate_next)

    def error_estimate(self, x):
        ''' Size of the first omitted term, (a/|denom|) |c_{N+1}| exp(-a q^{-N-1} x) with N = K_eval '''
        x, scalar = efb.toarray(x)
        rate_next = self.scale_a * np.exp(-(self.K_eval + 1) * float(self.log_q))
        out = self.scale_a / abs(self.denom) * abs(self.c_next) * np.exp(-rate_next * x)
        return efb.unwrap(out, scalar)

    # %% Raw sums

    def _sum_double(self, x, weights):
        out = np.empty(len(x))
        chunk = 1024
        for i0 in range(0, len(x), chunk):
            xs = x[i0:i0 + chunk]
            out[i0:i0 + chunk] = np.exp(-np.outer(xs, self.rates)) @ weights
        return out

    def _sum_extended(self, x, which):
        c, d, denom, rates = self._mp
        weights = c if which == 'c' else d
        out = np.empty(len(x))
        with mp.workdps(self.precision):
            cutoff = (self.precision + 5) * mp.log(10)
            for i, xi in enumerate(x):
                xm = mp.mpf(float(xi))
                terms = []
                for w, r in zip(weights, rates):
                    e = r * xm
                    if e > cutoff:
                        break  # rates increase with j
                    terms.append(w * mp.exp(-e))
                out[i] = float(mp.fsum(terms))
        return out

    def _raw_density(self, x):
        if self.extended:
            s = self._sum_extended(x, 'c')
        else:
            s = self._sum_double(x, self.coeffs)
        return self.scale_a / self.denom * s

    @property
    def peak(self):
        ''' Maximum of the density on a logarithmic grid around the mean '''
        if self._peak is None:
            grid = mean(self.spec, self.q) * np.logspace(-3, 1.5, 400)
            self._peak = float(np.max(self._raw_density(grid)))
        return self._peak

    # %% Evaluation

    def density(self, x, tol_neg=None):
        return density(self, x, tol_neg=tol_neg)

    def cdf(self, x):
        return cdf(self, x)

    def sf(self, x):
        return sf(self, x)

    def laplace(self, u):
        return laplace(self, u)

    def quantile(self, p):
        return quantile(self, p)

    def mean(self):
        return mean(self.spec, self.q)

    def moment(self, m):
        return moment(self.spec, self.q, m)

    def moment_series(self, m):
        '''
        The m-th moment of the truncated series itself,
        m! / (a^m sum_j c_j q^j) * sum_j c_j q^{j(m+1)}.
        '''
        m = int(m)
        if self.extended:
            c, d, denom, rates = self._mp
            with mp.workdps(self.precision):
                lq = mp.mpf(self.log_q)
                s = mp.fsum(cj * mp.exp(j * (m + 1) * lq) for j, cj in enumerate(c))
                return float(mp.factorial(m) / (mp.mpf(self.scale_a) ** m * denom) * s)
        j = np.arange(self.K_eval + 1)
        s = neumaier_sum(self.coeffs * np.exp(j * (m + 1) * float(self.log_q)))
        return float(spsp.factorial(m) / (self.scale_a ** m * self.denom) * s)

    def x_max(self, tol=1e-9):
        ''' A point beyond which the survival function is below tol '''
        x = -np.log(tol) / self.scale_a
        while sf(self, x) > tol:
            x *= 1.5
        return float(x)

    def to_dict(self):
        out = dict(q=self.q, log_q=float(self.log_q), scale_a=self.scale_a, K=self.K, K_eval=self.K_eval,
                   coeffs=self.coeffs.tolist(), denom=self.denom, criterion_value=self.criterion_value,
                   threshold=self.threshold, precision=self.precision, x_crossover=self.x_crossover,
                   process=self.spec.label)
        return out

    def save(self, filename):
        ''' Write the model to a JSON document '''
        return sc.savejson(filename, self.to_dict(), indent=2)


# %% Construction

def _search_double(p, log_q, a, threshold, k_max, n_terms):
    '''
    Extend the coefficient table in chunks until the criterion holds. Returns the arrays
    (through index K+1 at least), K, the criterion value, whether it was met and the number
    of filled entries.
    '''
    size = (n_terms + 1) if n_terms else (k_max + 2)
    c = np.zeros(size)
    d = np.zeros(size)
    c[0] = d[0] = 1.0
    if n_terms:
        _extend_double(c, d, p, log_q, 1, size)
        K = n_terms - 1
        crit = a * abs(c[:K + 1].sum()) / abs(d[:K + 1].sum())
        return c, d, K, crit, True, size
    filled = 1
    stop = 64
    crit = np.inf
    while True:
        stop = min(stop, size)
        _extend_double(c, d, p, log_q, filled, stop)
        with np.errstate(all='ignore'):
            crits = a * np.abs(np.cumsum(c[:stop - 1])) / np.abs(np.cumsum(d[:stop - 1]))
        crits[0] = np.inf
        below = np.flatnonzero(crits < threshold)
        if len(below):
            K = int(below[0])
            return c, d, K, crits[K], True, stop
        crit = crits[-1]
        if stop == size or not np.all(np.isfinite(c[:stop])):
            return c, d, stop - 2, crit, False, stop
        filled = stop
        stop *= 2


def _omitted_small(d, N, tol, dsum):
    ''' The next two scaled terms bound the omitted mass; d_j decays faster than geometrically '''
    return abs(d[N + 1]) + abs(d[N + 2]) < tol * abs(dsum)


def _evaluation_double(c, d, p, log_q, K, filled, tol, extra=64):
    '''
    Grow the table past K until the terms after N carry an L1 mass
    sum_{j>N} |c_j q^j| / |sum_{j<=N} c_j q^j| below tol. Returns the arrays and N.
    '''
    need = K + extra + 3
    if len(c) < need:
        pad = np.zeros(need - len(c))
        c = np.concatenate([c, pad])
        d = np.concatenate([d, pad])
    if filled < need:
        _extend_double(c, d, p, log_q, filled, need)
    dsum = np.cumsum(d[:need])
    for N in range(K, K + extra + 1):
        if not (np.isfinite(d[N + 1]) and np.isfinite(d[N + 2])):
            return c, d, N
        if _omitted_small(d, N, tol, dsum[N]):
            return c, d, N
    log.debug(f'The omitted series mass stayed above {tol:g} up to N={K + extra}')
    return c, d, K + extra


def _search_extended(p, log_q, a, threshold, k_max, n_terms, dps, tol, extra=64):
    ''' The same search and evaluation length in mpmath arithmetic '''
    with mp.workdps(dps):
        lq = mp.mpf(log_q)
        am = mp.mpf(a)
        pm = [mp.mpf(float(x)) for x in p]
        kmax = len(pm)
        c = [mp.one]
        d = [mp.one]

        def extend():
            j = len(c)
            m = min(j, kmax)
            s = mp.fdot(pm[:m], d[j - m:j][::-1])
            cj = s / mp.expm1(j * lq)
            c.append(cj)
            d.append(cj * mp.exp(j * lq))
            return cj

        csum = mp.one
        dsum = mp.one
        last = (n_terms + 1) if n_terms else (k_max + 2)
        K = None
        crit = mp.inf
        for j in range(1, last):
            cj = extend()
            if K is not None:
                break  # c_{K+1} is now stored
            csum += cj
            dsum += d[-1]
            crit = am * abs(csum) / abs(dsum)
            if not n_terms and j <= k_max and crit < threshold:
                K = j
        met = K is not None
        if n_terms:
            K = n_terms - 1
            crit = am * abs(mp.fsum(c[:K + 1])) / abs(mp.fsum(d[:K + 1]))
            met = True
        elif K is None:
            K = len(c) - 2
        N = K
        if met and not n_terms:
            dsum = mp.fsum(d[:K + 1])
            while N < K + extra:
                while len(c) < N + 3:
                    extend()
                if _omitted_small(d, N, tol, dsum):
                    break
                N += 1
                dsum += d[N]
        rates = [am * mp.exp(-j * lq) for j in range(N + 1)]
        denom = mp.fsum(d[:N + 1])
        cmax = max(abs(x) for x in c[:N + 1])
        mp_data = (c[:N + 1], d[:N + 1], denom, rates)
        return c, d, K, N, float(crit), met, mp_data, cmax


def build_coefficients(spec, q, threshold=None, k_max=None, n_terms=None, precision='auto', log_q=None, digits_lost_max=None,
                       omitted_mass_tol=None):
    '''
    Build the Dirichlet-series model of the driftless exponential functional.

    K is the smallest index >= 1 for which a |sum_{j<=K} c_j| / |sum_{j<=K} c_j q^j| drops
    below the threshold. The density is then evaluated with the terms up to N >= K, where N is
    the first index after which the omitted terms carry an L1 mass below omitted_mass_tol;
    clamping the negative lobe of the truncated series near 0 then changes the total mass by
    at most that amount. The arithmetic runs in double precision with compensated sums;
    with precision='auto' the build is repeated in mpmath when more than digits_lost_max
    digits would cancel in the series sums.

    Args:
        spec (IvsSpec)           : driftless process; a zero atom in the jump law is normalized away
        q (float)                : base in (0, 1)
        threshold (float)        : truncation criterion (default 1e-3)
        k_max (int)              : hard cap on K (default 1e4)
        n_terms (int)            : if given, use exactly this many coefficients (K = n_terms - 1); the criterion is reported, not enforced
        precision (str/int)      : 'auto', 'double', or a fixed number of mpmath digits
        log_q (float/mpf)        : log q to full precision when known exactly (e.g. -epsilon)
        digits_lost_max (int)    : cancellation allowed in double precision (default 6)
        omitted_mass_tol (float) : mass bound of the terms after N (default 1e-9); unused with n_terms

    Returns:
        An ExpFunctionalModel.

    **Example**::

        spec  = ef.make_process(dict(kind='mipp', n=2))
        model = ef.build_coefficients(spec, q=np.exp(-1))
        model.K  # 8
    '''
    efb.check_open_unit('q', q)
    if spec.drift != 0:
        raise ValueError('The series engine covers driftless processes; use build_piecewise() when drift > 0')
    threshold = cfg.default('threshold', threshold)
    efb.check_positive('threshold', threshold)
    k_max = int(cfg.default('k_max', k_max))
    digits_lost_max = cfg.default('digits_lost_max', digits_lost_max)
    omitted_mass_tol = cfg.default('omitted_mass_tol', omitted_mass_tol)
    if n_terms is not None and int(n_terms) < 1:
        raise ValueError(f'n_terms must be at least 1, not {n_terms}')
    n_terms = int(n_terms) if n_terms else None
    log_q = np.log(q) if log_q is None else log_q

    spec = spec.normalized()
    a = spec.lambda_eff
    p = np.ascontiguousarray(spec.jumps.masses, dtype=float)
    T = sc.tic()

    mode = 'double' if precision in ['auto', 'double'] else int(precision)
    mp_data = None
    if mode == 'double':
        c, d, K, crit, met, filled = _search_double(p, float(log_q), a, threshold, k_max, n_terms)
        N = K
        if met and not n_terms:
            c, d, N = _evaluation_double(c, d, p, float(log_q), K, filled, omitted_mass_tol)
        finite = np.all(np.isfinite(c[:N + 2]))
        denom = neumaier_sum(d[:N + 1]) if finite else np.nan
        lost = _digits_lost(np.max(np.abs(c[:N + 1])), denom) if finite else np.inf
        if lost > digits_lost_max:
            if precision == 'auto':
                mode = int(20 + np.ceil(lost)) if np.isfinite(lost) else 50
                log.warning(f'Escalating the {spec.label} coefficient build at q={q:.6g} to {mode} digits ({lost:.1f} digits would cancel)')
            else:
                log.warning(f'About {lost:.1f} digits cancel in the double-precision series for {spec.label} at q={q:.6g}')
    if mode != 'double':
        for attempt in range(4):
            c, d, K, N, crit, met, mp_data, cmax = _search_extended(p, log_q, a, threshold, k_max, n_terms, mode, omitted_mass_tol)
            lost = _digits_lost(cmax, mp_data[2])
            if precision != 'auto' or lost + 15 < mode:
                break
            mode = int(20 + np.ceil(lost) + 10 * (attempt + 1))
            log.debug(f'Retrying the extended build with {mode} digits')
        c = np.array([float(x) for x in c])
        d = np.array([float(x) for x in d])

    denom = mp_data[2] if mp_data is not None else neumaier_sum(d[:N + 1])
    if not np.isfinite(float(denom)) or abs(float(denom)) < 10 ** (-(12 if mode == 'double' else mode - 5)) * np.max(np.abs(d[:N + 1])):
        errormsg = f'The normalizer sum_j c_j q^j = {float(denom):.3g} of the {spec.label} series at q={q:.6g} is degenerate'
        raise efb.DegenerateDenominator(errormsg)

    c_next = c[N + 1] if len(c) > N + 1 else 0.0
    model = ExpFunctionalModel(spec, q, log_q, c[:N + 1], d[:N + 1], c_next, K, crit, threshold, precision=mode, mp_data=mp_data)
    log.debug(f'Series for {spec.label} at q={q:.6g}: K={K}, evaluated to {N}, criterion {crit:.3g}, precision {mode}, {sc.toc(T, output=True):.2f} s, {cfg.checkmem()}')
    if not met:
        errormsg = f'The truncation criterion for {spec.label} at q={q:.6g} reached {crit:.3g}, not below {threshold:g}, by k_max={k_max}'
        raise efb.CapExceeded(errormsg, achieved=crit, model=model)
    return model


def poisson_coefficients(q, n):
    '''
    Closed-form coefficients of the Poisson case, c_j = (-1)^j q^{j(j-1)/2} / (q; q)_j,
    for j = 0..n.
    '''
    efb.check_open_unit('q', q)
    j = np.arange(n + 1)
    qq = np.concatenate([[1.0], np.cumprod(1 - q ** np.arange(1, n + 1))])
    return (-1.0) ** j * q ** (j * (j - 1) / 2) / qq


# %% Evaluation

def density(model, x, tol_neg=None):
    '''
    Density of I_q from the truncated series.

    Values below zero caused by truncation are clamped: silently (with a warning) below the
    small-x crossover, and above it only when they are within tol_neg times the density
    maximum plus the remainder estimate. Larger negative values raise NegativeDensity.

    Args:
        model (ExpFunctionalModel) : built model
        x (float or array)         : evaluation point(s); the density is 0 for x <= 0
        tol_neg (float)            : clamping tolerance relative to the maximum (default 1e-9)
    '''
    tol_neg = cfg.default('tol_neg', tol_neg)
    x, scalar = efb.toarray(x)
    out = np.zeros(len(x))
    pos = x > 0
    out[pos] = model._raw_density(x[pos])
    neg = out < 0
    if np.any(neg):
        small = neg & (x < model.x_crossover)
        if np.any(small):
            log.warning(f'Clamped {small.sum()} negative density values below the small-x crossover {model.x_crossover:.3g}')
        large = neg & ~small
        if np.any(large):
            allowed = tol_neg * model.peak + model.error_estimate(x[large])
            if np.any(out[large] < -allowed):
                worst = out[large].min()
                errormsg = f'Density value {worst:.3g} is negative beyond the tolerance; the series for {model.spec.label} is truncated too early (K={model.K})'
                raise efb.NegativeDensity(errormsg)
            log.debug(f'Clamped {large.sum()} negative density values within tolerance')
        out[neg] = 0.0
    return efb.unwrap(out, scalar)


def sf(model, x):
    ''' Survival function sum_j c_j q^j exp(-a q^{-j} x) / sum_j c_j q^j, clamped to [0, 1] '''
    x, scalar = efb.toarray(x)
    out = np.ones(len(x))
    pos = x > 0
    if np.any(pos):
        if model.extended:
            s = model._sum_extended(x[pos], 'd')
        else:
            s = model._sum_double(x[pos], model.scaled)
        out[pos] = np.clip(s / model.denom, 0, 1)
    return efb.unwrap(out, scalar)


def cdf(model, x):
    ''' Distribution function 1 - sum_j c_j q^j exp(-a q^{-j} x) / sum_j c_j q^j '''
    x, scalar = efb.toarray(x)
    out = 1.0 - sf(model, x)
    return efb.unwrap(np.atleast_1d(out), scalar)


def laplace(model, u):
    '''
    Laplace transform E exp(-u I_q) = (a / sum c_j q^j) sum_j c_j / (u + a q^{-j}).

    Args:
        model (ExpFunctionalModel) : built model
        u (complex or array)       : argument(s) with Re u >= 0

    Returns:
        Complex values with the shape of u.
    '''
    u, scalar = efb.toarray(u, dtype=complex)
    if np.any(u.real < 0):
        raise ValueError('The Laplace transform is evaluated at Re u >= 0')
    if model.extended:
        c, d, denom, rates = model._mp
        out = np.empty(len(u), dtype=complex)
        with mp.workdps(model.precision):
            for i, ui in enumerate(u):
                um = mp.mpc(ui.real, ui.imag)
                s = mp.fsum(cj / (um + r) for cj, r in zip(c, rates))
                out[i] = complex(mp.mpf(model.scale_a) / denom * s)
    else:
        out = model.scale_a / model.denom * (1.0 / (u[:, None] + model.rates[None, :])) @ model.coeffs
    return efb.unwrap(out, scalar)


def quantile(model, p):
    ''' Inverse of cdf() by bracketing root search '''
    p, scalar = efb.toarray(p)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError('Quantiles are defined for probabilities in (0, 1)')
    hi = model.x_max(tol=min(1e-9, 0.5 * (1 - p.max())))
    out = np.array([spo.brentq(lambda x: cdf(model, x) - pi, 0.0, hi, xtol=1e-14) for pi in p])
    return efb.unwrap(out, scalar)


def mean(spec, q):
    '''
    E I_q = 1 / Psi(-log q); for a driftless process this is 1 / (lambda (1 - E q^Z)).

    Args:
        spec (IvsSpec) : the process; the drift is included in Psi
        q (float)      : base in (0, 1)
    '''
    return moment(spec, q, 1)


def moment(spec, q, m):
    '''
    Integer moments E I_q^m = m! / prod_{j=1}^m Psi(-j log q), m = 0 giving 1. The formula
    holds with and without drift.

    Args:
        spec (IvsSpec) : the process
        q (float)      : base in (0, 1)
        m (int)        : order >= 0

    **Example**::

        ef.series.moment(ef.make_process(dict(kind='poisson')), np.exp(-1), 2)
    '''
    efb.check_open_unit('q', q)
    if int(m) != m or m < 0:
        raise ValueError(f'The moment order must be a nonnegative integer, not {m}')
    m = int(m)
    if m == 0:
        return 1.0
    u = -np.arange(1, m + 1) * np.log(q)
    psi = efc.laplace_exponent(spec, u)
    return float(np.exp(spsp.gammaln(m + 1) - np.log(psi).sum()))
