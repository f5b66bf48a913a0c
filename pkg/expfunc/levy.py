"""
Poisson approximation of general pure-jump subordinators.

The Levy measure nu of X is replaced by atoms of mass nu([eps k, eps (k+1))) on the lattice
eps k, k >= 1. The approximating process X^(eps) = eps S is an IVS S observed through the
base q = exp(-eps), so its exponential functional is handled by the series engine.
"""

import math
import numpy as np
import numba as nb
import sciris as sc
import pandas as pd
import scipy.integrate as spi
import scipy.special as spsp
import scipy.interpolate as spip
from fractions import Fraction
from .config import logger as log
from . import config as cfg
from . import base as efb
from . import catalog as efc
from . import series as efser

__all__ = ['LevyMeasure', 'cpe_measure', 'tempered_stable_measure', 'tabulated_measure', 'load_tail_table',
           'upper_gamma', 'parse_epsilon', 'LevyGrid', 'discretize', 'rho', 'grid_moment',
           'LevyApproximation', 'approx_density', 'cdf_error_bound', 'make_measure']

measure_kinds = ['cpe', 'tempered_stable', 'custom']

EULER = 0.5772156649015329


# %% Upper incomplete gamma

@nb.njit(cache=True)
def _upper_gamma_cf(s, y):
    ''' Continued fraction of Gamma(s, y) by the modified Lentz method; y >= 1 '''
    tiny = 1e-300
    b = y + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-y + s * math.log(y)) * h


@nb.njit(cache=True)
def _lower_gamma_series(a, y):
    ''' gamma(a, y) for a > 0 '''
    ap = a
    term = 1.0 / a
    total = term
    for n in range(1, 1000):
        ap += 1.0
        term *= y / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-y + a * math.log(y))


@nb.njit(cache=True)
def _exp1_series(y):
    ''' E_1(y) = -gamma - log y - sum_n (-y)^n / (n n!) '''
    total = 0.0
    term = 1.0
    for n in range(1, 200):
        term *= -y / n
        total += term / n
        if abs(term) < 1e-18:
            break
    return -EULER - math.log(y) - total


@nb.njit(cache=True)
def _upper_gamma_scalar(s, y):
    if y <= 0.0:
        return np.inf
    if y >= 1.0:
        return _upper_gamma_cf(s, y)
    if abs(s) < 1e-12:
        return _exp1_series(y)
    # Gamma(s, y) = (Gamma(s+1, y) - y^s e^{-y}) / s with s + 1 in (0, 1)
    upper = math.gamma(s + 1.0) - _lower_gamma_series(s + 1.0, y)
    return (upper - math.exp(s * math.log(y) - y)) / s


@nb.njit(cache=True)
def _upper_gamma_array(s, y):
    out = np.empty(len(y))
    for i in range(len(y)):
        out[i] = _upper_gamma_scalar(s, y[i])
    return out


def upper_gamma(s, y):
    '''
    Upper incomplete gamma function Gamma(s, y) = int_y^inf t^{s-1} e^{-t} dt for
    s in (-1, 0], not regularized. For y >= 1 a continued fraction is used; below 1 the
    recurrence from Gamma(s+1, y) with the power series of the lower function, or the
    exponential-integral series at s = 0.

    Args:
        s (float)         : order in (-1, 0]
        y (float or array): argument(s) > 0

    **Example**::

        ef.upper_gamma(0, 1.0)  # E_1(1) = 0.21938...
    '''
    if not (-1 < s <= 0):
        raise ValueError(f'The order s must lie in (-1, 0], not {s}')
    y, scalar = efb.toarray(y)
    return efb.unwrap(_upper_gamma_array(float(s), y), scalar)


# %% Measures

class LevyMeasure(sc.prettyobj):

    def __init__(self, tail, kind='custom', params=None, density=None, laplace_exponent=None, finite=False, nodes=None):
        '''
        A Levy measure on (0, inf) given by its tail z -> nu([z, inf)).

        Args:
            tail (callable)             : vectorized tail function, nonincreasing, vanishing at infinity
            kind (str)                  : 'cpe', 'tempered_stable' or 'custom'
            params (dict)               : parameters of the tagged kinds
            density (callable)          : Levy density, if known
            laplace_exponent (callable) : Psi(u) = int (1 - e^{-uz}) nu(dz), if known in closed form
            finite (bool)               : whether nu has finite total mass
            nodes (array)               : points where the tail is only piecewise smooth, e.g. the z of a table
        '''
        if kind not in measure_kinds:
            raise ValueError(f'kind must be one of {measure_kinds}, not "{kind}"')
        self.tail = tail
        self.kind = kind
        self.params = sc.objdict(params or {})
        self.density = density
        self._laplace_exponent = laplace_exponent
        self.finite = finite
        self.nodes = None if nodes is None else np.sort(np.asarray(nodes, dtype=float))
        self.check()
        return

    @property
    def label(self):
        pars = ', '.join(f'{k}={v:g}' for k, v in self.params.items())
        return f'{self.kind}({pars})'

    def check(self):
        ''' Spot-check monotonicity, decay and integrability of z tail(z) at 0 '''
        z = np.logspace(-10, 2, 121)
        t = np.asarray(self.tail(z), dtype=float)
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise efb.InvalidTail(f'The tail of {self.label} must be finite and nonnegative on (0, inf)')
        if np.any(np.diff(t) > 1e-12 * t[0]):
            raise efb.InvalidTail(f'The tail of {self.label} must be nonincreasing')
        zt = z[:11] * t[:11]
        if zt[0] >= zt[-1] * (1 - 1e-9) and zt[0] > 1e-6:
            raise efb.InvalidTail(f'z tail(z) of {self.label} does not vanish at 0; this is not a subordinator')
        return

    def laplace_exponent(self, u):
        ''' Psi(u), by u int_0^inf e^{-uz} tail(z) dz when no closed form is known '''
        u, scalar = efb.toarray(u)
        if self._laplace_exponent is not None:
            out = np.asarray(self._laplace_exponent(u), dtype=float)
        else:
            out = np.array([ui * spi.quad(lambda z: np.exp(-ui * z) * self.tail(np.array([z]))[0], 0, np.inf, limit=200)[0] for ui in u])
        return efb.unwrap(out, scalar)


def cpe_measure(a, b):
    ''' Compound Poisson with exponential jumps: nu(dz) = a e^{-bz} dz '''
    efb.check_positive('a', a)
    efb.check_positive('b', b)
    a, b = float(a), float(b)
    return LevyMeasure(tail=lambda z: a / b * np.exp(-b * np.asarray(z, dtype=float)), kind='cpe',
                       params=dict(a=a, b=b), density=lambda z: a * np.exp(-b * np.asarray(z, dtype=float)),
                       laplace_exponent=lambda u: a * u / (b * (b + u)), finite=True)


def tempered_stable_measure(a, b, chi):
    '''
    Tempered stable measure nu(dz) = a z^{-1-chi} e^{-bz} dz with tail a b^chi Gamma(-chi, bz);
    chi = 0 is the gamma subordinator.
    '''
    efb.check_positive('a', a)
    efb.check_positive('b', b)
    if not (0 <= chi < 1):
        raise ValueError(f'chi must lie in [0, 1), not {chi}')
    a, b, chi = float(a), float(b), float(chi)
    if chi == 0:
        psi = lambda u: a * np.log1p(u / b)
    else:
        psi = lambda u: a * spsp.gamma(-chi) * (b ** chi - (b + u) ** chi)
    return LevyMeasure(tail=lambda z: a * b ** chi * upper_gamma(-chi, b * np.asarray(z, dtype=float)),
                       kind='tempered_stable', params=dict(a=a, b=b, chi=chi),
                       density=lambda z: a * np.asarray(z, dtype=float) ** (-1 - chi) * np.exp(-b * np.asarray(z, dtype=float)),
                       laplace_exponent=psi, finite=False)


def tabulated_measure(z, tail):
    ''' Measure from tabulated (z, tail(z)) pairs, interpolated linearly in log-log coordinates '''
    z = np.asarray(z, dtype=float)
    tail = np.asarray(tail, dtype=float)
    if len(z) < 2 or len(z) != len(tail):
        raise efb.InvalidTail('A tail table needs at least two (z, tail) pairs')
    if np.any(z <= 0) or np.any(tail <= 0) or np.any(np.diff(z) <= 0):
        raise efb.InvalidTail('A tail table needs increasing z > 0 and tail values > 0')
    interp = spip.interp1d(np.log(z), np.log(tail), kind='linear', fill_value='extrapolate', assume_sorted=True)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.exp(interp(np.log(x)))

    return LevyMeasure(tail=evaluate, kind='custom', params=dict(n_points=len(z)), nodes=z)


def load_tail_table(filename):
    ''' Read a CSV with columns z and tail and return the tabulated measure '''
    df = pd.read_csv(filename, comment='#')
    missing = [col for col in ['z', 'tail'] if col not in df.columns]
    if missing:
        raise efb.ConfigError('process.tail_table', f'{filename} lacks the column(s) {sc.strjoin(missing)}')
    return tabulated_measure(df['z'].values, df['tail'].values)


# %% Grids

def parse_epsilon(epsilon):
    ''' Accept a float, a Fraction or a string such as "1/2500"; returns a float in (0, 1) '''
    if isinstance(epsilon, str):
        epsilon = Fraction(epsilon)
    epsilon = float(epsilon)
    efb.check_open_unit('epsilon', epsilon)
    return epsilon


class LevyGrid(sc.prettyobj):

    def __init__(self, measure, epsilon, masses, tail_mass, rho):
        '''
        Masses nu([eps k, eps (k+1))) for k = 1..k_cut of an eps-discretized Levy measure.

        Args:
            measure (LevyMeasure) : the discretized measure
            epsilon (float)       : lattice spacing
            masses (array)        : atoms for k = 1..k_cut
            tail_mass (float)     : nu([eps (k_cut+1), inf)), kept as an overflow atom at k_cut + 1
            rho (float)           : error functional sqrt(int_0^eps tail)
        '''
        self.measure = measure
        self.epsilon = epsilon
        self.masses = masses
        self.tail_mass = tail_mass
        self.total = float(masses.sum() + tail_mass)
        self.rho = rho
        return

    @property
    def k_cut(self):
        return len(self.masses)

    @property
    def log_q(self):
        return -self.epsilon

    @property
    def q(self):
        return np.exp(-self.epsilon)

    def jumps(self):
        ''' The jump law of the approximating IVS '''
        return efc.JumpPmf(self.masses / self.total, tail_mass=self.tail_mass / self.total,
                           support_kind='truncated-infinite', label=self.measure.kind,
                           meta=dict(epsilon=self.epsilon, **self.measure.params))

    def to_spec(self):
        ''' The IVS S with X^(eps) = eps S '''
        return efc.IvsSpec(self.total, self.jumps(), label=f'{self.measure.label} at eps={self.epsilon:g}')

    def laplace_exponent(self, u):
        ''' Psi of X^(eps): total - sum_k nu_k e^{-u eps k} '''
        u, scalar = efb.toarray(u)
        k = np.arange(1, self.k_cut + 1)
        out = self.total - np.exp(-np.outer(u, k) * self.epsilon) @ self.masses - self.tail_mass * np.exp(-u * self.epsilon * (self.k_cut + 1))
        return efb.unwrap(out, scalar)

    def to_dict(self):
        return dict(measure=self.measure.label, epsilon=self.epsilon, total=self.total, rho=self.rho,
                    k_cut=self.k_cut, tail_mass=self.tail_mass)


def _tail_on_lattice(measure, epsilon, k):
    ''' nu([eps k, inf)) using the closed forms of the tagged kinds '''
    z = epsilon * np.asarray(k, dtype=float)
    if measure.kind == 'cpe':
        pars = measure.params
        return pars.a / pars.b * np.exp(-pars.b * z)
    return np.asarray(measure.tail(z), dtype=float)


def discretize(measure, epsilon, tol=None, max_atoms=2_000_000):
    '''
    Discretize a Levy measure on the lattice eps k.

    Atoms are added until the remaining tail is below tol times nu([eps, inf)); the remainder
    is kept as an overflow atom.

    Args:
        measure (LevyMeasure) : the measure
        epsilon (float/str)   : spacing in (0, 1), e.g. 0.01 or "1/2500"
        tol (float)           : relative tail left out (default pmf_tol)
        max_atoms (int)       : hard cap on the number of atoms

    **Example**::

        grid = ef.discretize(ef.cpe_measure(1, 1), 0.01)
        grid.total  # exp(-0.01)
    '''
    epsilon = parse_epsilon(epsilon)
    tol = cfg.default('pmf_tol', tol)
    T = sc.tic()
    first = float(_tail_on_lattice(measure, epsilon, [1])[0])
    if not np.isfinite(first) or first <= 0:
        raise efb.InvalidTail(f'nu([eps, inf)) of {measure.label} must be positive and finite, not {first}')
    n = 1024
    while True:
        n = min(n, max_atoms)
        tails = _tail_on_lattice(measure, epsilon, np.arange(1, n + 2))
        if tails[-1] < tol * first or n >= max_atoms:
            break
        n *= 4
    below = np.nonzero(tails < tol * first)[0]
    k_cut = int(below[0]) if len(below) else n
    k_cut = max(k_cut, 1)
    masses = tails[:k_cut] - tails[1:k_cut + 1]
    if np.any(masses < -1e-12 * first):
        errormsg = f'The tail of {measure.label} increases somewhere on the eps={epsilon:g} lattice (mass {masses.min():.3g})'
        raise efb.InvalidTail(errormsg)
    masses = np.maximum(masses, 0)
    tail_mass = max(float(tails[k_cut]), 0.0)
    if tails[k_cut] >= tol * first:
        log.warning(f'The {measure.label} grid reached max_atoms={max_atoms} with a remaining tail of {tail_mass:.3g}')
    grid = LevyGrid(measure, epsilon, masses, tail_mass, rho(measure, epsilon))
    log.debug(f'Grid for {measure.label} at eps={epsilon:g}: {grid.k_cut} atoms, total {grid.total:.12g}, {sc.toc(T, output=True):.2f} s')
    return grid


def rho(measure, epsilon):
    '''
    Error functional sqrt(int_0^eps nu([z, inf)) dz).

    The tagged kinds use closed forms; custom measures are integrated after the substitution
    z = eps w^2, which removes the singularity of infinite-activity tails at 0.
    '''
    epsilon = parse_epsilon(epsilon)
    pars = measure.params
    if measure.kind == 'cpe':
        value = pars.a / pars.b ** 2 * -np.expm1(-pars.b * epsilon)
    elif measure.kind == 'tempered_stable':
        # int_0^Y Gamma(s, y) dy = Y Gamma(s, Y) + gamma(s+1, Y)
        s = -pars.chi
        Y = pars.b * epsilon
        lower = spsp.gamma(s + 1) * spsp.gammainc(s + 1, Y)
        value = pars.a * pars.b ** (pars.chi - 1) * (Y * upper_gamma(s, Y) + lower)
    else:
        value, err = _integrate_tail(measure, epsilon)
        if not np.isfinite(value) or err > 1e-7 * value + 1e-14 * epsilon:
            raise efb.QuadratureFailure(f'rho({epsilon:g}) of {measure.label}: error estimate {err:.3g} for value {value:.6g}')
    return float(np.sqrt(value))


def _integrate_tail(measure, epsilon):
    ''' int_0^eps tail(z) dz in w = sqrt(z/eps), split at the nodes of the measure; returns (value, abserr) '''
    integrand = lambda w: measure.tail(np.array([epsilon * w * w]))[0] * 2 * epsilon * w
    breaks = np.array([0.0, 1.0])
    if measure.nodes is not None:
        inside = measure.nodes[(measure.nodes > 0) & (measure.nodes < epsilon)]
        breaks = np.concatenate([[0.0], np.sqrt(inside / epsilon), [1.0]])
    value, err = 0.0, 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        piece, piece_err = spi.quad(integrand, lo, hi, limit=200, epsabs=1e-16 * epsilon, epsrel=1e-10)
        value += piece
        err += piece_err
    return value, err


def grid_moment(grid, m):
    ''' E I^m of the approximating process, m! / prod_j Psi_eps(j) '''
    return efser.moment(grid.to_spec(), grid.q, m)


# %% Approximations

class LevyApproximation(sc.prettyobj):

    def __init__(self, grid, model):
        self.grid = grid
        self.model = model
        self.epsilon = grid.epsilon
        return

    @property
    def coeffs(self):
        return self.model.coeffs

    def density(self, x):
        return efser.density(self.model, x)

    def cdf(self, x):
        return efser.cdf(self.model, x)

    def sf(self, x):
        return efser.sf(self.model, x)

    def laplace(self, u):
        return efser.laplace(self.model, u)

    def moment(self, m):
        ''' Moment of the approximating process; the series model's own moments are model.moment_series(m) '''
        return grid_moment(self.grid, m)

    def to_dict(self):
        return dict(grid=self.grid.to_dict(), model=self.model.to_dict())


def approx_density(grid, threshold=None, k_max=None, n_terms=None, precision='auto'):
    '''
    Series model of the exponential functional of X^(eps): the IVS with intensity nu([eps, inf)),
    jumps proportional to the grid masses, and base q = exp(-eps) with log q = -eps exactly.

    Args:
        grid (LevyGrid)     : the discretized measure
        threshold (float)   : truncation criterion, used when n_terms is None and k_max is given
        k_max (int)         : hard cap on the series length
        n_terms (int)       : number of coefficients; by default ceil(terms_per_inverse_epsilon / eps)
                              unless a threshold is given
        precision (str/int) : passed to build_coefficients()

    Returns:
        A LevyApproximation.
    '''
    if n_terms is None and threshold is None:
        n_terms = int(np.ceil(cfg.default('terms_per_inverse_epsilon') / grid.epsilon))
    spec = grid.to_spec()
    model = efser.build_coefficients(spec, grid.q, threshold=threshold, k_max=k_max, n_terms=n_terms,
                                     precision=precision, log_q=grid.log_q)
    return LevyApproximation(grid, model)


def cdf_error_bound(grids, x_grid, **kwargs):
    '''
    Empirical convergence of the approximations under refinement of eps.

    Args:
        grids (list)   : at least three grids of one measure, e.g. at eps, eps/2, eps/4
        x_grid (array) : evaluation points
        kwargs         : passed to approx_density()

    Returns:
        objdict with the sup-differences between successive CDFs, the rho values, the ratios of
        both sequences, and flags for monotone decrease and agreement of the ratios within a
        factor of 4.
    '''
    if len(grids) < 3:
        raise ValueError(f'At least three grids are needed, not {len(grids)}')
    x_grid = np.asarray(x_grid, dtype=float)
    cdfs = []
    cache = {}
    for grid in grids:
        key = id(grid)
        if key not in cache:
            cache[key] = approx_density(grid, **kwargs).cdf(x_grid)
        cdfs.append(cache[key])
    sup_diffs = np.array([np.max(np.abs(a - b)) for a, b in zip(cdfs[:-1], cdfs[1:])])
    rhos = np.array([g.rho for g in grids])
    with np.errstate(divide='ignore', invalid='ignore'):
        diff_ratios = sup_diffs[1:] / sup_diffs[:-1]
        rho_ratios = rhos[2:] / rhos[1:-1]
    finite = np.isfinite(diff_ratios) & (diff_ratios > 0)
    factors = diff_ratios[finite] / rho_ratios[finite]
    out = sc.objdict(
        sup_diffs   = sup_diffs,
        rho         = rhos,
        diff_ratios = diff_ratios,
        rho_ratios  = rho_ratios,
        monotone    = bool(np.all(np.diff(sup_diffs) < 0)),
        consistent  = bool(np.all((factors >= 0.25) & (factors <= 4))),
    )
    log.debug(f'CDF refinement differences {sup_diffs}, rho {rhos}')
    return out


measure_blocks = ['cpe', 'tempered_stable', 'tail_table']


def make_measure(block, path='process'):
    '''
    Build a LevyMeasure from a configuration block: cpe {a, b}, tempered_stable {a, b, chi}
    or tail_table {path} (CSV with columns z and tail).
    '''
    kind = block.get('kind')
    try:
        if kind == 'cpe':
            return cpe_measure(block.get('a', 1.0), block.get('b', 1.0))
        elif kind == 'tempered_stable':
            return tempered_stable_measure(block.get('a', 1.0), block.get('b', 1.0), block.get('chi', 0.0))
        elif kind == 'tail_table':
            if 'path' not in block:
                raise efb.ConfigError(f'{path}.path', 'missing required field')
            return load_tail_table(block['path'])
    except efb.ConfigError:
        raise
    except (ValueError, TypeError, efb.InvalidTail) as E:
        raise efb.ConfigError(path, str(E)) from E
    raise efb.ConfigError(f'{path}.kind', f'unknown Levy measure "{kind}"; choices are {measure_blocks}')
