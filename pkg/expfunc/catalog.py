"""
Jump distributions and process specifications of the integer-valued subordinators (IVS)
consumed by the engines: the Poisson process, multiply iterated Poisson processes (MIPP),
the space-fractional Poisson process, the negative-binomial process and user-defined
compound Poisson processes with integer jumps.
"""

import numpy as np
import sciris as sc
import scipy.stats as sps
import scipy.special as spsp
from .config import logger as log
from . import config as cfg
from . import base as efb

__all__ = ['JumpPmf', 'IvsSpec', 'poisson_jumps', 'mipp_jumps', 'space_fractional_jumps',
           'negative_binomial_jumps', 'custom_jumps', 'space_fractional_intensity',
           'negative_binomial_intensity', 'laplace_exponent', 'make_process']

support_kinds = ['finite', 'truncated-infinite']


class JumpPmf(sc.prettyobj):

    def __init__(self, masses, tail_mass=0.0, zero_mass=0.0, support_kind='finite', label='custom', meta=None):
        '''
        Probability mass function of a jump size on the positive integers.

        The atom at zero is not part of the support; when a construction produces one (e.g.
        the mixed Poisson laws of the MIPP) it is kept in ``zero_mass`` so that IvsSpec can
        remove it by thinning the intensity.

        Args:
            masses (array)     : P{Z=k} for k = 1..len(masses)
            tail_mass (float)  : probability of k > len(masses) not covered by stored entries
            zero_mass (float)  : P{Z=0}
            support_kind (str) : 'finite' or 'truncated-infinite'
            label (str)        : name of the family, used in metadata
            meta (dict)        : extra construction parameters
        '''
        masses = np.array(masses, dtype=float).ravel()
        tail_mass = float(tail_mass)
        zero_mass = float(zero_mass)
        if support_kind not in support_kinds:
            errormsg = f'support_kind must be one of {support_kinds}, not "{support_kind}"'
            raise ValueError(errormsg)
        if len(masses) == 0:
            raise ValueError('A jump PMF needs at least one stored atom')
        if np.any(masses < 0) or np.any(masses > 1) or not np.all(np.isfinite(masses)):
            raise ValueError('Every stored mass must lie in [0, 1]')
        for name, value in [('tail_mass', tail_mass), ('zero_mass', zero_mass)]:
            if not (0 <= value <= 1):
                raise ValueError(f'{name} must lie in [0, 1], not {value}')
        stored = zero_mass + masses.sum()
        total = stored + tail_mass
        if stored > 1 + 1e-12 or not (1 - 1e-12 <= total <= 1 + 1e-12):
            errormsg = f'Stored masses ({stored:.15g}) plus tail_mass ({tail_mass:.3g}) must add up to 1, not {total:.15g}'
            raise ValueError(errormsg)
        if zero_mass >= 1:
            raise ValueError('The jump law has no mass on the positive integers')

        masses.flags.writeable = False
        self.masses = masses
        self.tail_mass = tail_mass
        self.zero_mass = zero_mass
        self.support_kind = support_kind
        self.label = label
        self.meta = sc.objdict(meta or {})
        return

    @property
    def kmax(self):
        ''' Largest stored jump size '''
        return len(self.masses)

    @property
    def support(self):
        return np.arange(1, self.kmax + 1)

    @property
    def positive_mass(self):
        ''' P{Z >= 1} '''
        return 1.0 - self.zero_mass

    def pmf(self, k):
        ''' P{Z=k}; zero outside the stored support '''
        k, scalar = efb.toarray(k, dtype=int)
        out = np.zeros(len(k))
        inside = (k >= 1) & (k <= self.kmax)
        out[inside] = self.masses[k[inside] - 1]
        out[k == 0] = self.zero_mass
        return efb.unwrap(out, scalar)

    def normalized(self):
        ''' The law of Z conditioned on Z >= 1 '''
        if self.zero_mass == 0:
            return self
        pos = self.positive_mass
        return JumpPmf(self.masses / pos, tail_mass=self.tail_mass / pos, zero_mass=0.0,
                       support_kind=self.support_kind, label=self.label, meta=self.meta)

    def expect_power(self, q):
        '''
        E q^Z, counting the tail mass as an overflow atom at kmax + 1.

        Args:
            q (float or array): base(s) in [0, 1]
        '''
        q, scalar = efb.toarray(q)
        k = self.support
        out = self.zero_mass + (q[:, None] ** k[None, :]) @ self.masses + self.tail_mass * q ** (self.kmax + 1)
        return efb.unwrap(out, scalar)

    def mean(self):
        ''' E Z over the stored support (infinite tails are not extrapolated) '''
        return float(self.support @ self.masses)

    def to_dict(self):
        return dict(label=self.label, masses=self.masses.tolist(), tail_mass=self.tail_mass,
                    zero_mass=self.zero_mass, support_kind=self.support_kind, meta=dict(self.meta))


class IvsSpec(sc.prettyobj):

    def __init__(self, intensity, jumps, drift=0.0, label=None):
        '''
        An integer-valued subordinator S_t = Z_1 + ... + Z_{N_t}, plus an optional drift.

        Args:
            intensity (float) : rate of the Poisson process N
            jumps (JumpPmf)   : law of the jumps Z_i, possibly with an atom at zero
            drift (float)     : drift coefficient mu >= 0
            label (str)       : name used in metadata
        '''
        efb.check_positive('intensity', intensity)
        efb.check_positive('drift', drift, strict=False)
        if not isinstance(jumps, JumpPmf):
            raise TypeError(f'jumps must be a JumpPmf, not {type(jumps)}')
        self.intensity = float(intensity)
        self.jumps = jumps
        self.drift = float(drift)
        self.label = label or jumps.label
        return

    @property
    def lambda_eff(self):
        ''' Intensity of the positive jumps, lambda * P{Z >= 1} '''
        return self.intensity * self.jumps.positive_mass

    @property
    def jumps_eff(self):
        ''' Jump law conditioned on Z >= 1 '''
        return self.jumps.normalized()

    def normalized(self):
        ''' The same process written without a zero atom in the jump law '''
        if self.jumps.zero_mass == 0:
            return self
        return IvsSpec(self.lambda_eff, self.jumps_eff, drift=self.drift, label=self.label)

    def with_drift(self, drift):
        return IvsSpec(self.intensity, self.jumps, drift=drift, label=self.label)

    def mean_q(self, q):
        ''' E q^{Z~} for the positive-jump law '''
        return self.jumps_eff.expect_power(q)

    def jump_mean(self):
        ''' E Z~ over the stored support '''
        return self.jumps_eff.mean()

    def laplace_exponent(self, u):
        return laplace_exponent(self, u)

    def to_dict(self):
        return dict(label=self.label, intensity=self.intensity, drift=self.drift, jumps=self.jumps.to_dict())


# %% Catalog

def poisson_jumps():
    '''
    Unit jumps: the Poisson process.

    Returns:
        A JumpPmf with the single atom P{Z=1} = 1.
    '''
    return JumpPmf([1.0], label='poisson')


def _poisson_level(lam, tol):
    ''' Poisson(lam) masses on 0..m with the omitted tail below tol '''
    m = int(max(1, sps.poisson.isf(tol, lam)))
    while sps.poisson.sf(m, lam) >= tol:
        m += 1
    return sps.poisson.pmf(np.arange(m + 1), lam)


def _mixed_poisson_level(prev, lam, tol, kcap=100_000):
    '''
    One application of the mixed Poisson recurrence

        P{V'=k} = lam^k / k! * sum_j j^k e^{-lam j} P{V=j},

    on a finite previous level ``prev`` (masses on 0..m). Atoms are added until the stored
    mass is within tol of the mass of the previous level.
    '''
    prev_total = prev.sum()
    j = np.arange(len(prev))
    pos = (j > 0) & (prev > 0)
    jp = j[pos].astype(float)
    logw = np.log(prev[pos]) - lam * jp
    loglamj = np.log(lam * jp)
    out = [float(np.exp(-lam * j) @ prev)]  # k = 0: only 0^0 survives
    cum = out[0]
    k = 0
    while prev_total - cum >= tol:
        k += 1
        if k > kcap:
            errormsg = f'The mixed Poisson recurrence did not reach the tolerance {tol} within {kcap} atoms'
            raise efb.CapExceeded(errormsg, achieved=prev_total - cum)
        logterms = k * loglamj + logw - spsp.gammaln(k + 1)
        out.append(float(np.exp(logterms).sum()))
        cum += out[-1]
    return np.array(out)


def mipp_jumps(n, lam=1.0, tol=None):
    '''
    Jump law of the n-th multiply iterated Poisson process V^(n) with rate lam: the law of
    V^(n-1)_1, obtained from the Poisson(lam) law (the n=2 case) by n-2 applications of the
    mixed Poisson recurrence.

    Args:
        n (int)     : iteration count, at least 2
        lam (float) : rate of every Poisson process in the iteration
        tol (float) : total mass allowed to be left out (default pmf_tol)

    Returns:
        A JumpPmf whose zero atom P{V^(n-1)_1 = 0} is kept in ``zero_mass``.

    **Example**::

        pmf = ef.mipp_jumps(2, lam=1.0)  # Poisson(1) with zero_mass = exp(-1)
    '''
    tol = cfg.default('pmf_tol', tol)
    if int(n) != n or n < 2:
        raise ValueError(f'The MIPP iteration count must be an integer >= 2, not {n}')
    efb.check_open_unit('tol', tol)
    efb.check_positive('lam', lam)
    n = int(n)
    level_tol = tol / n
    probs = _poisson_level(lam, level_tol)
    for level in range(n - 2):
        probs = _mixed_poisson_level(probs, lam, level_tol)
        log.debug(f'MIPP level {level + 2}: {len(probs)} atoms, deficit {1 - probs.sum():.3g}')
    tail = max(0.0, 1.0 - probs.sum())
    meta = dict(n=n, lam=lam, tol=tol)
    return JumpPmf(probs[1:], tail_mass=tail, zero_mass=probs[0], support_kind='truncated-infinite', label='mipp', meta=meta)


def space_fractional_jumps(alpha, tol=None, max_atoms=None):
    '''
    Jump law of the space-fractional Poisson process,

        P{Z=k} = alpha Gamma(k - alpha) / (k! Gamma(1 - alpha)),   k >= 1.

    The tail after K atoms is Gamma(K+1-alpha) / (Gamma(1-alpha) K!), which decays like
    K^-alpha; atoms are stored until it drops below tol or max_atoms atoms are stored, and
    tail_mass always holds the exact remainder.

    Args:
        alpha (float)   : stability index in (0, 1)
        tol (float)     : tail mass at which to stop storing atoms (default pmf_tol)
        max_atoms (int) : cap on the stored support (default max_atoms)

    Returns:
        A JumpPmf with P{Z >= 1} = 1.
    '''
    efb.check_open_unit('alpha', alpha)
    tol = cfg.default('pmf_tol', tol)
    max_atoms = int(cfg.default('max_atoms', max_atoms))
    k = np.arange(1, max_atoms + 1, dtype=float)
    ratios = np.concatenate([[alpha], (k[:-1] - alpha) / (k[:-1] + 1)])
    masses = np.cumprod(ratios)
    tails = np.exp(spsp.gammaln(k + 1 - alpha) - spsp.gammaln(1 - alpha) - spsp.gammaln(k + 1))
    below = np.flatnonzero(tails < tol)
    kmax = below[0] + 1 if len(below) else max_atoms
    tail = float(tails[kmax - 1])
    if tail >= tol:
        log.debug(f'Space-fractional law stored up to k={kmax}; heavy tail mass {tail:.3g} kept as tail_mass')
    masses = masses[:kmax]
    tail = max(0.0, min(tail, 1.0 - masses.sum()))
    meta = dict(alpha=alpha)
    return JumpPmf(masses, tail_mass=tail, support_kind='truncated-infinite', label='space_fractional', meta=meta)


def negative_binomial_jumps(p0, tol=None):
    '''
    Logarithmically distributed jumps of the negative-binomial process,

        P{Z=k} = -p0^k / (k log(1 - p0)),   k >= 1.

    The process with parameters (r, p0) has intensity -r log(1 - p0); see
    negative_binomial_intensity(). The value -log(1 - p0) is stored in
    ``meta.intensity_per_r``.

    Args:
        p0 (float)  : success parameter in (0, 1)
        tol (float) : tail mass at which to stop storing atoms (default pmf_tol)
    '''
    efb.check_open_unit('p0', p0)
    tol = cfg.default('pmf_tol', tol)
    norm = -np.log1p(-p0)
    # tail after K is at most p0^(K+1) / ((K+1)(1-p0) norm)
    kmax = 1
    while p0 ** (kmax + 1) / ((kmax + 1) * (1 - p0) * norm) >= tol:
        kmax += 1
    k = np.arange(1, kmax + 1, dtype=float)
    masses = np.exp(k * np.log(p0) - np.log(k)) / norm
    tail = max(0.0, 1.0 - masses.sum())
    meta = dict(p0=p0, intensity_per_r=norm)
    return JumpPmf(masses, tail_mass=tail, support_kind='truncated-infinite', label='negative_binomial', meta=meta)


def custom_jumps(masses, zero_mass=0.0, tail_mass=0.0):
    '''
    A user-defined jump law, validated like the catalog laws.

    Args:
        masses (array)    : P{Z=k} for k = 1..len(masses)
        zero_mass (float) : P{Z=0}, removed later by IvsSpec.normalized()
        tail_mass (float) : mass beyond the stored support
    '''
    support_kind = 'finite' if tail_mass == 0 else 'truncated-infinite'
    return JumpPmf(masses, tail_mass=tail_mass, zero_mass=zero_mass, support_kind=support_kind, label='custom')


def space_fractional_intensity(lam, alpha):
    ''' Compound Poisson intensity lam^alpha of the space-fractional Poisson process '''
    return efb.check_positive('lam', lam) ** alpha


def negative_binomial_intensity(r, p0):
    ''' Compound Poisson intensity -r log(1 - p0) of the negative-binomial process '''
    efb.check_positive('r', r)
    efb.check_open_unit('p0', p0)
    return -r * np.log1p(-p0)


def laplace_exponent(spec, u):
    '''
    Laplace exponent Psi(u) = mu u + lambda sum_k (1 - e^{-u k}) P{Z=k}.

    The tail mass is counted as an overflow atom at kmax + 1, which bounds its
    contribution between (1 - e^{-u (kmax+1)}) tail_mass and tail_mass.

    Args:
        spec (IvsSpec) : the process
        u (float or array) : nonnegative argument(s); complex values with Re u >= 0 are accepted

    Returns:
        Psi(u), with the shape of u.
    '''
    u, scalar = efb.toarray(u, dtype=complex if np.iscomplexobj(u) else float)
    if np.any(np.real(u) < 0):
        raise ValueError('The Laplace exponent is evaluated at Re u >= 0 only')
    pmf = spec.jumps
    k = pmf.support
    decay = np.exp(-np.outer(u, k))
    jump_part = (1 - decay) @ pmf.masses + pmf.tail_mass * (1 - np.exp(-u * (pmf.kmax + 1)))
    out = spec.drift * u + spec.intensity * jump_part
    return efb.unwrap(out, scalar)


# %% Configuration

process_kinds = ['poisson', 'mipp', 'space_fractional', 'negative_binomial', 'custom']


def _require(block, key, path, default=None):
    if key in block:
        return block[key]
    if default is not None:
        return default
    raise efb.ConfigError(f'{path}.{key}', 'missing required field')


def make_process(block, path='process'):
    '''
    Build an IvsSpec from a configuration block.

    Args:
        block (dict) : with ``kind`` in process_kinds and the family parameters:
                       poisson {lambda}, mipp {n, lambda, tol}, space_fractional {alpha, lambda},
                       negative_binomial {r, p0}, custom {intensity, masses, zero_mass};
                       every kind accepts ``drift``
        path (str)   : field path used in error messages

    Returns:
        The IvsSpec.

    **Example**::

        spec = ef.make_process(dict(kind='mipp', n=2, **{'lambda': 1.0}))
    '''
    kind = _require(block, 'kind', path)
    drift = block.get('drift', 0.0)
    try:
        if kind == 'poisson':
            spec = IvsSpec(_require(block, 'lambda', path, 1.0), poisson_jumps(), label='poisson')
        elif kind == 'mipp':
            lam = _require(block, 'lambda', path, 1.0)
            spec = IvsSpec(lam, mipp_jumps(_require(block, 'n', path), lam=lam, tol=block.get('tol')))
        elif kind == 'space_fractional':
            alpha = _require(block, 'alpha', path)
            lam = _require(block, 'lambda', path, 1.0)
            spec = IvsSpec(space_fractional_intensity(lam, alpha), space_fractional_jumps(alpha))
        elif kind == 'negative_binomial':
            r, p0 = _require(block, 'r', path), _require(block, 'p0', path)
            spec = IvsSpec(negative_binomial_intensity(r, p0), negative_binomial_jumps(p0))
        elif kind == 'custom':
            jumps = custom_jumps(_require(block, 'masses', path), zero_mass=block.get('zero_mass', 0.0),
                                 tail_mass=block.get('tail_mass', 0.0))
            spec = IvsSpec(_require(block, 'intensity', path), jumps)
        else:
            raise efb.ConfigError(f'{path}.kind', f'unknown kind "{kind}"; choices are {process_kinds}')
        if drift:
            spec = spec.with_drift(drift)
    except efb.ConfigError:
        raise
    except (ValueError, TypeError) as E:
        raise efb.ConfigError(path, str(E)) from E
    return spec
