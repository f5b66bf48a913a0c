"""
Exponential functionals with drift, I_q = int_0^inf q^{S_t + mu t} dt with mu > 0.

The density is supported on (0, 1/mu_q], mu_q = -mu log q, and on each interval
(a_{j+1}, a_j], a_j = q^j / mu_q, it equals h_j / C, where

    h_0(x) = (1 - mu_q x)^{beta - 1},   beta = lambda P{Z >= 1} / mu_q,

and h_j (j >= 1) solves the linear first-order equation whose right-hand side is made of
the earlier bases at the shifted arguments q^{-k} x, with h_j(a_j) = h_{j-1}(a_j).

Each basis is tabulated on its own interval in the graded coordinate s in [0, 1],

    x = a_j - L_j s^gamma,   L_j = a_j - a_{j+1},   gamma = max(1, 1/beta),

which turns the (a_j - x)^beta behaviour at the top of every interval into a polynomial
one. Since q^{-k} L_j = L_{j-k}, the shifted argument q^{-k} y of a point y at coordinate t
lies in the interval of h_{j-k} at the same coordinate t.
"""

import functools
import numpy as np
import sciris as sc
import scipy.special as spsp
from numpy.polynomial import chebyshev as npc
from .config import logger as log
from . import config as cfg
from . import base as efb

__all__ = ['PiecewiseDensity', 'build_piecewise']


@functools.lru_cache(maxsize=64)
def _jacobi_rule(n, p):
    '''
    Nodes tau in (0, 1) and weights w with int_0^s t^p f(t) dt ~ s^{p+1} sum_i w_i f(s tau_i).
    '''
    xi, w = spsp.roots_jacobi(n, 0.0, p)
    return (1 + xi) / 2, w * 2.0 ** (-p - 1)


def _lobatto_nodes(n):
    ''' Chebyshev extreme points mapped to [0, 1], increasing '''
    return (1 - np.cos(np.pi * np.arange(n) / (n - 1))) / 2


def _power_integral(f, s, p, n):
    '''
    Vectorized int_0^{s_i} t^p f(t) dt for every entry of s. Powers p >= 1 are folded into
    the integrand, since Jacobi rules with large exponents are poorly conditioned.

    Args:
        f (callable) : maps an array of t (shape s.shape + (n,)) to integrand values
        s (array)    : upper limits in [0, 1]
        p (float)    : power of t, >= 0
        n (int)      : number of nodes
    '''
    s = np.asarray(s, dtype=float)
    if p < 1:
        tau, w = _jacobi_rule(n, float(p))
        t = s[..., None] * tau
        return s ** (p + 1) * (f(t) @ w)
    tau, w = _jacobi_rule(n, 0.0)
    t = s[..., None] * tau
    return s * ((f(t) * t ** p) @ w)


class PiecewiseDensity(sc.prettyobj):
    '''
    A built drifted model; see build_piecewise().

    Attributes:
        q (float)            : base
        mu_q (float)         : -mu log q
        scale_a (float)      : lambda P{Z >= 1}
        beta (float)         : scale_a / mu_q
        gamma (float)        : grading exponent max(1, 1/beta)
        breakpoints (array)  : a_0 > a_1 > ... > a_{K+1}
        bases (list)         : Chebyshev series of h_j in s for j = 1..K (entry 0 is None; h_0 is analytic)
        nodes (array)        : interpolation nodes in s
        masses (array)       : int of h_j over its interval
        normalizer_C (float) : sum of masses
        K (int)              : index of the last kept basis
        criterion_value (float) : masses[K] / normalizer_C
    '''

    def __init__(self, spec, q, K, bases, masses, criterion_value, n_nodes, quad_n, meta=None):
        self.spec = spec
        self.q = float(q)
        self.mu_q = -np.log(q) * spec.drift
        self.scale_a = spec.lambda_eff
        self.beta = self.scale_a / self.mu_q
        self.gamma = max(1.0, 1.0 / self.beta)
        self.K = int(K)
        self.breakpoints = q ** np.arange(self.K + 2) / self.mu_q
        self.bases = bases
        self.nodes = _lobatto_nodes(n_nodes)
        self.masses = np.asarray(masses, dtype=float)
        self.normalizer_C = float(self.masses.sum())
        self.criterion_value = float(criterion_value)
        self.quad_n = quad_n
        self.meta = sc.objdict(meta or {})
        return

    @property
    def support_max(self):
        return self.breakpoints[0]

    @property
    def lengths(self):
        return self.breakpoints[:-1] - self.breakpoints[1:]

    def interval_index(self, x):
        '''
        Index j with x in (a_{j+1}, a_j]; -1 above the support and K+1 below the last kept
        interval.
        '''
        x, scalar = efb.toarray(x)
        out = np.full(len(x), self.K + 1)
        pos = x > 0
        with np.errstate(divide='ignore'):
            j = np.floor(np.log(x[pos] * self.mu_q) / np.log(self.q))
        out[pos] = np.clip(j, -1, self.K + 1).astype(int)
        out[x > self.support_max] = -1
        return efb.unwrap(out, scalar)

    def coordinate(self, j, x):
        ''' The graded coordinate s of x in interval j '''
        a_j = self.breakpoints[j]
        s = np.clip((a_j - np.asarray(x, dtype=float)) / self.lengths[j], 0, 1)
        return s ** (1 / self.gamma)

    def basis(self, j, x):
        '''
        Unnormalized basis function h_j on its interval (a_{j+1}, a_j].

        Args:
            j (int)            : basis index, 0 <= j <= K
            x (float or array) : points inside the interval
        '''
        x, scalar = efb.toarray(x)
        if j == 0:
            with np.errstate(divide='ignore'):
                out = np.clip(1 - self.mu_q * x, 0, None) ** (self.beta - 1)
        else:
            out = self.bases[j](self.coordinate(j, x))
        return efb.unwrap(np.clip(out, 0, None), scalar)

    def partial_mass(self, j, x):
        ''' int_x^{a_j} h_j(y) dy for x in interval j '''
        x, scalar = efb.toarray(x)
        if j == 0:
            out = np.clip(1 - self.mu_q * x, 0, None) ** self.beta / (self.beta * self.mu_q)
        else:
            s = self.coordinate(j, x)
            out = self.gamma * self.lengths[j] * _power_integral(self.bases[j], s, self.gamma - 1, self.quad_n)
        return efb.unwrap(out, scalar)

    def density(self, x):
        return density(self, x)

    def cdf(self, x):
        return cdf(self, x)

    def sf(self, x):
        return 1 - cdf(self, x)

    def expect(self, fun):
        '''
        E fun(I) under the truncated density, sum_j int fun(x) h_j(x) dx / C.

        Args:
            fun (callable): vectorized function of x
        '''
        total = 0.0
        g = self.gamma
        for j in range(self.K + 1):
            a_j, L = self.breakpoints[j], self.lengths[j]
            xs = lambda t, a_j=a_j, L=L: fun(a_j - L * t ** g)
            if j == 0:
                # h_0 = (1 - q)^{beta - 1} s^{gamma (beta - 1)}
                p = g * self.beta - 1
                coef = (1 - self.q) ** (self.beta - 1) * g * L
                total += coef * _power_integral(xs, np.array([1.0]), p, self.quad_n)[0]
            else:
                f = lambda t, j=j, xs=xs: self.bases[j](t) * xs(t)
                total += g * L * _power_integral(f, np.array([1.0]), g - 1, self.quad_n)[0]
        return total / self.normalizer_C

    def moment(self, m):
        ''' m-th moment of the truncated density '''
        m = int(m)
        return float(self.expect(lambda x: x ** m))

    def laplace(self, u):
        ''' E exp(-u I) under the truncated density; complex u allowed '''
        u, scalar = efb.toarray(u, dtype=complex)
        out = np.array([self.expect(lambda x, ui=ui: np.exp(-ui * x)) for ui in u])
        if np.all(u.imag == 0):
            out = out.real
        return efb.unwrap(out, scalar)

    def mean(self):
        return self.moment(1)

    @property
    def truncated_mass(self):
        ''' Relative mass of the last kept interval, the estimate of what was cut off below it '''
        return self.criterion_value

    def to_dict(self):
        ''' Breakpoints, node grid, node values and normalizer '''
        values = [self.basis(0, self.breakpoints[0] - self.lengths[0] * self.nodes ** self.gamma).tolist()]
        values += [self.bases[j](self.nodes).tolist() for j in range(1, self.K + 1)]
        out = dict(q=self.q, mu_q=self.mu_q, scale_a=self.scale_a, beta=self.beta, gamma=self.gamma, K=self.K,
                   breakpoints=self.breakpoints.tolist(), nodes=self.nodes.tolist(), values=values,
                   masses=self.masses.tolist(), normalizer_C=self.normalizer_C,
                   criterion_value=self.criterion_value, process=self.spec.label)
        return out

    def save(self, filename):
        return sc.savejson(filename, self.to_dict(), indent=2)


# %% Construction

class _Builder:
    ''' Holds the state of one drifted build '''

    def __init__(self, spec, q, n_nodes, quad_tol):
        self.q = q
        self.log_q = np.log(q)
        self.mu_q = -self.log_q * spec.drift
        self.a = spec.lambda_eff
        self.beta = self.a / self.mu_q
        self.gamma = max(1.0, 1.0 / self.beta)
        self.p = spec.jumps_eff.masses
        self.nodes = _lobatto_nodes(n_nodes)
        self.n_nodes = n_nodes
        self.quad_tol = quad_tol
        self.bases = [None]
        self.quad_n = 64
        return

    def breakpoint(self, j):
        return self.q ** j / self.mu_q

    def length(self, j):
        return self.q ** j * (1 - self.q) / self.mu_q

    def log1m(self, x):
        ''' log(1 - mu_q x) '''
        return np.log1p(-self.mu_q * x)

    def top_value(self, j):
        ''' h_j(a_{j+1}), the value at s = 1 '''
        if j == 0:
            return (1 - self.q) ** (self.beta - 1)
        return float(self.bases[j](1.0))

    def node_values(self, j, n):
        '''
        h_j at the interpolation nodes, from the recurrence with n-point rules.
        '''
        g, beta = self.gamma, self.beta
        a_j, L = self.breakpoint(j), self.length(j)
        S = self.nodes
        x = a_j - L * S ** g
        log_hx = (beta - 1) * self.log1m(x)

        def kernel(t):
            # h_0(x) / ((1 - mu_q y) h_0(y)) at y = a_j - L t^g
            y = a_j - L * t ** g
            return np.exp(log_hx[:, None] - beta * self.log1m(y))

        def delayed(t):
            out = np.zeros_like(t)
            for k in range(1, min(j - 1, len(self.p)) + 1):
                out += self.q ** -k * self.p[k - 1] * self.bases[j - k](t)
            return kernel(t) * out

        integral = np.zeros(len(S))
        if j > 1:
            integral += g * L * _power_integral(delayed, S, g - 1, n)
        if j <= len(self.p):
            # k = j reaches h_0, whose s^{g(beta-1)} factor joins the Jacobian s^{g-1}
            coef = self.q ** -j * self.p[j - 1] * g * L
            log_c0 = (beta - 1) * np.log1p(-self.q)
            f0 = lambda t: kernel(t) * np.exp(log_c0)
            integral += coef * _power_integral(f0, S, g * beta - 1, n)
        boundary = np.exp(log_hx - (beta - 1) * np.log1p(-self.q ** j)) * self.top_value(j - 1)
        return boundary - self.a * integral

    def build_basis(self, j, n_max=2048):
        ''' Tabulate h_j, doubling the quadrature order until the node values settle '''
        n = self.quad_n
        prev = self.node_values(j, n)
        while True:
            n *= 2
            vals = self.node_values(j, n)
            scale = np.max(np.abs(vals))
            diff = np.max(np.abs(vals - prev))
            if diff <= self.quad_tol * scale:
                break
            if n >= n_max:
                errormsg = f'Quadrature for basis {j} did not settle below {self.quad_tol:g} with {n} nodes (change {diff / scale:.3g})'
                raise efb.QuadratureFailure(errormsg)
            prev = vals
        self.quad_n = max(self.quad_n, n // 2)
        scale = np.max(np.abs(vals))
        if np.any(vals < -1e-8 * scale):
            errormsg = f'Basis {j} takes negative values ({vals.min():.3g}, maximum {scale:.3g}); the tabulation is under-resolved'
            raise efb.NumericalError(errormsg)
        vals = np.clip(vals, 0, None)
        basis = npc.Chebyshev.fit(self.nodes, vals, deg=self.n_nodes - 1, domain=[0, 1])
        self.bases.append(basis)
        return basis

    def mass(self, j):
        ''' int of h_j over (a_{j+1}, a_j] '''
        g = self.gamma
        if j == 0:
            return (1 - self.q) ** self.beta / (self.beta * self.mu_q)
        n = max(self.quad_n, self.n_nodes + 1)
        return g * self.length(j) * _power_integral(self.bases[j], np.array([1.0]), g - 1, n)[0]


def build_piecewise(spec, q, mass_tol=None, quad_tol=None, n_nodes=None, k_max=None, continuity_tol=None):
    '''
    Build the piecewise density of the drifted exponential functional.

    Bases are added until the mass of the last one relative to the total is below
    mass_tol; the density is set to 0 below the last kept interval.

    Args:
        spec (IvsSpec)         : process with drift > 0
        q (float)              : base in (0, 1)
        mass_tol (float)       : truncation criterion (default 1e-3)
        quad_tol (float)       : relative tolerance of the recurrence integrals (default 1e-9)
        n_nodes (int)          : interpolation nodes per basis (default 129)
        k_max (int)            : cap on the number of bases (default 60)
        continuity_tol (float) : allowed mismatch at the breakpoints (default 1e-6)

    Returns:
        A PiecewiseDensity.

    **Example**::

        spec = ef.make_process(dict(kind='poisson', drift=1.0))
        pd = ef.build_piecewise(spec, q=np.exp(-1))
        pd.K  # 4
    '''
    efb.check_open_unit('q', q)
    if spec.drift <= 0:
        raise ValueError('build_piecewise() needs a positive drift; use build_coefficients() for driftless processes')
    mass_tol = cfg.default('mass_tol', mass_tol)
    quad_tol = cfg.default('quad_tol', quad_tol)
    n_nodes = int(cfg.default('n_nodes', n_nodes))
    k_max = int(cfg.default('drift_k_max', k_max))
    continuity_tol = cfg.default('continuity_tol', continuity_tol)
    T = sc.tic()

    spec = spec.normalized()
    builder = _Builder(spec, q, n_nodes, quad_tol)
    masses = [builder.mass(0)]
    crit = 1.0
    K = None
    worst_gap = 0.0
    for j in range(1, k_max + 1):
        basis = builder.build_basis(j)
        gap = abs(basis(0.0) - builder.top_value(j - 1))
        local = max(abs(basis(0.0)), builder.top_value(j - 1), 1e-300)
        worst_gap = max(worst_gap, gap / local)
        masses.append(builder.mass(j))
        crit = masses[-1] / sum(masses)
        log.debug(f'Drifted basis {j}: mass {masses[-1]:.4g}, criterion {crit:.3g}, quadrature nodes {builder.quad_n}')
        if crit < mass_tol:
            K = j
            break
    if worst_gap > continuity_tol:
        log.warning(f'Breakpoint mismatch {worst_gap:.3g} exceeds continuity_tol {continuity_tol:g}; consider more nodes')

    meta = dict(mass_tol=mass_tol, quad_tol=quad_tol, continuity_gap=worst_gap)
    met = K is not None
    K = K if met else k_max
    pd = PiecewiseDensity(spec, q, K, builder.bases, masses, crit, n_nodes, builder.quad_n, meta=meta)
    log.debug(f'Drifted model for {spec.label} at q={q:.6g}, mu={spec.drift:g}: K={K}, C={pd.normalizer_C:.6g}, {sc.toc(T, output=True):.2f} s, {cfg.checkmem()}')
    if not met:
        errormsg = f'The drifted mass criterion reached {crit:.3g}, not below {mass_tol:g}, within {k_max} bases'
        raise efb.CapExceeded(errormsg, achieved=crit, model=pd)
    return pd


# %% Evaluation

def density(pd, x):
    '''
    Density h_j(x) / C on (a_{j+1}, a_j]; zero above 1/mu_q and below the last kept interval.

    Args:
        pd (PiecewiseDensity) : built model
        x (float or array)    : evaluation point(s)
    '''
    x, scalar = efb.toarray(x)
    out = np.zeros(len(x))
    idx = efb.toarray(pd.interval_index(x), dtype=int)[0]
    for j in np.unique(idx):
        if 0 <= j <= pd.K:
            sel = idx == j
            out[sel] = pd.basis(j, x[sel]) / pd.normalizer_C
    return efb.unwrap(out, scalar)


def cdf(pd, x):
    '''
    Distribution function 1 - (partial mass of the current interval + masses above) / C,
    clamped to [0, 1].
    '''
    x, scalar = efb.toarray(x)
    out = np.zeros(len(x))
    idx = efb.toarray(pd.interval_index(x), dtype=int)[0]
    above = np.concatenate([[0.0], np.cumsum(pd.masses)])
    out[idx == -1] = 1.0
    for j in np.unique(idx):
        if 0 <= j <= pd.K:
            sel = idx == j
            upper = above[j] + pd.partial_mass(j, x[sel])
            out[sel] = 1 - upper / pd.normalizer_C
    return efb.unwrap(np.clip(out, 0, 1), scalar)
