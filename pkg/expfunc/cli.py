'''
Command-line interface.

    expfunc <command> CONFIG [--set section.key=value ...] [--out PATH] [-v]

Commands: density, cdf, laplace, moments, validate, approx, sample. CONFIG is a JSON run
configuration (see docs/usage.rst). Exit codes: 0 success, 1 failed validation, 2 invalid
configuration, 3 numerical failure.
'''

import sys
import json
import argparse
import numpy as np
import pandas as pd
import sciris as sc
import scipy.stats as sps
import scipy.integrate as spi
from .config import logger as log
from . import config as cfg
from . import version as efv
from . import base as efb
from . import catalog as efc
from . import series as efser
from . import drifted as efd
from . import functionals as eff
from . import levy as efl
from . import sampling as efs

__all__ = ['RunConfig', 'run', 'main']

commands = ['density', 'cdf', 'laplace', 'moments', 'validate', 'approx', 'sample']
functional_kinds = ['exp', 'exp_drifted', 'inverse_power', 'general_laplace', 'levy_approx']
sweep_keys = ['q', 'mu', 'p', 'epsilon']
spacings = ['linear', 'log']

# Thresholds of the validate command
check_defaults = sc.objdict(
    ks_max     = None,   # by kind, see ks_defaults
    mean_z_max = 3.0,    # sample mean vs exact mean, in standard errors
    norm_tol   = 1e-5,   # |1 - int density|
)
ks_defaults = dict(exp=0.01, exp_drifted=0.015, inverse_power=0.02, levy_approx=0.02)

_sections = dict(process=dict, functional=dict, output=dict, tolerances=dict, mc=dict)


# %% Configuration

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class RunConfig(sc.prettyobj):

    def __init__(self, process=None, functional=None, output=None, tolerances=None, mc=None, seed=1):
        '''
        A validated run configuration.

        Args:
            process (dict)    : process block, see catalog.make_process() and levy.make_measure()
            functional (dict) : kind and parameters (q, mu, p, epsilon, K, nested_depth, g, n_terms)
            output (dict)     : x grid {min, max, points, spacing}, u list or grid, m_max
            tolerances (dict) : overrides of the numerical defaults and of the validation thresholds
            mc (dict)         : McConfig fields
            seed (int)        : seed of the Monte Carlo runs
        '''
        self.process = sc.objdict(process or {})
        self.functional = sc.objdict(functional or {})
        self.output = sc.objdict(output or {})
        self.tolerances = sc.objdict(tolerances or {})
        self.mc = sc.objdict(mc or {})
        self.seed = seed
        self.partial_ok = False  # keep models whose truncation criterion was not met
        self.validate()
        return

    @classmethod
    def load(cls, filename, overrides=None):
        ''' Read a JSON document and apply "section.key=value" overrides '''
        try:
            doc = sc.loadjson(filename)
        except FileNotFoundError as E:
            raise efb.ConfigError('config', f'file {filename} not found') from E
        except json.JSONDecodeError as E:
            raise efb.ConfigError('config', f'{filename} is not valid JSON: {E}') from E
        return cls.from_dict(doc, overrides)

    @classmethod
    def from_dict(cls, doc, overrides=None):
        doc = sc.dcp(doc)
        unknown = [k for k in doc if k not in _sections and k != 'seed']
        if unknown:
            raise efb.ConfigError(unknown[0], f'unknown section; choices are {sc.strjoin(list(_sections) + ["seed"])}')
        for item in overrides or []:
            if '=' not in item:
                raise efb.ConfigError(item, 'overrides take the form section.key=value')
            key, text = item.split('=', 1)
            parts = key.strip().split('.')
            value = _parse_value(text)
            if parts == ['seed']:
                doc['seed'] = value
            elif len(parts) == 2 and parts[0] in _sections:
                doc.setdefault(parts[0], {})[parts[1]] = value
            else:
                raise efb.ConfigError(key, 'overrides must name section.key or seed')
        return cls(**doc)

    def validate(self):
        ''' Check the ranges of every parameter before anything is built '''
        kind = self.functional.get('kind')
        if kind not in functional_kinds:
            raise efb.ConfigError('functional.kind', f'"{kind}" is not one of {functional_kinds}')
        if 'kind' not in self.process:
            raise efb.ConfigError('process.kind', 'missing required field')
        swept = [k for k in sweep_keys if isinstance(self.functional.get(k), list)]
        if len(swept) > 1:
            raise efb.ConfigError(f'functional.{swept[1]}', 'only one parameter can be swept')
        required = dict(exp=['q'], exp_drifted=['q', 'mu'], inverse_power=['p'], general_laplace=['g'], levy_approx=['epsilon'])
        for key in required[kind]:
            if key not in self.functional:
                raise efb.ConfigError(f'functional.{key}', 'missing required field')
        for key in sweep_keys:
            for value in sc.tolist(self.functional.get(key, [])):
                self._check_parameter(key, value)
        for key in ['K', 'nested_depth', 'n_terms']:
            if key in self.functional and (not isinstance(self.functional[key], int) or self.functional[key] < 1):
                raise efb.ConfigError(f'functional.{key}', f'must be a positive integer, not {self.functional[key]}')
        if kind == 'general_laplace' and self.functional.g not in ['power', 'exponential']:
            raise efb.ConfigError('functional.g', f'must be "power" or "exponential", not "{self.functional.g}"')
        if kind == 'general_laplace':
            needed = 'p' if self.functional.g == 'power' else 'q'
            if needed not in self.functional:
                raise efb.ConfigError(f'functional.{needed}', f'missing required field of g = {self.functional.g}')
        if 'x' in self.output:
            self._check_grid('output.x', self.output.x)
        if isinstance(self.output.get('u'), dict):
            self._check_grid('output.u', self.output.u)
        if int(self.output.get('m_max', 4)) < 0:
            raise efb.ConfigError('output.m_max', 'must be nonnegative')
        defaults = cfg.get_defaults()
        for key in self.tolerances:
            if key not in defaults and key not in check_defaults:
                raise efb.ConfigError(f'tolerances.{key}', 'unknown tolerance')
        if not isinstance(self.seed, int) or self.seed < 0:
            raise efb.ConfigError('seed', f'must be a nonnegative integer, not {self.seed}')
        try:
            self.mc_config()
        except (ValueError, TypeError) as E:
            raise efb.ConfigError('mc', str(E)) from E
        return

    def _check_parameter(self, key, value):
        path = f'functional.{key}'
        if not isinstance(value, (int, float, str)):
            raise efb.ConfigError(path, f'must be a number, not {value}')
        if key == 'epsilon':
            try:
                efl.parse_epsilon(value)
            except (ValueError, ZeroDivisionError) as E:
                raise efb.ConfigError(path, str(E)) from E
            return
        if isinstance(value, str):
            raise efb.ConfigError(path, f'must be a number, not "{value}"')
        if key == 'q' and not (0 < value < 1):
            raise efb.ConfigError(path, f'must lie in (0, 1), not {value}')
        if key == 'mu' and not value > 0:
            raise efb.ConfigError(path, f'must be positive, not {value}')
        if key == 'p' and not value > 1:
            raise efb.ConfigError(path, f'must exceed 1, not {value}')
        return

    @staticmethod
    def _check_grid(path, grid):
        try:
            lo, hi, n = float(grid['min']), float(grid['max']), int(grid.get('points', 200))
        except KeyError as E:
            raise efb.ConfigError(f'{path}.{E.args[0]}', 'missing required field') from E
        spacing = grid.get('spacing', 'linear')
        if spacing not in spacings:
            raise efb.ConfigError(f'{path}.spacing', f'must be one of {spacings}')
        if not lo < hi:
            raise efb.ConfigError(f'{path}.min', f'min ({lo}) must be below max ({hi})')
        if n < 2:
            raise efb.ConfigError(f'{path}.points', 'at least two points are needed')
        if spacing == 'log' and lo <= 0:
            raise efb.ConfigError(f'{path}.min', 'log spacing needs min > 0')
        return

    @staticmethod
    def make_grid(grid):
        lo, hi, n = float(grid['min']), float(grid['max']), int(grid.get('points', 200))
        if grid.get('spacing', 'linear') == 'log':
            return np.logspace(np.log10(lo), np.log10(hi), n)
        return np.linspace(lo, hi, n)

    @property
    def kind(self):
        return self.functional.kind

    def x_grid(self):
        return self.make_grid(self.output.get('x', dict(min=0.01, max=5, points=500)))

    def u_grid(self):
        u = self.output.get('u', [0.0, 0.5, 1.0, 2.0])
        if isinstance(u, dict):
            return self.make_grid(u)
        return np.array(sc.tolist(u), dtype=float)

    def sweep(self):
        ''' Name and values of the swept parameter; (None, [None]) when nothing is swept '''
        for key in sweep_keys:
            if isinstance(self.functional.get(key), list):
                return key, self.functional[key]
        return None, [None]

    def functional_at(self, value):
        fb = sc.dcp(self.functional)
        name, _ = self.sweep()
        if name is not None:
            fb[name] = value
        return fb

    def mc_config(self, **kwargs):
        pars = sc.mergedicts(dict(seed=self.seed), self.mc, kwargs)
        return efs.McConfig(**pars)

    def checks(self):
        out = sc.mergedicts(check_defaults, {k: v for k, v in self.tolerances.items() if k in check_defaults})
        if out.ks_max is None:
            out.ks_max = ks_defaults.get(self.kind)
        return sc.objdict(out)

    def engine_tolerances(self):
        return {k: v for k, v in self.tolerances.items() if k not in check_defaults}

    def to_dict(self):
        return dict(process=dict(self.process), functional=dict(self.functional), output=dict(self.output),
                    tolerances=dict(self.tolerances), mc=dict(self.mc), seed=self.seed)


# %% Models

def _spec(rc):
    return efc.make_process(rc.process)


def build(rc, value=None):
    '''
    Build the model of one configuration (one value of the swept parameter).

    Returns:
        objdict with the evaluators density, cdf, laplace, moment (any may be None), mean,
        sample(mc), x_hi (upper end of the support or of 1 - 1e-9 of the mass), model and meta.
    '''
    fb = rc.functional_at(value)
    kind = fb.kind
    out = sc.objdict(kind=kind, density=None, cdf=None, laplace=None, moment=None, mean=None,
                     sample=None, x_hi=None, model=None, meta=sc.objdict(), breakpoints=None)
    if kind == 'levy_approx':
        measure = efl.make_measure(rc.process)
        grid = efl.discretize(measure, fb.epsilon)
        approx = efl.approx_density(grid, n_terms=fb.get('n_terms'), threshold=fb.get('threshold'))
        spec = grid.to_spec()
        out.update(model=approx, density=approx.density, cdf=approx.cdf,
                   laplace=lambda u: np.real(approx.laplace(u)), moment=approx.moment,
                   sample=lambda mc: efs.sample_exp_functional(spec, grid.q, mc), x_hi=approx.model.x_max())
        out.meta = sc.objdict(epsilon=grid.epsilon, rho=grid.rho, total=grid.total, k_cut=grid.k_cut,
                              K=approx.model.K, criterion_value=approx.model.criterion_value, precision=approx.model.precision)
        if measure.kind == 'cpe':
            a, b = measure.params.a, measure.params.b
            out.oracle = sps.gamma(b + 1, scale=b / a).pdf
        return out

    spec = _spec(rc)
    if kind in ['exp', 'inverse_power', 'general_laplace'] and spec.drift:
        raise efb.ConfigError('process.drift', f'the {kind} functional is driftless; use exp_drifted with functional.mu')

    if kind == 'exp':
        q = fb.q
        try:
            model = efser.build_coefficients(spec, q, n_terms=fb.get('n_terms'))
        except efb.CapExceeded as E:
            if not rc.partial_ok:
                raise
            model = E.model
            out.meta.cap_exceeded = str(E)
        out.update(model=model, density=lambda x: efser.density(model, x), cdf=lambda x: efser.cdf(model, x),
                   laplace=lambda u: np.real(efser.laplace(model, u)), moment=lambda m: efser.moment(spec, q, m),
                   sample=lambda mc: efs.sample_exp_functional(spec, q, mc), x_hi=model.x_max())
        out.meta.update(K=model.K, K_eval=model.K_eval, criterion_value=model.criterion_value, threshold=model.threshold, precision=model.precision)

    elif kind == 'exp_drifted':
        q = fb.q
        dspec = spec.with_drift(fb.mu)
        try:
            pd_ = efd.build_piecewise(dspec, q)
        except efb.CapExceeded as E:
            if not rc.partial_ok:
                raise
            pd_ = E.model
            out.meta.cap_exceeded = str(E)
        out.update(model=pd_, density=pd_.density, cdf=pd_.cdf, laplace=pd_.laplace,
                   moment=lambda m: efser.moment(dspec, q, m),
                   sample=lambda mc: efs.sample_exp_functional(dspec, q, mc), x_hi=pd_.support_max,
                   breakpoints=pd_.breakpoints)
        out.meta.update(K=pd_.K, criterion_value=pd_.criterion_value, mu_q=pd_.mu_q, n_nodes=len(pd_.nodes))

    elif kind == 'inverse_power':
        model = eff.InversePowerModel(spec, fb.p, K=fb.get('K', 10), nested_depth=fb.get('nested_depth', 5))
        lam = model.lambda_eff
        out.update(model=model, density=model.density, cdf=model.cdf, laplace=model.laplace, moment=model.moment,
                   sample=lambda mc: efs.sample_inverse_power(spec, fb.p, mc, n_terms=model.K),
                   x_hi=np.log(1e9 * max(1.0, abs(model.weights[0]))) / lam)
        out.meta.update(K=model.K, nested_depth=model.nested_depth, coverage=model.coverage, lambda_eff=lam,
                        log_tail_bound=eff.log_tail_bound(model, lam))

    elif kind == 'general_laplace':
        df = eff.power_functional(fb.p) if fb.g == 'power' else eff.exponential_functional(fb.q)
        mc = rc.mc_config()

        def laplace(u):
            return np.array([eff.laplace_limit(df, spec, ui, n_mc=mc.n_samples, seed=rc.seed).value for ui in np.atleast_1d(u)])

        out.update(model=df, laplace=laplace, sample=lambda mc: efs.sample_decreasing_functional(df, spec, mc))
        out.meta.update(g=df.label, convergence=eff.converges(df).status)

    if out.moment is not None:
        out.mean = lambda: out.moment(1)
    return out


# %% Output

def _label(name, key, value):
    ''' Column name, e.g. density@q=0.367879 '''
    if key is None:
        return name
    if isinstance(value, str):
        return f'{name}@{key}={value}'
    return f'{name}@{key}={value:.6g}'


def _meta_value(value):
    if isinstance(value, (float, np.floating, complex)):
        return efb.fmt(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return json.dumps(np.asarray(value).tolist())
    return str(value)


def format_table(df, meta):
    '''
    CSV text with the metadata as leading "# key: value" lines, 17 significant digits and LF
    line endings.
    '''
    lines = [f'# {k}: {_meta_value(v)}' for k, v in meta.items()]
    body = df.to_csv(index=False, float_format='%.17g', lineterminator='\n')
    return ''.join(line + '\n' for line in lines) + body


def _base_meta(rc, command):
    meta = sc.objdict(command=command, version=efv.__version__, kind=rc.kind)
    meta.process = json.dumps(dict(rc.process), sort_keys=True)
    meta.functional = json.dumps(dict(rc.functional), sort_keys=True)
    tol = rc.engine_tolerances()
    if tol:
        meta.tolerances = json.dumps(tol, sort_keys=True)
    return meta


def _require(model, attr, rc, command):
    if model[attr] is None:
        raise efb.ConfigError('functional.kind', f'{command} is not available for {rc.kind}')
    return model[attr]


# %% Commands

def cmd_curve(rc, command):
    ''' density, cdf and approx: one column per swept value on the x grid '''
    if command == 'approx' and rc.kind != 'levy_approx':
        raise efb.ConfigError('functional.kind', 'approx needs the levy_approx functional')
    x = rc.x_grid()
    key, values = rc.sweep()
    df = pd.DataFrame({'x': x})
    meta = _base_meta(rc, command)
    names = ['density', 'cdf'] if command == 'approx' else [command]
    for value in values:
        model = build(rc, value)
        for name in names:
            df[_label(name, key, value)] = _require(model, name, rc, command)(x)
        if command == 'approx' and 'oracle' in model:
            df[_label('oracle', key, value)] = model.oracle(x)
        for k, v in model.meta.items():
            meta[_label(k, key, value)] = v
    return sc.objdict(status=0, table=df, meta=meta)


def cmd_laplace(rc):
    u = rc.u_grid()
    key, values = rc.sweep()
    df = pd.DataFrame({'u': u})
    meta = _base_meta(rc, 'laplace')
    for value in values:
        model = build(rc, value)
        df[_label('laplace', key, value)] = _require(model, 'laplace', rc, 'laplace')(u)
        for k, v in model.meta.items():
            meta[_label(k, key, value)] = v
    return sc.objdict(status=0, table=df, meta=meta)


def cmd_moments(rc):
    m = np.arange(int(rc.output.get('m_max', 4)) + 1)
    key, values = rc.sweep()
    df = pd.DataFrame({'m': m})
    meta = _base_meta(rc, 'moments')
    for value in values:
        model = build(rc, value)
        moment = _require(model, 'moment', rc, 'moments')
        df[_label('moment', key, value)] = [moment(int(mi)) for mi in m]
    return sc.objdict(status=0, table=df, meta=meta)


def cmd_sample(rc):
    key, values = rc.sweep()
    if key is not None:
        raise efb.ConfigError(f'functional.{key}', 'sample takes a single parameter value')
    model = build(rc)
    samples = model.sample(rc.mc_config())
    meta = _base_meta(rc, 'sample')
    meta.seed = rc.seed
    return sc.objdict(status=0, table=pd.DataFrame({'sample': samples}), meta=meta)


def _check(rows, name, value, threshold, passed):
    rows.append(dict(check=name, value=float(value), threshold=float(threshold), passed=bool(passed)))
    return passed


def _validate_one(rc, model, checks, key, value, rows):
    mc = rc.mc_config()
    suffix = _label('', key, value)
    if 'cap_exceeded' in model.meta:
        _check(rows, 'truncation' + suffix, model.meta.criterion_value, model.meta.get('threshold', np.nan), False)

    if model.kind == 'general_laplace':
        samples = model.sample(mc)
        for u in rc.u_grid():
            emp, se = efs.empirical_laplace(samples, u)
            limit = eff.laplace_limit(model.model, _spec(rc), u, n_mc=mc.n_samples, seed=rc.seed)
            z = abs(limit.value - emp) / max(np.hypot(limit.stderr, se), 1e-300) if u else 0.0
            _check(rows, f'laplace_z(u={u:g}){suffix}', z, checks.mean_z_max, z <= checks.mean_z_max)
        return

    samples = model.sample(mc)
    hi = max(float(samples.max()), model.x_hi)
    try:
        grid = np.linspace(0, hi, 4001)
        cdf = efs.tabulated_cdf(model.cdf, grid)
        ks = efs.ks_statistic(samples, cdf)
    except efb.NumericalError as E:
        log.warning(f'KS check failed to evaluate: {E}')
        ks = np.nan
    _check(rows, 'ks' + suffix, ks, checks.ks_max, ks < checks.ks_max)

    exact = model.mean()
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    z = abs(samples.mean() - exact) / se
    _check(rows, 'mean_z' + suffix, z, checks.mean_z_max, z <= checks.mean_z_max)

    try:
        points = None
        if model.breakpoints is not None:
            points = model.breakpoints[(model.breakpoints > 0) & (model.breakpoints < model.x_hi)]
        density = model.density
        norm = spi.quad(lambda x: float(density(x)), 0, model.x_hi, points=points, limit=500)[0]
    except efb.NumericalError as E:
        log.warning(f'Normalization check failed to evaluate: {E}')
        norm = np.nan
    err = abs(1 - norm)
    _check(rows, 'normalization' + suffix, err, checks.norm_tol, err <= checks.norm_tol)
    return


def cmd_validate(rc):
    '''
    Compare the analytic model with the Monte Carlo sampler: KS statistic, sample mean against
    the exact mean, and the quadrature of the density. Status 1 when any check fails.
    '''
    checks = rc.checks()
    key, values = rc.sweep()
    rows = []
    rc.partial_ok = True
    for value in values:
        model = build(rc, value)
        _validate_one(rc, model, checks, key, value, rows)
    df = pd.DataFrame(rows, columns=['check', 'value', 'threshold', 'passed'])
    meta = _base_meta(rc, 'validate')
    meta.seed = rc.seed
    meta.n_samples = rc.mc_config().n_samples
    passed = bool(df.passed.all())
    meta.result = 'pass' if passed else 'fail'
    log.info(f'Validation {meta.result}: {int(df.passed.sum())} of {len(df)} checks passed')
    return sc.objdict(status=0 if passed else 1, table=df, meta=meta)


def run(command, rc, out=None):
    '''
    Run one command on a RunConfig and write the CSV to out (a path) or stdout.

    Returns:
        objdict with status (exit code), table (DataFrame), meta and text.
    '''
    if command not in commands:
        raise efb.ConfigError('command', f'"{command}" is not one of {commands}')
    rc.partial_ok = False
    saved = cfg.get_defaults()
    try:
        cfg.set_defaults(**rc.engine_tolerances())
        if command in ['density', 'cdf', 'approx']:
            result = cmd_curve(rc, command)
        elif command == 'laplace':
            result = cmd_laplace(rc)
        elif command == 'moments':
            result = cmd_moments(rc)
        elif command == 'sample':
            result = cmd_sample(rc)
        else:
            result = cmd_validate(rc)
    finally:
        cfg.set_defaults(**saved)
    result.text = format_table(result.table, result.meta)
    if out:
        with open(out, 'w', newline='\n') as f:
            f.write(result.text)
    elif out is None:
        sys.stdout.write(result.text)
    log.info(f'{command} finished with status {result.status}')
    return result


def make_parser():
    parser = argparse.ArgumentParser(prog='expfunc', description='Densities and Monte Carlo checks of exponential functionals of subordinators')
    parser.add_argument('command', choices=commands)
    parser.add_argument('config', help='JSON run configuration')
    parser.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE', help='override a configuration entry')
    parser.add_argument('--out', default=None, help='output file (default: stdout)')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')
    parser.add_argument('--version', action='version', version=cfg.version_info())
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.verbose:
        log.setLevel('INFO' if args.verbose == 1 else 'DEBUG')
    try:
        rc = RunConfig.load(args.config, args.set)
        result = run(args.command, rc, out=args.out)
    except efb.ConfigError as E:
        log.error(f'Invalid configuration: {E}')
        return 2
    except efb.NumericalError as E:
        log.error(f'Numerical failure: {E}')
        return 3
    except ValueError as E:
        log.error(f'Invalid configuration: {E}')
        return 2
    return result.status
