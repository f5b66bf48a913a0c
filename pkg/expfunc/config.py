'''
This module sets the numerical defaults, the location of the fixture folder and the logger.

To change the level of log messages displayed, use e.g.

    ef.logger.setLevel('DEBUG')

To change a default tolerance for every subsequent build, use e.g.

    ef.set_defaults(threshold=1e-4)
'''

# %% Housekeeping

import os
import sys
import psutil
import numba as nb
import sciris as sc
import logging
from . import version as efv

__all__ = ['logger', 'checkmem', 'datadir', 'get_defaults', 'set_defaults', 'set_nthreads',
           'nthreads', 'version_info']


# Set the local data folder; it holds the figure fixture configs
thisdir = os.path.dirname(os.path.abspath(__file__))
datadir = os.path.abspath(os.path.join(thisdir, os.pardir, 'data'))

# Numerical defaults shared by the engines
_defaults = sc.objdict(
    pmf_tol                   = 1e-12,    # cumulative mass left out of catalog PMFs
    max_atoms                 = 10_000,   # largest support stored for heavy-tailed PMFs
    threshold                 = 1e-3,     # truncation criterion of the driftless series
    k_max                     = 10_000,   # hard cap on the series length
    tol_neg                   = 1e-9,     # negative-density clamping, relative to the maximum
    small_x_tol               = 1e-10,    # remainder estimate defining the small-x crossover
    omitted_mass_tol          = 1e-9,     # L1 mass of the series terms left out of the density
    digits_lost_max           = 6,        # cancellation allowed before extended precision is used
    mass_tol                  = 1e-3,     # truncation criterion of the drifted basis
    quad_tol                  = 1e-9,     # quadrature tolerance of the drifted recurrence
    continuity_tol            = 1e-6,     # breakpoint continuity of the drifted basis
    n_nodes                   = 129,      # interpolation nodes per drifted basis function
    drift_k_max               = 60,       # hard cap on the number of drifted basis functions
    max_work                  = 50_000_000, # K x states^2 of the inverse-power recursion
    tail_budget               = 1e-1,     # log-tail bound allowed for inverse-power Laplace
    series_tol                = 1e-8,     # per-sample Monte Carlo truncation
    max_terms                 = 100_000,
    block_size                = 8192,     # samples per random stream
    terms_per_inverse_epsilon = 1,        # series length budget of the Levy approximation
)

nthreads = None

# %% Logger

# Set the default logging level
default_log_level = ['DEBUG', 'INFO', 'WARNING', 'CRITICAL'][2]

logger = logging.getLogger('expfunc')

if not logger.hasHandlers():
    # Only add handlers if they don't already exist in the module-level logger, so that a
    # logger called 'expfunc' customized before import is left alone
    debug_handler   = logging.StreamHandler(sys.stdout)
    info_handler    = logging.StreamHandler(sys.stdout)
    warning_handler = logging.StreamHandler(sys.stderr)  # everything at or above WARNING goes to STDERR

    # Handle levels; the output is filtered further by the logger level
    debug_handler.setLevel(0)
    info_handler.setLevel(logging.INFO)
    warning_handler.setLevel(logging.WARNING)
    debug_handler.addFilter(type("ThresholdFilter", (object,), {"filter": lambda x, logRecord: logRecord.levelno < logging.INFO})())
    info_handler.addFilter(type("ThresholdFilter", (object,), {"filter": lambda x, logRecord: logRecord.levelno < logging.WARNING})())

    # Set formatting and log level
    formatter = logging.Formatter('%(levelname)s %(asctime)s.%(msecs)d %(filename)s:%(lineno)d → %(message)s', datefmt='%H:%M:%S')
    for handler in [debug_handler, info_handler, warning_handler]:
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    logger.setLevel(default_log_level)


def checkmem(unit='mb', fmt='0.2f', start=0, to_string=True):
    ''' For use with logger, check current memory usage '''
    process = psutil.Process(os.getpid())
    mapping = {'b': 1, 'kb': 1e3, 'mb': 1e6, 'gb': 1e9}
    try:
        factor = mapping[unit.lower()]
    except KeyError:
        raise sc.KeyNotFoundError(f'Unit {unit} not found')
    mem_use = process.memory_info().rss / factor - start
    if to_string:
        output = f'{mem_use:{fmt}} {unit.upper()}'
    else:
        output = mem_use
    return output


# %% Functions

def get_defaults():
    ''' Return a copy of the current numerical defaults '''
    return sc.dcp(_defaults)


def set_defaults(**kwargs):
    '''
    Change one or more numerical defaults.

    Args:
        kwargs: new values keyed by default name, e.g. ``threshold=1e-4``

    Returns:
        The updated defaults (a copy).

    **Example**::

        ef.set_defaults(threshold=1e-4, n_nodes=65)
    '''
    for key, value in kwargs.items():
        if key not in _defaults:
            errormsg = f'Unknown default "{key}"; choices are: {sc.strjoin(_defaults.keys())}'
            raise sc.KeyNotFoundError(errormsg)
        _defaults[key] = type(_defaults[key])(value)
        logger.debug(f'Default {key} set to {value}')
    return get_defaults()


def default(key, value=None):
    ''' Return value unless it is None, otherwise the named default '''
    return _defaults[key] if value is None else value


def set_nthreads(n=None):
    '''Set the number of threads used by the numba kernels and the Monte Carlo sampler.'''
    global nthreads
    if n is None:
        nthreads = None
        return nthreads
    n = int(n)
    if n < 1:
        raise ValueError(f'The number of threads must be positive, not {n}')
    nb.set_num_threads(min(n, nb.config.NUMBA_NUM_THREADS))
    nthreads = n
    logger.debug(f'Thread count set to {n}')
    return nthreads


def version_info():
    ''' One line naming the version, its date and where the package and its data live '''
    return f'expfunc {efv.__version__} ({efv.__versiondate__}) from {thisdir}; data folder {datadir}'


if os.environ.get('EXPFUNC_NTHREADS'):
    set_nthreads(os.environ['EXPFUNC_NTHREADS'])
