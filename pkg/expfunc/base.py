"""
The module contains the exceptions and the small numerical helpers shared by the engines.
"""

import numpy as np
import numba as nb
import sciris as sc

__all__ = ['ConfigError', 'NumericalError', 'CapExceeded', 'DegenerateDenominator', 'NegativeDensity',
           'QuadratureFailure', 'DegenerateRates', 'TruncationBudgetExceeded', 'MaxTermsExceeded',
           'InvalidTail', 'DivergentFunctional', 'pochhammer']


# %% Exceptions

class ConfigError(ValueError):
    '''
    An invalid run configuration.

    Args:
        path (str)    : dotted field path of the offending entry, e.g. ``functional.q``
        message (str) : what is wrong with it
    '''
    def __init__(self, path, message):
        self.path = path
        super().__init__(f'{path}: {message}')


class NumericalError(RuntimeError):
    ''' Root of the numerical failures reported by the engines '''
    pass


class CapExceeded(NumericalError):
    ''' A truncation criterion was not met before the hard cap; the partial result is attached '''
    def __init__(self, message, achieved=None, model=None):
        self.achieved = achieved
        self.model = model
        super().__init__(message)


class DegenerateDenominator(NumericalError):
    pass


class NegativeDensity(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class DegenerateRates(NumericalError):
    pass


class TruncationBudgetExceeded(NumericalError):
    pass


class MaxTermsExceeded(NumericalError):
    pass


class InvalidTail(NumericalError):
    pass


class DivergentFunctional(ValueError):
    pass


# %% Helpers

def toarray(x, dtype=float):
    """
    Convert the input to a one-dimensional array, remembering whether it was a scalar.

    Args:
        x     : scalar or array-like
        dtype : array dtype

    Returns:
        The array and a flag that is True when ``x`` was a scalar.
    """
    scalar = np.ndim(x) == 0
    arr = np.atleast_1d(np.asarray(x, dtype=dtype))
    return arr, scalar


def unwrap(arr, scalar):
    ''' Undo toarray() '''
    return arr[0] if scalar else arr


def check_open_unit(name, value):
    ''' Raise a ValueError unless 0 < value < 1 '''
    if not (0 < value < 1):
        errormsg = f'{name} must lie in (0, 1), not {value}'
        raise ValueError(errormsg)
    return value


def check_positive(name, value, strict=True):
    ''' Raise a ValueError unless value is positive (or nonnegative) '''
    ok = value > 0 if strict else value >= 0
    if not ok:
        bound = 'positive' if strict else 'nonnegative'
        errormsg = f'{name} must be {bound}, not {value}'
        raise ValueError(errormsg)
    return value


@nb.njit(cache=True)
def neumaier_sum(values):
    ''' Compensated sum of a float array '''
    total = 0.0
    comp = 0.0
    for v in values:
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
    return total + comp


def pochhammer(a, q, n=None):
    """
    The q-Pochhammer symbol (a; q)_n = prod_{i<n} (1 - a q^i).

    Args:
        a (float or complex) : first argument
        q (float)            : base in (0, 1)
        n (int)              : number of factors; None for the infinite product, which is
                               truncated once the factors equal 1 to machine precision

    Returns:
        The product, with the dtype of ``a``.

    **Example**::

        ef.pochhammer(np.exp(-1), np.exp(-1))  # (q; q)_infinity at q = 1/e
    """
    check_open_unit('q', q)
    out = 1.0
    qi = 1.0
    i = 0
    while True:
        if n is not None and i >= n:
            break
        term = a * qi
        if n is None and abs(term) < 1e-17 * max(1.0, abs(out)):
            break
        out *= (1 - term)
        qi *= q
        i += 1
    return out


def fmt(value):
    ''' Format a number with 17 significant digits '''
    if isinstance(value, (complex, np.complexfloating)):
        return f'{value.real:.17g}{value.imag:+.17g}j'
    return f'{float(value):.17g}'
