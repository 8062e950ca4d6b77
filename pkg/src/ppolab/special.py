"""Log-gamma and digamma for positive real arguments (scalar or array)."""

import math

import numpy as np

from .rng import InvalidParameterError

_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


_COEF_LIST = [float(c) for c in _LANCZOS_COEF]


def _scalar(x, name):
    """Return x as a float when it is a plain positive scalar, else None."""
    if isinstance(x, (float, int, np.floating, np.integer)) and not isinstance(x, bool):
        x = float(x)
        if not x > 0:
            raise InvalidParameterError(f"{name} requires x > 0")
        return x
    return None


def _lanczos_scalar(x):
    z = x - 1.0
    acc = _COEF_LIST[0]
    for i in range(1, 9):
        acc += _COEF_LIST[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _check_positive(x, name):
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise InvalidParameterError(f"{name} requires x > 0")
    return x


def log_gamma(x):
    """Natural log of the Gamma function via the Lanczos approximation (g=7, n=9).

    Arguments below 0.5 go through the reflection formula, where the Lanczos
    series loses accuracy.
    """
    xs = _scalar(x, "log_gamma")
    if xs is not None:
        if xs < 0.5:
            return math.log(math.pi) - math.log(math.sin(math.pi * xs)) - _lanczos_scalar(1.0 - xs)
        return _lanczos_scalar(xs)
    x = _check_positive(x, "log_gamma")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    small = x < 0.5
    if np.any(small):
        xs = x[small]
        # Gamma(x) Gamma(1-x) = pi / sin(pi x), with 1-x in (0.5, 1)
        out[small] = math.log(math.pi) - np.log(np.sin(np.pi * xs)) - _lanczos(1.0 - xs)
    big = ~small
    if np.any(big):
        out[big] = _lanczos(x[big])
    return float(out[0]) if scalar else out


def _lanczos(x):
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, 9):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def digamma(x):
    """Derivative of log_gamma.

    Shifts the argument to x >= 6 with psi(x) = psi(x+1) - 1/x, then sums the
    asymptotic series in 1/x^2.
    """
    xs = _scalar(x, "digamma")
    if xs is not None:
        shift = 0.0
        while xs < 6.0:
            shift -= 1.0 / xs
            xs += 1.0
        inv2 = 1.0 / (xs * xs)
        series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
            1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))))
        return math.log(xs) - 0.5 / xs - series + shift
    x = _check_positive(x, "digamma")
    scalar = x.ndim == 0
    x = np.array(x, dtype=np.float64, ndmin=1)
    shift = np.zeros_like(x)
    low = x < 6.0
    while np.any(low):
        shift[low] -= 1.0 / x[low]
        x[low] += 1.0
        low = x < 6.0
    inv2 = 1.0 / (x * x)
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
        1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))))
    out = np.log(x) - 0.5 / x - series + shift
    return float(out[0]) if scalar else out


def log_beta_fn(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def trigamma(x):
    """Second derivative of log_gamma (recurrence shift to x >= 6, then asymptotic series)."""
    x = _check_positive(x, "trigamma")
    scalar = x.ndim == 0
    x = np.array(x, dtype=np.float64, ndmin=1)
    shift = np.zeros_like(x)
    low = x < 6.0
    while np.any(low):
        shift[low] += 1.0 / (x[low] * x[low])
        x[low] += 1.0
        low = x < 6.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv + 0.5 * inv2 + inv * inv2 * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (
        1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * 691.0 / 2730)))))
    out = series + shift
    return float(out[0]) if scalar else out
