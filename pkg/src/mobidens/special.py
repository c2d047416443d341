"""Log-gamma and digamma for positive real arguments (vectorized)."""

import numpy as np

# Lanczos approximation, g = 7, n = 9.
_G = 7.0
_COEF = np.array([
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
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _lanczos_lgamma(x):
    # valid for x >= 0.5
    z = x - 1.0
    s = np.full_like(z, _COEF[0])
    for k in range(1, len(_COEF)):
        s = s + _COEF[k] / (z + k)
    t = z + _G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(s)


def lgamma(x):
    """log(Gamma(x)) for x > 0.

    Uses the reflection formula below 1/2 so the Lanczos sum is only ever
    evaluated where it is accurate.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("lgamma is only defined here for positive arguments")
    small = x < 0.5
    # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    xr = np.where(small, 1.0 - x, x)
    out = _lanczos_lgamma(xr)
    if np.any(small):
        out = np.where(small, np.log(np.pi / np.sin(np.pi * np.where(small, x, 0.5))) - out, out)
    return out if out.ndim else float(out)


# B_{2k} / (2k) for k = 1..7
_DIGAMMA_ASYM = np.array([
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
])


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    x = np.array(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("digamma is only defined here for positive arguments")
    acc = np.zeros_like(x)
    # recurrence psi(x) = psi(x + 1) - 1/x until the asymptotic series is accurate
    for _ in range(10):
        low = x < 10.0
        if not np.any(low):
            break
        acc = acc - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in _DIGAMMA_ASYM[::-1]:
        series = (series + c) * inv2
    out = acc + np.log(x) - 0.5 / x - series
    return out if out.ndim else float(out)
