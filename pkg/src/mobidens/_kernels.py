"""Fused loops for the training hot path.

These compute what densities._mobius_terms and
densities.gaussian_logpdf_partials compute, without the large temporaries.
Transcendentals go through numpy (SIMD); the loops here hold only
arithmetic. Summation order is fixed, so results are reproducible.
"""

import math

import numba
import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


@numba.njit(cache=True)
def _mobius_brackets(a, cmu, smu, x, y, s):
    U, K = a.shape
    P = x.shape[0]
    b1 = np.empty((U, K, P))
    b2 = np.empty((U, K, P))
    for u in range(U):
        for k in range(K):
            ak = a[u, k]
            hx = ak * cmu[u, k]
            hy = ak * smu[u, k]
            opa2 = 1.0 + ak * ak
            for p in range(P):
                dx = x[p] - hx
                dy = y[p] - hy
                b1[u, k, p] = dx * dx + dy * dy
                b2[u, k, p] = (1.0 + s[p]) * opa2 - 4.0 * (x[p] * hx + y[p] * hy)
    return b1, b2


@numba.njit(cache=True)
def _mobius_exponent(base, gamma, beta, log1ms, l2, l3):
    U, K, P = l2.shape
    out = np.empty((U, K, P))
    for u in range(U):
        for k in range(K):
            c0 = base[u, k]
            gm1 = gamma[u, k] - 1.0
            bm1 = beta[u, k] - 1.0
            gpb = gamma[u, k] + beta[u, k]
            for p in range(P):
                out[u, k, p] = c0 + gm1 * log1ms[p] + bm1 * l2[u, k, p] - gpb * l3[u, k, p]
    return out


@numba.njit(cache=True)
def _weighted_sum(weights, comp):
    U, K, P = comp.shape
    out = np.zeros((U, P))
    for u in range(U):
        for k in range(K):
            w = weights[u, k]
            for p in range(P):
                out[u, p] += w * comp[u, k, p]
    return out


def mobius_forward(log_c, gamma, beta, a, mu, weights, x, y, s, log1ms, floor):
    """Mixture density at disk points plus intermediates for the reverse pass."""
    cmu, smu = np.cos(mu), np.sin(mu)
    b1, b2 = _mobius_brackets(a, cmu, smu, x, y, s)
    l2 = np.log(np.maximum(b1, floor))
    l3 = np.log(np.maximum(b2, floor))
    base = log_c + (gamma + 1.0) * np.log(np.maximum(1.0 - a * a, floor))
    comp = np.exp(_mobius_exponent(base, gamma, beta, log1ms, l2, l3))
    return _weighted_sum(weights, comp), comp, (b1, b2, l2, l3)


@numba.njit(cache=True)
def _mobius_backward(grad_f, dlogc_dg, dlogc_db, gamma, beta, a, cmu, smu, weights, x, y, s, log1ms,
                     comp, b1, b2, l2, l3, floor):
    U, K = gamma.shape
    P = x.shape[0]
    out = np.zeros((5, U, K))
    for u in range(U):
        for k in range(K):
            g = gamma[u, k]
            b = beta[u, k]
            ak = a[u, k]
            cm = cmu[u, k]
            sm = smu[u, k]
            oma2 = 1.0 - ak * ak
            l0 = math.log(max(oma2, floor))
            r0 = 1.0 / oma2 if oma2 >= floor else 0.0
            w = weights[u, k]
            bm1 = b - 1.0
            gpb = g + b
            sw = 0.0
            st = 0.0
            sg = 0.0
            sb = 0.0
            sa = 0.0
            smu_ = 0.0
            for p in range(P):
                c = comp[u, k, p]
                gc = grad_f[u, p] * c
                sw += gc
                dl = w * gc
                st += dl
                xp = x[p]
                yp = y[p]
                uu = xp * cm + yp * sm
                vv = yp * cm - xp * sm
                v1 = b1[u, k, p]
                v2 = b2[u, k, p]
                r2 = 1.0 / v1 if v1 >= floor else 0.0
                r3 = 1.0 / v2 if v2 >= floor else 0.0
                lb2 = l3[u, k, p]
                sg += dl * (log1ms[p] - lb2)
                sb += dl * (l2[u, k, p] - lb2)
                sa += dl * (bm1 * (2.0 * ak - 2.0 * uu) * r2 - gpb * (2.0 * ak * (1.0 + s[p]) - 4.0 * uu) * r3)
                smu_ += dl * ak * vv * (4.0 * gpb * r3 - 2.0 * bm1 * r2)
            out[0, u, k] = sw
            out[1, u, k] = sg + (dlogc_dg[u, k] + l0) * st
            out[2, u, k] = sb + dlogc_db[u, k] * st
            out[3, u, k] = sa - (g + 1.0) * 2.0 * ak * r0 * st
            out[4, u, k] = smu_
    return out


def mobius_backward(grad_f, dlogc_dg, dlogc_db, gamma, beta, a, mu, weights, x, y, s, log1ms, comp, cache, floor):
    """dL/d(weights, gamma, beta, a, mu) given dL/d(mixture density)."""
    b1, b2, l2, l3 = cache
    out = _mobius_backward(grad_f, dlogc_dg, dlogc_db, gamma, beta, a, np.cos(mu), np.sin(mu), weights,
                           x, y, s, log1ms, comp, b1, b2, l2, l3, floor)
    return tuple(out)


@numba.njit(cache=True)
def _gaussian_exponent(mx, my, sx, sy, rho, x, y):
    U, K = mx.shape
    P = x.shape[0]
    out = np.empty((U, K, P))
    for u in range(U):
        for k in range(K):
            r = rho[u, k]
            omr2 = 1.0 - r * r
            base = -_LOG_2PI - math.log(sx[u, k]) - math.log(sy[u, k]) - 0.5 * math.log(omr2)
            isx = 1.0 / sx[u, k]
            isy = 1.0 / sy[u, k]
            h = 0.5 / omr2
            m1 = mx[u, k]
            m2 = my[u, k]
            for p in range(P):
                dx = (x[p] - m1) * isx
                dy = (y[p] - m2) * isy
                out[u, k, p] = base - h * (dx * dx - 2.0 * r * dx * dy + dy * dy)
    return out


def gaussian_forward(mx, my, sx, sy, rho, weights, x, y):
    comp = np.exp(_gaussian_exponent(mx, my, sx, sy, rho, x, y))
    return _weighted_sum(weights, comp), comp


@numba.njit(cache=True)
def gaussian_backward(grad_f, mx, my, sx, sy, rho, weights, x, y, comp):
    U, K = mx.shape
    P = x.shape[0]
    out = np.zeros((6, U, K))
    for u in range(U):
        for k in range(K):
            r = rho[u, k]
            omr2 = 1.0 - r * r
            w = weights[u, k]
            isx = 1.0 / sx[u, k]
            isy = 1.0 / sy[u, k]
            m1 = mx[u, k]
            m2 = my[u, k]
            sw = 0.0
            st = 0.0
            a_mx = 0.0
            a_my = 0.0
            a_sx = 0.0
            a_sy = 0.0
            a_r = 0.0
            for p in range(P):
                gc = grad_f[u, p] * comp[u, k, p]
                sw += gc
                dl = w * gc
                st += dl
                dx = (x[p] - m1) * isx
                dy = (y[p] - m2) * isy
                qx = (dx - r * dy) / omr2  # half of dq/d(dx)
                qy = (dy - r * dx) / omr2
                a_mx += dl * qx
                a_my += dl * qy
                a_sx += dl * qx * dx
                a_sy += dl * qy * dy
                a_r += dl * (dx * dy - r * (dx * dx - 2.0 * r * dx * dy + dy * dy) / omr2)
            out[0, u, k] = sw
            out[1, u, k] = a_mx * isx
            out[2, u, k] = a_my * isy
            out[3, u, k] = (a_sx - st) * isx
            out[4, u, k] = (a_sy - st) * isy
            out[5, u, k] = r / omr2 * st + a_r / omr2
    return out
