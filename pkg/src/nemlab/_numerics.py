"""Shared quadrature and finite-difference helpers.

Cumulative integrals go through the antiderivative of a not-a-knot cubic
spline, which is globally fourth order on the smooth exponential-tail
integrands used throughout and gives one consistent quadrature everywhere.
"""

import numpy as np
from scipy.interpolate import CubicSpline


def cumulative_integral(z, y):
    """Cumulative integral of samples y over z, from the left end.

    Returns an array F with F[0] = 0 and F[i] = int_{z[0]}^{z[i]} y dz,
    evaluated through a cubic-spline antiderivative (O(h^4) globally).
    """
    F = CubicSpline(z, y).antiderivative()
    return F(z) - F(z[0])


def suffix_integral(z, y):
    """S[i] = int_{z[i]}^{z[-1]} y dz, accumulated from the top end.

    Accumulating from the far end keeps exponentially small remainders
    relatively accurate; the antiderivative-difference form F(end) - F(z)
    would cancel them against the O(1) total.
    """
    return cumulative_integral(-z[::-1], y[::-1])[::-1]


def integral(z, y):
    """Definite integral over the whole grid."""
    F = CubicSpline(z, y).antiderivative()
    return float(F(z[-1]) - F(z[0]))


def causal_increments(z, y):
    """Per-interval quadrature increments using only trailing values.

    Interval i (from z[i] to z[i+1]) integrates the cubic through the four
    nodes ending at its right edge (Adams-Moulton-corrector weights
    h/24 (1, -5, 19, 9)); the first two intervals fall back to trapezoid
    and the 3-node h/12 (-1, 8, 5) rule.  Strictly causal, 4th order away
    from the start; intended for Volterra marching where the integrand
    vanishes at the starting end.
    """
    h = z[1] - z[0]
    n = len(y)
    inc = np.empty(n - 1, dtype=float)
    inc[2:] = (h / 24.0) * (y[:-3] - 5.0 * y[1:-2] + 19.0 * y[2:-1] + 9.0 * y[3:])
    inc[0] = 0.5 * h * (y[0] + y[1])
    inc[1] = (h / 12.0) * (-y[0] + 8.0 * y[1] + 5.0 * y[2])
    return inc


def causal_cumulative(z, y):
    """Cumulative integral built from causal_increments (F[0] = 0)."""
    out = np.empty(len(y), dtype=float)
    out[0] = 0.0
    np.cumsum(causal_increments(z, y), out=out[1:])
    return out


def anticausal_suffix(z, y):
    """Suffix integral using only leading values (mirror of causal_cumulative)."""
    return causal_cumulative(-z[::-1], y[::-1])[::-1]


def deriv1(z, y):
    """First derivative, 4th-order centered stencil, one-sided at the ends."""
    h = z[1] - z[0]
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    # 4th-order one-sided stencils for the two nodes at each end
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    d[0] = np.dot(c, y[:5]) / h
    d[1] = np.dot(c, y[1:6]) / h
    d[-1] = -np.dot(c, y[-5:][::-1]) / h
    d[-2] = -np.dot(c, y[-6:-1][::-1]) / h
    return d


def deriv2(z, y):
    """Second derivative, 4th-order centered stencil (ends copied inward)."""
    h = z[1] - z[0]
    d = np.empty_like(y)
    d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / (12 * h * h)
    d[:2] = d[2]
    d[-2:] = d[-3]
    return d


def deriv2_h6(z, y):
    """Second derivative, 6th-order centered stencil (ends copied inward)."""
    h = z[1] - z[0]
    d = np.empty_like(y)
    d[3:-3] = (2.0 * y[:-6] - 27.0 * y[1:-5] + 270.0 * y[2:-4] - 490.0 * y[3:-3]
               + 270.0 * y[4:-2] - 27.0 * y[5:-1] + 2.0 * y[6:]) / (180.0 * h * h)
    d[:3] = d[3]
    d[-3:] = d[-4]
    return d


def fit_tail_rate(z, y, side, frac=0.1):
    """Log-linear fit of abs(y) on the last `frac` of the grid on one side.

    Returns the slope of log|y| vs z restricted to samples above the
    underflow floor, or None when fewer than 4 usable samples exist.
    `side` is "lo" (z -> z[0]) or "hi" (z -> z[-1]).
    """
    n = max(4, int(len(z) * frac))
    if side == "lo":
        zz, yy = z[:n], y[:n]
    else:
        zz, yy = z[-n:], y[-n:]
    m = np.abs(yy) > 1e-290
    if m.sum() < 4:
        return None
    sl = np.polyfit(zz[m], np.log(np.abs(yy[m])), 1)[0]
    return float(sl)


def loglog_slope(x, y):
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
