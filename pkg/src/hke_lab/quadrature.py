"""Quadrature in logarithmic coordinates for radial kernel integrals.

Every integral in this library has the shape ``int s^k / psi(s) ds`` with
``psi`` positive and power-like (up to slowly varying log factors) at the ends
of its domain.  Substituting ``s = exp(u)`` turns endpoint singularities into
smooth exponential tails in ``u``.  Those tails are integrated numerically
over a wide window and closed with a fitted local model

    g(u) ~ exp(c + p*u) * |u|^q

whose remaining mass has a closed form or a fast one-dimensional quadrature.
The fitted model is exact for pure powers and for power-times-log kernels,
which is what makes the endpoint completions reliable at 1e-8 relative.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import QuadratureFailure

LN10 = math.log(10.0)

# classification tolerances for the fitted exponents
_P_TOL = 1e-8
_Q_TOL = 1e-6
_FIT_RESID_TOL = 0.02
# ln(smallest positive double) with margin; fit samples must stay above it
_LN_TINY = -690.0


@lru_cache(maxsize=None)
def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _split_edges(u_lo: float, u_hi: float, breaks, max_width: float):
    """Block edges covering [u_lo, u_hi], split at interior breakpoints."""
    pts = [u_lo, u_hi]
    for b in breaks:
        if u_lo < b < u_hi:
            pts.append(b)
    pts = sorted(set(pts))
    edges = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / max_width)))
        edges.extend(a + (b - a) * (i + 1) / n for i in range(n))
    return np.asarray(edges)


def block_quad(g, u_lo: float, u_hi: float, breaks=(), order: int = 16,
               max_width: float = 0.5) -> float:
    """Integral of a vectorized g(u) over [u_lo, u_hi] by blocked Gauss-Legendre."""
    if u_hi <= u_lo:
        return 0.0
    edges = _split_edges(u_lo, u_hi, breaks, max_width)
    x, w = _gl_nodes(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(g(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return float(np.sum(half * (vals @ w)))


def segment_integrals(g, u_edges: np.ndarray, breaks=(), order: int = 8) -> np.ndarray:
    """Per-interval integrals of g(u) between consecutive edges.

    Intervals containing a breakpoint are integrated with an interior split so
    kinked integrands keep full Gauss accuracy.
    """
    u_edges = np.asarray(u_edges, dtype=float)
    m = u_edges.size - 1
    out = np.empty(m)
    inner = [b for b in breaks if u_edges[0] < b < u_edges[-1]]
    dirty = set()
    for b in inner:
        i = int(np.searchsorted(u_edges, b) - 1)
        if 0 <= i < m:
            dirty.add(i)

    x, w = _gl_nodes(order)
    mid = 0.5 * (u_edges[:-1] + u_edges[1:])
    half = 0.5 * (u_edges[1:] - u_edges[:-1])
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(g(nodes.ravel()), dtype=float).reshape(nodes.shape)
    out[:] = half * (vals @ w)
    for i in dirty:
        out[i] = block_quad(g, float(u_edges[i]), float(u_edges[i + 1]),
                            breaks=inner, order=16, max_width=0.25)
    return out


def fit_power_log(u: np.ndarray, g_vals: np.ndarray):
    """Least-squares fit of ln g = c + p*u + q*ln|u|; returns (c, p, q, resid).

    Only meaningful when |u| is bounded away from 0 on the window.
    """
    lg = np.log(g_vals)
    A = np.column_stack([np.ones_like(u), u, np.log(np.abs(u))])
    coef, *_ = np.linalg.lstsq(A, lg, rcond=None)
    resid = float(np.max(np.abs(A @ coef - lg)))
    c, p, q = (float(v) for v in coef)
    return c, p, q, resid


def _model_tail_below(c: float, p: float, q: float, u_deep: float) -> float:
    """Closed-out integral of the fitted model over (-inf, u_deep], u_deep < -1."""
    if p < -_P_TOL:
        return math.inf
    if abs(p) <= _P_TOL:
        if q < -1.0 - _Q_TOL:
            return math.exp(c) * (-u_deep) ** (q + 1.0) / (-q - 1.0)
        return math.inf
    w0 = -u_deep
    val, _ = quad(lambda w: math.exp(-p * w + q * math.log(w)), w0, math.inf,
                  epsabs=0.0, epsrel=1e-10, limit=200)
    return math.exp(c) * val


def _model_tail_above(c: float, p: float, q: float, u_deep: float) -> float:
    """Closed-out integral of the fitted model over [u_deep, inf), u_deep > 1."""
    if p > _P_TOL:
        return math.inf
    if abs(p) <= _P_TOL:
        if q < -1.0 - _Q_TOL:
            return math.exp(c) * u_deep ** (q + 1.0) / (-q - 1.0)
        return math.inf
    val, _ = quad(lambda w: math.exp(p * w + q * math.log(w)), u_deep, math.inf,
                  epsabs=0.0, epsrel=1e-10, limit=200)
    return math.exp(c) * val


def _fit_window(g, lo: float, hi: float, n: int = 161):
    u = np.linspace(lo, hi, n)
    vals = np.asarray(g(u), dtype=float)
    if np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
        raise QuadratureFailure("integrand not positive/finite on fit window")
    return fit_power_log(u, vals)


def tail_below(g, u0: float, breaks=(), deep_decades: float = 60.0,
               fit_decades: float = 20.0) -> float:
    """Integral of g(u) du over (-inf, u0] for a power-log integrand.

    Returns math.inf when the fitted model says the tail diverges.  Raises
    QuadratureFailure when the model does not describe the integrand.
    """
    anchor = min(u0, math.log(0.1))
    low_breaks = [b for b in breaks if b < anchor - 0.25]
    if low_breaks:
        anchor = min(anchor, min(low_breaks) - 0.5)
    direct = block_quad(g, anchor, u0, breaks=breaks) if u0 > anchor else 0.0

    # quick probe to catch divergence before touching very small arguments
    c, p, q, resid = _fit_window(g, anchor - 10.0 * LN10, anchor - 2.0)
    if resid > _FIT_RESID_TOL:
        raise QuadratureFailure("origin tail is not power-log like")
    if p < -_P_TOL or (abs(p) <= _P_TOL and q >= -1.0 - _Q_TOL):
        return math.inf

    # keep the deep window above the underflow floor of the integrand
    deep = deep_decades * LN10
    if p > 0:
        ln_g_deep = c + p * (anchor - deep)
        if ln_g_deep < _LN_TINY:
            deep = (c - _LN_TINY) / p - (-anchor)
            deep = max(deep, 12.0 * LN10)
    u_deep = anchor - deep
    numeric = block_quad(g, u_deep, anchor, breaks=breaks)
    c, p, q, resid = _fit_window(g, u_deep, u_deep + min(fit_decades * LN10, deep / 2))
    if resid > _FIT_RESID_TOL:
        raise QuadratureFailure("origin tail is not power-log like")
    tail = _model_tail_below(c, p, q, u_deep)
    if math.isinf(tail):
        return math.inf
    return direct + numeric + tail


def tail_above(g, u0: float, breaks=(), deep_decades: float = 60.0,
               fit_decades: float = 20.0) -> float:
    """Integral of g(u) du over [u0, inf) for a power-log integrand."""
    anchor = max(u0, math.log(10.0))
    hi_breaks = [b for b in breaks if b > anchor + 0.25]
    if hi_breaks:
        anchor = max(anchor, max(hi_breaks) + 0.5)
    direct = block_quad(g, u0, anchor, breaks=breaks) if u0 < anchor else 0.0

    c, p, q, resid = _fit_window(g, anchor + 2.0, anchor + 10.0 * LN10)
    if resid > _FIT_RESID_TOL:
        raise QuadratureFailure("infinity tail is not power-log like")
    if p > _P_TOL or (abs(p) <= _P_TOL and q >= -1.0 - _Q_TOL):
        return math.inf

    deep = deep_decades * LN10
    if p < 0:
        ln_g_deep = c + p * (anchor + deep)
        if ln_g_deep < _LN_TINY:
            deep = (_LN_TINY - c) / p - anchor
            deep = max(deep, 12.0 * LN10)
    u_deep = anchor + deep
    numeric = block_quad(g, anchor, u_deep, breaks=breaks)
    c, p, q, resid = _fit_window(g, u_deep - min(fit_decades * LN10, deep / 2), u_deep)
    if resid > _FIT_RESID_TOL:
        raise QuadratureFailure("infinity tail is not power-log like")
    tail = _model_tail_above(c, p, q, u_deep)
    if math.isinf(tail):
        return math.inf
    return direct + numeric + tail
