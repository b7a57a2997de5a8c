"""Monotone numeric tables on log-spaced grids.

A MonotoneTable stores a positive monotone function as (nodes, values) with
monotone piecewise-cubic interpolation in log-log coordinates and fitted
power-law extrapolation at each end.  Evaluations more than three decades
beyond the grid raise OutOfRange rather than extrapolating silently.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import OutOfRange

LN10 = math.log(10.0)
# extrapolation trust window, in decades beyond either grid end
TRUST_DECADES = 3.0


def logspace_nodes(lo: float, hi: float, per_decade: int) -> np.ndarray:
    n = max(2, int(round(math.log10(hi / lo) * per_decade))) + 1
    return np.geomspace(lo, hi, n)


def _end_slope(lx: np.ndarray, ly: np.ndarray, side: str) -> float:
    """OLS log-log slope over the outer half decade (at least 4 nodes)."""
    if side == "left":
        m = lx <= lx[0] + 0.5 * LN10
        sel = np.flatnonzero(m)
        if sel.size < 4:
            sel = np.arange(min(4, lx.size))
    else:
        m = lx >= lx[-1] - 0.5 * LN10
        sel = np.flatnonzero(m)
        if sel.size < 4:
            sel = np.arange(max(0, lx.size - 4), lx.size)
    x, y = lx[sel], ly[sel]
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return 0.0
    return float(np.dot(x, y - y.mean()) / denom)


class MonotoneTable:
    """Positive monotone function sampled on a strictly increasing grid."""

    def __init__(self, nodes, values, direction: str = "non_decreasing",
                 left_exp: float | None = None, right_exp: float | None = None,
                 left_exp_bounds=None, right_exp_bounds=None):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or nodes.size < 4 or values.shape != nodes.shape:
            raise ValueError("need matching 1-d arrays with at least 4 nodes")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValueError("values must be positive and finite")
        if direction not in ("non_decreasing", "non_increasing"):
            raise ValueError(f"bad direction {direction!r}")

        # tolerate roundoff wiggles, clamp them away, reject real violations
        if direction == "non_decreasing":
            viol = np.max(-np.diff(values) / values[:-1], initial=0.0)
            clamped = np.maximum.accumulate(values)
        else:
            viol = np.max(np.diff(values) / values[:-1], initial=0.0)
            clamped = np.minimum.accumulate(values)
        if viol > 1e-9:
            raise ValueError(f"values violate {direction} by {viol:.3g}")

        self.nodes = nodes
        self.values = clamped
        self.direction = direction
        self._lx = np.log(nodes)
        self._ly = np.log(self.values)
        self._interp = PchipInterpolator(self._lx, self._ly, extrapolate=False)

        le = _end_slope(self._lx, self._ly, "left") if left_exp is None else float(left_exp)
        re = _end_slope(self._lx, self._ly, "right") if right_exp is None else float(right_exp)
        if left_exp_bounds is not None:
            le = float(np.clip(le, *left_exp_bounds))
        if right_exp_bounds is not None:
            re = float(np.clip(re, *right_exp_bounds))
        self.left_exp = le
        self.right_exp = re

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def v_left(self) -> float:
        return float(self.values[0])

    @property
    def v_right(self) -> float:
        return float(self.values[-1])

    def value_range(self):
        lo = min(self.v_left, self.v_right)
        hi = max(self.v_left, self.v_right)
        return lo, hi

    def _eval_log(self, lr: np.ndarray) -> np.ndarray:
        out = np.asarray(self._interp(lr), dtype=float)
        lo, hi = self._lx[0], self._lx[-1]
        below = lr < lo
        above = lr > hi
        if np.any(below):
            out[below] = self._ly[0] + self.left_exp * (lr[below] - lo)
        if np.any(above):
            out[above] = self._ly[-1] + self.right_exp * (lr[above] - hi)
        return out

    def __call__(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r_arr <= 0) or not np.all(np.isfinite(r_arr)):
            raise OutOfRange("table argument must be positive and finite")
        lr = np.log(r_arr)
        trust = TRUST_DECADES * LN10
        if np.any(lr < self._lx[0] - trust) or np.any(lr > self._lx[-1] + trust):
            raise OutOfRange(
                f"argument beyond {TRUST_DECADES:g} decades of grid "
                f"[{self.r_min:g}, {self.r_max:g}]")
        out = np.exp(self._eval_log(lr))
        return float(out[0]) if np.isscalar(r) or np.ndim(r) == 0 else out


class LineClampedTable(MonotoneTable):
    """Monotone table clamped from above by the power line c * (s/s0)^k.

    Composites like the quadratic extension of phi are exact minima of a
    smooth table and a power line; clamping in evaluation keeps the slope
    break exact instead of letting the interpolant wiggle around it.
    """

    def __init__(self, nodes, values, clamp_c: float, clamp_s0: float, clamp_k: float,
                 **kwargs):
        self._clamp_log_c = math.log(clamp_c)
        self._clamp_log_s0 = math.log(clamp_s0)
        self._clamp_k = float(clamp_k)
        line = np.exp(self._clamp_log_c + self._clamp_k * (np.log(np.asarray(nodes, dtype=float)) - self._clamp_log_s0))
        super().__init__(nodes, np.minimum(np.asarray(values, dtype=float), line), **kwargs)

    def _eval_log(self, lr: np.ndarray) -> np.ndarray:
        base = super()._eval_log(lr)
        line = self._clamp_log_c + self._clamp_k * (lr - self._clamp_log_s0)
        return np.minimum(base, line)


class RunningSupTable(MonotoneTable):
    """Running supremum of ref(b)/b, floored in evaluation by ref(t)/t.

    The floor makes the defining inequality ref(t)/t <= table(t) exact at
    every argument, not only at nodes.  An optional power line through
    (clamp_s0, clamp_c) bounds the table from above, which is exact for the
    quadratically extended variants.
    """

    def __init__(self, nodes, values, ref: MonotoneTable,
                 clamp_c: float | None = None, clamp_s0: float = 1.0,
                 clamp_k: float = 1.0, **kwargs):
        self._ref = ref
        self._clamp = None
        if clamp_c is not None:
            line = np.exp(math.log(clamp_c)
                          + clamp_k * (np.log(np.asarray(nodes, dtype=float)) - math.log(clamp_s0)))
            values = np.minimum(np.asarray(values, dtype=float), line)
            self._clamp = (math.log(clamp_c), math.log(clamp_s0), float(clamp_k))
        super().__init__(nodes, values, **kwargs)

    def _eval_log(self, lr: np.ndarray) -> np.ndarray:
        out = MonotoneTable._eval_log(self, lr)
        if self._clamp is not None:
            lc, ls0, k = self._clamp
            out = np.minimum(out, lc + k * (lr - ls0))
        floor = self._ref._eval_log(lr) - lr
        return np.maximum(out, floor)


def _bisect_increasing(table: MonotoneTable, lt: np.ndarray, llo: np.ndarray,
                       lhi: np.ndarray, iters: int = 48) -> np.ndarray:
    """Boundary of {f > t} in log coordinates; lands on plateau right edges."""
    for _ in range(iters):
        mid = 0.5 * (llo + lhi)
        gt = table._eval_log(mid) > lt
        lhi = np.where(gt, mid, lhi)
        llo = np.where(gt, llo, mid)
    # one secant refinement inside the final bracket
    flo = table._eval_log(llo)
    fhi = table._eval_log(lhi)
    df = fhi - flo
    sec = np.where(df > 0, llo + (lt - flo) / np.where(df > 0, df, 1.0) * (lhi - llo),
                   lhi)
    return np.clip(sec, llo, lhi)


def gen_inverse(table: MonotoneTable, t):
    """Generalized inverse inf{s >= 0 : f(s) > t} of a non-decreasing table.

    On plateaus at level t this returns the right plateau edge.  Values below
    or above the tabulated range use the end power-law extrapolations; beyond
    the trust window this raises OutOfRange.
    """
    if table.direction != "non_decreasing":
        raise ValueError("gen_inverse needs a non-decreasing table")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise OutOfRange("inverse argument must be finite and >= 0")
    out = np.empty_like(t_arr)

    zero = t_arr == 0.0
    out[zero] = 0.0

    below = (~zero) & (t_arr < table.v_left)
    if np.any(below):
        if table.left_exp <= 0:
            # flat (or junk) left end: f(0+) = v_left > t, so the inf is 0
            out[below] = 0.0
        else:
            s = table.r_min * (t_arr[below] / table.v_left) ** (1.0 / table.left_exp)
            if np.any(s < table.r_min * 10.0 ** (-TRUST_DECADES)):
                raise OutOfRange("inverse argument below extrapolation trust")
            out[below] = s

    above = t_arr >= table.v_right
    if np.any(above):
        if table.right_exp <= 0:
            raise OutOfRange("table never exceeds its right plateau level")
        s = table.r_max * (t_arr[above] / table.v_right) ** (1.0 / table.right_exp)
        if np.any(s > table.r_max * 10.0 ** TRUST_DECADES):
            raise OutOfRange("inverse argument above extrapolation trust")
        out[above] = s

    inside = (~zero) & (~below) & (~above)
    if np.any(inside):
        ti = t_arr[inside]
        j = np.searchsorted(table.values, ti, side="right")
        # v_left <= t < v_right here, so 1 <= j <= n-1
        llo = table._lx[j - 1]
        lhi = table._lx[j]
        out[inside] = np.exp(_bisect_increasing(table, np.log(ti), llo.copy(), lhi.copy()))

    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


def solve_decreasing(table: MonotoneTable, v):
    """Solve f(s) = v for a non-increasing table (used for jump-tail lookups)."""
    if table.direction != "non_increasing":
        raise ValueError("solve_decreasing needs a non-increasing table")
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    if np.any(v_arr <= 0) or not np.all(np.isfinite(v_arr)):
        raise OutOfRange("value must be positive and finite")
    out = np.empty_like(v_arr)

    hi_v = table.v_left    # largest value, at the left end
    lo_v = table.v_right
    above = v_arr >= hi_v
    if np.any(above):
        if table.left_exp >= 0:
            raise OutOfRange("table never exceeds its left value")
        s = table.r_min * (v_arr[above] / hi_v) ** (1.0 / table.left_exp)
        if np.any(s < table.r_min * 10.0 ** (-TRUST_DECADES)):
            raise OutOfRange("value above extrapolation trust")
        out[above] = s
    below = v_arr <= lo_v
    if np.any(below):
        if table.right_exp >= 0:
            raise OutOfRange("table never drops below its right value")
        s = table.r_max * (v_arr[below] / lo_v) ** (1.0 / table.right_exp)
        if np.any(s > table.r_max * 10.0 ** TRUST_DECADES):
            raise OutOfRange("value below extrapolation trust")
        out[below] = s

    inside = (~above) & (~below)
    if np.any(inside):
        vi = v_arr[inside]
        rev = table.values[::-1]
        j = table.values.size - np.searchsorted(rev, vi, side="left")
        j = np.clip(j, 1, table.values.size - 1)
        llo = table._lx[j - 1].copy()
        lhi = table._lx[j].copy()
        lv = np.log(vi)
        for _ in range(48):
            mid = 0.5 * (llo + lhi)
            lt_pred = table._eval_log(mid) > lv
            llo = np.where(lt_pred, mid, llo)
            lhi = np.where(lt_pred, lhi, mid)
        out[inside] = np.exp(0.5 * (llo + lhi))

    return float(out[0]) if np.isscalar(v) or np.ndim(v) == 0 else out
