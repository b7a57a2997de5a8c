"""Derived scale functions: phi, its inverses, and the running-sup scales.

phi(r) = r^2 / (2 A(r)) with A(r) = int_0^r s/psi(s) ds is the space-time
scale of the process; K(s) = sup_{b <= s} phi(b)/b and its large-scale
variant K_inf set the exponential decay rate of the sharp envelopes.  All of
them are materialized as monotone log-grid tables plus generalized-inverse
tables, and a calculus checker replays the inequalities that relate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrabilityViolation, LowerIndexTooSmall
from .quadrature import segment_integrals, tail_below
from .scale import ScaleFunction, ScalingCertificate, estimate_scaling
from .tables import LineClampedTable, MonotoneTable, RunningSupTable, gen_inverse, logspace_nodes

LN10 = math.log(10.0)

DEFAULT_GRID = (1e-8, 1e8)
DEFAULT_PER_DECADE = 64
# margin above 1 that a measured lower index must clear before the
# running-sup scales are considered available
_DELTA_MARGIN = 1e-6


def build_phi(psi: ScaleFunction, grid=DEFAULT_GRID, per_decade: int = DEFAULT_PER_DECADE
              ) -> MonotoneTable:
    """Tabulate phi(r) = r^2 / (2 int_0^r s/psi(s) ds) on a log grid.

    The origin integral is done once with the fitted tail completion; interior
    increments accumulate per grid interval so the total cost is linear in
    grid size.  End extrapolation exponents are clamped to the measured
    scaling window [beta_lower, min(beta_upper, 2)].
    """
    nodes = logspace_nodes(grid[0], grid[1], per_decade)
    u = np.log(nodes)

    def g(uu):
        return np.exp(2.0 * uu) / psi.fn(np.exp(uu))

    breaks = psi.log_breaks()
    a0 = tail_below(g, float(u[0]), breaks=breaks)
    if math.isinf(a0):
        raise IntegrabilityViolation("int_0^r s/psi diverges; phi undefined")
    incr = segment_integrals(g, u, breaks=breaks)
    A = a0 + np.concatenate([[0.0], np.cumsum(incr)])
    vals = nodes ** 2 / (2.0 * A)

    dl = np.diff(np.log(vals)) / np.diff(u)
    lo = max(float(np.min(dl)), 0.0)
    hi = min(max(float(np.max(dl)), lo), 2.0)
    return MonotoneTable(nodes, vals, left_exp_bounds=(lo, hi), right_exp_bounds=(lo, hi))


def inverse_table(tab: MonotoneTable) -> MonotoneTable:
    """Generalized-inverse table of a non-decreasing table on its value range.

    Axes are swapped node-for-node, so the inverse is exact at every forward
    node and any slope kinks stay on nodes.  Plateau runs keep only their
    right edge, matching the strict-inequality infimum convention.
    """
    vals, nodes = tab.values, tab.nodes
    keep = np.empty(vals.size, dtype=bool)
    keep[:-1] = vals[:-1] < vals[1:]
    keep[-1] = True
    v, s = vals[keep], nodes[keep]
    if v.size < 4:
        raise ValueError("table too flat to invert")
    return MonotoneTable(v, s)


def build_K(phi: MonotoneTable, delta_cert: ScalingCertificate) -> MonotoneTable:
    """Running supremum of phi(b)/b over the grid (the near-zero decay scale)."""
    if delta_cert.beta_lower <= 1.0 + _DELTA_MARGIN:
        raise LowerIndexTooSmall(
            f"phi lower index {delta_cert.beta_lower:.4f} <= 1; K(0+) would not vanish")
    if delta_cert.r_lo > phi.r_min * (1.0 + 1e-9):
        raise LowerIndexTooSmall("delta certificate does not reach the grid's left end")
    g = phi.values / phi.nodes
    head = g[: min(g.size, 8)]
    if head[0] == np.max(head) and head[0] > head[-1]:
        raise LowerIndexTooSmall("phi(b)/b still increasing toward 0 at the left grid edge")
    return RunningSupTable(phi.nodes, np.maximum.accumulate(g), ref=phi,
                           left_exp_bounds=(0.0, 1.0), right_exp_bounds=(0.0, 1.0))


def _refine_at(nodes: np.ndarray, a: float) -> np.ndarray:
    """Insert nodes tightly around a so a slope break there stays on nodes."""
    extra = a * (1.0 + np.array([-1e-4, -1e-6, 0.0, 1e-6, 1e-4]))
    extra = extra[(extra > nodes[0]) & (extra < nodes[-1])]
    return np.union1d(nodes, extra)


def _quad_extension(phi: MonotoneTable, a: float) -> LineClampedTable:
    phi_a = phi(a)
    nodes = _refine_at(phi.nodes, a)
    return LineClampedTable(nodes, phi(nodes), clamp_c=phi_a, clamp_s0=a, clamp_k=2.0)


def build_K_inf(phi: MonotoneTable, a: float, delta_cert: ScalingCertificate):
    """Quadratic extension phi_tilde_a and the running sup of phi_tilde_a(b)/b.

    phi_tilde_a equals min(phi, phi(a) (s/a)^2) exactly, and its slope sup is
    capped by the line phi(a) s / a^2, so both tables are built line-clamped
    to keep the slope break at a exact.
    """
    if delta_cert.beta_lower <= 1.0 + _DELTA_MARGIN:
        raise LowerIndexTooSmall(
            f"phi lower index {delta_cert.beta_lower:.4f} <= 1 above a={a:g}")
    phi_a = phi(a)
    phi_tilde = _quad_extension(phi, a)
    g = phi_tilde.values / phi_tilde.nodes
    if g[-1] < np.max(g) * (1.0 - 1e-9) and float(np.argmax(g)) <= g.size / 2:
        raise LowerIndexTooSmall("phi_tilde(b)/b not eventually increasing above a")
    k_inf = RunningSupTable(phi_tilde.nodes, np.maximum.accumulate(g), ref=phi_tilde,
                            clamp_c=phi_a / a, clamp_s0=a, clamp_k=1.0,
                            left_exp_bounds=(0.0, 1.0), right_exp_bounds=(0.0, 1.0))
    return phi_tilde, k_inf


@dataclass
class DerivedScales:
    """Immutable bundle of psi and every derived table the envelopes need."""
    psi: ScaleFunction
    d: int
    a: float
    a_zero: float
    psi_table: MonotoneTable
    psi_inv: MonotoneTable
    psi_cert: ScalingCertificate
    phi: MonotoneTable
    phi_inv: MonotoneTable
    delta_cert: ScalingCertificate | None
    delta_cert_inf: ScalingCertificate | None
    phi_tilde: MonotoneTable | None
    K: MonotoneTable | None = None
    K_inv: MonotoneTable | None = None
    K_inf: MonotoneTable | None = None
    K_inf_inv: MonotoneTable | None = None

    @property
    def grid(self):
        return self.phi.r_min, self.phi.r_max

    # precise inverse lookups; the *_inv tables are exports, but the running
    # sup scales can plateau and only bisection resolves a plateau jump
    def phi_inv_at(self, t):
        return self.phi_inv(t)

    def K_inv_at(self, x):
        if self.K is None:
            raise LowerIndexTooSmall("K was not built for this kernel")
        return gen_inverse(self.K, x)

    def K_inf_inv_at(self, x):
        if self.K_inf is None:
            raise LowerIndexTooSmall("K_inf was not built for this kernel")
        return gen_inverse(self.K_inf, x)

    def export_csv(self, path):
        cols = "r,psi,phi,phi_inv_at_phi(r),K,K_inf"
        r = self.phi.nodes
        phi_v = self.phi.values
        rt = self.phi_inv(phi_v)
        k = self.K(r) if self.K is not None else np.full_like(r, np.nan)
        ki = self.K_inf(r) if self.K_inf is not None else np.full_like(r, np.nan)
        with open(path, "w", newline="") as fh:
            fh.write(cols + "\n")
            for row in zip(r, self.psi_table.values, phi_v, rt, k, ki):
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def _adaptive_a_zero(phi: MonotoneTable, cap: float) -> float:
    """Largest grid point below which the local phi slope stays above 1."""
    sl = np.diff(np.log(phi.values)) / np.diff(np.log(phi.nodes))
    bad = np.flatnonzero(sl <= 1.0 + 1e-3)
    a0 = phi.r_max if bad.size == 0 else float(phi.nodes[bad[0]])
    return min(a0, cap)


def build_derived_scales(psi: ScaleFunction, d: int = 1, a: float = 1.0,
                         grid=DEFAULT_GRID, per_decade: int = DEFAULT_PER_DECADE
                         ) -> DerivedScales:
    """Build phi, the inverse tables, the delta certificates and K / K_inf.

    K is present when phi has lower scaling index > 1 near zero (on an
    adaptively chosen window [grid_lo, a_zero]); K_inf when the index above
    the threshold a exceeds 1.  Certificates come from the phi table itself,
    never from psi.
    """
    phi = build_phi(psi, grid=grid, per_decade=per_decade)
    nodes = phi.nodes
    psi_vals = psi(nodes)
    psi_table = MonotoneTable(nodes, psi_vals)
    psi_inv = inverse_table(psi_table)
    psi_cert = estimate_scaling(psi, grid, mode="global")

    phi_inv = inverse_table(phi)

    ds = DerivedScales(psi=psi, d=d, a=a, a_zero=grid[0], psi_table=psi_table,
                       psi_inv=psi_inv, psi_cert=psi_cert, phi=phi, phi_inv=phi_inv,
                       delta_cert=None, delta_cert_inf=None, phi_tilde=None)

    a_zero = _adaptive_a_zero(phi, cap=phi.r_max)
    ds.a_zero = a_zero
    if a_zero >= grid[0] * 100.0:
        cert = estimate_scaling(phi, (grid[0], a_zero), mode="near_zero")
        ds.delta_cert = cert
        if cert.beta_lower > 1.0 + _DELTA_MARGIN:
            ds.K = build_K(phi, cert)
            ds.K_inv = inverse_table(ds.K)

    if a >= grid[0] * 100.0 and a <= grid[1] / 100.0:
        cert_inf = estimate_scaling(phi, (a, grid[1]), mode="near_infty")
        ds.delta_cert_inf = cert_inf
        if cert_inf.beta_lower > 1.0 + _DELTA_MARGIN:
            ds.phi_tilde, ds.K_inf = build_K_inf(phi, a, cert_inf)
            ds.K_inf_inv = inverse_table(ds.K_inf)
    if ds.phi_tilde is None:
        ds.phi_tilde = _quad_extension(phi, a)
    return ds


# ---------------------------------------------------------------------------
# comparability of psi and phi


@dataclass(frozen=True)
class ComparabilityReport:
    sup_ratio: float
    inf_ratio: float
    upper_index: float
    comparable: bool
    end: str               # end of the range where the ratio infimum sits
    ratio_end_slope: float
    phi_end_slope: float


def _ols_slope(lx, ly):
    x = lx - lx.mean()
    d = float(np.dot(x, x))
    return float(np.dot(x, ly - ly.mean()) / d) if d > 0 else 0.0


def comparability_report(ds: DerivedScales, r_range) -> ComparabilityReport:
    """Is phi comparable to psi on the range, or does phi/psi trend to zero?

    Comparability fails exactly when psi's upper scaling index reaches 2, in
    which case phi's local log-log slope approaches 2 at the relevant end.
    On a finite range the decisive signal is the trend of phi/psi at the end
    where its infimum is attained.
    """
    lo, hi = float(r_range[0]), float(r_range[1])
    m = (ds.phi.nodes >= lo) & (ds.phi.nodes <= hi)
    nodes = ds.phi.nodes[m]
    ratio = ds.phi.values[m] / ds.psi_table.values[m]
    sup_ratio = float(np.max(ratio))
    inf_ratio = float(np.min(ratio))
    upper_index = estimate_scaling(ds.psi, (lo, hi), mode="global").beta_upper

    i_min = int(np.argmin(ratio))
    end = "left" if i_min < ratio.size / 2 else "right"
    lx = np.log(nodes)
    lr = np.log(ratio)
    lphi = np.log(ds.phi.values[m])
    if end == "left":
        sel = lx <= lx[0] + 0.5 * LN10
    else:
        sel = lx >= lx[-1] - 0.5 * LN10
    ratio_end_slope = _ols_slope(lx[sel], lr[sel])
    phi_end_slope = _ols_slope(lx[sel], lphi[sel])

    trending_to_zero = (end == "left" and ratio_end_slope > 0.02) or \
                       (end == "right" and ratio_end_slope < -0.02)
    comparable = (inf_ratio > 1e-9) and not trending_to_zero
    return ComparabilityReport(sup_ratio=sup_ratio, inf_ratio=inf_ratio,
                               upper_index=upper_index, comparable=comparable,
                               end=end, ratio_end_slope=ratio_end_slope,
                               phi_end_slope=phi_end_slope)


# ---------------------------------------------------------------------------
# calculus checks


@dataclass(frozen=True)
class CalculusReport:
    """Worst multiplicative slack per inequality plus the fitted comparison constants."""
    violations: dict
    fitted_C3: float | None
    fitted_C4: float | None
    delta_zero: float | None
    delta_inf: float | None
    n_samples: int

    def worst(self) -> float:
        return max(self.violations.values(), default=0.0)

    def failing(self, tol: float = 1e-6) -> dict:
        return {k: v for k, v in self.violations.items() if v > tol}


def _viol(x) -> float:
    return float(np.max(x, initial=0.0))


def _sample_admissible(rng, ds, inv_table, t_floor, r_lo, r_hi, n):
    """(t, r) pairs with t < phi(r), t above t_floor, and t/r inside inv_table."""
    v_lo, v_hi = inv_table.v_left, inv_table.v_right
    ts, rs = [], []
    attempts = 0
    while len(ts) < n and attempts < 40:
        attempts += 1
        m = 4 * n
        r = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), m))
        w = rng.uniform(0.05, 3.0, m)
        t = ds.phi(r) * 10.0 ** (-w)
        x = t / r
        keep = (t > t_floor) & (x > v_lo * 2.0) & (x < v_hi / 2.0)
        ts.append(t[keep])
        rs.append(r[keep])
        if sum(a.size for a in ts) >= n:
            break
    t = np.concatenate(ts)[:n]
    r = np.concatenate(rs)[:n]
    return t, r


def check_scale_calculus(ds: DerivedScales, n_samples: int = 10_000,
                         seed: int = 715) -> CalculusReport:
    """Replay every structural inequality between psi, phi, K and K_inf.

    Random admissible points are drawn per inequality; the report carries the
    worst multiplicative slack of each.  Anything beyond interpolation
    tolerance (1e-6 relative) is a genuine violation.  The comparison
    exponents C3 / C4 are fitted, not asserted.
    """
    rng = np.random.default_rng(seed)
    v: dict = {}
    lo, hi = ds.grid
    lo_in, hi_in = lo * 4.0, hi / 4.0

    # phi <= psi on the whole grid
    v["comp1"] = _viol(ds.phi.values / ds.psi_table.values - 1.0)

    # phi(R)/phi(r) <= (R/r)^2
    r = np.exp(rng.uniform(math.log(lo_in), math.log(hi_in), (2, n_samples)))
    r.sort(axis=0)
    v["phi_doubling"] = _viol(ds.phi(r[1]) / ds.phi(r[0]) / (r[1] / r[0]) ** 2 - 1.0)

    # phi_tilde <= phi, and its own quadratic doubling bound
    v["phi_tilde_below_phi"] = _viol(ds.phi_tilde.values / ds.phi(ds.phi_tilde.nodes) - 1.0)
    v["phi_tilde_doubling"] = _viol(
        ds.phi_tilde(r[1]) / ds.phi_tilde(r[0]) / (r[1] / r[0]) ** 2 - 1.0)

    delta0 = ds.delta_cert.beta_lower if ds.delta_cert else None
    fitted_C3 = None
    if ds.K is not None:
        cl = ds.delta_cert.c_lower
        a0 = ds.a_zero
        t = np.exp(rng.uniform(math.log(lo_in), math.log(a0 * 0.999), n_samples))
        ratio = ds.K(t) * t / ds.phi(t)
        v["K_sandwich_low"] = _viol(1.0 - ratio)
        v["K_sandwich_high"] = _viol(ratio * cl - 1.0)

        st = np.exp(rng.uniform(math.log(lo_in), math.log(a0 * 0.999), (2, n_samples)))
        st.sort(axis=0)
        kr = ds.K(st[1]) / ds.K(st[0])
        tr = st[1] / st[0]
        v["K_scaling_low"] = _viol(cl ** 2 * tr ** (delta0 - 1.0) / kr - 1.0)
        v["K_scaling_high"] = _viol(kr * cl / tr - 1.0)

        # exponent comparison between r/K^{-1}(t/r) and (r/phi^{-1}(t))^2
        t, rr = _sample_admissible(rng, ds, ds.K,
                                   t_floor=ds.phi(lo_in),
                                   r_lo=lo * 100.0, r_hi=a0 * 0.999, n=n_samples)
        t = np.minimum(t, ds.phi(a0) * 0.99)
        pinv = ds.phi_inv(t)
        kinv = ds.K_inv_at(t / rr)
        lhs = (rr / pinv) ** 2
        mid = rr / kinv
        v["exp_compare_low"] = _viol(lhs / mid - 1.0)
        expo = delta0 / (delta0 - 1.0)
        fitted_C3 = float(np.max(mid / (rr / pinv) ** expo))

        # inverse scaling transfer: phi_inv grows no faster than (t2/t1)^{1/delta}
        tt = np.exp(rng.uniform(math.log(ds.phi(lo_in)), math.log(ds.phi(a0) * 0.99),
                                (2, n_samples)))
        tt.sort(axis=0)
        pr = ds.phi_inv(tt[1]) / ds.phi_inv(tt[0])
        v["inverse_transfer"] = _viol(pr * cl ** (1.0 / delta0) / (tt[1] / tt[0]) ** (1.0 / delta0) - 1.0)

    delta_inf = ds.delta_cert_inf.beta_lower if ds.delta_cert_inf else None
    fitted_C4 = None
    if ds.K_inf is not None:
        cli = ds.delta_cert_inf.c_lower
        t = np.exp(rng.uniform(math.log(lo_in), math.log(hi_in), n_samples))
        ratio = ds.K_inf(t) * t / ds.phi_tilde(t)
        v["K_inf_sandwich_low"] = _viol(1.0 - ratio)
        v["K_inf_sandwich_high"] = _viol(ratio * cli - 1.0)

        st = np.exp(rng.uniform(math.log(lo_in), math.log(hi_in), (2, n_samples)))
        st.sort(axis=0)
        kr = ds.K_inf(st[1]) / ds.K_inf(st[0])
        tr = st[1] / st[0]
        v["K_inf_scaling_low"] = _viol(cli ** 2 * tr ** (delta_inf - 1.0) / kr - 1.0)
        v["K_inf_scaling_high"] = _viol(kr * cli / tr - 1.0)

        t, rr = _sample_admissible(rng, ds, ds.K_inf,
                                   t_floor=ds.phi(max(ds.a, lo * 1e4)),
                                   r_lo=max(ds.a, lo * 1e4) * 100.0,
                                   r_hi=hi_in, n=n_samples)
        pinv = ds.phi_inv(t)
        kinv = ds.K_inf_inv_at(t / rr)
        mid = rr / kinv
        expo = delta_inf / (delta_inf - 1.0)
        up = mid / (rr / pinv) ** expo
        low = (rr / pinv) ** 2 / mid
        fitted_C4 = float(max(np.max(up), np.max(low), 1.0))

    return CalculusReport(violations=v, fitted_C3=fitted_C3, fitted_C4=fitted_C4,
                          delta_zero=delta0, delta_inf=delta_inf, n_samples=n_samples)
