"""Verification presets: envelope-vs-empirical sandwiches and acceptance criteria.

The two-sided estimates are comparability statements with non-explicit
constants, so verification fits the smallest multiplicative constants that
sandwich the empirical data between the envelopes (with a standard-error
slack) and passes when the fitted constants stay under a frozen threshold.

Every acceptance criterion is a function returning a CriterionResult, so the
CLI `verify` command and the pytest acceptance module share one implementation.
"""

from __future__ import annotations

import functools
import inspect
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .derived import build_derived_scales, check_scale_calculus, comparability_report
from .envelopes import EnvelopeParams, closed_form_oracle, lower_basic, upper_K
from .scale import kernel_from_name
from .sim import (
    SimConfig,
    _ROW_LATTICE,
    _path_events,
    build_sampler,
    estimate_density_radial,
    estimate_exit_time,
    estimate_tail,
    lil_trace,
    sampler_for,
    sphere_area,
)

# thresholds frozen after the one-off pilot calibration run documented in the
# README: the infinite-variance kernel's median LIL statistic grows like
# t^{1/6} (ratio ~ 2.6 from k=10 to k=20), the finite-variance one plateaus
LIL_GROW_MIN = 2.0
LIL_FLAT_MAX = 1.5

DENSITY_SANDWICH_THRESHOLD = 10.0
EXIT_RATIO_BAND = 0.25
OCCUPATION_BAND = 0.30
ORACLE_BAND = 10.0
# the displayed log-corrected forms carry a free exponential-rate constant;
# calibrated once against the catalog kernels and frozen (band 5.25 at 3.0)
ORACLE_RATE = 3.0


@dataclass(frozen=True)
class SandwichResult:
    fitted_c_low: float
    fitted_c_up: float
    n_points: int
    worst_point: tuple
    passed: bool


def sandwich_check(empirical, lower_fn, upper_fn, slack_sigma: float = 2.0,
                   threshold: float = DENSITY_SANDWICH_THRESHOLD) -> SandwichResult:
    """Fit the smallest c >= 1 with lower/c <= empirical <= c*upper.

    empirical is a list of (t, r, MCEstimate); the slack is slack_sigma
    standard errors on each side.  Deterministic given its inputs.
    """
    c_low, c_up = 1.0, 1.0
    worst = (math.nan, math.nan)
    worst_c = 1.0
    for t, r, est in empirical:
        lo = lower_fn(t, r)
        up = upper_fn(t, r)
        slack = slack_sigma * est.stderr
        ci_up = (est.value - slack) / up if up > 0 else 1.0
        ci_low = lo / (est.value + slack) if est.value + slack > 0 else math.inf
        ci_up = max(ci_up, 1.0)
        ci_low = max(ci_low, 1.0)
        c_up = max(c_up, ci_up)
        c_low = max(c_low, ci_low)
        if max(ci_up, ci_low) > worst_c:
            worst_c = max(ci_up, ci_low)
            worst = (t, r)
    return SandwichResult(fitted_c_low=c_low, fitted_c_up=c_up,
                          n_points=len(empirical), worst_point=worst,
                          passed=(c_low <= threshold and c_up <= threshold))


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        name, passed, detail = fn(*args, **kwargs)
        return CriterionResult(name, passed, detail, time.perf_counter() - t0)
    return wrapper


# ---------------------------------------------------------------------------
# criteria


@_timed
def crit_phi_power_closed_form():
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5, 1.9):
        ds_phi = build_derived_scales(kernel_from_name(f"stable:{alpha}")).phi
        r = np.geomspace(1e-6, 1e6, 289)
        exact = (2.0 - alpha) / 2.0 * r ** alpha
        worst = max(worst, float(np.max(np.abs(ds_phi(r) / exact - 1.0))))
    return ("phi_power_closed_form", worst <= 1e-6,
            f"worst relative error {worst:.2e} over 12 decades, alphas 0.5..1.9")


@_timed
def crit_phi_piecewise():
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"))
    err = abs(ds.phi(4.0) / (8.0 / 3.0) - 1.0)
    rep = comparability_report(ds, (10.0, 1e7))
    ratio_far = ds.phi(1e7) / ds.psi(1e7)
    ok = (err <= 1e-6 and not rep.comparable and ratio_far < 1e-3
          and abs(rep.phi_end_slope - 2.0) < 5e-3)
    return ("phi_piecewise_closed_form", ok,
            f"phi(4) err {err:.2e}; phi/psi(1e7) = {ratio_far:.2e}; "
            f"phi end slope {rep.phi_end_slope:.4f}")


CALCULUS_KERNELS = ("stable:1.2", "stable:1.5", "stable:1.9", "logzero:2.0",
                    "loginf:0.5", "loginf:1.0", "loginf:2.0", "piecewise:1.5,2.5@1")


@_timed
def crit_scale_calculus(n_samples: int = 10_000):
    worst_name, worst_viol = "", 0.0
    c3_err = 0.0
    for name in CALCULUS_KERNELS:
        ds = build_derived_scales(kernel_from_name(name))
        rep = check_scale_calculus(ds, n_samples=n_samples)
        for k, v in rep.violations.items():
            if v > worst_viol:
                worst_name, worst_viol = f"{name}:{k}", v
        if name.startswith("stable:") and rep.fitted_C3 is not None:
            c3_err = max(c3_err, abs(rep.fitted_C3 - 1.0))
    ok = worst_viol <= 1e-6 and c3_err <= 1e-3
    return ("scale_calculus_suite", ok,
            f"worst violation {worst_viol:.2e} ({worst_name or 'none'}); "
            f"pure-power C3 error {c3_err:.2e}")


def _exterior_integral_direct(psi, d: int, r: float) -> float:
    """Exterior-ball integral by nested quadrature in Cartesian/cylindrical
    coordinates, independent of the 1-d radial reduction it checks."""
    def f(s):
        return 1.0 / (s ** d * psi(s))

    if d == 1:
        val, _ = quad(f, r, np.inf, epsabs=0.0, epsrel=1e-9, limit=400)
        return 2.0 * val
    if d == 2:
        def inner(x):
            y0 = math.sqrt(max(r * r - x * x, 0.0))
            v, _ = quad(lambda y: f(math.hypot(x, y)), y0, np.inf,
                        epsabs=0.0, epsrel=1e-8, limit=200)
            return v
        a, _ = quad(inner, 0.0, r, epsabs=0.0, epsrel=1e-7, limit=100)
        b, _ = quad(inner, r, np.inf, epsabs=0.0, epsrel=1e-7, limit=200)
        return 4.0 * (a + b)
    if d == 3:
        def inner(rho):
            z0 = math.sqrt(max(r * r - rho * rho, 0.0))
            v, _ = quad(lambda z: f(math.hypot(rho, z)), z0, np.inf,
                        epsabs=0.0, epsrel=1e-8, limit=200)
            return rho * v
        a, _ = quad(inner, 0.0, r, epsabs=0.0, epsrel=1e-7, limit=100)
        b, _ = quad(inner, r, np.inf, epsabs=0.0, epsrel=1e-7, limit=200)
        return 4.0 * math.pi * (a + b)
    raise ValueError("d must be 1, 2 or 3")


@_timed
def crit_tail_integral_identity():
    from .scale import jump_tail_weight
    worst = 0.0
    for name in ("stable:1.5", "piecewise:1.5,2.5@1"):
        psi = kernel_from_name(name)
        for d in (1, 2, 3):
            radial = {r: sphere_area(d) * jump_tail_weight(psi, r) for r in (0.5, 2.0, 8.0)}
            for r, expect in radial.items():
                direct = _exterior_integral_direct(psi, d, r)
                worst = max(worst, abs(direct / expect - 1.0))
    band_worst = 1.0
    for name in ("stable:0.5", "stable:1.0", "stable:1.5", "loginf:2.0"):
        psi = kernel_from_name(name)
        prod = [build_sampler(psi, 1, float(e)).lambda_eps * psi(float(e))
                for e in np.geomspace(1e-4, 0.99, 7)]
        band_worst = max(band_worst, max(prod) / min(prod))
    ok = worst <= 5e-3 and band_worst <= 10.0
    return ("tail_integral_identity", ok,
            f"worst quadrature mismatch {worst:.2e} (tol 0.5%); "
            f"lambda*psi band ratio {band_worst:.2f} (cap 10)")


def _cauchy_tail(r, t):
    return 1.0 - (2.0 / math.pi) * np.arctan(np.asarray(r) / (math.pi * t))


@_timed
def crit_cauchy_oracle(n_paths: int = 100_000, seed: int = 20260810):
    cfg = SimConfig(kernel=kernel_from_name("stable:1.0").spec, d=1, eps=0.01,
                    horizon=1.0, n_paths=n_paths, base_seed=seed, checkpoints=(1.0,))
    est = estimate_tail(cfg, 1.0, [math.pi])[0]
    tail_ok = abs(est.value - 0.5) <= 3.0 * est.stderr

    hist = estimate_density_radial(cfg, 1.0, 14)
    worst_z, checked = 0.0, 0
    for cell in hist.cells:
        if cell.meta["count"] >= 200:
            lo, hi = cell.meta["r_lo"], cell.meta["r_hi"]
            mass = float(_cauchy_tail(lo, 1.0) - _cauchy_tail(hi, 1.0))
            exact = mass / (2.0 * (hi - lo))
            worst_z = max(worst_z, abs(cell.value - exact) / cell.stderr)
            checked += 1
    ok = tail_ok and worst_z <= 3.0 and checked >= 6
    return ("cauchy_oracle", ok,
            f"P(|X_1|>pi) = {est.value:.4f} +- {est.stderr:.4f} (target 0.5); "
            f"{checked} bins with >=200 hits, worst |z| = {worst_z:.2f}")


def _binned(env_fn, edges_by_t, extremum):
    """Histogram cells measure bin averages, so compare them against the
    envelope's extremum over the bin (min for lower bounds, max for upper)."""
    def fn(t, r):
        edges = edges_by_t[t]
        j = int(np.clip(np.searchsorted(edges, r) - 1, 0, edges.size - 2))
        probes = np.array([edges[j], math.sqrt(edges[j] * edges[j + 1]), edges[j + 1]])
        return extremum(env_fn(t, probes))
    return fn


@_timed
def crit_density_sandwich(n_paths: int = 30_000, seed: int = 31415):
    ds = build_derived_scales(kernel_from_name("stable:1.5"), d=1)
    p = EnvelopeParams(d=1)
    cfg = SimConfig(kernel=ds.psi.spec, d=1, eps=0.02, horizon=2.0,
                    n_paths=n_paths, base_seed=seed, checkpoints=(0.5, 1.0, 2.0))
    all_cells, regime_cells = [], []
    edges_by_t = {}
    for t in cfg.checkpoints:
        pinv = ds.phi_inv(t)
        edges = np.geomspace(0.1 * pinv, 6.0 * pinv, 13)
        edges_by_t[t] = edges
        hist = estimate_density_radial(cfg, t, edges)
        for cell in hist.cells:
            if cell.meta["count"] < 30:
                continue
            all_cells.append((t, cell.meta["r_mid"], cell))
            # the indicator-form lower bound is discontinuous at delta1 *
            # phi_inv(t); just above it its polynomial branch is only tight up
            # to a tiny constant, so it is checked inside the near-diagonal
            # window and from one doubling above the threshold outward
            if cell.meta["r_hi"] <= p.delta1 * pinv or cell.meta["r_lo"] >= 2 * p.delta1 * pinv:
                regime_cells.append((t, cell.meta["r_mid"], cell))
    sharp = sandwich_check(
        all_cells,
        _binned(lambda t, r: lower_K(ds, p, t, r, "K"), edges_by_t, np.min),
        _binned(lambda t, r: upper_K(ds, p, t, r, "K"), edges_by_t, np.max),
        slack_sigma=2.0, threshold=DENSITY_SANDWICH_THRESHOLD)
    basic = sandwich_check(
        regime_cells,
        _binned(lambda t, r: lower_basic(ds, p, t, r), edges_by_t, np.min),
        _binned(lambda t, r: upper_K(ds, p, t, r, "K"), edges_by_t, np.max),
        slack_sigma=2.0, threshold=DENSITY_SANDWICH_THRESHOLD)
    ok = sharp.passed and basic.passed
    return ("density_sandwich", ok,
            f"sharp form c_low = {sharp.fitted_c_low:.2f}, c_up = {sharp.fitted_c_up:.2f} "
            f"({sharp.n_points} cells); indicator form c_low = {basic.fitted_c_low:.2f}, "
            f"c_up = {basic.fitted_c_up:.2f} ({basic.n_points} cells); threshold "
            f"{DENSITY_SANDWICH_THRESHOLD:g}")


@_timed
def crit_exit_times(n_paths: int = 10_000, seed: int = 2718):
    ds = build_derived_scales(kernel_from_name("stable:1.5"), d=1)
    cfg = SimConfig(kernel=ds.psi.spec, d=1, eps=0.15, horizon=256.0,
                    n_paths=n_paths, base_seed=seed, dt_bridge=0.04)
    radii = (1.0, 2.0, 4.0, 8.0)
    ests = estimate_exit_time(cfg, radii)
    ratios = np.array([e.value / ds.phi(e.meta["radius"]) for e in ests])
    center = float(np.mean(ratios))
    spread = float(np.max(np.abs(ratios / center - 1.0)))
    ok = spread <= EXIT_RATIO_BAND
    return ("exit_time_proportionality", ok,
            f"E[tau]/phi(r) = {np.array2string(ratios, precision=3)}; "
            f"max deviation from mean {100 * spread:.1f}% (cap 25%)")


def occupation_profile(config: SimConfig, radii, sampler=None):
    """Occupation of several centered balls in one pass over the paths."""
    if sampler is None:
        sampler = sampler_for(config)
    radii = np.asarray(radii, dtype=float)
    occ = np.empty((config.n_paths, radii.size))
    dt = config.dt_bridge
    for pid in range(config.n_paths):
        times, rowtype, pos = _path_events(sampler, config, pid, supervised=True)
        nrm2 = np.einsum("ij,ij->i", pos, pos)[rowtype == _ROW_LATTICE]
        occ[pid] = dt * np.sum(nrm2[None, :] < (radii ** 2)[:, None], axis=1)
    return occ


@_timed
def crit_occupation(n_paths: int = 1500, seed: int = 1618):
    ds = build_derived_scales(kernel_from_name("stable:1.5"), d=2)
    cfg = SimConfig(kernel=ds.psi.spec, d=2, eps=0.25, horizon=256.0,
                    n_paths=n_paths, base_seed=seed, dt_bridge=0.05)
    radii = (1.0, 2.0, 4.0)
    occ = occupation_profile(cfg, radii)
    means = occ.mean(axis=0)
    ratios = means / np.array([ds.phi(r) for r in radii])
    center = float(np.mean(ratios))
    spread = float(np.max(np.abs(ratios / center - 1.0)))
    ok = spread <= OCCUPATION_BAND
    return ("green_occupation", ok,
            f"occupation/phi(r) = {np.array2string(ratios, precision=3)}; "
            f"max deviation from mean {100 * spread:.1f}% (cap 30%)")


def _lil_config(kernel_name: str, k_max: int, n_paths: int, seed: int) -> SimConfig:
    cps = tuple(float(2 ** k) for k in range(3, k_max + 1))
    return SimConfig(kernel=kernel_from_name(kernel_name).spec, d=1, eps=0.999,
                     horizon=float(2 ** k_max), n_paths=n_paths, base_seed=seed,
                     dt_bridge=1.0, checkpoints=cps)


@_timed
def crit_lil_dichotomy(n_paths: int = 200, k_max: int = 20, seed: int = 4242):
    grow = lil_trace(_lil_config("stable:1.5", k_max, n_paths, seed))
    flat = lil_trace(_lil_config("loginf:2.0", k_max, n_paths, seed + 1))
    i10 = list(grow.ks).index(10)
    i20 = list(grow.ks).index(min(20, k_max))
    grow_ratio = grow.median[i20] / grow.median[i10]
    flat_ratio = flat.median[i20] / flat.median[i10]
    ok = grow_ratio >= LIL_GROW_MIN and flat_ratio <= LIL_FLAT_MAX
    return ("lil_dichotomy", ok,
            f"median ratio k=20/k=10: infinite-variance {grow_ratio:.2f} "
            f"(min {LIL_GROW_MIN}), finite-variance {flat_ratio:.2f} (max {LIL_FLAT_MAX})")


@_timed
def crit_oracle_bands():
    worst_hi, worst_lo = 1.0, 1.0
    for name in ("loginf:0.5", "loginf:1.0", "loginf:2.0"):
        ds = build_derived_scales(kernel_from_name(name), d=1)
        p = EnvelopeParams(d=1)
        for t in np.geomspace(16.0, 1e4, 7):
            pinv = ds.phi_inv(t)
            for r in np.geomspace(pinv / 4.0, 10.0 * pinv, 7):
                ours = upper_K(ds, p, float(t), float(r), "K_inf")
                oracle = closed_form_oracle(name, 1, float(t), float(r),
                                            a_rate=ORACLE_RATE).upper_K
                ratio = ours / oracle
                worst_hi = max(worst_hi, ratio)
                worst_lo = max(worst_lo, 1.0 / ratio)
    ok = worst_hi <= ORACLE_BAND and worst_lo <= ORACLE_BAND
    return ("loginf_oracle_bands", ok,
            f"envelope/oracle ratio within [1/{worst_lo:.2f}, {worst_hi:.2f}] "
            f"(band {ORACLE_BAND:g})")


PRESETS = {
    "calculus": (crit_phi_power_closed_form, crit_phi_piecewise, crit_scale_calculus),
    "tail-identity": (crit_tail_integral_identity,),
    "cauchy-oracle": (crit_cauchy_oracle,),
    "density-sandwich": (crit_density_sandwich,),
    "exit-times": (crit_exit_times,),
    "occupation": (crit_occupation,),
    "lil": (crit_lil_dichotomy,),
    "oracle-bands": (crit_oracle_bands,),
}
PRESETS["fast"] = PRESETS["calculus"] + PRESETS["tail-identity"] + PRESETS["oracle-bands"]
PRESETS["all"] = (PRESETS["calculus"] + PRESETS["tail-identity"]
                  + PRESETS["cauchy-oracle"] + PRESETS["density-sandwich"]
                  + PRESETS["exit-times"] + PRESETS["occupation"]
                  + PRESETS["lil"] + PRESETS["oracle-bands"])


def run_preset(preset: str, **overrides) -> list[CriterionResult]:
    if preset not in PRESETS:
        raise KeyError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    results = []
    for fn in PRESETS[preset]:
        kwargs = {k: v for k, v in overrides.items()
                  if k in inspect.signature(fn).parameters}
        results.append(fn(**kwargs))
    return results
