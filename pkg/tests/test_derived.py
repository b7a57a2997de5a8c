import math

import numpy as np
import pytest

from hke_lab.errors import IntegrabilityViolation, LowerIndexTooSmall
from hke_lab.derived import (
    build_derived_scales,
    build_K,
    build_phi,
    check_scale_calculus,
    comparability_report,
)
from hke_lab.scale import ScaleSpec, estimate_scaling, kernel_from_name, make_scale
from hke_lab.tables import gen_inverse


def closed_phi_piecewise(r):
    # psi = r^1.5 below 1 and r^2.5 above: A(r) = 2 sqrt(r) (r<=1), 4 - 2/sqrt(r) (r>1)
    r = np.asarray(r, dtype=float)
    A = np.where(r <= 1.0, 2.0 * np.sqrt(r), 4.0 - 2.0 / np.sqrt(r))
    return r ** 2 / (2.0 * A)


def test_phi_closed_form_alpha_one():
    phi = build_phi(kernel_from_name("stable:1.0"))
    assert abs(phi(2.0) - 1.0) < 1e-8


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 1.9])
def test_phi_pure_power_twelve_decades(alpha):
    phi = build_phi(kernel_from_name(f"stable:{alpha}"))
    r = np.geomspace(1e-6, 1e6, 241)
    exact = (2.0 - alpha) / 2.0 * r ** alpha
    assert np.max(np.abs(phi(r) / exact - 1.0)) < 1e-6


def test_phi_piecewise_closed_form():
    phi = build_phi(kernel_from_name("piecewise:1.5,2.5@1"))
    assert abs(phi(4.0) - 16.0 / 6.0) < 1e-6 * (16.0 / 6.0)
    r = np.geomspace(1e-6, 1e6, 121)
    assert np.max(np.abs(phi(r) / closed_phi_piecewise(r) - 1.0)) < 1e-6


def test_phi_logzero_closed_form():
    # A(r) = 1/log(1/r) inside the pure region, so phi(e^-2) = e^-4
    phi = build_phi(kernel_from_name("logzero:2.0"))
    assert abs(phi(math.exp(-2.0)) - math.exp(-4.0)) < 1e-6 * math.exp(-4.0)


def test_phi_requires_integrability():
    with pytest.raises(IntegrabilityViolation):
        build_phi(make_scale(ScaleSpec("power", {"alpha": 2.0})))


def test_phi_inverse_closed_form():
    ds = build_derived_scales(kernel_from_name("stable:1.5"))
    assert abs(ds.phi_inv(2.0) - 4.0) < 1e-6 * 4.0
    assert abs(gen_inverse(ds.phi, 2.0) - 4.0) < 1e-9 * 4.0


def test_phi_inverse_round_trip():
    for name in ["stable:1.5", "piecewise:1.5,2.5@1", "logzero:2.0", "loginf:0.5"]:
        ds = build_derived_scales(kernel_from_name(name))
        t = np.geomspace(ds.phi.v_left * 1.01, ds.phi.v_right * 0.99, 400)
        back = ds.phi(ds.phi_inv(t))
        assert np.max(np.abs(back / t - 1.0)) < 1e-6, name


def test_K_pure_power():
    ds = build_derived_scales(kernel_from_name("stable:1.5"))
    assert ds.K is not None
    assert abs(ds.K(2.0) - 0.25 * math.sqrt(2.0)) < 1e-7


def test_K_lower_index_too_small():
    phi = build_phi(kernel_from_name("stable:0.5"))
    cert = estimate_scaling(phi, (1e-8, 1e8), mode="near_zero")
    with pytest.raises(LowerIndexTooSmall):
        build_K(phi, cert)
    ds = build_derived_scales(kernel_from_name("stable:0.5"))
    assert ds.K is None and ds.K_inf is None


def test_K_piecewise_brute_force_sup():
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"))
    # independent oracle: dense sup of the closed-form phi(b)/b
    b = np.geomspace(1e-6, 4.0, 10_000)
    oracle = np.max(closed_phi_piecewise(b) / b)
    assert abs(ds.K(4.0) - oracle) < 1e-5 * oracle
    assert abs(oracle - 2.0 / 3.0) < 1e-4


def test_K_inf_quadratic_piece():
    ds = build_derived_scales(kernel_from_name("stable:1.5"), a=1.0)
    # phi(1) = 0.25; below the threshold phi_tilde is the pure quadratic
    assert abs(ds.phi_tilde(0.5) - 0.0625) < 1e-7
    assert abs(ds.K_inf(0.5) - 0.125) < 1e-7


def test_K_inf_piecewise():
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"), a=1.0)
    assert abs(ds.K_inf(4.0) - 2.0 / 3.0) < 1e-4


def test_phi_tilde_global_lower_scaling():
    # the quadratic extension upgrades L^a(delta) to a global L(delta)
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"), a=1.0)
    cert = estimate_scaling(ds.phi_tilde, ds.grid, mode="global")
    assert cert.beta_lower >= min(ds.delta_cert_inf.beta_lower, 2.0) - 1e-6


def test_K_inf_threshold_robustness():
    # rebuilding with a=2 moves K_inf_inv by at most a bounded factor
    ds1 = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"), a=1.0)
    ds2 = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"), a=2.0)
    rng = np.random.default_rng(5)
    t = np.exp(rng.uniform(0.0, math.log(1e6), 300))
    mult = np.exp(rng.uniform(0.0, math.log(100.0), 300))
    x = t / (ds1.phi_inv(t) * mult)
    ratio = ds1.K_inf_inv(x) / ds2.K_inf_inv(x)
    assert np.max(ratio) <= 10.0 and np.min(ratio) >= 0.1


def test_comparability_pure_power():
    ds = build_derived_scales(kernel_from_name("stable:1.5"))
    rep = comparability_report(ds, (1e-4, 1e4))
    assert rep.comparable
    assert abs(rep.sup_ratio - 0.25) < 1e-6
    assert abs(rep.inf_ratio - 0.25) < 1e-6


def test_comparability_piecewise_fails_at_infinity():
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"))
    rep = comparability_report(ds, (10.0, 1e4))
    assert not rep.comparable
    assert rep.end == "right"
    assert rep.upper_index > 2.0 - 1e-3
    assert abs(rep.phi_end_slope - 2.0) < 5e-3


def test_comparability_logzero():
    ds = build_derived_scales(kernel_from_name("logzero:2.0"))
    rep = comparability_report(ds, (1e-8, 1e-2))
    assert not rep.comparable
    assert rep.end == "left"
    # closed form: local slope of phi is 2 - 1/log(1/r); the fit window is
    # [1e-8, 10^-7.5] so the slope must sit inside the window's slope range
    s_lo = 2.0 - 1.0 / math.log(1e8)
    s_hi = 2.0 - 1.0 / math.log(10 ** 7.5)
    assert min(s_lo, s_hi) - 1e-3 <= rep.phi_end_slope <= max(s_lo, s_hi) + 1e-3


def test_comparability_agreement_with_upper_index():
    # an upper index safely below 2 must coincide with a comparable verdict
    for name in ["stable:0.5", "stable:1.5", "piecewise:1.5,2.5@1", "logzero:2.0"]:
        ds = build_derived_scales(kernel_from_name(name))
        for rng_pair in [(1e-6, 1e-2), (10.0, 1e4)]:
            rep = comparability_report(ds, rng_pair)
            if rep.upper_index < 1.8:
                assert rep.comparable, (name, rng_pair)


CATALOG_WITH_K = ["stable:1.2", "stable:1.5", "stable:1.9",
                  "logzero:2.0", "loginf:0.5", "loginf:1.0", "loginf:2.0",
                  "piecewise:1.5,2.5@1"]


@pytest.mark.parametrize("name", CATALOG_WITH_K)
def test_scale_calculus_zero_violations(name):
    ds = build_derived_scales(kernel_from_name(name))
    rep = check_scale_calculus(ds, n_samples=4000)
    assert rep.failing(1e-6) == {}, rep.violations


def test_fitted_C3_pure_power():
    ds = build_derived_scales(kernel_from_name("stable:1.5"))
    rep = check_scale_calculus(ds, n_samples=10_000)
    assert rep.fitted_C3 is not None
    assert abs(rep.fitted_C3 - 1.0) < 1e-3


def test_export_csv(tmp_path):
    ds = build_derived_scales(kernel_from_name("stable:1.5"))
    out = tmp_path / "tables.csv"
    ds.export_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "r,psi,phi,phi_inv_at_phi(r),K,K_inf"
    assert len(lines) == ds.phi.nodes.size + 1
    first = [float(x) for x in lines[1].split(",")]
    assert len(first) == 6
