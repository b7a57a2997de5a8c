import math

import numpy as np
import pytest

from hke_lab.derived import build_derived_scales
from hke_lab.envelopes import (
    EnvelopeParams,
    closed_form_oracle,
    envelope_G,
    evaluate_envelopes,
    gaussian_form,
    green_envelope,
    lower_basic,
    lower_K,
    tail_lower,
    tail_upper,
    upper_exp,
    upper_K,
)
from hke_lab.errors import DimensionTooSmall, MissingTable, RegimeViolation, SpecInvalid
from hke_lab.scale import kernel_from_name

PINV1 = 4.0 ** (2.0 / 3.0)        # phi_inv(1) for psi = r^1.5 (phi = 0.25 r^1.5)


@pytest.fixture(scope="module")
def ds15():
    return build_derived_scales(kernel_from_name("stable:1.5"))


@pytest.fixture(scope="module")
def ds15_d2():
    return build_derived_scales(kernel_from_name("stable:1.5"), d=2)


def test_params_validation():
    with pytest.raises(SpecInvalid):
        EnvelopeParams(a_U=2.0, a_L=1.0)
    with pytest.raises(SpecInvalid):
        EnvelopeParams(delta1=0.7)


def test_envelope_G_closed_form(ds15):
    # K^{-1}(u) = (4u)^2 for this kernel, so K^{-1}(0.1) = 0.16
    exact = 10.0 ** -2.5 + PINV1 ** -1 * math.exp(-10.0 / 0.16)
    got = envelope_G(ds15, 1.0, 1.0, 10.0, "K")
    assert abs(got / exact - 1.0) < 1e-6


def test_envelope_G_rate_monotone(ds15):
    vals = [envelope_G(ds15, c, 0.5, 2.0, "K") for c in (0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_upper_exp_at_zero(ds15):
    p = EnvelopeParams(d=1, c_up=2.0)
    assert abs(upper_exp(ds15, p, 1.0, 0.0) - 2.0 / PINV1) < 1e-6


def test_lower_basic_both_branches(ds15):
    p = EnvelopeParams(d=1)
    # r inside the near-diagonal window delta1 * phi_inv(1) ~ 0.63
    assert abs(lower_basic(ds15, p, 1.0, 0.1) - 1.0 / PINV1) < 1e-6
    # far field: t / (r psi(r))
    assert abs(lower_basic(ds15, p, 1.0, 10.0) - 10.0 ** -2.5) < 1e-8


def test_upper_K_example(ds15):
    p = EnvelopeParams(d=1)
    exact = min(1.0 / PINV1, 1.0 + math.exp(-1.0 / 16.0) / PINV1)
    assert abs(upper_K(ds15, p, 1.0, 1.0, "K") - exact) < 1e-6
    # far field: polynomial term dominates
    far = upper_K(ds15, p, 1.0, 50.0, "K")
    assert abs(far / (1.0 / (50.0 * 50.0 ** 1.5)) - 1.0) < 1e-6


def test_envelope_ordering(ds15):
    eq = EnvelopeParams(d=1)
    tr = np.meshgrid(np.geomspace(0.01, 10.0, 32), np.geomspace(0.01, 100.0, 32))
    up = upper_K(ds15, eq, tr[0], tr[1], "K")
    lo = lower_K(ds15, eq, tr[0], tr[1], "K")
    assert np.allclose(up, lo, rtol=1e-12)

    p = EnvelopeParams(d=1, a_U=0.5, a_L=2.0)
    up = upper_K(ds15, p, tr[0], tr[1], "K")
    lo = lower_K(ds15, p, tr[0], tr[1], "K")
    assert np.all(lo <= up * (1 + 1e-12))


def test_gaussian_form(ds15):
    p = EnvelopeParams(d=1)
    lo, up = gaussian_form(ds15, p, 1.0, 0.0)
    assert abs(lo - 1.0 / PINV1) < 1e-6 and abs(up - 1.0 / PINV1) < 1e-6
    poly = 5.0 ** -2.5
    exact = min(1.0 / PINV1, poly + math.exp(-25.0 / PINV1 ** 2) / PINV1)
    lo, up = gaussian_form(ds15, p, 1.0, 5.0)
    assert abs(lo / exact - 1.0) < 1e-6
    assert abs(up / exact - 1.0) < 1e-6


def test_gaussian_vs_K_bounded_ratio(ds15):
    # pure power, so the two upper forms agree within a uniform constant on
    # the band delta1 phi_inv(t) <= r <= 10 phi_inv(t)
    p = EnvelopeParams(d=1)
    t = np.geomspace(0.01, 10.0, 25)
    ratios = []
    for ti in t:
        pinv = ds15.phi_inv(ti)
        r = np.geomspace(0.25 * pinv, 10.0 * pinv, 25)
        ratios.append(upper_K(ds15, p, ti, r, "K") / gaussian_form(ds15, p, ti, r)[1])
    ratios = np.concatenate(ratios)
    assert np.max(ratios) <= 10.0 and np.min(ratios) >= 0.1


def test_green_envelope(ds15_d2):
    p = EnvelopeParams(d=2)
    exact = 0.25 * 2.0 ** 1.5 / 4.0
    assert abs(green_envelope(ds15_d2, p, 2.0) - exact) < 1e-6
    with pytest.raises(DimensionTooSmall):
        green_envelope(ds15_d2, EnvelopeParams(d=1), 2.0)


def test_green_envelope_piecewise():
    ds = build_derived_scales(kernel_from_name("piecewise:1.5,2.5@1"), d=3)
    got = green_envelope(ds, EnvelopeParams(d=3), 4.0)
    assert abs(got - (8.0 / 3.0) / 64.0) < 1e-6


def test_tail_upper_cap_and_tail_lower(ds15):
    p = EnvelopeParams(d=1)
    assert tail_upper(ds15, p, 1.0, 1e-6, "K") == 1.0
    # psi = r (Cauchy): tail lower at r = 10 is t/psi(10) = 0.1
    cauchy = build_derived_scales(kernel_from_name("stable:1.0"))
    assert abs(tail_lower(cauchy, p, 1.0, 10.0) - 0.1) < 1e-9
    with pytest.raises(MissingTable):
        tail_upper(cauchy, p, 1.0, 10.0, "K")


def test_missing_table_for_variant():
    ds = build_derived_scales(kernel_from_name("stable:0.5"))
    with pytest.raises(MissingTable):
        envelope_G(ds, 1.0, 1.0, 1.0, "K")


def test_evaluate_envelopes_row(ds15):
    p = EnvelopeParams(d=1)
    env = evaluate_envelopes(ds15, p, 1.0, 0.0)
    assert env.tail_upper == 1.0 and env.tail_lower == 0.0
    assert abs(env.upper_exp - 1.0 / PINV1) < 1e-6
    env = evaluate_envelopes(ds15, p, 1.0, 2.0)
    for v in (env.upper_exp, env.lower_basic, env.upper_K, env.lower_K,
              env.gaussian_lower, env.gaussian_upper, env.tail_upper, env.tail_lower):
        assert v is not None and np.isfinite(v) and v >= 0


def test_oracle_logzero_near_diagonal():
    got = closed_form_oracle("logzero:2.0", 1, 0.01, 0.0)
    exact = 0.01 ** -0.5 * math.log(100.0) ** 0.5
    assert abs(got.upper_K - exact) < 1e-12
    assert abs(exact - 21.4597) < 1e-3


def test_oracle_loginf_near_diagonal():
    assert abs(closed_form_oracle("loginf:2.0", 1, 100.0, 0.0).upper_K - 0.1) < 1e-12
    assert abs(closed_form_oracle("loginf:2.0", 2, 100.0, 0.0).upper_K - 0.01) < 1e-12
    got = closed_form_oracle("loginf:1.0", 1, 100.0, 0.0)
    exact = 0.1 * math.log(math.log(100.0)) ** 0.5
    assert abs(got.upper_K - exact) < 1e-12
    assert abs(exact - 0.123579) < 1e-5


def test_oracle_regime_violation():
    with pytest.raises(RegimeViolation):
        closed_form_oracle("logzero:2.0", 1, 0.7, 0.0)
    with pytest.raises(RegimeViolation):
        closed_form_oracle("loginf:0.5", 1, 10.0, 0.0)
