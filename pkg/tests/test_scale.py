import math

import numpy as np
import pytest

from hke_lab.errors import OutOfRange, RangeTooNarrow, SpecInvalid
from hke_lab.scale import (
    ScaleSpec,
    check_integrability,
    estimate_scaling,
    jump_density,
    jump_tail_weight,
    kernel_from_name,
    make_scale,
    second_moment_weight,
)

CATALOG = ["stable:0.5", "stable:1.0", "stable:1.5", "stable:1.9",
           "logzero:2.0", "loginf:0.5", "loginf:1.0", "loginf:2.0",
           "piecewise:1.5,2.5@1"]


def test_power_eval():
    f = kernel_from_name("stable:1.5")
    assert abs(f(4.0) - 8.0) < 1e-12


def test_logzero_eval_at_peak():
    f = kernel_from_name("logzero:2.0")
    assert abs(f(math.exp(-1.0)) - math.exp(-2.0)) < 1e-12


def test_piecewise_eval_and_continuity():
    f = kernel_from_name("piecewise:1.5,2.5@1")
    assert abs(f(4.0) - 32.0) < 1e-12
    assert abs(f(1.0 - 1e-12) - f(1.0 + 1e-12)) < 1e-9


def test_spec_invalid_cases():
    with pytest.raises(SpecInvalid):
        make_scale(ScaleSpec("power", {"alpha": -1.0}))
    with pytest.raises(SpecInvalid):
        make_scale(ScaleSpec("piecewise_power",
                             {"exponents": [1.5, -0.5], "breakpoints": [1.0]}))
    with pytest.raises(SpecInvalid):
        make_scale(ScaleSpec("piecewise_power",
                             {"exponents": [1.0, 2.0], "breakpoints": [1.0],
                              "scales": [1.0, 3.0]}))  # discontinuous at 1
    with pytest.raises(SpecInvalid):
        kernel_from_name("mystery:1.0")


def test_spec_json_round_trip():
    spec = ScaleSpec("piecewise_power", {"exponents": [1.5, 2.5], "breakpoints": [1.0]})
    again = ScaleSpec.from_json(spec.to_json())
    assert again == spec


def test_monotone_on_random_pairs():
    rng = np.random.default_rng(11)
    for name in CATALOG:
        f = kernel_from_name(name)
        r = np.exp(rng.uniform(math.log(f.spec.r_min), math.log(f.spec.r_max), (2, 10_000)))
        r.sort(axis=0)
        lo, hi = f(r[0]), f(r[1])
        assert np.all(hi >= lo * (1 - 1e-12)), name


def test_integrability_square_divergent():
    rep = check_integrability(make_scale(ScaleSpec("power", {"alpha": 2.0})))
    assert not rep.near_zero_finite and math.isinf(rep.i_zero)


def test_integrability_power_closed_form():
    rep = check_integrability(kernel_from_name("stable:1.5"))
    assert rep.near_zero_finite
    assert abs(rep.i_zero - 2.0) < 1e-8
    assert not rep.global_finite


def test_integrability_piecewise_closed_form():
    rep = check_integrability(kernel_from_name("piecewise:1.5,2.5@1"))
    assert rep.near_zero_finite and rep.global_finite
    assert abs(rep.i_zero - 2.0) < 1e-8
    assert abs(rep.i_total - 4.0) < 1e-8


def test_catalog_integrability_consistency():
    # log-corrected-zero with alpha > 1 integrable at zero, alpha = 1 not
    assert check_integrability(kernel_from_name("logzero:2.0")).near_zero_finite
    assert not check_integrability(kernel_from_name("logzero:1.0")).near_zero_finite
    # second-moment dichotomy of the loginf family at beta = 1
    assert check_integrability(kernel_from_name("loginf:2.0")).global_finite
    assert not check_integrability(kernel_from_name("loginf:1.0")).global_finite
    assert not check_integrability(kernel_from_name("loginf:0.5")).global_finite


def test_second_moment_weight_closed_form():
    f = kernel_from_name("piecewise:1.5,2.5@1")
    # A(4) = 2 + int_1^4 s^{-1.5} ds = 3
    assert abs(second_moment_weight(f, 4.0) - 3.0) < 1e-8


def test_jump_tail_weight_closed_form():
    f = kernel_from_name("stable:1.0")
    assert abs(jump_tail_weight(f, 0.01) - 100.0) < 1e-6
    f = kernel_from_name("stable:1.5")
    assert abs(jump_tail_weight(f, 0.1) - (2.0 / 3.0) * 10.0 ** 1.5) < 1e-6


def test_estimate_scaling_pure_power():
    cert = estimate_scaling(kernel_from_name("stable:1.5"), (1e-4, 1e4))
    assert abs(cert.beta_lower - 1.5) < 1e-9
    assert abs(cert.beta_upper - 1.5) < 1e-9
    assert abs(cert.c_lower - 1.0) < 1e-9
    assert abs(cert.c_upper - 1.0) < 1e-9


def test_estimate_scaling_piecewise():
    cert = estimate_scaling(kernel_from_name("piecewise:1.5,2.5@1"), (1e-3, 1e3))
    assert abs(cert.beta_lower - 1.5) < 1e-6
    assert abs(cert.beta_upper - 2.5) < 1e-6


def test_estimate_scaling_logzero_upper_index():
    cert = estimate_scaling(kernel_from_name("logzero:2.0"), (1e-6, 1e-2), mode="near_zero")
    assert cert.beta_upper <= 2.0 + 1e-6


def test_certificate_soundness_on_fresh_grid():
    rng = np.random.default_rng(23)
    for name in ["stable:1.5", "piecewise:1.5,2.5@1", "logzero:2.0", "loginf:0.5"]:
        f = kernel_from_name(name)
        cert = estimate_scaling(f, (1e-6, 1e2))
        r = np.exp(rng.uniform(math.log(cert.r_lo), math.log(cert.r_hi), (2, 4096)))
        r.sort(axis=0)
        keep = r[1] > r[0]
        viol = cert.check_pair(r[0][keep], r[1][keep], f(r[0][keep]), f(r[1][keep]))
        assert viol <= 2.0 * cert.residual, name


def test_estimate_scaling_range_too_narrow():
    with pytest.raises(RangeTooNarrow):
        estimate_scaling(kernel_from_name("stable:1.5"), (1.0, 5.0), mode="near_zero")


def test_jump_density_examples():
    assert abs(jump_density(kernel_from_name("stable:1.0"), 1, 2.0) - 0.25) < 1e-12
    assert abs(jump_density(kernel_from_name("stable:1.5"), 2, 1.0) - 1.0) < 1e-12
    assert abs(jump_density(kernel_from_name("stable:2.0"), 3, 10.0) - 1e-5) < 1e-17
    with pytest.raises(OutOfRange):
        jump_density(kernel_from_name("stable:1.5"), 1, -1.0)
