import math

import numpy as np
import pytest

from hke_lab.errors import QuadratureFailure
from hke_lab.quadrature import block_quad, segment_integrals, tail_above, tail_below


def test_block_quad_exponential_exact():
    # closed form: int e^{2u} du = (e^{2b} - e^{2a}) / 2
    val = block_quad(lambda u: np.exp(2.0 * u), -3.0, 1.0)
    exact = (math.exp(2.0) - math.exp(-6.0)) / 2.0
    assert abs(val - exact) < 1e-13 * exact


def test_segment_integrals_sum_matches_block():
    edges = np.linspace(-4.0, 2.0, 97)
    segs = segment_integrals(lambda u: np.exp(1.3 * u), edges)
    total = block_quad(lambda u: np.exp(1.3 * u), -4.0, 2.0)
    assert abs(segs.sum() - total) < 1e-12 * total


def test_segment_integrals_with_kink():
    # integrand with a slope kink at u = 0 inside one interval
    def g(u):
        return np.where(u < 0.0, np.exp(0.5 * u), np.exp(2.0 * u))
    edges = np.linspace(-1.05, 1.05, 22)
    segs = segment_integrals(g, edges, breaks=(0.0,))
    exact = (1 - math.exp(-0.525)) / 0.5 + (math.exp(2.1) - 1) / 2.0
    assert abs(segs.sum() - exact) < 1e-12 * exact


def test_tail_below_pure_power():
    # psi = s^1.5 gives integrand e^{0.5 u}; integral to u0=0 is exactly 2
    val = tail_below(lambda u: np.exp(0.5 * u), 0.0)
    assert abs(val - 2.0) < 1e-9


def test_tail_below_log_corrected():
    # psi = s^2 (log 1/s)^2 gives integrand (-u)^{-2}; integral to ln r is 1/(-ln r)
    u0 = math.log(0.01)
    val = tail_below(lambda u: (-u) ** -2.0, u0)
    assert abs(val - 1.0 / (-u0)) < 1e-9 / (-u0)


@pytest.mark.parametrize("g", [
    lambda u: np.ones_like(u),          # psi = s^2: harmonic divergence
    lambda u: (-u) ** -1.0,             # psi = s^2 log(1/s): log divergence
    lambda u: np.exp(-0.1 * u),         # psi = s^2.1: power divergence
])
def test_tail_below_divergent(g):
    assert math.isinf(tail_below(g, 0.0))


def test_tail_above_pure_power():
    # psi = s^2.5 gives integrand e^{-0.5 u}; integral from 0 is exactly 2
    val = tail_above(lambda u: np.exp(-0.5 * u), 0.0)
    assert abs(val - 2.0) < 1e-9


def test_tail_above_log_corrected():
    # integrand u^{-2} from u0 > 0 integrates to 1/u0
    val = tail_above(lambda u: u ** -2.0, 5.0)
    assert abs(val - 0.2) < 1e-9


def test_tail_above_divergent_log_boundary():
    assert math.isinf(tail_above(lambda u: 1.0 / u, 1.0))


def test_not_power_log_like_raises():
    def g(u):
        return np.exp(np.sin(u)) * np.exp(0.3 * u)
    with pytest.raises(QuadratureFailure):
        tail_below(g, 0.0)
