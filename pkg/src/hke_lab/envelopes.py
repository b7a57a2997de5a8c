"""Heat-kernel, Green-function and tail envelopes.

Every bound is a numeric function of (t, r) built from the derived tables:
the near-diagonal level phi_inv(t)^{-d}, the polynomial off-diagonal term
t / (r^d psi(r)), and an exponential factor whose rate is set by the inverse
of K or K_inf.  Multiplicative constants and exponential rates live in
EnvelopeParams; the paper-style estimates are comparability statements, so
the verification pipeline fits the constants instead of asserting them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .derived import DerivedScales
from .errors import DimensionTooSmall, MissingTable, RegimeViolation, SpecInvalid

_EXP_NEG_INF = 745.0  # exp(-x) underflows past this; treat as exact zero


@dataclass(frozen=True)
class EnvelopeParams:
    """Dimension and the non-explicit constants of the two-sided estimates."""
    d: int = 1
    c_up: float = 1.0
    c_low: float = 1.0
    a_U: float = 1.0
    a_L: float = 1.0
    delta1: float = 0.25

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise SpecInvalid("dimension must be a positive integer")
        if self.a_U > self.a_L:
            raise SpecInvalid("need a_U <= a_L (upper bounds decay no faster)")
        if not (0.0 < self.delta1 < 0.5):
            raise SpecInvalid("delta1 must lie in (0, 1/2)")
        if self.c_up <= 0 or self.c_low <= 0:
            raise SpecInvalid("multiplicative constants must be positive")


@dataclass
class HKEnvelope:
    """All envelope values at one (t, r) point."""
    t: float
    r: float
    upper_exp: float | None = None
    lower_basic: float | None = None
    upper_K: float | None = None
    lower_K: float | None = None
    gaussian_lower: float | None = None
    gaussian_upper: float | None = None
    tail_upper: float | None = None
    tail_lower: float | None = None
    extras: dict = field(default_factory=dict)


def _inv_table(ds: DerivedScales, variant: str):
    if variant == "K":
        if ds.K is None:
            raise MissingTable("K is unavailable (no delta > 1 certificate near zero)")
        return ds.K
    if variant == "K_inf":
        if ds.K_inf is None:
            raise MissingTable("K_inf is unavailable (no delta > 1 certificate near infinity)")
        return ds.K_inf
    raise SpecInvalid(f"unknown variant {variant!r}")


def _exp_rate(ds: DerivedScales, variant: str, c: float, t, r):
    """exp(-c * r / Kinv(t/r)) with saturation outside the table's value range.

    When t/r falls below the tabulated values the inverse is essentially zero
    and the factor underflows to 0; above the range the inverse is huge and
    the factor tends to 1.
    """
    K = _inv_table(ds, variant)
    shape = np.broadcast(np.asarray(t, dtype=float), np.asarray(r, dtype=float)).shape
    t_b, r_b = (np.atleast_1d(a).ravel()
                for a in np.broadcast_arrays(np.asarray(t, dtype=float),
                                             np.asarray(r, dtype=float)))
    x_b = t_b / r_b
    lo = K.v_left * 10.0 ** 0.25
    hi = K.v_right / 10.0 ** 0.25
    out = np.empty_like(x_b)
    below = x_b <= lo
    above = x_b >= hi
    mid = ~(below | above)
    out[below] = 0.0
    out[above] = 1.0
    if np.any(mid):
        from .tables import gen_inverse
        kinv = gen_inverse(K, x_b[mid])
        arg = c * r_b[mid] / kinv
        out[mid] = np.where(arg > _EXP_NEG_INF, 0.0, np.exp(-np.minimum(arg, _EXP_NEG_INF)))
    return out.reshape(shape)


def envelope_G(ds: DerivedScales, c: float, t, r, variant: str = "K"):
    """t/(r^d psi(r)) + phi_inv(t)^{-d} * exp(-c r / Kinv(t/r))."""
    d = ds.d
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    if np.any(t_arr <= 0) or np.any(r_arr <= 0):
        raise SpecInvalid("envelope_G needs t, r > 0")
    poly = t_arr / (r_arr ** d * ds.psi(r_arr))
    nd = ds.phi_inv(t_arr) ** (-d)
    out = poly + nd * _exp_rate(ds, variant, c, t_arr, r_arr)
    return float(out) if np.ndim(out) == 0 else out


def upper_exp(ds: DerivedScales, p: EnvelopeParams, t, r):
    """Exponential-form upper envelope with Gaussian-squared rate in r/phi_inv(t)."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    nd = ds.phi_inv(t_arr) ** (-p.d)
    with np.errstate(divide="ignore"):
        poly = np.where(r_arr > 0, t_arr / (np.where(r_arr > 0, r_arr, 1.0) ** p.d
                                            * ds.psi(np.where(r_arr > 0, r_arr, 1.0))), np.inf)
    gauss = np.exp(-p.a_U * (r_arr / ds.phi_inv(t_arr)) ** 2)
    out = p.c_up * np.minimum(nd, poly + nd * gauss)
    return float(out) if np.ndim(out) == 0 else out


def lower_basic(ds: DerivedScales, p: EnvelopeParams, t, r):
    """Near-diagonal / polynomial lower envelope with the delta1 split."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    pinv = ds.phi_inv(t_arr)
    nd = pinv ** (-p.d)
    near = r_arr <= p.delta1 * pinv
    safe_r = np.where(r_arr > 0, r_arr, 1.0)
    poly = t_arr / (safe_r ** p.d * ds.psi(safe_r))
    out = p.c_low * np.where(near, nd, poly)
    return float(out) if np.ndim(out) == 0 else out


def upper_K(ds: DerivedScales, p: EnvelopeParams, t, r, variant: str = "K"):
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    nd = ds.phi_inv(t_arr) ** (-p.d)
    out = np.where(r_arr > 0,
                   np.minimum(nd, envelope_G(ds, p.a_U, t_arr, np.where(r_arr > 0, r_arr, 1.0), variant)),
                   nd)
    out = p.c_up * out
    return float(out) if np.ndim(out) == 0 else out


def lower_K(ds: DerivedScales, p: EnvelopeParams, t, r, variant: str = "K"):
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    nd = ds.phi_inv(t_arr) ** (-p.d)
    out = np.where(r_arr > 0,
                   np.minimum(nd, envelope_G(ds, p.a_L, t_arr, np.where(r_arr > 0, r_arr, 1.0), variant)),
                   nd)
    out = p.c_low * out
    return float(out) if np.ndim(out) == 0 else out


def gaussian_form(ds: DerivedScales, p: EnvelopeParams, t, r):
    """Two-sided envelope with plain Gaussian rate (Bernstein-type kernels)."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    pinv = ds.phi_inv(t_arr)
    nd = pinv ** (-p.d)
    safe_r = np.where(r_arr > 0, r_arr, 1.0)
    poly = np.where(r_arr > 0, t_arr / (safe_r ** p.d * ds.psi(safe_r)), 0.0)
    low = p.c_low * np.minimum(nd, poly + nd * np.exp(-p.a_L * (r_arr / pinv) ** 2))
    up = p.c_up * np.minimum(nd, poly + nd * np.exp(-p.a_U * (r_arr / pinv) ** 2))
    if np.ndim(low) == 0:
        return float(low), float(up)
    return low, up


def green_envelope(ds: DerivedScales, p: EnvelopeParams, r):
    """Green-function envelope phi(r) / r^d, valid when d > min(beta2, 2)."""
    beta2 = ds.psi_cert.beta_upper
    if p.d <= min(beta2, 2.0):
        raise DimensionTooSmall(
            f"Green envelope needs d > min(beta2, 2) = {min(beta2, 2.0):.3g}, got d={p.d}")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SpecInvalid("green_envelope needs r > 0")
    out = ds.phi(r_arr) * r_arr ** (-p.d)
    return float(out) if np.ndim(out) == 0 else out


def tail_upper(ds: DerivedScales, p: EnvelopeParams, t, r, variant: str = "K"):
    """Upper bound on P(|X_t| > r), capped at 1."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise SpecInvalid("tail bounds need r >= 0")
    beta1 = ds.psi_cert.beta_lower
    safe_r = np.where(r_arr > 0, r_arr, 1.0)
    power = (ds.psi_inv(t_arr) / safe_r) ** (beta1 / 2.0)
    expf = _exp_rate(ds, variant, p.a_U, t_arr, safe_r)
    out = np.where(r_arr > 0, np.minimum(p.c_up * (power + expf), 1.0), 1.0)
    return float(out) if np.ndim(out) == 0 else out


def tail_lower(ds: DerivedScales, p: EnvelopeParams, t, r):
    """Lower bound on P(|X_t| > r): c_low * t/psi(r) beyond the near-diagonal."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SpecInvalid("tail_lower needs r > 0")
    far = r_arr >= p.delta1 * ds.phi_inv(t_arr)
    out = p.c_low * np.where(far, t_arr / ds.psi(r_arr), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_envelopes(ds: DerivedScales, p: EnvelopeParams, t: float, r: float,
                       variant: str = "auto", t_split: float | None = None) -> HKEnvelope:
    """Fill every envelope field at one point; variant 'auto' splits at t_split."""
    if variant == "auto":
        if t_split is None:
            t_split = ds.phi(1.0)
        variant = "K" if t <= t_split else "K_inf"
        if (variant == "K" and ds.K is None) or (variant == "K_inf" and ds.K_inf is None):
            variant = "K" if ds.K is not None else "K_inf"
    env = HKEnvelope(t=t, r=r)
    env.upper_exp = upper_exp(ds, p, t, r)
    env.lower_basic = lower_basic(ds, p, t, r)
    gl, gu = gaussian_form(ds, p, t, r)
    env.gaussian_lower, env.gaussian_upper = gl, gu
    env.upper_K = upper_K(ds, p, t, r, variant)
    env.lower_K = lower_K(ds, p, t, r, variant)
    env.tail_upper = tail_upper(ds, p, t, r, variant) if r > 0 else 1.0
    env.tail_lower = tail_lower(ds, p, t, r) if r > 0 else 0.0
    env.extras["variant"] = variant
    if r > 0:
        K = ds.K if variant == "K" else ds.K_inf
        if K is not None and K.v_left * 2 < t / r < K.v_right / 2:
            kinv = ds.K_inv_at(t / r) if variant == "K" else ds.K_inf_inv_at(t / r)
            env.extras["exp_ratio_F4"] = (r / kinv) / (r / ds.phi_inv(t)) ** 2
    return env


# ---------------------------------------------------------------------------
# closed-form oracles for the log-corrected catalog members


def closed_form_oracle(example_id: str, d: int, t, r, a_rate: float = 1.0,
                       psi=None) -> HKEnvelope:
    """Displayed comparability forms of the log-corrected examples.

    example_id is a catalog name: 'logzero:<alpha>' (valid for t < 1/2) or
    'loginf:<beta>' (valid for t >= 16, three regimes by beta vs 1).  The
    polynomial term uses the catalog kernel itself when psi is not given.
    """
    head, _, arg = example_id.partition(":")
    val = float(arg)
    t = float(t)
    r = float(r)
    if r < 0:
        raise SpecInvalid("oracle needs r >= 0")
    if psi is None:
        from .scale import kernel_from_name
        psi = kernel_from_name(example_id)

    if head == "logzero":
        alpha = val
        if not (0.0 < t < 0.5):
            raise RegimeViolation("logzero oracle is stated for t < 1/2")
        lg = math.log(1.0 / t)
        nd = t ** (-d / 2.0) * lg ** (d * (alpha - 1.0) / 2.0)
        if r == 0.0:
            value = nd
        else:
            poly = t / (r ** d * psi(r))
            value = min(nd, poly + nd * math.exp(-a_rate * r * r * lg ** (alpha - 1.0) / t))
    elif head == "loginf":
        beta = val
        if t < 16.0:
            raise RegimeViolation("loginf oracle is stated for t >= 16")
        if beta < 1.0:
            nd = t ** (-d / 2.0) * math.log(t) ** (-d * (1.0 - beta) / 2.0)
            rate_denom = t * math.log(t) ** (1.0 - beta)
        elif beta == 1.0:
            nd = t ** (-d / 2.0) * math.log(math.log(t)) ** (d / 2.0)
            rate_denom = t * math.log(math.log(t))
        else:
            nd = t ** (-d / 2.0)
            rate_denom = t
        if r == 0.0:
            value = nd
        else:
            poly = t / (r ** (d + 2) * math.log(1.0 + r) ** beta)
            value = min(nd, poly + nd * math.exp(-a_rate * r * r / rate_denom))
    else:
        raise SpecInvalid(f"no closed-form oracle for {example_id!r}")

    return HKEnvelope(t=t, r=r, upper_K=value, lower_K=value,
                      extras={"example_id": example_id, "near_diagonal": nd})
