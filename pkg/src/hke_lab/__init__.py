"""Scale-function calculus, heat-kernel envelopes, and a jump-process
Monte Carlo verifier for kernels with mixed polynomial growth."""

from .derived import (
    DerivedScales,
    build_derived_scales,
    build_K,
    build_K_inf,
    build_phi,
    check_scale_calculus,
    comparability_report,
)
from .envelopes import (
    EnvelopeParams,
    HKEnvelope,
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
from .report import CriterionResult, SandwichResult, run_preset, sandwich_check
from .scale import (
    ScaleFunction,
    ScaleSpec,
    ScalingCertificate,
    check_integrability,
    estimate_scaling,
    jump_density,
    kernel_from_name,
    make_scale,
)
from .sim import (
    JumpSampler,
    MCEstimate,
    SimConfig,
    build_sampler,
    estimate_density_radial,
    estimate_exit_time,
    estimate_tail,
    lil_trace,
    occupation_time,
    sample_jump_radius,
    simulate_path,
)
from .tables import MonotoneTable, gen_inverse

__version__ = "0.1.0"
