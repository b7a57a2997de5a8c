"""Command-line interface.

Subcommands: analyze | envelope | simulate | verify | lil.  A JSON config
file can predefine every setting; command-line flags override file values.
All CSV output is UTF-8 with a header row, LF line endings and 17 significant
digits, so identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import sim
from .derived import build_derived_scales, check_scale_calculus, comparability_report
from .envelopes import EnvelopeParams, evaluate_envelopes
from .errors import HkeLabError
from .report import PRESETS, run_preset
from .scale import ScaleSpec, check_integrability, estimate_scaling, kernel_from_name, make_scale
from .sim import SimConfig, checkpoint_positions, estimate_exit_time, estimate_tail, lil_trace

SCHEMA = "hke-lab/1"


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.17g}"


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _parse_grid(text: str) -> list:
    """Either a comma list '0.5,1,2' or a log grid 'lo:hi:n'."""
    if ":" in text:
        lo, hi, n = text.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
    return [float(v) for v in text.split(",")]


def _cert_dict(cert) -> dict:
    return {"mode": cert.mode, "beta_lower": cert.beta_lower, "beta_upper": cert.beta_upper,
            "c_lower": cert.c_lower, "c_upper": cert.c_upper,
            "range": [cert.r_lo, cert.r_hi], "residual": cert.residual, "a": cert.a}


def _load_settings(args) -> dict:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    out = {
        "kernel": args.kernel or doc.get("kernel", "stable:1.5"),
        "d": doc.get("d", 1),
        "a": doc.get("a", 1.0),
        "envelope_params": doc.get("envelope_params", {}),
        "sim": doc.get("sim", {}),
        "verify": doc.get("verify", {}),
    }
    if getattr(args, "d", None):
        out["d"] = args.d
    if getattr(args, "seed", None) is not None:
        out["sim"]["base_seed"] = args.seed
    if getattr(args, "paths", None):
        out["sim"]["n_paths"] = args.paths
    return out


def _resolve_kernel(name_or_json: str):
    if name_or_json.strip().startswith("{"):
        return make_scale(ScaleSpec.from_json(name_or_json))
    if os.path.exists(name_or_json):
        with open(name_or_json) as fh:
            return make_scale(ScaleSpec.from_json(fh.read()))
    return kernel_from_name(name_or_json)


def cmd_analyze(settings: dict, out_dir: str) -> dict:
    psi = _resolve_kernel(settings["kernel"])
    integ = check_integrability(psi)
    if not integ.near_zero_finite:
        from .errors import IntegrabilityViolation
        raise IntegrabilityViolation(
            "int_0^1 s/psi(s) ds diverges; no derived scales exist for this kernel")
    ds = build_derived_scales(psi, d=settings["d"], a=settings["a"])
    lo, hi = ds.grid
    comp_zero = comparability_report(ds, (lo, min(1e-2, hi)))
    comp_inf = comparability_report(ds, (max(1e2, lo), hi))
    calculus = check_scale_calculus(ds, n_samples=4000)
    report = {
        "schema": SCHEMA,
        "kernel": settings["kernel"],
        "d": settings["d"],
        "integrability": {"near_zero_finite": integ.near_zero_finite,
                          "global_finite": integ.global_finite,
                          "i_zero": integ.i_zero,
                          "i_total": integ.i_total if math.isfinite(integ.i_total) else "inf"},
        "psi_cert": _cert_dict(ds.psi_cert),
        "delta_cert": _cert_dict(ds.delta_cert) if ds.delta_cert else None,
        "delta_cert_inf": _cert_dict(ds.delta_cert_inf) if ds.delta_cert_inf else None,
        "K_available": ds.K is not None,
        "K_inf_available": ds.K_inf is not None,
        "a_zero": ds.a_zero,
        "comparability_near_zero": {
            "comparable": comp_zero.comparable, "sup_ratio": comp_zero.sup_ratio,
            "inf_ratio": comp_zero.inf_ratio, "upper_index": comp_zero.upper_index,
            "phi_end_slope": comp_zero.phi_end_slope},
        "comparability_near_infty": {
            "comparable": comp_inf.comparable, "sup_ratio": comp_inf.sup_ratio,
            "inf_ratio": comp_inf.inf_ratio, "upper_index": comp_inf.upper_index,
            "phi_end_slope": comp_inf.phi_end_slope},
        "calculus": {"violations": calculus.violations,
                     "fitted_C3": calculus.fitted_C3, "fitted_C4": calculus.fitted_C4,
                     "delta_zero": calculus.delta_zero, "delta_inf": calculus.delta_inf,
                     "worst": calculus.worst()},
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ds.export_csv(os.path.join(out_dir, "tables.csv"))
    return report


def cmd_envelope(settings: dict, t_grid, r_grid, out_dir: str, variant: str = "auto") -> str:
    psi = _resolve_kernel(settings["kernel"])
    ds = build_derived_scales(psi, d=settings["d"], a=settings["a"])
    p = EnvelopeParams(d=settings["d"], **settings["envelope_params"])
    rows = []
    for t in t_grid:
        for r in r_grid:
            env = evaluate_envelopes(ds, p, float(t), float(r), variant=variant)
            rows.append((env.t, env.r, env.upper_exp, env.lower_basic, env.upper_K,
                         env.lower_K, env.gaussian_lower, env.gaussian_upper,
                         env.tail_upper, env.tail_lower,
                         env.extras.get("exp_ratio_F4", math.nan)))
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "envelope.csv")
    _write_csv(path, "t,r,upper_exp,lower_basic,upper_K,lower_K,gaussian_lower,"
               "gaussian_upper,tail_upper,tail_lower,exp_ratio_F4", rows)
    return path


def _sim_config(settings: dict) -> SimConfig:
    psi = _resolve_kernel(settings["kernel"])
    s = dict(settings["sim"])
    checkpoints = tuple(float(c) for c in s.get("checkpoints", (1.0,)))
    return SimConfig(
        kernel=psi.spec,
        d=settings["d"],
        eps=s.get("eps"),
        horizon=float(s.get("horizon", max(checkpoints))),
        n_paths=int(s.get("n_paths", 1000)),
        base_seed=int(s.get("base_seed", 12345)),
        dt_bridge=float(s.get("dt_bridge", 0.01)),
        checkpoints=checkpoints,
        exit_radii=tuple(float(r) for r in s.get("exit_radii", ())),
        compensate_small=bool(s.get("compensate_small", True)),
        jump_budget=float(s.get("jump_budget", 1e6)),
    )


def cmd_simulate(settings: dict, radii, out_dir: str) -> None:
    cfg = _sim_config(settings)
    sampler = sim.sampler_for(cfg)
    os.makedirs(out_dir, exist_ok=True)

    pos = checkpoint_positions(cfg, sampler)
    rows = []
    for pid in range(cfg.n_paths):
        for i, t in enumerate(cfg.checkpoints):
            rows.append((pid, t, *pos[pid, i]))
    cols = ",".join(f"x_{i + 1}" for i in range(cfg.d))
    _write_csv(os.path.join(out_dir, "checkpoints.csv"), f"path_id,t,{cols}", rows)

    if radii is None:
        ds = build_derived_scales(sampler.psi, d=cfg.d)
        pinv = ds.phi_inv(cfg.checkpoints[-1])
        radii = [float(v) for v in np.geomspace(pinv / 4.0, 8.0 * pinv, 9)]
    rows = []
    for t in cfg.checkpoints:
        for est in estimate_tail(cfg, t, radii, sampler):
            rows.append((t, est.meta["r"], est.value, est.stderr, est.n))
    _write_csv(os.path.join(out_dir, "tails.csv"), "t,r,p_hat,stderr,n", rows)

    if cfg.exit_radii:
        rows = []
        for est in estimate_exit_time(cfg, cfg.exit_radii, sampler):
            rows.append((est.meta["radius"], est.value, est.stderr, est.meta["censored_frac"]))
        _write_csv(os.path.join(out_dir, "exits.csv"),
                   "r,mean_tau,stderr,censored_frac", rows)


def cmd_lil(settings: dict, k_max: int, out_dir: str) -> None:
    s = dict(settings["sim"])
    cps = tuple(float(2 ** k) for k in range(3, k_max + 1))
    cfg = SimConfig(kernel=_resolve_kernel(settings["kernel"]).spec, d=settings["d"],
                    eps=s.get("eps", 0.999), horizon=float(2 ** k_max),
                    n_paths=int(s.get("n_paths", 200)),
                    base_seed=int(s.get("base_seed", 12345)),
                    dt_bridge=float(s.get("dt_bridge", 1.0)), checkpoints=cps)
    trace = lil_trace(cfg)
    os.makedirs(out_dir, exist_ok=True)
    rows = [(int(k), t, m, q1, q3) for k, t, m, q1, q3 in
            zip(trace.ks, trace.ts, trace.median, trace.q25, trace.q75)]
    _write_csv(os.path.join(out_dir, "lil.csv"), "k,t,median_stat,q25,q75", rows)


def cmd_verify(settings: dict, preset: str, paths: int | None, seed: int | None) -> int:
    overrides = dict(settings.get("verify", {}))
    if paths:
        overrides["n_paths"] = paths
    if seed is not None:
        overrides["seed"] = seed
    results = run_preset(preset, **overrides)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.seconds:8.1f}s  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return 0 if n_fail == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hke-lab",
                                 description="scale-function calculus, heat-kernel "
                                             "envelopes, and Monte Carlo verification")
    ap.add_argument("--config", help="JSON config file; flags override its values")
    ap.add_argument("--kernel", help="catalog name like stable:1.5, logzero:2.0, "
                                     "loginf:0.5, piecewise:1.5,2.5@1, or a spec JSON")
    ap.add_argument("--out-dir", default="out", help="output directory")
    ap.add_argument("--seed", type=int, help="base seed for simulation commands")
    ap.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    ap.add_argument("--threads", type=int, default=1, help="path fan-out workers")
    ap.add_argument("-d", "--d", type=int, help="spatial dimension")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", help="integrability, certificates, comparability, calculus")

    env = sub.add_parser("envelope", help="emit the envelope CSV on a (t, r) grid")
    env.add_argument("--t-grid", default="0.5,1,2")
    env.add_argument("--r-grid", default="0,0.5,1,2,4,8")
    env.add_argument("--variant", default="auto", choices=("auto", "K", "K_inf"))

    simp = sub.add_parser("simulate", help="checkpoints.csv, tails.csv, exits.csv")
    simp.add_argument("--r-grid", default=None, help="tail radii (default: around phi_inv)")

    ver = sub.add_parser("verify", help="run acceptance criteria presets")
    ver.add_argument("--preset", default="fast", choices=sorted(PRESETS))

    lil = sub.add_parser("lil", help="median running LIL statistic at dyadic times")
    lil.add_argument("--k-max", type=int, default=20)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sim.set_threads(args.threads)
    try:
        settings = _load_settings(args)
        if args.command == "analyze":
            report = cmd_analyze(settings, args.out_dir)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0
        if args.command == "envelope":
            path = cmd_envelope(settings, _parse_grid(args.t_grid),
                                _parse_grid(args.r_grid), args.out_dir, args.variant)
            print(path)
            return 0
        if args.command == "simulate":
            radii = _parse_grid(args.r_grid) if args.r_grid else None
            cmd_simulate(settings, radii, args.out_dir)
            print(args.out_dir)
            return 0
        if args.command == "lil":
            cmd_lil(settings, args.k_max, args.out_dir)
            print(os.path.join(args.out_dir, "lil.csv"))
            return 0
        if args.command == "verify":
            return cmd_verify(settings, args.preset, args.paths, args.seed)
        raise AssertionError(args.command)
    except HkeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
