"""Monte Carlo simulation of the isotropic pure-jump process.

The process with radial jump density j(r) = 1/(r^d psi(r)) is simulated as a
compound Poisson process of jumps larger than a cutoff eps, plus (by default)
a Brownian motion whose per-coordinate variance rate matches the truncated
small-jump mass.  Jump radii are drawn by inverting the tail integral
T(r) = int_r^inf ds/(s psi(s)); directions are uniform on the sphere.

Reproducibility contract: every path owns a counter-based Philox stream keyed
by (base_seed, path_id), draws happen in a fixed order, and aggregations run
in path order with numpy's pairwise summation, so results are bit-identical
for a given (config, base_seed) regardless of how work is scheduled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CheckpointMissing,
    HorizonTooShort,
    IntegrabilityViolation,
    NotTransient,
    OutOfRange,
    SpecInvalid,
)
from .quadrature import segment_integrals
from .scale import (
    ScaleFunction,
    ScaleSpec,
    estimate_scaling,
    jump_tail_weight,
    make_scale,
    second_moment_weight,
)
from .tables import MonotoneTable, logspace_nodes, solve_decreasing

_M64 = (1 << 64) - 1

_THREADS = 1


def set_threads(n: int):
    """Worker threads for path fan-out; results are identical for any value."""
    global _THREADS
    _THREADS = max(1, int(n))


def _map_paths(fn, n_paths: int):
    """Run fn(path_id) for every path; fn writes into preallocated slots, so
    scheduling order cannot affect the aggregate."""
    if _THREADS == 1:
        for pid in range(n_paths):
            fn(pid)
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=_THREADS) as ex:
            list(ex.map(fn, range(n_paths)))


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2, 2 pi, 4 pi, ...)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n: int
    method: str                      # hit_fraction | time_average | histogram_cell
    meta: dict = field(default_factory=dict)


def wilson_estimate(hits: int, n: int) -> MCEstimate:
    """Hit fraction with Wilson-adjusted standard error (never zero at the edges)."""
    p_hat = hits / n
    p_t = (hits + 0.5) / (n + 1.0)
    se = math.sqrt(p_t * (1.0 - p_t) / (n + 1.0))
    return MCEstimate(value=p_hat, stderr=se, n=n, method="hit_fraction")


# ---------------------------------------------------------------------------
# sampler


@dataclass
class JumpSampler:
    psi: ScaleFunction
    d: int
    eps: float
    compensate_small: bool
    tail_table: MonotoneTable        # T(r) on [eps, r_hi], non-increasing
    lambda_eps: float                # large-jump intensity  c0(d) T(eps)
    sigma2_eps: float                # per-coordinate small-jump variance rate
    _q_logu: np.ndarray = None
    _q_logR: np.ndarray = None

    def sample_radii(self, u: np.ndarray) -> np.ndarray:
        """Fast inverse-tail sampling via the precomputed quantile table.

        Draws below the table floor (probability ~ T(r_hi)/T(eps), typically
        < 1e-10) are clipped to the largest representable radius.
        """
        lu = np.log(np.clip(u, math.exp(self._q_logu[0]), 1.0))
        return np.exp(np.interp(lu, self._q_logu, self._q_logR))


def build_sampler(psi: ScaleFunction, d: int, eps: float,
                  compensate_small: bool = True, per_decade: int = 64) -> JumpSampler:
    """Tabulate the jump tail and the cutoff decomposition constants."""
    if not (0.0 < eps < 1.0):
        raise SpecInvalid("cutoff eps must lie in (0, 1)")
    if int(d) != d or d < 1:
        raise SpecInvalid("dimension must be a positive integer")

    r_hi = max(psi.spec.r_max, eps * 1e10)
    nodes = logspace_nodes(eps, r_hi, per_decade)
    u = np.log(nodes)

    def g(uu):
        return 1.0 / psi.fn(np.exp(uu))

    t_top = jump_tail_weight(psi, r_hi)
    if math.isinf(t_top):
        raise IntegrabilityViolation("jump tail integral diverges at infinity")
    segs = segment_integrals(g, u, breaks=psi.log_breaks())
    T = np.concatenate([np.cumsum(segs[::-1])[::-1] + t_top, [t_top]])
    tail_table = MonotoneTable(nodes, T, direction="non_increasing")

    a_eps = second_moment_weight(psi, eps)
    if math.isinf(a_eps):
        raise IntegrabilityViolation("small-jump variance diverges; psi fails near zero")

    c0 = sphere_area(d)
    lam = c0 * float(T[0])
    sigma2 = (c0 / d) * a_eps

    u_floor = max(float(T[-1]) / float(T[0]) * 1.0000001, 1e-18)
    q_logu = np.linspace(math.log(u_floor), 0.0, 4096)
    q_R = solve_decreasing(tail_table, np.exp(q_logu) * float(T[0]))
    return JumpSampler(psi=psi, d=d, eps=eps, compensate_small=compensate_small,
                       tail_table=tail_table, lambda_eps=lam, sigma2_eps=sigma2,
                       _q_logu=q_logu, _q_logR=np.log(q_R))


def sample_jump_radius(sampler: JumpSampler, u):
    """Exact inverse-tail draw: the radius R with T(R) = u * T(eps)."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
        raise OutOfRange("u must lie strictly inside (0, 1)")
    v = u_arr * sampler.tail_table.v_left
    if np.any(v < sampler.tail_table.v_right):
        raise OutOfRange("u so small the radius exceeds the tabulated tail")
    out = np.atleast_1d(solve_decreasing(sampler.tail_table, v))
    return float(out[0]) if np.ndim(u) == 0 else out


def choose_eps(psi: ScaleFunction, d: int, horizon: float, budget: float = 1e6) -> float:
    """Smallest cutoff keeping the expected jump count per path within budget."""
    c0 = sphere_area(d)

    def lam(e):
        return c0 * jump_tail_weight(psi, e)

    hi = 0.999
    if lam(hi) * horizon > budget:
        return hi
    lo = 1e-6
    if lam(lo) * horizon <= budget:
        return lo
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if lam(mid) * horizon <= budget:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# configuration and the per-path driver


@dataclass(frozen=True)
class SimConfig:
    kernel: ScaleSpec
    d: int = 1
    eps: float | None = None          # None picks the budgeted default
    horizon: float = 1.0
    n_paths: int = 1000
    base_seed: int = 12345
    dt_bridge: float = 0.01
    checkpoints: tuple = ()
    exit_radii: tuple = ()
    compensate_small: bool = True
    jump_budget: float = 1e6

    def __post_init__(self):
        if self.n_paths < 1:
            raise SpecInvalid("n_paths must be >= 1")
        if self.horizon <= 0 or self.dt_bridge <= 0:
            raise SpecInvalid("horizon and dt_bridge must be positive")
        cps = tuple(float(c) for c in self.checkpoints)
        if any(c <= 0 or c > self.horizon for c in cps) or list(cps) != sorted(cps):
            raise SpecInvalid("checkpoints must be sorted in (0, horizon]")
        if self.eps is not None and not (0.0 < self.eps < 1.0):
            raise SpecInvalid("eps must lie in (0, 1)")

    def key(self) -> str:
        return json.dumps({
            "kernel": json.loads(self.kernel.to_json()), "d": self.d, "eps": self.eps,
            "horizon": self.horizon, "n_paths": self.n_paths, "base_seed": self.base_seed,
            "dt_bridge": self.dt_bridge, "checkpoints": list(self.checkpoints),
            "exit_radii": list(self.exit_radii), "compensate_small": self.compensate_small,
            "jump_budget": self.jump_budget}, sort_keys=True)


def sampler_for(config: SimConfig) -> JumpSampler:
    psi = make_scale(config.kernel)
    eps = config.eps
    if eps is None:
        eps = choose_eps(psi, config.d, config.horizon, config.jump_budget)
    return build_sampler(psi, config.d, eps, config.compensate_small)


_ROW_JUMP, _ROW_LATTICE, _ROW_MARK = 0, 1, 2


def _path_events(sampler: JumpSampler, config: SimConfig, path_id: int,
                 supervised: bool):
    """Event stream of one path: times, row types, positions after each event.

    Draw order is fixed (jump count, jump times, radii, directions, then the
    Gaussian bridge) so a path is a pure function of (base_seed, path_id).
    """
    rng = np.random.Generator(np.random.Philox(
        key=[config.base_seed & _M64, path_id & _M64]))
    T, d = config.horizon, sampler.d

    k = int(rng.poisson(sampler.lambda_eps * T)) if sampler.lambda_eps > 0 else 0
    jt = np.sort(rng.uniform(0.0, T, k))
    if k:
        radii = sampler.sample_radii(rng.uniform(size=k))
        if d == 1:
            dirs = (rng.integers(0, 2, k) * 2.0 - 1.0)[:, None]
        else:
            gau = rng.standard_normal((k, d))
            nrm = np.linalg.norm(gau, axis=1)
            nrm[nrm == 0.0] = 1.0
            dirs = gau / nrm[:, None]
        jumps = radii[:, None] * dirs
    else:
        jumps = np.zeros((0, d))

    marks = np.asarray(config.checkpoints + (T,), dtype=float)
    marks = np.unique(marks)
    if supervised:
        lattice = np.arange(config.dt_bridge, T + 0.5 * config.dt_bridge, config.dt_bridge)
        times = np.concatenate([jt, lattice, marks])
        rowtype = np.concatenate([
            np.full(k, _ROW_JUMP, dtype=np.int8),
            np.full(lattice.size, _ROW_LATTICE, dtype=np.int8),
            np.full(marks.size, _ROW_MARK, dtype=np.int8)])
    else:
        times = np.concatenate([jt, marks])
        rowtype = np.concatenate([np.full(k, _ROW_JUMP, dtype=np.int8),
                                  np.full(marks.size, _ROW_MARK, dtype=np.int8)])
    order = np.argsort(times, kind="stable")
    times = times[order]
    rowtype = rowtype[order]

    incr = np.zeros((times.size, d))
    incr[rowtype == _ROW_JUMP] = jumps
    if sampler.compensate_small and sampler.sigma2_eps > 0.0:
        gaps = np.diff(times, prepend=0.0)
        incr += rng.standard_normal((times.size, d)) * \
            np.sqrt(sampler.sigma2_eps * np.maximum(gaps, 0.0))[:, None]
    pos = np.cumsum(incr, axis=0)
    return times, rowtype, pos


@dataclass
class PathResult:
    checkpoints: np.ndarray          # (n_checkpoints, d) positions
    first_exit: dict                 # radius -> exit time (nan when censored)


def simulate_path(sampler: JumpSampler, config: SimConfig, path_id: int) -> PathResult:
    """One path: checkpoint positions plus first-exit times for config.exit_radii."""
    supervised = bool(config.exit_radii)
    times, rowtype, pos = _path_events(sampler, config, path_id, supervised)
    cps = np.asarray(config.checkpoints, dtype=float)
    idx = np.searchsorted(times, cps, side="right") - 1
    cp_pos = pos[idx] if cps.size else np.zeros((0, sampler.d))

    first_exit = {}
    if config.exit_radii:
        nrm = np.linalg.norm(pos, axis=1)
        for rad in config.exit_radii:
            hit = np.flatnonzero(nrm > rad)
            if hit.size == 0:
                first_exit[rad] = math.nan
            else:
                i = int(hit[0])
                tau = times[i]
                if rowtype[i] != _ROW_JUMP:
                    # crossing happened inside the preceding lattice gap
                    tau = max(tau - 0.5 * config.dt_bridge, 0.5 * tau)
                first_exit[rad] = float(tau)
    return PathResult(checkpoints=cp_pos, first_exit=first_exit)


# ---------------------------------------------------------------------------
# estimators (all deterministic in path order)

_POSITION_CACHE: dict = {}


def checkpoint_positions(config: SimConfig, sampler: JumpSampler | None = None) -> np.ndarray:
    """(n_paths, n_checkpoints, d) positions; memoized on the exact config."""
    key = config.key()
    if key in _POSITION_CACHE:
        return _POSITION_CACHE[key]
    if sampler is None:
        sampler = sampler_for(config)
    out = np.empty((config.n_paths, len(config.checkpoints), sampler.d))
    cfg = replace(config, exit_radii=())

    def one(pid):
        out[pid] = simulate_path(sampler, cfg, pid).checkpoints

    _map_paths(one, config.n_paths)
    if len(_POSITION_CACHE) > 4:
        _POSITION_CACHE.clear()
    _POSITION_CACHE[key] = out
    return out


def _checkpoint_index(config: SimConfig, t: float) -> int:
    for i, c in enumerate(config.checkpoints):
        if math.isclose(c, t, rel_tol=1e-12):
            return i
    raise CheckpointMissing(f"t={t:g} is not one of the configured checkpoints")


def estimate_tail(config: SimConfig, t: float, radii,
                  sampler: JumpSampler | None = None) -> list[MCEstimate]:
    """Hit fractions P(|X_t| > r) with Wilson standard errors."""
    i = _checkpoint_index(config, t)
    pos = checkpoint_positions(config, sampler)
    norms = np.linalg.norm(pos[:, i, :], axis=1)
    out = []
    for r in radii:
        if r <= 0.0:
            est = MCEstimate(1.0, 0.0, config.n_paths, "hit_fraction")
        else:
            est = wilson_estimate(int(np.sum(norms > r)), config.n_paths)
        out.append(replace(est, meta={"t": t, "r": float(r)}))
    return out


@dataclass
class HistogramResult:
    edges: np.ndarray
    cells: list                      # MCEstimate per shell, per unit volume
    underflow: float                 # mass below edges[0]
    overflow: float                  # mass above edges[-1]

    def masses(self) -> np.ndarray:
        d = self.cells[0].meta["d"]
        vols = ball_volume(d) * np.diff(self.edges ** d)
        return np.array([c.value for c in self.cells]) * vols


def estimate_density_radial(config: SimConfig, t: float, bins,
                            sampler: JumpSampler | None = None) -> HistogramResult:
    """Radial density histogram of X_t per unit volume on log-spaced shells."""
    i = _checkpoint_index(config, t)
    pos = checkpoint_positions(config, sampler)
    norms = np.linalg.norm(pos[:, i, :], axis=1)
    n = norms.size
    if isinstance(bins, int):
        posn = norms[norms > 0]
        lo = float(np.percentile(posn, 1.0))
        hi = float(np.percentile(posn, 99.5))
        edges = np.geomspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(norms, edges)
    d = config.d
    vols = ball_volume(d) * np.diff(edges ** d)
    cells = []
    for j, c in enumerate(counts):
        val = c / (n * vols[j])
        se = math.sqrt(c * (1.0 - c / n)) / (n * vols[j]) if c else 1.0 / (n * vols[j])
        cells.append(MCEstimate(val, se, n, "histogram_cell",
                                meta={"r_lo": edges[j], "r_hi": edges[j + 1],
                                      "r_mid": math.sqrt(edges[j] * edges[j + 1]),
                                      "count": int(c), "d": d}))
    return HistogramResult(edges=edges, cells=cells,
                           underflow=float(np.mean(norms < edges[0])),
                           overflow=float(np.mean(norms > edges[-1])))


def estimate_exit_time(config: SimConfig, radii,
                       sampler: JumpSampler | None = None) -> list[MCEstimate]:
    """Mean first-exit times from centered balls; censored paths excluded and counted."""
    cfg = replace(config, exit_radii=tuple(float(r) for r in radii))
    if sampler is None:
        sampler = sampler_for(cfg)
    taus = np.empty((cfg.n_paths, len(cfg.exit_radii)))

    def one(pid):
        res = simulate_path(sampler, cfg, pid)
        taus[pid] = [res.first_exit[r] for r in cfg.exit_radii]

    _map_paths(one, cfg.n_paths)
    out = []
    for j, r in enumerate(cfg.exit_radii):
        col = taus[:, j]
        censored = float(np.mean(np.isnan(col)))
        if censored >= 0.05:
            raise HorizonTooShort(
                f"{100 * censored:.1f}% of paths never left B(0, {r:g}) by t={cfg.horizon:g}")
        ok = col[~np.isnan(col)]
        out.append(MCEstimate(float(np.mean(ok)), float(np.std(ok) / math.sqrt(ok.size)),
                              int(ok.size), "time_average",
                              meta={"radius": r, "censored_frac": censored}))
    return out


def occupation_time(config: SimConfig, radius: float,
                    sampler: JumpSampler | None = None) -> MCEstimate:
    """Total time in B(0, radius) up to the horizon, lattice-sampled."""
    if radius <= 0.0:
        return MCEstimate(0.0, 0.0, config.n_paths, "time_average", meta={"radius": radius})
    if sampler is None:
        sampler = sampler_for(config)
    cert = estimate_scaling(sampler.psi, (1e-6, 1e6), mode="global")
    if config.d <= min(cert.beta_upper, 2.0):
        raise NotTransient(
            f"occupation needs d > min(beta2, 2) = {min(cert.beta_upper, 2.0):.3g}")
    occ = np.empty(config.n_paths)
    inside_at_end = np.zeros(config.n_paths, dtype=bool)
    dt = config.dt_bridge

    def one(pid):
        times, rowtype, pos = _path_events(sampler, config, pid, supervised=True)
        nrm2 = np.einsum("ij,ij->i", pos, pos)
        lat = rowtype == _ROW_LATTICE
        occ[pid] = dt * float(np.sum(nrm2[lat] < radius * radius))
        inside_at_end[pid] = nrm2[-1] < (2.0 * radius) ** 2

    _map_paths(one, config.n_paths)
    return MCEstimate(float(np.mean(occ)), float(np.std(occ) / math.sqrt(config.n_paths)),
                      config.n_paths, "time_average",
                      meta={"radius": radius,
                            "end_inside_frac": float(np.mean(inside_at_end))})


@dataclass
class LilTrace:
    ks: np.ndarray
    ts: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    per_path: np.ndarray             # (n_paths, n_checkpoints) running statistic


def lil_trace(config: SimConfig, sampler: JumpSampler | None = None) -> LilTrace:
    """Per-path running max of |X_s| / sqrt(s loglog s) at dyadic checkpoints."""
    cps = np.asarray(config.checkpoints, dtype=float)
    if cps.size < 2 or not np.allclose(cps[1:] / cps[:-1], 2.0, rtol=1e-9):
        raise SpecInvalid("lil_trace needs dyadic checkpoints t = 2^k")
    if cps[0] < 4.0:
        raise SpecInvalid("the normalization sqrt(s loglog s) needs s >= 4")
    if sampler is None:
        sampler = sampler_for(config)
    ks = np.round(np.log2(cps)).astype(int)
    per_path = np.empty((config.n_paths, cps.size))

    def one(pid):
        times, rowtype, pos = _path_events(sampler, config, pid, supervised=True)
        valid = times >= 4.0
        tv = times[valid]
        nrm = np.linalg.norm(pos[valid], axis=1)
        stat = nrm / np.sqrt(tv * np.log(np.log(tv)))
        run = np.maximum.accumulate(stat) if stat.size else np.zeros(1)
        idx = np.searchsorted(tv, cps, side="right") - 1
        per_path[pid] = run[np.maximum(idx, 0)]

    _map_paths(one, config.n_paths)
    return LilTrace(ks=ks, ts=cps,
                    median=np.median(per_path, axis=0),
                    q25=np.percentile(per_path, 25.0, axis=0),
                    q75=np.percentile(per_path, 75.0, axis=0),
                    per_path=per_path)
