"""Experiment driver: seeded fields, refinement ladders, sigma sweeps, reports.

Each experiment writes a CSV of inequality evaluations (one row per
evaluation: name, h, dt, lhs, rhs_unconstant, empirical_c, seed; floats with
17 significant digits), a deterministic JSON summary, and a meta file that
quarantines wall-clock data so reruns with the same configuration produce
byte-identical CSV bodies.  Exit code 0 means every hard assertion passed.

Samples and ladder levels are processed in a fixed order and merged by
sorted keys, so results do not depend on scheduling.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .doublephase import (
    CoefficientFn,
    FluxModel,
    bump_coefficient,
    checkerboard_coefficient,
    constant_coefficient,
    sampled_coefficient,
)
from .errors import ConfigInvalid, InsufficientPoints
from .estimates import (
    CylinderSchedule,
    EstimateReport,
    caccioppoli_sides,
    degiorgi_sequence,
    embedding_sides,
    levelset_chebyshev,
    supbound_sides,
)
from .exponents import ExponentSet, build_exponents, level_magnitude
from .mesh import (
    Cylinder,
    Field,
    SpaceTimeGrid,
    build_cutoffs,
    cell_average,
    gradient_slice,
    load_field,
    truncate,
)
from .solver import SolverConfig, SolveTrace, solve_cylinder

CSV_HEADER = "name,h,dt,lhs,rhs_unconstant,empirical_c,seed"

_EXPERIMENTS = ("embedding", "caccioppoli", "supbound", "degiorgi", "convergence")

# hard-assertion slack for the level-set lower bound (rounding only)
_CHEBYSHEV_RTOL = 1e-12


def f17(x: float) -> str:
    """Decimal float with 17 significant digits (exact float64 round trip)."""
    return format(float(x), ".17g")


# ------------------------------------------------------------ random fields


@dataclass(frozen=True)
class RandomFieldSpec:
    """Truncated Fourier sum with seeded coefficients decaying in frequency.

    Modes 0..M per axis; each mode tuple gets a standard-normal coefficient
    scaled by (1 + |k|^2)^(-decay/2).  decay = inf keeps only the constant
    mode.  Generation is bitwise deterministic per (seed, grid), and the
    coefficients do not depend on the grid, so refining the grid samples the
    same smooth function.
    """

    fourier_modes: int = 2
    decay: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.fourier_modes < 1:
            raise ValueError(f"need fourier_modes >= 1, got {self.fourier_modes}")


def generate_field(spec: RandomFieldSpec, grid: SpaceTimeGrid) -> Field:
    """Sample the seeded Fourier sum on all grid nodes and slices."""
    m = spec.fourier_modes
    n_ax = grid.dim + 1
    rng = np.random.default_rng(spec.seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_ax, m + 1))
    coeffs = rng.standard_normal(size=(m + 1,) * n_ax)

    ks = np.arange(m + 1, dtype=float)
    if grid.dim == 1:
        kx, kt = np.meshgrid(ks, ks, indexing="ij")
        wts = (1.0 + kx**2 + kt**2) ** (-spec.decay / 2.0)
    else:
        kx, ky, kt = np.meshgrid(ks, ks, ks, indexing="ij")
        wts = (1.0 + kx**2 + ky**2 + kt**2) ** (-spec.decay / 2.0)
    amps = coeffs * wts

    def basis(axis: int, coords: np.ndarray) -> list[np.ndarray]:
        return [
            np.cos(np.pi * k * coords + phases[axis, int(k)]) for k in range(m + 1)
        ]

    tau = (grid.times - (grid.t_end - grid.time_length)) / grid.time_length
    tb = basis(grid.dim, tau)
    out = np.zeros((grid.nt,) + grid.spatial_shape)
    if grid.dim == 1:
        xi = (grid.axis_nodes(0) - grid.x_center[0]) / grid.radius
        xb = basis(0, xi)
        for i in range(m + 1):
            for j in range(m + 1):
                a = amps[i, j]
                if a == 0.0:
                    continue
                out += a * tb[j][:, None] * xb[i][None, :]
    else:
        xi = (grid.axis_nodes(0) - grid.x_center[0]) / grid.radius
        ups = (grid.axis_nodes(1) - grid.x_center[1]) / grid.radius
        xb = basis(0, xi)
        yb = basis(1, ups)
        for j in range(m + 1):
            plane = np.zeros(grid.spatial_shape)
            for i1 in range(m + 1):
                for i2 in range(m + 1):
                    a = amps[i1, i2, j]
                    if a == 0.0:
                        continue
                    plane += a * xb[i1][:, None] * yb[i2][None, :]
            out += tb[j][:, None, None] * plane[None, :, :]
    return Field(grid, out)


# ------------------------------------------------------------- coefficients


def make_coefficient(spec: dict, grid: SpaceTimeGrid | None = None) -> CoefficientFn:
    """Build one of the built-in coefficients from a config mapping."""
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant_coefficient(float(spec.get("value", spec.get("a_sup", 0.0))))
    if kind == "bump":
        return bump_coefficient(
            float(spec.get("a_sup", 1.0)),
            float(spec.get("threshold", 0.0)),
            float(spec.get("width", 0.5)),
        )
    if kind == "checkerboard":
        if grid is not None:
            default_origin = tuple(c - grid.radius for c in grid.x_center) + (
                grid.t_end - grid.time_length,
            )
            default_block = grid.radius / 2.0
            default_block_t = grid.time_length / 4.0
        else:
            default_origin = (0.0, 0.0, 0.0)
            default_block = 0.25
            default_block_t = 0.25
        return checkerboard_coefficient(
            float(spec.get("a_sup", 1.0)),
            float(spec.get("block", default_block)),
            float(spec.get("block_t", default_block_t)),
            tuple(spec.get("origin", default_origin)),
        )
    if kind == "sampled":
        f = load_field(spec["path"])
        return sampled_coefficient(f, spec.get("a_sup"))
    if kind == "sampled_fourier":
        if grid is None:
            raise ConfigInvalid("sampled_fourier coefficient needs a grid")
        f = generate_field(
            RandomFieldSpec(
                int(spec.get("modes", 2)),
                float(spec.get("decay", 2.0)),
                int(spec.get("seed", 0)),
            ),
            grid,
        )
        a_sup = float(spec.get("a_sup", 1.0))
        lo, hi = float(np.min(f.values)), float(np.max(f.values))
        vals = (
            (f.values - lo) / (hi - lo) * a_sup if hi > lo else np.zeros_like(f.values)
        )
        return sampled_coefficient(Field(grid, vals), a_sup)
    raise ConfigInvalid(f"unknown coefficient kind {kind!r}")


# ------------------------------------------------------------ configuration


@dataclass
class ExperimentConfig:
    """Everything one experiment run needs; JSON-serializable."""

    experiment: str
    n: int = 2
    p: float = 2.0
    q: float = 2.5
    nu: float = 1.0
    ell_bound: float = 1.0
    a_sup: float = 1.0
    coefficient: dict = dc_field(default_factory=lambda: {"kind": "bump", "a_sup": 1.0})
    ladder: list = dc_field(default_factory=lambda: [[17, 9], [33, 17], [65, 33], [129, 65]])
    sigma_list: list = dc_field(default_factory=lambda: [0.3, 0.45, 0.6, 0.75, 0.9])
    seed: int = 20260809
    sample_count: int = 200
    fourier_modes: int = 2
    fourier_decay: float = 2.0
    radius: float = 1.0
    time_length: float = 1.0
    rho: float = 0.8
    depth: int = 8
    c_star: float = 2.0
    scales: list = dc_field(default_factory=lambda: [1e-3, 1.0, 1e3])
    scale_level: int | None = None
    scale_tol: float = 1e-10
    stability_tol: float | None = None
    trend_tol: float | None = 0.10
    level_fractions: list = dc_field(default_factory=lambda: [0.25, 0.45, 0.65, 0.85])
    cutoff_fractions: list = dc_field(default_factory=lambda: [0.5, 0.75])
    heat_nx: list = dc_field(default_factory=lambda: [17, 33, 65, 129])
    barenblatt_nx: list = dc_field(default_factory=lambda: [31, 61, 121])
    barenblatt_dt_coeff: float = 10.0
    assert_orders: bool = True
    svg: bool = False
    schema_version: int = 1

    def __post_init__(self):
        if self.experiment not in _EXPERIMENTS:
            raise ConfigInvalid(
                f"experiment must be one of {_EXPERIMENTS}, got {self.experiment!r}"
            )
        if not self.ladder:
            raise ConfigInvalid("ladder must not be empty")
        for entry in self.ladder:
            if len(entry) != 2 or entry[0] < 3 or entry[1] < 2:
                raise ConfigInvalid(f"bad ladder entry {entry} (need nx >= 3, nt >= 2)")
        if self.sample_count < 1:
            raise ConfigInvalid("sample_count must be >= 1")
        for s in self.sigma_list:
            if not 0.0 < s < 1.0:
                raise ConfigInvalid(f"sigma values must lie in (0,1), got {s}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigInvalid("config needs an 'experiment' key")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigInvalid(str(err)) from err

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def exponents(self, strict: bool = True) -> ExponentSet:
        return build_exponents(
            self.n, self.p, self.q, self.nu, self.ell_bound, self.a_sup, strict=strict
        )


def default_config(experiment: str) -> ExperimentConfig:
    """Per-experiment defaults used by the CLI when no config file is given."""
    cfg = ExperimentConfig(experiment=experiment)
    if experiment == "embedding":
        cfg = replace(cfg, coefficient={"kind": "constant", "value": 0.0},
                      stability_tol=0.05)
    elif experiment == "caccioppoli":
        cfg = replace(cfg, ladder=[[17, 53], [33, 206], [65, 820]], sample_count=1)
    elif experiment == "supbound":
        cfg = replace(cfg, ladder=[[17, 53], [33, 206], [65, 820]], sample_count=1,
                      stability_tol=0.20)
    elif experiment == "degiorgi":
        cfg = replace(cfg, ladder=[[65, 820]], sample_count=1)
    elif experiment == "convergence":
        cfg = replace(cfg, ladder=[[17, 9]])
    return cfg


# ------------------------------------------------------------------ fitting


def fit_blowup_exponent(reports: list[EstimateReport]) -> float:
    """Least-squares slope of log(required constant) against log(1 - sigma).

    The required constant of a sup-bound report is lhs / rhs_sans_sigma, the
    multiplier needed in front of the sigma-free part of the bound.  Needs
    at least 4 distinct sigma values with nonzero data.
    """
    per_sigma: dict[float, float] = {}
    for r in reports:
        sigma = r.extra.get("sigma")
        core = r.extra.get("rhs_sans_sigma")
        if sigma is None or core is None or core <= 0.0 or r.lhs <= 0.0:
            continue
        c_req = r.lhs / core
        per_sigma[sigma] = max(per_sigma.get(sigma, 0.0), c_req)
    if len(per_sigma) < 4:
        raise InsufficientPoints(
            f"need >= 4 distinct sigma values with nonzero data, got {len(per_sigma)}"
        )
    sigmas = sorted(per_sigma)
    x = np.log([1.0 - s for s in sigmas])
    y = np.log([per_sigma[s] for s in sigmas])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# ----------------------------------------------------------------- solves


def _estimate_grid(cfg: ExperimentConfig, exps: ExponentSet, nx: int, nt: int) -> SpaceTimeGrid:
    return SpaceTimeGrid(
        dim=cfg.n,
        nx=nx,
        nt=nt,
        center=(0.0,) * cfg.n + (0.0,),
        radius=cfg.rho,
        time_length=cfg.rho**exps.tilde_p,
    )


def _solve_for_estimates(cfg: ExperimentConfig, exps: ExponentSet, nx: int, nt: int):
    """Solve on the intrinsic cylinder with seeded smooth initial data."""
    grid = _estimate_grid(cfg, exps, nx, nt)
    coeff = make_coefficient(cfg.coefficient, grid)
    flux = FluxModel(exps, coeff)
    spec = RandomFieldSpec(cfg.fourier_modes, cfg.fourier_decay, cfg.seed)
    initial = generate_field(spec, grid).values[0]
    u, trace = solve_cylinder(initial, flux, grid, SolverConfig(), bc=None)
    return grid, flux, u, trace


# -------------------------------------------------------------- experiments


def _run_embedding(cfg: ExperimentConfig):
    exps = cfg.exponents()
    rows: list[EstimateReport] = []
    failures: list[str] = []
    per_level_max = []
    cyl = Cylinder((0.0,) * cfg.n, 0.0, cfg.radius, cfg.time_length)
    scale_level = (
        cfg.scale_level
        if cfg.scale_level is not None
        else max(0, len(cfg.ladder) - 2)
    )
    scale_max_dev = 0.0

    for li, (nx, nt) in enumerate(cfg.ladder):
        grid = SpaceTimeGrid(
            dim=cfg.n, nx=nx, nt=nt,
            center=(0.0,) * cfg.n + (0.0,),
            radius=cfg.radius, time_length=cfg.time_length,
        )
        level_max = 0.0
        for i in range(cfg.sample_count):
            seed_i = cfg.seed + i
            f = generate_field(
                RandomFieldSpec(cfg.fourier_modes, cfg.fourier_decay, seed_i), grid
            )
            rep = embedding_sides(f, cyl, exps, seed=seed_i)
            rows.append(rep)
            if not math.isfinite(rep.empirical_c):
                failures.append(f"embedding: non-finite empirical_c at seed {seed_i}")
            level_max = max(level_max, rep.empirical_c)
            if li == scale_level:
                base = rep.empirical_c
                for lam in cfg.scales:
                    if lam == 1.0:
                        continue
                    scaled = Field(grid, lam * f.values)
                    rep_s = embedding_sides(scaled, cyl, exps, seed=seed_i)
                    dev = abs(rep_s.empirical_c / base - 1.0)
                    scale_max_dev = max(scale_max_dev, dev)
        per_level_max.append(level_max)

    if scale_max_dev > cfg.scale_tol:
        failures.append(
            f"embedding: scale invariance deviation {scale_max_dev} > {cfg.scale_tol}"
        )
    stability = None
    if len(per_level_max) >= 2 and per_level_max[-2] > 0.0:
        stability = abs(per_level_max[-1] / per_level_max[-2] - 1.0)
        if cfg.stability_tol is not None and stability > cfg.stability_tol:
            failures.append(
                f"embedding: last-two-level max_c drift {stability} > {cfg.stability_tol}"
            )
    summary = {
        "per_level_max_c": per_level_max,
        "scale_max_dev": scale_max_dev,
        "scale_level": scale_level,
        "stability_rel": stability,
        "theta": rows[0].extra["theta"] if rows else None,
    }
    return rows, summary, failures


def _quantile_levels(u: Field, cyl: Cylinder, fractions: list[float]):
    """Data-driven truncation levels per sign, plus one empty level each."""
    grid = u.grid
    tmask = grid.slice_window_mask(cyl.t_start, cyl.t_end)
    smask = grid.node_ball_mask(cyl.radius, cyl.x_center)
    sub = u.values[tmask][:, smask]
    lo, hi = float(np.min(sub)), float(np.max(sub))
    span = hi - lo
    pad = 0.25 * span + 1e-9
    plus = [lo + f * span for f in fractions] + [hi + pad]
    minus = [hi - f * span for f in fractions] + [lo - pad]
    return plus, minus


def _run_caccioppoli(cfg: ExperimentConfig):
    exps = cfg.exponents()
    rows: list[EstimateReport] = []
    failures: list[str] = []
    per_level_max = []
    levels = None

    for nx, nt in cfg.ladder:
        grid, flux, u, _ = _solve_for_estimates(cfg, exps, nx, nt)
        outer = grid.cylinder()
        if levels is None:
            levels = _quantile_levels(u, outer, cfg.level_fractions)
        level_max = 0.0
        for frac in cfg.cutoff_fractions:
            inner = outer.scaled(frac * outer.radius, frac * outer.time_length)
            cut = build_cutoffs(outer, inner)
            for sign, ks in zip(("plus", "minus"), levels):
                for k in ks:
                    rep = caccioppoli_sides(u, flux, k, sign, outer, cut, seed=cfg.seed)
                    rep.extra["cutoff_fraction"] = frac
                    rows.append(rep)
                    if rep.empty:
                        if rep.lhs != 0.0 or rep.rhs_unconstant != 0.0:
                            failures.append(
                                f"caccioppoli: empty level set at k={k} but sides "
                                f"({rep.lhs}, {rep.rhs_unconstant}) != 0"
                            )
                    elif math.isfinite(rep.empirical_c):
                        level_max = max(level_max, rep.empirical_c)
        per_level_max.append(level_max)

    if cfg.trend_tol is not None:
        for a, b in zip(per_level_max, per_level_max[1:]):
            if b > (1.0 + cfg.trend_tol) * a:
                failures.append(
                    f"caccioppoli: max empirical_c rose {a} -> {b} beyond "
                    f"{100 * cfg.trend_tol:.0f}% under refinement"
                )
    summary = {"per_level_max_c": per_level_max, "levels": levels}
    return rows, summary, failures


def _run_supbound(cfg: ExperimentConfig):
    exps = cfg.exponents()
    rows: list[EstimateReport] = []
    failures: list[str] = []
    by_level: list[dict] = []

    for nx, nt in cfg.ladder:
        grid, flux, u, _ = _solve_for_estimates(cfg, exps, nx, nt)
        z0 = (0.0,) * cfg.n + (0.0,)
        level_data = {}
        for convention in ("proof", "theorem"):
            sweep = []
            for sigma in cfg.sigma_list:
                rep = supbound_sides(u, z0, cfg.rho, sigma, exps, convention, seed=cfg.seed)
                rows.append(rep)
                sweep.append(rep)
            for r1, r2 in zip(sweep, sweep[1:]):
                if r1.lhs > r2.lhs:
                    failures.append(
                        f"supbound: lhs not monotone in sigma "
                        f"({r1.extra['sigma']}: {r1.lhs} > {r2.extra['sigma']}: {r2.lhs})"
                    )
            level_data[convention] = {r.extra["sigma"]: r.empirical_c for r in sweep}
        by_level.append(level_data)

    if cfg.stability_tol is not None and len(by_level) >= 2:
        prev, last = by_level[-2], by_level[-1]
        for convention in ("proof", "theorem"):
            for sigma, c_last in last[convention].items():
                c_prev = prev[convention][sigma]
                if c_prev > 0.0 and abs(c_last / c_prev - 1.0) > cfg.stability_tol:
                    failures.append(
                        f"supbound: empirical_c drift {abs(c_last / c_prev - 1.0):.3f} "
                        f"> {cfg.stability_tol} at sigma={sigma}, {convention}"
                    )

    finest_proof = [
        r for r in rows
        if r.extra.get("convention") == "proof" and r.h == rows[-1].h
    ]
    try:
        slope = fit_blowup_exponent(finest_proof)
    except InsufficientPoints:
        slope = None
    predicted = exps.q / (exps.q - exps.tilde_p)
    summary = {
        "by_level": by_level,
        "fitted_blowup_slope": slope,
        "predicted_blowup_exponent": predicted,
    }
    return rows, summary, failures


def _y_zero(u: Field, sign: str, rho: float, tp: float, cyl: Cylinder) -> float:
    grid = u.grid
    trunc = truncate(u, 0.0, sign)
    sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
    tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
    meas = float(np.sum(sw)) * float(np.sum(tw))
    total = 0.0
    for j in range(grid.nt):
        if tw[j] == 0.0:
            continue
        total += tw[j] * float(np.sum(sw * (cell_average(trunc.values[j]) / rho) ** tp))
    return total / meas


def _smallness_product(c_emp: float, k: float, sigma: float, y0: float, exps: ExponentSet) -> float:
    pref = (abs(k) ** (exps.q - exps.tilde_p) / (1.0 - sigma) ** exps.q) ** (
        1.0 + exps.vartheta
    )
    return c_emp * exps.lam * pref * y0**exps.vartheta


def _run_degiorgi(cfg: ExperimentConfig):
    exps = cfg.exponents()
    rows: list[EstimateReport] = []
    failures: list[str] = []
    nx, nt = cfg.ladder[-1]
    grid, flux, u, _ = _solve_for_estimates(cfg, exps, nx, nt)
    sigma = cfg.sigma_list[0]
    tp = exps.tilde_p
    q0 = Cylinder((0.0,) * cfg.n, 0.0, cfg.rho, cfg.rho**tp)
    sup_u = float(np.max(np.abs(u.values)))
    summary: dict = {"sigma": sigma, "rho": cfg.rho, "lam": exps.lam, "signs": {}}

    for sign, ksign in (("plus", 1.0), ("minus", -1.0)):
        y0 = _y_zero(u, sign, cfg.rho, tp, q0)
        entry: dict = {"y0": y0}
        if y0 == 0.0:
            entry["trivial"] = True
            summary["signs"][sign] = entry
            continue
        c_star = cfg.c_star
        achieved = False
        for _ in range(60):
            k = ksign * level_magnitude(exps, sigma, y0, c_star)
            sched = CylinderSchedule(
                sigma=sigma, rho=cfg.rho, k=k, depth=cfg.depth, exps=exps,
                x_center=(0.0,) * cfg.n, t_end=0.0,
            )
            trace = degiorgi_sequence(u, sched, exps)
            finite_consts = [c for c in trace.recursion_constants if math.isfinite(c)]
            c_emp = max(finite_consts) if finite_consts else 0.0
            smallness = _smallness_product(c_emp, k, sigma, trace.y0, exps)
            if smallness <= 1.0:
                achieved = True
                break
            c_star *= 2.0
        if not achieved:
            failures.append(
                f"degiorgi[{sign}]: smallness condition not reached "
                f"(last product {smallness} at c_star={c_star})"
            )
        for n, (yn, ok) in enumerate(zip(trace.y, trace.decay_flags)):
            bound = trace.y0 / exps.lam**n
            rep = EstimateReport(
                name=f"degiorgi-decay-{sign}",
                lhs=yn,
                rhs_unconstant=bound,
                empirical_c=(yn / bound) if bound > 0.0 else 0.0,
                grid=f"dim={grid.dim} nx={grid.nx} nt={grid.nt}",
                params=exps,
                seed=cfg.seed,
                h=grid.h,
                dt=grid.dt,
                extra={"stage": n, "k": k},
            )
            rows.append(rep)
            if not ok:
                failures.append(
                    f"degiorgi[{sign}]: decay Y_{n} = {yn} exceeds Y_0/lam^{n} = {bound}"
                )
        entry.update(
            {
                "k": k,
                "c_star": c_star,
                "smallness": smallness,
                "y": trace.y,
                "decay_flags": [bool(b) for b in trace.decay_flags],
            }
        )

        # exploratory run at a level inside the data range (reported only)
        k_explore = ksign * 0.5 * sup_u
        if k_explore != 0.0:
            sched_e = CylinderSchedule(
                sigma=sigma, rho=cfg.rho, k=k_explore, depth=cfg.depth, exps=exps,
                x_center=(0.0,) * cfg.n, t_end=0.0,
            )
            trace_e = degiorgi_sequence(u, sched_e, exps)
            entry["explore_k"] = k_explore
            entry["explore_y"] = trace_e.y
            for n in range(sched_e.depth):
                for s_name, s in (("2", 2.0), ("p", exps.p), ("ptilde", tp)):
                    first, second = levelset_chebyshev(u, sched_e, n, s)
                    rep = EstimateReport(
                        name=f"chebyshev-s{s_name}-{sign}",
                        lhs=first,
                        rhs_unconstant=second,
                        empirical_c=(first / second) if second > 0.0 else 0.0,
                        grid=f"dim={grid.dim} nx={grid.nx} nt={grid.nt}",
                        params=exps,
                        seed=cfg.seed,
                        h=grid.h,
                        dt=grid.dt,
                        extra={"stage": n, "s": s, "k": k_explore},
                    )
                    rows.append(rep)
                    if first < second * (1.0 - _CHEBYSHEV_RTOL):
                        failures.append(
                            f"chebyshev[{sign}] stage {n}, s={s}: {first} < {second}"
                        )
        summary["signs"][sign] = entry
    return rows, summary, failures


def heat_exact(x: np.ndarray, t: float) -> np.ndarray:
    """Separated solution of the unit-interval heat problem with zero ends."""
    return math.exp(-math.pi * math.pi * t) * np.sin(math.pi * x)


def barenblatt_profile(x: np.ndarray, t: float, p: float, mass_c: float) -> np.ndarray:
    """Self-similar source solution of the 1-D degenerate p-diffusion.

    u(x,t) = t^(-alpha) (C - kp |x t^(-alpha)|^(p/(p-1)))_+^((p-1)/(p-2))
    with alpha = 1/(2(p-1)) and kp = ((p-2)/p) alpha^(1/(p-1)).
    """
    if p <= 2.0:
        raise ValueError("profile needs p > 2")
    alpha = 1.0 / (2.0 * (p - 1.0))
    kp = (p - 2.0) / p * alpha ** (1.0 / (p - 1.0))
    xi = np.abs(x) * t ** (-alpha)
    core = np.maximum(mass_c - kp * xi ** (p / (p - 1.0)), 0.0)
    return t ** (-alpha) * core ** ((p - 1.0) / (p - 2.0))


def _discrete_norm_q(u: Field, qexp: float) -> float:
    """Discrete (integral of |u|^q + |Du|^q dz)^(1/q) over the box."""
    grid = u.grid
    hvol = grid.h**grid.dim
    total = 0.0
    for j in range(grid.nt):
        uv = cell_average(u.values[j])
        g = gradient_slice(grid, u.values[j])
        gmag = np.sqrt(np.sum(g * g, axis=0))
        total += grid.dt * hvol * float(np.sum(np.abs(uv) ** qexp + gmag**qexp))
    return total ** (1.0 / qexp)


def _run_convergence(cfg: ExperimentConfig):
    rows: list[EstimateReport] = []
    failures: list[str] = []

    # linear heat benchmark: p = 2, coefficient 0, dt = h^2 exactly
    exps_h = build_exponents(1, 2.0, 2.5, strict=False)
    flux_h = FluxModel(exps_h, constant_coefficient(0.0))
    t_final = 0.125
    heat_errors = []
    heat_norms = []
    for nx in cfg.heat_nx:
        steps = (nx - 1) ** 2 // 8
        grid = SpaceTimeGrid(
            dim=1, nx=nx, nt=steps + 1, center=(0.5, t_final),
            radius=0.5, time_length=t_final,
        )
        xs = grid.axis_nodes(0)
        u, _ = solve_cylinder(
            np.sin(np.pi * xs), flux_h, grid, SolverConfig(), bc=0.0
        )
        err = float(np.max(np.abs(u.values[-1] - heat_exact(xs, t_final))))
        heat_errors.append(err)
        heat_norms.append(_discrete_norm_q(u, exps_h.q))
        rows.append(
            EstimateReport(
                name="heat", lhs=err, rhs_unconstant=grid.h**2,
                empirical_c=err / grid.h**2,
                grid=f"dim=1 nx={nx} nt={grid.nt}", params=exps_h, seed=cfg.seed,
                h=grid.h, dt=grid.dt,
            )
        )
    heat_orders = [
        math.log2(e1 / e2) for e1, e2 in zip(heat_errors, heat_errors[1:])
    ]
    if cfg.assert_orders and heat_orders and heat_orders[-1] < 1.8:
        failures.append(f"convergence: heat order {heat_orders[-1]} < 1.8")
    if len(heat_errors) >= 2 and not heat_errors[-1] < heat_errors[-2]:
        failures.append("convergence: heat errors not strictly decreasing at the end")

    # degenerate benchmark: p = 3, compactly supported self-similar profile
    pb = 3.0
    mass_c = 0.1
    exps_b = build_exponents(1, pb, 3.5, strict=False)
    flux_b = FluxModel(exps_b, constant_coefficient(0.0))
    t0, t1 = 1.0, 1.5
    bb_errors = []
    mid_grid = None
    for nx in cfg.barenblatt_nx:
        h = 2.0 / (nx - 1)
        steps = max(2, round((t1 - t0) / (cfg.barenblatt_dt_coeff * h**pb)))
        grid = SpaceTimeGrid(
            dim=1, nx=nx, nt=steps + 1, center=(0.0, t1),
            radius=1.0, time_length=t1 - t0,
        )
        xs = grid.axis_nodes(0)
        u, _ = solve_cylinder(
            barenblatt_profile(xs, t0, pb, mass_c), flux_b, grid, SolverConfig(),
            bc=0.0,
        )
        err = float(np.max(np.abs(u.values[-1] - barenblatt_profile(xs, t1, pb, mass_c))))
        bb_errors.append(err)
        rows.append(
            EstimateReport(
                name="barenblatt", lhs=err, rhs_unconstant=grid.h,
                empirical_c=err / grid.h,
                grid=f"dim=1 nx={nx} nt={grid.nt}", params=exps_b, seed=cfg.seed,
                h=grid.h, dt=grid.dt,
            )
        )
        if nx == cfg.barenblatt_nx[len(cfg.barenblatt_nx) // 2]:
            mid_grid = grid
    for e1, e2 in zip(bb_errors, bb_errors[1:]):
        if not e2 < e1:
            failures.append(
                f"convergence: degenerate benchmark error rose {e1} -> {e2}"
            )

    # regularization robustness: halving eps, reported only
    eps_diffs = []
    if mid_grid is not None:
        xs = mid_grid.axis_nodes(0)
        init = barenblatt_profile(xs, t0, pb, mass_c)
        prev = None
        for div in (1.0, 2.0, 4.0):
            cfg_eps = SolverConfig(regularization_eps=mid_grid.h / div)
            u_eps, _ = solve_cylinder(init, flux_b, mid_grid, cfg_eps, bc=0.0)
            if prev is not None:
                eps_diffs.append(float(np.max(np.abs(u_eps.values - prev))))
            prev = u_eps.values

    summary = {
        "heat_errors": heat_errors,
        "heat_orders": heat_orders,
        "heat_discrete_norms": heat_norms,
        "barenblatt_errors": bb_errors,
        "eps_halving_diffs": eps_diffs,
    }
    return rows, summary, failures


# --------------------------------------------------------------- emission


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    summary: dict
    hard_failures: list
    csv_path: Path | None = None
    json_path: Path | None = None

    @property
    def exit_code(self) -> int:
        return 0 if not self.hard_failures else 1


def rows_to_csv(rows: list[EstimateReport]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.name,
                    f17(r.h),
                    f17(r.dt),
                    f17(r.lhs),
                    f17(r.rhs_unconstant),
                    f17(r.empirical_c),
                    str(r.seed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _emit_svg(result: ExperimentResult, out_dir: Path) -> Path | None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.5))
    name = result.experiment
    if name == "convergence":
        hs = [r.h for r in result.rows if r.name == "heat"]
        es = [r.lhs for r in result.rows if r.name == "heat"]
        ax.loglog(hs, es, "o-", label="heat Linf error")
        hs = [r.h for r in result.rows if r.name == "barenblatt"]
        es = [r.lhs for r in result.rows if r.name == "barenblatt"]
        if hs:
            ax.loglog(hs, es, "s-", label="degenerate Linf error")
        ax.set_xlabel("h")
        ax.legend()
    else:
        cs = [r.empirical_c for r in result.rows if math.isfinite(r.empirical_c)]
        ax.plot(cs, ".", ms=3)
        ax.set_ylabel("empirical constant")
    ax.set_title(name)
    path = out_dir / f"{name}.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = True) -> ExperimentResult:
    """Execute the configured experiment and (optionally) write its bundle.

    The CSV body is a pure function of cfg; wall-clock data goes to meta.json
    only.  Hard-assertion failures are listed in the summary and drive the
    exit code.
    """
    runners = {
        "embedding": _run_embedding,
        "caccioppoli": _run_caccioppoli,
        "supbound": _run_supbound,
        "degiorgi": _run_degiorgi,
        "convergence": _run_convergence,
    }
    t0 = time.perf_counter()
    rows, summary, failures = runners[cfg.experiment](cfg)
    elapsed = time.perf_counter() - t0
    summary = dict(summary)
    summary["schema_version"] = 1
    summary["experiment"] = cfg.experiment
    summary["hard_failures"] = failures
    result = ExperimentResult(cfg.experiment, rows, summary, failures)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.csv_path = out / f"{cfg.experiment}.csv"
        result.csv_path.write_text(rows_to_csv(rows))
        result.json_path = out / f"{cfg.experiment}_summary.json"
        result.json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "meta.json").write_text(
            json.dumps(
                {"schema_version": 1, "wall_seconds": elapsed, "unix_time": time.time()},
                indent=2,
            )
            + "\n"
        )
        (out / "config.json").write_text(cfg.to_json() + "\n")
        if cfg.svg:
            _emit_svg(result, out)
    if not quiet:
        status = "PASS" if not failures else "FAIL"
        print(f"[{cfg.experiment}] rows={len(rows)} {status}")
        for f in failures:
            print(f"  FAIL {f}")
    return result


def write_solve_trace(trace: SolveTrace, path) -> None:
    Path(path).write_text(json.dumps(trace.to_json_obj(), indent=2) + "\n")
