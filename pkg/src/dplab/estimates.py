"""Discrete evaluation of both sides of the energy estimates.

Every operation returns the left side, the right side *with all floating
constants stripped*, and their ratio (the empirical constant): the smallest
multiplier that makes the discrete inequality hold on the tested data.

The iteration bookkeeping lives here too: the shrinking-cylinder schedule
R_n = sigma*rho + (1-sigma)*rho/2^n with the matching time contraction, the
rising levels k_n = k - k/2^n, the level-set energies

    Y_n = mean over Q_n of ((u - k_n)_pm / rho)**tilde_p,

and the geometric-decay replay Y_n <= Y_0 / lam^n.

Cylinders follow the plain-time convention (time length tau); the schedule
contracts the square root of the time length with the same 2^-n law as the
radius, so the limit cylinder has radius sigma*rho and time length
sigma^2 * rho**tilde_p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .doublephase import FluxModel
from .errors import (
    CylinderOutOfRange,
    LevelSignMismatch,
    SmallnessViolated,
)
from .exponents import ExponentSet, compute_theta
from .mesh import (
    CutoffPair,
    Cylinder,
    Field,
    cell_average,
    gradient_slice,
    sup_abs_on_cylinder,
    truncate,
)

# slack for replayed-decay flags; covers rounding at exact-equality recursions
_DECAY_RTOL = 1e-9


# ------------------------------------------------------------------ reports


@dataclass
class EstimateReport:
    """Paired (lhs, rhs-without-constants) evaluation of one inequality."""

    name: str
    lhs: float
    rhs_unconstant: float
    empirical_c: float
    grid: str
    params: ExponentSet
    seed: int
    h: float = float("nan")
    dt: float = float("nan")
    extra: dict = dc_field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return bool(self.extra.get("empty_level_set", False))

    def to_json_obj(self) -> dict:
        obj = {
            "schema_version": 1,
            "name": self.name,
            "lhs": self.lhs,
            "rhs_unconstant": self.rhs_unconstant,
            "empirical_c": self.empirical_c,
            "grid": self.grid,
            "h": self.h,
            "dt": self.dt,
            "seed": self.seed,
            "params": {
                "n": self.params.n,
                "p": self.params.p,
                "q": self.params.q,
                "nu": self.params.nu,
                "L": self.params.ell_bound,
                "a_sup": self.params.a_sup,
            },
        }
        obj.update({k: v for k, v in self.extra.items()})
        return obj


def _make_report(name, lhs, rhs, grid, exps, seed, extra=None) -> EstimateReport:
    if rhs > 0.0:
        c = lhs / rhs
    elif lhs == 0.0:
        c = 0.0
    else:
        c = math.inf
    return EstimateReport(
        name=name,
        lhs=lhs,
        rhs_unconstant=rhs,
        empirical_c=c,
        grid=f"dim={grid.dim} nx={grid.nx} nt={grid.nt}",
        params=exps,
        seed=int(seed),
        h=grid.h,
        dt=grid.dt,
        extra=extra or {},
    )


def _require_cover(grid, cyl: Cylinder, exc=CylinderOutOfRange):
    if not grid.covers(cyl):
        raise exc(
            f"cylinder r={cyl.radius}, tau={cyl.time_length} at {cyl.x_center} "
            f"not covered by grid r={grid.radius}, tau={grid.time_length}"
        )


# ----------------------------------------------------- Caccioppoli estimate


def caccioppoli_sides(
    u: Field,
    flux: FluxModel,
    k: float,
    sign: str,
    outer: Cylinder,
    cut: CutoffPair,
    seed: int = -1,
) -> EstimateReport:
    """Both sides of the truncation energy estimate on the outer cylinder.

    lhs  = sup_t mean_B (u-k)_pm^2 eta^q zeta^2 / tau
           + mean_Q H(z, eta |D(u-k)_pm|) zeta^2
    rhs  = mean_Q H(z, (u-k)_pm |D eta|) zeta^2
           + mean_Q (u-k)_pm^2 eta^q zeta dzeta/dt

    An empty level set makes every term exactly zero; the report flags it
    instead of dividing.
    """
    grid = u.grid
    _require_cover(grid, outer)
    exps = flux.exps
    q = exps.q
    tau = outer.time_length

    trunc = truncate(u, k, sign)
    sw = grid.spatial_cell_weights(outer.radius, outer.x_center)
    area = float(np.sum(sw))
    tw = grid.time_slice_weights(outer.t_start, outer.t_end)
    measure = area * float(np.sum(tw))
    smask = grid.slice_window_mask(outer.t_start, outer.t_end)

    cc = grid.cell_centers()
    eta_c = cut.eta(*cc)
    eta_q = eta_c**q
    deta_c = cut.grad_eta_mag(*cc)

    sup_term = 0.0
    grad_int = 0.0
    rhs_grad_int = 0.0
    rhs_time_int = 0.0
    for j in range(grid.nt):
        t = float(grid.times[j])
        zeta = cut.zeta(t)
        in_window = bool(smask[j])
        if not in_window and tw[j] == 0.0:
            continue
        tv = cell_average(trunc.values[j])
        a_c = flux.a_at(*cc, t)
        if in_window and zeta > 0.0:
            mean_sq = float(np.sum(sw * tv * tv * eta_q)) / area
            sup_term = max(sup_term, mean_sq * zeta * zeta / tau)
        if tw[j] > 0.0:
            g = gradient_slice(grid, trunc.values[j])
            gmag = np.sqrt(np.sum(g * g, axis=0))
            z2 = zeta * zeta
            if z2 > 0.0:
                grad_int += tw[j] * z2 * float(np.sum(sw * flux.h_values(eta_c * gmag, a_c)))
                rhs_grad_int += tw[j] * z2 * float(
                    np.sum(sw * flux.h_values(tv * deta_c, a_c))
                )
            zdz = zeta * cut.dzeta(t)
            if zdz > 0.0:
                rhs_time_int += tw[j] * zdz * float(np.sum(sw * tv * tv * eta_q))

    lhs = sup_term + grad_int / measure
    rhs = rhs_grad_int / measure + rhs_time_int / measure
    tmask = grid.slice_window_mask(outer.t_start, outer.t_end)
    empty = not bool(np.any(trunc.values[tmask] > 0.0))
    return _make_report(
        f"caccioppoli-{sign}",
        lhs,
        rhs,
        grid,
        exps,
        seed,
        extra={"level": k, "empty_level_set": empty},
    )


# ------------------------------------------------------ embedding estimate


def embedding_sides(
    f: Field, cylinder: Cylinder, exps: ExponentSet, seed: int = -1
) -> EstimateReport:
    """Both sides of the space-time interpolation bound on the cylinder.

    lhs = mean |f/R|^q;  rhs = (mean [|Df|^p + |f/R|^p])^(q*theta/p)
    * (sup_t mean |f/R|^2)^(q*(1-theta)/2), theta = theta(n, p, q).
    Both sides are q-homogeneous in f, so the ratio is scale invariant.
    """
    grid = f.grid
    if grid.dim != exps.n:
        raise ValueError(f"grid dim {grid.dim} != exponent dimension {exps.n}")
    _require_cover(grid, cylinder)
    theta = compute_theta(exps.n, exps.p, exps.q)
    r = cylinder.radius
    p, q = exps.p, exps.q

    sw = grid.spatial_cell_weights(cylinder.radius, cylinder.x_center)
    area = float(np.sum(sw))
    tw = grid.time_slice_weights(cylinder.t_start, cylinder.t_end)
    measure = area * float(np.sum(tw))
    smask = grid.slice_window_mask(cylinder.t_start, cylinder.t_end)

    lhs_int = 0.0
    e1_int = 0.0
    e2_sup = 0.0
    for j in range(grid.nt):
        fv = cell_average(f.values[j]) / r
        if tw[j] > 0.0:
            lhs_int += tw[j] * float(np.sum(sw * np.abs(fv) ** q))
            g = gradient_slice(grid, f.values[j])
            gmag_p = np.sum(g * g, axis=0) ** (0.5 * p)
            e1_int += tw[j] * float(np.sum(sw * (gmag_p + np.abs(fv) ** p)))
        if smask[j]:
            e2_sup = max(e2_sup, float(np.sum(sw * fv * fv)) / area)

    lhs = lhs_int / measure
    e1 = e1_int / measure
    rhs = e1 ** (q * theta / p) * e2_sup ** (q * (1.0 - theta) / 2.0)
    return _make_report(
        "embedding", lhs, rhs, grid, exps, seed,
        extra={"theta": theta, "E1": e1, "E2": e2_sup},
    )


# -------------------------------------------------------- cylinder schedule


@dataclass(frozen=True)
class CylinderSchedule:
    """Shrinking cylinders, rising levels, and their half-way companions.

    radii[n]      = sigma*rho + (1-sigma)*rho/2^n          (rho down to sigma*rho)
    sqrt_lengths  = the same contraction applied to ell = rho**(tilde_p/2);
    time_lengths  = sqrt_lengths**2  (rho**tilde_p down to sigma^2 rho**tilde_p)
    levels[n]     = k - k/2^n  for the signed level k != 0.
    """

    sigma: float
    rho: float
    k: float
    depth: int
    exps: ExponentSet
    x_center: tuple[float, ...]
    t_end: float

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"need sigma in (0,1), got {self.sigma}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"need rho in (0,1], got {self.rho}")
        if self.depth < 2:
            raise ValueError(f"need depth >= 2, got {self.depth}")
        if self.k == 0.0:
            raise LevelSignMismatch("level k must be nonzero")

    @property
    def sign(self) -> str:
        return "plus" if self.k > 0.0 else "minus"

    def _contract(self, base: float, n: int) -> float:
        return self.sigma * base + (1.0 - self.sigma) * base / 2.0**n

    @property
    def radii(self) -> list[float]:
        return [self._contract(self.rho, n) for n in range(self.depth + 1)]

    @property
    def half_radii(self) -> list[float]:
        r = self.radii
        return [0.5 * (r[n] + r[n + 1]) for n in range(self.depth)]

    @property
    def sqrt_lengths(self) -> list[float]:
        ell = self.rho ** (self.exps.tilde_p / 2.0)
        return [self._contract(ell, n) for n in range(self.depth + 1)]

    @property
    def time_lengths(self) -> list[float]:
        return [s * s for s in self.sqrt_lengths]

    @property
    def levels(self) -> list[float]:
        return [self.k - self.k / 2.0**n for n in range(self.depth + 1)]

    def cylinder(self, n: int) -> Cylinder:
        return Cylinder(self.x_center, self.t_end, self.radii[n], self.time_lengths[n])

    def half_cylinder(self, n: int) -> Cylinder:
        ell = 0.5 * (self.sqrt_lengths[n] + self.sqrt_lengths[n + 1])
        return Cylinder(self.x_center, self.t_end, self.half_radii[n], ell * ell)


@dataclass
class DeGiorgiTrace:
    """Level-set energies, measures, and decay diagnostics of one iteration run."""

    y: list
    levelset_measures: list
    recursion_constants: list
    decay_flags: list
    k: float
    lam: float
    sigma: float
    rho: float

    @property
    def y0(self) -> float:
        return self.y[0]

    def to_json_obj(self) -> dict:
        return {
            "schema_version": 1,
            "k": self.k,
            "lam": self.lam,
            "sigma": self.sigma,
            "rho": self.rho,
            "y": list(self.y),
            "levelset_measures": list(self.levelset_measures),
            "recursion_constants": list(self.recursion_constants),
            "decay_flags": [bool(b) for b in self.decay_flags],
        }


def _decay_ok(yn: float, y0: float, lam: float, n: int, rtol: float = 0.0) -> bool:
    """Y_n <= Y_0/lam^n, evaluated in the log domain when lam^n overflows."""
    if yn == 0.0:
        return True
    if y0 == 0.0:
        return False
    log_bound = math.log(y0) - n * math.log(lam)
    return math.log(yn) <= log_bound + math.log1p(rtol) if rtol > 0.0 else (
        math.log(yn) <= log_bound
    )


def _mask_measure(grid, cyl: Cylinder, cell_mask_by_slice) -> float:
    """Quadrature measure of a per-cell boolean region inside the cylinder."""
    sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
    tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
    total = 0.0
    for j in range(grid.nt):
        if tw[j] == 0.0:
            continue
        total += tw[j] * float(np.sum(sw * cell_mask_by_slice(j)))
    return total


def degiorgi_sequence(
    u: Field, sched: CylinderSchedule, exps: ExponentSet
) -> DeGiorgiTrace:
    """Level-set energies Y_n on each schedule cylinder with decay flags.

    Y_n = mean over Q_n of ((u - k_n)_pm / rho)**tilde_p; the level-set
    measures |A_n| use the same clipped-cell weights.  Per-stage empirical
    recursion constants divide Y_{n+1} by the predicted
    (2^(tilde_p n) |k|^(q - tilde_p) / (1-sigma)^q)^(1+vartheta) * Y_n^(1+vartheta).
    Once a level set empties, every later stage is exactly zero.
    """
    grid = u.grid
    if sched.k == 0.0:
        raise LevelSignMismatch("level k must be nonzero")
    sign = sched.sign
    _require_cover(grid, sched.cylinder(0))
    tp = exps.tilde_p
    vth = exps.vartheta
    lam = exps.lam
    rho = sched.rho

    ys = []
    measures = []
    empty_from = None
    for n in range(sched.depth + 1):
        cyl = sched.cylinder(n)
        if empty_from is not None:
            ys.append(0.0)
            measures.append(0.0)
            continue
        kn = sched.levels[n]
        trunc = truncate(u, kn, sign)
        sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
        tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
        meas = float(np.sum(sw)) * float(np.sum(tw))
        total = 0.0
        lset = 0.0
        for j in range(grid.nt):
            if tw[j] == 0.0:
                continue
            tv = cell_average(trunc.values[j])
            total += tw[j] * float(np.sum(sw * (tv / rho) ** tp))
            lset += tw[j] * float(np.sum(sw * (tv > 0.0)))
        yn = total / meas
        ys.append(yn)
        measures.append(lset)
        if yn == 0.0:
            empty_from = n

    consts = []
    for n in range(sched.depth):
        if ys[n] <= 0.0:
            consts.append(math.nan)
            continue
        pref = (
            2.0 ** (tp * n) * abs(sched.k) ** (exps.q - tp) / (1.0 - sched.sigma) ** exps.q
        ) ** (1.0 + vth)
        consts.append(ys[n + 1] / (pref * ys[n] ** (1.0 + vth)))

    flags = [_decay_ok(ys[n], ys[0], lam, n) for n in range(sched.depth + 1)]
    return DeGiorgiTrace(
        y=ys,
        levelset_measures=measures,
        recursion_constants=consts,
        decay_flags=flags,
        k=sched.k,
        lam=lam,
        sigma=sched.sigma,
        rho=sched.rho,
    )


def level_set_measure(u: Field, sched: CylinderSchedule, n: int) -> float:
    """|A_n|: measure of the stage-n level set inside Q_n (cell-sampled)."""
    grid = u.grid
    kn = sched.levels[n]
    sign = sched.sign

    def mask(j):
        cc_u = cell_average(u.values[j])
        return cc_u > kn if sign == "plus" else cc_u < kn

    return _mask_measure(grid, sched.cylinder(n), mask)


def levelset_chebyshev(
    u: Field, sched: CylinderSchedule, n: int, s: float
) -> tuple[float, float]:
    """Level-set lower bound: (integral of (u-k_n)_pm^s over Q_n,
    |k|^s |A_{n+1}| / 2^((n+1)s)).  The first component dominates the second.
    """
    if not 0 <= n < sched.depth:
        raise IndexError(f"stage {n} out of range [0, {sched.depth})")
    if s <= 0.0:
        raise ValueError(f"need s > 0, got {s}")
    grid = u.grid
    sign = sched.sign
    trunc = truncate(u, sched.levels[n], sign)
    cyl = sched.cylinder(n)
    sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
    tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
    first = 0.0
    for j in range(grid.nt):
        if tw[j] == 0.0:
            continue
        first += tw[j] * float(np.sum(sw * cell_average(trunc.values[j]) ** s))

    k_next = sched.levels[n + 1]

    def mask(j):
        cc_u = cell_average(u.values[j])
        return cc_u > k_next if sign == "plus" else cc_u < k_next

    a_next = _mask_measure(grid, sched.cylinder(n + 1), mask)
    second = abs(sched.k) ** s * a_next / 2.0 ** ((n + 1) * s)
    return first, second


# ------------------------------------------------------- sup-bound estimate


def supbound_sides(
    u: Field,
    z0: tuple,
    rho: float,
    sigma: float,
    exps: ExponentSet,
    convention: str = "proof",
    seed: int = -1,
) -> EstimateReport:
    """Both sides of the local sup bound on intrinsically scaled cylinders.

    lhs = sup |u| over the cylinder of radius sigma*rho and time length
    sigma^2 rho**tilde_p;  rhs strips the constant from
    (1-sigma)^(q/(q-tilde_p)) * E1^(chi tilde_p theta / p)
    * E2^(chi tilde_p (1-theta) / 2) with
    E1 = mean [|Du|^p + |u/rho|^p], E2 = sup_t mean |u/rho|^2 over the full
    cylinder, and chi = vth / ((tilde_p - q)(1 + vth)) under the chosen
    vartheta convention ('proof' carries the -1, 'theorem' does not).
    """
    if convention not in ("proof", "theorem"):
        raise ValueError(f"convention must be 'proof' or 'theorem', got {convention!r}")
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"need sigma in (0,1), got {sigma}")
    grid = u.grid
    x0 = tuple(float(c) for c in z0[:-1])
    t_end = float(z0[-1])
    tp = exps.tilde_p
    outer = Cylinder(x0, t_end, rho, rho**tp)
    _require_cover(grid, outer)
    inner = Cylinder(x0, t_end, sigma * rho, sigma * sigma * rho**tp)

    lhs = sup_abs_on_cylinder(u, inner)

    sw = grid.spatial_cell_weights(outer.radius, x0)
    area = float(np.sum(sw))
    tw = grid.time_slice_weights(outer.t_start, outer.t_end)
    measure = area * float(np.sum(tw))
    smask = grid.slice_window_mask(outer.t_start, outer.t_end)
    p, q = exps.p, exps.q
    e1_int = 0.0
    e2_sup = 0.0
    for j in range(grid.nt):
        uv = cell_average(u.values[j])
        if tw[j] > 0.0:
            g = gradient_slice(grid, u.values[j])
            gmag_p = np.sum(g * g, axis=0) ** (0.5 * p)
            e1_int += tw[j] * float(np.sum(sw * (gmag_p + np.abs(uv / rho) ** p)))
        if smask[j]:
            e2_sup = max(e2_sup, float(np.sum(sw * (uv / rho) ** 2)) / area)
    e1 = e1_int / measure

    vth = exps.vartheta if convention == "proof" else exps.vartheta_theorem
    chi = vth / ((tp - q) * (1.0 + vth))
    e1_exp = chi * tp * exps.theta / p
    e2_exp = chi * tp * (1.0 - exps.theta) / 2.0
    rhs_core = e1**e1_exp * e2_sup**e2_exp
    blowup = (1.0 - sigma) ** (q / (q - tp))
    rhs = blowup * rhs_core
    return _make_report(
        f"supbound-{convention}",
        lhs,
        rhs,
        grid,
        exps,
        seed,
        extra={
            "sigma": sigma,
            "rho": rho,
            "convention": convention,
            "rhs_sans_sigma": rhs_core,
            "E1": e1,
            "E2": e2_sup,
        },
    )


# ------------------------------------------------------ decay-replay check


def fast_convergence_check(
    y0: float, c: float, b: float, vartheta: float, depth: int
) -> list[bool]:
    """Replay the geometric-decay induction on the abstract recursion.

    The majorant sequence is generated with equality,
    Y_{n+1} = c * b^(n(1+vth)) * Y_n^(1+vth), where ``c`` is the full
    absorbed prefactor of the run (empirical recursion constant times
    (|k|^(q - tilde_p)/(1-sigma)^q)^(1+vth)).  With lam^vth = b^(1+vth) the
    induction closes exactly when

        c * lam * y0^vth <= 1,

    the lam factor being what the floating constant of the usual statement
    absorbs.  On success the flags Y_n <= Y_0/lam^n (with 1e-9 relative
    slack for the tight-equality case) are returned for n = 0..depth; if the
    smallness product exceeds 1, SmallnessViolated is raised carrying the
    flags of the would-be sequence.
    """
    if b <= 1.0 or vartheta <= 0.0:
        raise ValueError(f"need b > 1 and vartheta > 0, got b={b}, vth={vartheta}")
    if depth < 0:
        raise ValueError(f"need depth >= 0, got {depth}")
    if y0 < 0.0 or c < 0.0:
        raise ValueError("y0 and c must be nonnegative")
    lam = b ** ((1.0 + vartheta) / vartheta)
    if y0 == 0.0:
        return [True] * (depth + 1)

    margin = c * lam * y0**vartheta
    ys = [y0]
    for n in range(depth):
        ys.append(c * b ** (n * (1.0 + vartheta)) * ys[-1] ** (1.0 + vartheta))
    flags = [_decay_ok(ys[n], y0, lam, n, rtol=_DECAY_RTOL) for n in range(depth + 1)]
    if margin > 1.0 + _DECAY_RTOL:
        raise SmallnessViolated(
            f"smallness product c*lam*y0^vth = {margin} exceeds 1",
            flags=flags,
            margin=margin,
        )
    return flags
