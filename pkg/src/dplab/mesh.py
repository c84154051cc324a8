"""Uniform tensor grids on parabolic cylinders and their discrete calculus.

The primitive region is the backward cylinder  B_r(x0) x (t_end - tau, t_end)
with *plain* time length tau; the square-time variant (time length ell**2)
is provided as a wrapper, so only one bookkeeping convention exists.

Quadrature is composite midpoint in space over grid cells, with the spatial
cells clipped exactly against the ball (circular-segment areas in 2-D), and
midpoint over slice-centered time cells clipped against the interval (which
reduces to the trapezoid rule on the full interval).  Cell weights for a
smaller concentric region never exceed those for a larger one, which keeps
set-containment inequalities true at the discrete level.

All reductions traverse arrays in a fixed order; repeated calls return
identical bits.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGap, EmptyRegion

_COVER_RTOL = 1e-12
_COVER_ATOL = 1e-13


# ------------------------------------------------------------------ regions


@dataclass(frozen=True)
class Cylinder:
    """Backward parabolic cylinder B_radius(x_center) x (t_end - time_length, t_end]."""

    x_center: tuple[float, ...]
    t_end: float
    radius: float
    time_length: float

    def __post_init__(self):
        if self.radius <= 0.0 or self.time_length <= 0.0:
            raise EmptyRegion(
                f"cylinder needs positive radius and time length, got "
                f"r={self.radius}, tau={self.time_length}"
            )

    @property
    def t_start(self) -> float:
        return self.t_end - self.time_length

    def scaled(self, radius: float, time_length: float) -> "Cylinder":
        return Cylinder(self.x_center, self.t_end, radius, time_length)


def square_cylinder(
    x_center: tuple[float, ...], t_end: float, radius: float, ell: float
) -> Cylinder:
    """Square-time convention: time length ell**2 for radius-scale ell."""
    return Cylinder(tuple(x_center), t_end, radius, ell * ell)


# --------------------------------------------------------------------- grid


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """Uniform nodes on the closed box circumscribing B_R(x0) x [t0 - L, t0].

    dim in {1, 2}; nx nodes per spatial axis; nt time slices.  Spacings are
    h = 2R/(nx-1) and dt = L/(nt-1).
    """

    dim: int
    nx: int
    nt: int
    center: tuple[float, ...]  # (x0..., t0)
    radius: float
    time_length: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 3 or self.nt < 2:
            raise ValueError(f"need nx >= 3 and nt >= 2, got nx={self.nx}, nt={self.nt}")
        if self.radius <= 0.0 or self.time_length <= 0.0:
            raise ValueError("radius and time_length must be positive")
        if len(self.center) != self.dim + 1:
            raise ValueError(
                f"center must have {self.dim + 1} entries (x..., t), got {self.center}"
            )
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    # -- geometry ----------------------------------------------------------

    @property
    def x_center(self) -> tuple[float, ...]:
        return self.center[: self.dim]

    @property
    def t_end(self) -> float:
        return self.center[self.dim]

    @property
    def h(self) -> float:
        return 2.0 * self.radius / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.time_length / (self.nt - 1)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.dim

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return (self.nx - 1,) * self.dim

    def axis_nodes(self, axis: int) -> np.ndarray:
        key = ("axis", axis)
        if key not in self._cache:
            c = self.x_center[axis]
            self._cache[key] = np.linspace(c - self.radius, c + self.radius, self.nx)
        return self._cache[key]

    @property
    def times(self) -> np.ndarray:
        if "times" not in self._cache:
            self._cache["times"] = np.linspace(
                self.t_end - self.time_length, self.t_end, self.nt
            )
        return self._cache["times"]

    def node_coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid ('ij') of node coordinates, one array per spatial axis."""
        if "nodes" not in self._cache:
            axes = [self.axis_nodes(a) for a in range(self.dim)]
            self._cache["nodes"] = tuple(np.meshgrid(*axes, indexing="ij")) if self.dim > 1 else (axes[0],)
        return self._cache["nodes"]

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Meshgrid ('ij') of cell-center coordinates."""
        if "cells" not in self._cache:
            mids = [
                0.5 * (self.axis_nodes(a)[:-1] + self.axis_nodes(a)[1:])
                for a in range(self.dim)
            ]
            self._cache["cells"] = (
                tuple(np.meshgrid(*mids, indexing="ij")) if self.dim > 1 else (mids[0],)
            )
        return self._cache["cells"]

    def cylinder(self) -> Cylinder:
        """The full cylinder B_R(x0) x (t0 - L, t0] this grid was built for."""
        return Cylinder(self.x_center, self.t_end, self.radius, self.time_length)

    # -- cover checks ------------------------------------------------------

    def covers(self, cyl: Cylinder) -> bool:
        pad = _COVER_RTOL * self.radius + _COVER_ATOL
        if any(
            abs(cx - gx) + cyl.radius > self.radius + pad
            for cx, gx in zip(cyl.x_center, self.x_center)
        ):
            return False
        tpad = _COVER_RTOL * self.time_length + _COVER_ATOL
        t_first = self.t_end - self.time_length
        return cyl.t_start >= t_first - tpad and cyl.t_end <= self.t_end + tpad

    # -- quadrature weights --------------------------------------------------

    def spatial_cell_weights(self, radius: float, center: tuple[float, ...] | None = None) -> np.ndarray:
        """Measure of each grid cell clipped against the ball of given radius.

        1-D cells are clipped intervals; 2-D cells are clipped exactly against
        the disk via the circular-segment corner function.  Results are cached
        per (radius, center).
        """
        if center is None:
            center = self.x_center
        center = tuple(float(c) for c in center)
        key = ("sw", float(radius), center)
        if key in self._cache:
            return self._cache[key]
        if radius <= 0.0:
            raise EmptyRegion(f"ball radius must be positive, got {radius}")
        if self.dim == 1:
            xs = self.axis_nodes(0)
            lo, hi = center[0] - radius, center[0] + radius
            w = np.maximum(
                0.0, np.minimum(xs[1:], hi) - np.maximum(xs[:-1], lo)
            )
        else:
            xs = self.axis_nodes(0) - center[0]
            ys = self.axis_nodes(1) - center[1]
            X1, Y1 = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
            X2, Y2 = np.meshgrid(xs[1:], ys[1:], indexing="ij")
            w = (
                _corner_area(X2, Y2, radius)
                - _corner_area(X1, Y2, radius)
                - _corner_area(X2, Y1, radius)
                + _corner_area(X1, Y1, radius)
            )
            np.maximum(w, 0.0, out=w)
        w.flags.writeable = False
        self._cache[key] = w
        return w

    def time_slice_weights(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Overlap of each slice-centered time cell with [t_lo, t_hi]."""
        if t_hi <= t_lo:
            raise EmptyRegion(f"empty time window [{t_lo}, {t_hi}]")
        ts = self.times
        half = 0.5 * self.dt
        w = np.maximum(
            0.0, np.minimum(ts + half, t_hi) - np.maximum(ts - half, t_lo)
        )
        return w

    def slice_window_mask(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Boolean mask of slices whose time lies in the closed window."""
        pad = _COVER_RTOL * self.time_length + _COVER_ATOL
        ts = self.times
        return (ts >= t_lo - pad) & (ts <= t_hi + pad)

    def node_ball_mask(self, radius: float, center: tuple[float, ...] | None = None) -> np.ndarray:
        """Boolean mask of nodes inside the closed ball."""
        if center is None:
            center = self.x_center
        pad = _COVER_RTOL * self.radius + _COVER_ATOL
        coords = self.node_coords()
        dist2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
        return dist2 <= (radius + pad) ** 2


def _corner_area(x: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """Area of {(u,v): u <= x, v <= y} intersected with the disk of radius r.

    Exact up to rounding: the running integral of the disk's chord height is
    F(u) = (u*sqrt(r^2-u^2) + r^2*asin(u/r))/2, pieced together at the
    chord/level crossings u = +-sqrt(r^2 - y^2).
    """
    x = np.clip(np.asarray(x, dtype=float), -r, r)
    y = np.asarray(y, dtype=float)

    def F(u):
        u = np.clip(u, -r, r)
        root = np.sqrt(np.maximum(r * r - u * u, 0.0))
        return 0.5 * (u * root + r * r * np.arcsin(np.clip(u / r, -1.0, 1.0)))

    full = 2.0 * (F(x) - F(-r))  # valid where y >= r
    s = np.sqrt(np.maximum(r * r - np.minimum(np.abs(y), r) ** 2, 0.0))
    # piecewise segments of the strip -r <= u <= x for |y| < r
    b1 = np.minimum(x, -s)
    seg1 = np.where(y >= 0.0, 2.0 * (F(b1) - F(-r)), 0.0)
    a2 = -s
    b2 = np.clip(x, -s, s)
    inner = np.where(b2 > a2, y * (b2 - a2) + F(b2) - F(a2), 0.0)
    seg3 = np.where((x > s) & (y >= 0.0), 2.0 * (F(x) - F(s)), 0.0)
    partial = seg1 + inner + seg3
    return np.where(y >= r, full, np.where(y <= -r, 0.0, partial))


# -------------------------------------------------------------------- field


class Field:
    """Nodal scalar values over a SpaceTimeGrid, immutable after construction.

    values has shape (nt, nx) in 1-D and (nt, nx, nx) in 2-D, C-ordered.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpaceTimeGrid, values: np.ndarray):
        arr = np.ascontiguousarray(values, dtype=float)
        expected = (grid.nt,) + grid.spatial_shape
        if arr.shape != expected:
            raise ValueError(f"values shape {arr.shape} != expected {expected}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def slice(self, j: int) -> np.ndarray:
        return self.values[j]

    def map(self, fn) -> "Field":
        return Field(self.grid, fn(self.values))

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn) -> "Field":
        """Sample fn(*x, t) on all nodes and slices."""
        coords = grid.node_coords()
        out = np.empty((grid.nt,) + grid.spatial_shape)
        for j, t in enumerate(grid.times):
            out[j] = fn(*coords, t)
        return cls(grid, out)

    @classmethod
    def constant(cls, grid: SpaceTimeGrid, value: float) -> "Field":
        return cls(grid, np.full((grid.nt,) + grid.spatial_shape, float(value)))


def cell_average(slice_values: np.ndarray) -> np.ndarray:
    """Average nodal slice values to cell centers."""
    if slice_values.ndim == 1:
        return 0.5 * (slice_values[:-1] + slice_values[1:])
    return 0.25 * (
        slice_values[:-1, :-1]
        + slice_values[1:, :-1]
        + slice_values[:-1, 1:]
        + slice_values[1:, 1:]
    )


def gradient_slice(grid: SpaceTimeGrid, slice_values: np.ndarray) -> np.ndarray:
    """Cell-centered finite-difference gradient of one slice.

    Shape (dim, nx-1[, nx-1]); exact for affine fields, midpoint-exact for
    quadratics along each axis.
    """
    h = grid.h
    if grid.dim == 1:
        return ((slice_values[1:] - slice_values[:-1]) / h)[np.newaxis, :]
    gx = (
        slice_values[1:, :-1]
        - slice_values[:-1, :-1]
        + slice_values[1:, 1:]
        - slice_values[:-1, 1:]
    ) / (2.0 * h)
    gy = (
        slice_values[:-1, 1:]
        - slice_values[:-1, :-1]
        + slice_values[1:, 1:]
        - slice_values[1:, :-1]
    ) / (2.0 * h)
    return np.stack([gx, gy])


def gradient(f: Field, slice_index: int) -> np.ndarray:
    """Cell-centered gradient of field slice ``slice_index``."""
    if not 0 <= slice_index < f.grid.nt:
        raise IndexError(f"slice {slice_index} out of range [0, {f.grid.nt})")
    return gradient_slice(f.grid, f.values[slice_index])


# --------------------------------------------------------------- quadrature


def _require_cover(grid: SpaceTimeGrid, cyl: Cylinder):
    if not grid.covers(cyl):
        raise EmptyRegion(
            f"cylinder r={cyl.radius}, t in [{cyl.t_start}, {cyl.t_end}] not "
            f"covered by grid r={grid.radius}, t in "
            f"[{grid.t_end - grid.time_length}, {grid.t_end}]"
        )


def spatial_integral(f: Field, slice_index: int, radius: float,
                     center: tuple[float, ...] | None = None) -> float:
    """Midpoint integral of one slice over the clipped ball."""
    w = f.grid.spatial_cell_weights(radius, center)
    return float(np.sum(w * cell_average(f.values[slice_index])))


def ball_measure(grid: SpaceTimeGrid, radius: float,
                 center: tuple[float, ...] | None = None) -> float:
    return float(np.sum(grid.spatial_cell_weights(radius, center)))


def integrate_cylinder(f: Field, cyl: Cylinder) -> float:
    """Unnormalized integral of f over the cylinder (midpoint x clipped cells)."""
    grid = f.grid
    _require_cover(grid, cyl)
    sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
    tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
    total = 0.0
    for j in range(grid.nt):
        if tw[j] == 0.0:
            continue
        total += tw[j] * float(np.sum(sw * cell_average(f.values[j])))
    return total


def cylinder_measure(grid: SpaceTimeGrid, cyl: Cylinder) -> float:
    """Quadrature measure of the cylinder (ball measure x window length)."""
    _require_cover(grid, cyl)
    sw = grid.spatial_cell_weights(cyl.radius, cyl.x_center)
    tw = grid.time_slice_weights(cyl.t_start, cyl.t_end)
    return float(np.sum(sw)) * float(np.sum(tw))


def mean_cylinder(f: Field, cyl: Cylinder) -> float:
    """Integral average over the cylinder, normalized by quadrature measure."""
    return integrate_cylinder(f, cyl) / cylinder_measure(f.grid, cyl)


def sup_time_spatial_mean(
    f: Field,
    radius: float,
    window: tuple[float, float],
    center: tuple[float, ...] | None = None,
) -> float:
    """Max over slices in the closed window of the spatial mean over the ball."""
    grid = f.grid
    t_lo, t_hi = window
    mask = grid.slice_window_mask(t_lo, t_hi)
    if not np.any(mask):
        raise EmptyRegion(f"no time slices in window [{t_lo}, {t_hi}]")
    sw = grid.spatial_cell_weights(radius, center)
    area = float(np.sum(sw))
    if area <= 0.0:
        raise EmptyRegion(f"ball of radius {radius} has zero quadrature measure")
    best = -math.inf
    for j in np.flatnonzero(mask):
        best = max(best, float(np.sum(sw * cell_average(f.values[j]))) / area)
    return best


def sup_abs_on_cylinder(f: Field, cyl: Cylinder) -> float:
    """Nodal sup of |f| over the closed cylinder."""
    grid = f.grid
    _require_cover(grid, cyl)
    smask = grid.node_ball_mask(cyl.radius, cyl.x_center)
    tmask = grid.slice_window_mask(cyl.t_start, cyl.t_end)
    if not np.any(tmask) or not np.any(smask):
        raise EmptyRegion("cylinder contains no grid nodes")
    sub = np.abs(f.values[tmask][:, smask])
    return float(np.max(sub))


# -------------------------------------------------------------- truncations


def truncate(f: Field, k: float, sign: str) -> Field:
    """Pointwise truncation max(+-(f - k), 0); sign is 'plus' or 'minus'."""
    if sign == "plus":
        vals = np.maximum(f.values - k, 0.0)
    elif sign == "minus":
        vals = np.maximum(k - f.values, 0.0)
    else:
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    return Field(f.grid, vals)


# ------------------------------------------------------------------ cutoffs


@dataclass(frozen=True)
class CutoffPair:
    """Radial plateau cutoff eta and nondecreasing temporal ramp zeta.

    eta = 1 on B_{r_in}, 0 outside B_{r_out}, linear in |x - x0| between;
    zeta = 0 up to t_end - l_out, 1 from t_end - l_in on, linear between.
    Both profiles live in [0, 1], |grad eta| <= 1/(r_out - r_in) and
    d/dt zeta >= 0 by construction.
    """

    x_center: tuple[float, ...]
    t_end: float
    r_in: float
    r_out: float
    l_in: float
    l_out: float

    def eta_radial(self, dist: np.ndarray) -> np.ndarray:
        return np.clip((self.r_out - dist) / (self.r_out - self.r_in), 0.0, 1.0)

    def eta(self, *coords: np.ndarray) -> np.ndarray:
        dist = np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(coords, self.x_center)))
        return self.eta_radial(dist)

    def grad_eta_mag(self, *coords: np.ndarray) -> np.ndarray:
        """|grad eta|: the ramp slope on the open annulus, 0 elsewhere."""
        dist = np.sqrt(sum((c - c0) ** 2 for c, c0 in zip(coords, self.x_center)))
        slope = 1.0 / (self.r_out - self.r_in)
        return np.where((dist > self.r_in) & (dist < self.r_out), slope, 0.0)

    def zeta(self, t: float) -> float:
        a = self.t_end - self.l_out
        b = self.t_end - self.l_in
        if t <= a:
            return 0.0
        if t >= b:
            return 1.0
        return (t - a) / (b - a)

    def dzeta(self, t: float) -> float:
        """Time derivative of zeta; half-slope at the two ramp kinks."""
        a = self.t_end - self.l_out
        b = self.t_end - self.l_in
        slope = 1.0 / (b - a)
        if t == a or t == b:
            return 0.5 * slope
        if a < t < b:
            return slope
        return 0.0


def build_cutoffs(outer: Cylinder, inner: Cylinder) -> CutoffPair:
    """Cutoff pair that is 1 on the inner cylinder and supported in the outer.

    The inner cylinder must share the center and be strictly contained; a
    touching pair leaves no transition layer and raises DegenerateGap.
    """
    if inner.x_center != outer.x_center or inner.t_end != outer.t_end:
        raise ValueError("cutoff cylinders must share center and final time")
    if inner.radius >= outer.radius or inner.time_length >= outer.time_length:
        raise DegenerateGap(
            f"inner (r={inner.radius}, tau={inner.time_length}) touches outer "
            f"(r={outer.radius}, tau={outer.time_length})"
        )
    return CutoffPair(
        x_center=outer.x_center,
        t_end=outer.t_end,
        r_in=inner.radius,
        r_out=outer.radius,
        l_in=inner.time_length,
        l_out=outer.time_length,
    )


# ----------------------------------------------------------------- file I/O

_FIELD_MAGIC = "dplab-field 1"


def save_field(f: Field, path) -> None:
    """Write a field as a text table: header lines, then row-major values.

    Floats are written with 17 significant digits so the round trip is exact.
    """
    g = f.grid
    buf = io.StringIO()
    buf.write(_FIELD_MAGIC + "\n")
    buf.write(f"dim {g.dim}\n")
    buf.write(f"nx {g.nx}\n")
    buf.write(f"nt {g.nt}\n")
    buf.write("center " + " ".join(format(c, ".17g") for c in g.center) + "\n")
    buf.write(f"radius {g.radius:.17g}\n")
    buf.write(f"time_length {g.time_length:.17g}\n")
    buf.write("values\n")
    flat = f.values.reshape(g.nt, -1)
    for row in flat:
        buf.write(" ".join(format(v, ".17g") for v in row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_field(path) -> Field:
    """Read a field written by save_field."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a dplab field file")
    header = {}
    idx = 1
    while idx < len(lines) and lines[idx] != "values":
        key, _, rest = lines[idx].partition(" ")
        header[key] = rest
        idx += 1
    if idx >= len(lines):
        raise ValueError(f"{path}: missing values section")
    grid = SpaceTimeGrid(
        dim=int(header["dim"]),
        nx=int(header["nx"]),
        nt=int(header["nt"]),
        center=tuple(float(v) for v in header["center"].split()),
        radius=float(header["radius"]),
        time_length=float(header["time_length"]),
    )
    vals = np.array(
        [[float(v) for v in line.split()] for line in lines[idx + 1 :]]
    ).reshape((grid.nt,) + grid.spatial_shape)
    return Field(grid, vals)
