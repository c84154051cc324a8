"""Double phase integrand H, the model flux, and structure diagnostics.

H(z, kappa) = kappa**p + a(z) * kappa**q with a bounded nonnegative modulating
coefficient a.  Where a vanishes the medium is purely p-degenerate; where it
is positive the q-phase contributes.  The q-term is only evaluated on points
with a > 0, so an identically-zero coefficient reproduces the pure p-phase
quantities bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptySampleSet, NegativeArgument
from .exponents import ExponentSet

# below this gradient magnitude the flux is exactly 0 (p >= 2 keeps it continuous)
_FLUX_UNDERFLOW = 1e-150


# ------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class CoefficientFn:
    """Bounded nonnegative coefficient a(x, t) with 0 <= a <= a_sup.

    kind is one of 'constant', 'bump', 'checkerboard', 'sampled'; ``fn`` maps
    (*spatial_coords, t) -> array.
    """

    kind: str
    a_sup: float
    fn: Callable

    def __call__(self, *coords_t) -> np.ndarray:
        return self.fn(*coords_t)


def constant_coefficient(value: float) -> CoefficientFn:
    if value < 0.0:
        raise NegativeArgument(f"coefficient must be nonnegative, got {value}")

    def fn(*coords_t):
        return np.full(np.broadcast(*coords_t).shape, float(value))

    return CoefficientFn("constant", float(value), fn)


def bump_coefficient(a_sup: float, threshold: float = 0.0, width: float = 0.5) -> CoefficientFn:
    """Smooth transition vanishing on the half-space x_1 <= threshold.

    Uses the classic C-infinity step s -> e(s) / (e(s) + e(1-s)) with
    e(s) = exp(-1/s) on s > 0, rescaled over [threshold, threshold + width].
    The p-phase region {a = 0} covers half the box when threshold is the
    domain center.
    """
    if a_sup < 0.0 or width <= 0.0:
        raise NegativeArgument("need a_sup >= 0 and width > 0")

    def smooth_step(s):
        s = np.clip(s, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            e1 = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
            e2 = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        return e1 / (e1 + e2)

    def fn(*coords_t):
        x1 = coords_t[0]
        out = a_sup * smooth_step((x1 - threshold) / width)
        return np.broadcast_to(out, np.broadcast(*coords_t).shape).copy()

    return CoefficientFn("bump", float(a_sup), fn)


def checkerboard_coefficient(
    a_sup: float,
    block: float = 0.25,
    block_t: float = 0.25,
    origin: tuple[float, ...] = (0.0, 0.0, 0.0),
) -> CoefficientFn:
    """Space-time checkerboard alternating between 0 and a_sup.

    Rough but bounded: parity of the (block-quantized) cell index sum decides
    which phase a point sees.
    """
    if a_sup < 0.0 or block <= 0.0 or block_t <= 0.0:
        raise NegativeArgument("need a_sup >= 0 and positive block sizes")

    def fn(*coords_t):
        t = coords_t[-1]
        idx = np.floor((t - origin[-1]) / block_t).astype(np.int64)
        for axis, x in enumerate(coords_t[:-1]):
            idx = idx + np.floor((x - origin[axis]) / block).astype(np.int64)
        return np.where(idx % 2 == 0, a_sup, 0.0) * np.ones(np.broadcast(*coords_t).shape)

    return CoefficientFn("checkerboard", float(a_sup), fn)


def sampled_coefficient(field, a_sup: float | None = None) -> CoefficientFn:
    """Coefficient sampled from a Field by nearest-node lookup.

    Values are clipped to [0, max] so the bound 0 <= a <= a_sup holds no
    matter what the field contains.
    """
    vals = field.values
    top = float(np.max(vals)) if a_sup is None else float(a_sup)
    top = max(top, 0.0)
    grid = field.grid

    def fn(*coords_t):
        t = np.asarray(coords_t[-1], dtype=float)
        shape = np.broadcast(*coords_t).shape
        tj = np.clip(
            np.rint((t - (grid.t_end - grid.time_length)) / grid.dt).astype(np.int64),
            0,
            grid.nt - 1,
        )
        node_idx = []
        for axis, x in enumerate(coords_t[:-1]):
            x0 = grid.x_center[axis] - grid.radius
            node_idx.append(
                np.clip(
                    np.rint((np.asarray(x, dtype=float) - x0) / grid.h).astype(np.int64),
                    0,
                    grid.nx - 1,
                )
            )
        raw = vals[(tj,) + tuple(node_idx)]
        return np.clip(np.broadcast_to(raw, shape), 0.0, top)

    return CoefficientFn("sampled", top, fn)


# --------------------------------------------------------------- flux model


@dataclass(frozen=True)
class FluxModel:
    """Model vector field scale * (|xi|^(p-2) xi + a(z) |xi|^(q-2) xi).

    ``scale`` multiplies the whole flux (scalar multiples are the only other
    built-in fluxes); the integrand H itself is never scaled.
    """

    exps: ExponentSet
    coeff: CoefficientFn
    scale: float = 1.0

    @property
    def p(self) -> float:
        return self.exps.p

    @property
    def q(self) -> float:
        return self.exps.q

    def a_at(self, *coords_t) -> np.ndarray:
        return self.coeff(*coords_t)

    def h_values(self, kappa: np.ndarray, a_vals: np.ndarray) -> np.ndarray:
        """Vectorized H: kappa**p + a*kappa**q, with the q-term masked to a > 0."""
        kappa = np.asarray(kappa, dtype=float)
        a_vals = np.asarray(a_vals, dtype=float)
        out = kappa**self.p
        mask = a_vals > 0.0
        if np.any(mask):
            add = a_vals[mask] * np.broadcast_to(kappa, out.shape)[mask] ** self.q
            out = out.copy() if not out.flags.writeable else out
            out[mask] += add
        return out

    def flux_factor(self, grad_mag: np.ndarray, a_vals: np.ndarray) -> np.ndarray:
        """Scalar multiplier of xi: scale * (|xi|^(p-2) + a |xi|^(q-2))."""
        s = np.asarray(grad_mag, dtype=float)
        a_vals = np.asarray(a_vals, dtype=float)
        safe = np.where(s > _FLUX_UNDERFLOW, s, 1.0)
        fac = safe ** (self.p - 2.0)
        mask = a_vals > 0.0
        if np.any(mask):
            fac = fac.copy()
            fac[mask] += a_vals[mask] * safe[mask] ** (self.q - 2.0)
        fac = np.where(s > _FLUX_UNDERFLOW, fac, 0.0)
        return self.scale * fac

    def flux_vectors(self, grad: np.ndarray, a_vals: np.ndarray) -> np.ndarray:
        """Apply the model flux to a stacked gradient array (dim first)."""
        mag = np.sqrt(np.sum(grad * grad, axis=0))
        return self.flux_factor(mag, a_vals) * grad

    def diffusivity(self, grad_mag: np.ndarray, a_vals: np.ndarray, eps: float) -> np.ndarray:
        """Regularized diffusivity scale * ((s^2+eps^2)^((p-2)/2) + a (s^2+eps^2)^((q-2)/2))."""
        s2 = np.asarray(grad_mag, dtype=float) ** 2 + eps * eps
        a_vals = np.asarray(a_vals, dtype=float)
        out = s2 ** (0.5 * (self.p - 2.0))
        mask = a_vals > 0.0
        if np.any(mask):
            out = out.copy()
            out[mask] += a_vals[mask] * s2[mask] ** (0.5 * (self.q - 2.0))
        return self.scale * out


# --------------------------------------------------------------- operations


def h_integrand(flux: FluxModel, z: tuple, kappa: float) -> float:
    """H(z, kappa) = kappa^p + a(z) kappa^q at a single point z = (x..., t)."""
    if kappa < 0.0:
        raise NegativeArgument(f"kappa must be >= 0, got {kappa}")
    a = float(np.asarray(flux.a_at(*[np.asarray(c, dtype=float) for c in z])))
    out = kappa**flux.p
    if a > 0.0:
        out += a * kappa**flux.q
    return out


def model_flux(flux: FluxModel, z: tuple, xi) -> np.ndarray:
    """Model flux vector at a single point; exactly 0 at (and near) xi = 0."""
    xi = np.asarray(xi, dtype=float)
    mag = float(np.sqrt(np.sum(xi * xi)))
    if mag <= _FLUX_UNDERFLOW:
        return np.zeros_like(xi)
    a = float(np.asarray(flux.a_at(*[np.asarray(c, dtype=float) for c in z])))
    fac = mag ** (flux.p - 2.0)
    if a > 0.0:
        fac += a * mag ** (flux.q - 2.0)
    return flux.scale * fac * xi


def check_structure(flux: FluxModel, samples: list) -> tuple[float, float]:
    """Tightest empirical (nu, L) of the coercivity and growth bounds.

    Over the samples [(z, xi), ...] this returns
      nu = min  A(z,xi).xi / (|xi|^p + a|xi|^q)   and
      L  = max  |A(z,xi)|  / (|xi|^(p-1) + a|xi|^(q-1)),
    skipping xi = 0 where both ratios degenerate to 0/0.  For the model flux
    both ratios equal ``scale`` exactly.
    """
    nu_emp = math.inf
    l_emp = -math.inf
    used = 0
    for z, xi in samples:
        xi = np.asarray(xi, dtype=float)
        mag = float(np.sqrt(np.sum(xi * xi)))
        if mag <= _FLUX_UNDERFLOW:
            continue
        a = float(np.asarray(flux.a_at(*[np.asarray(c, dtype=float) for c in z])))
        vec = model_flux(flux, z, xi)
        lower = mag**flux.p
        upper = mag ** (flux.p - 1.0)
        if a > 0.0:
            lower += a * mag**flux.q
            upper += a * mag ** (flux.q - 1.0)
        nu_emp = min(nu_emp, float(np.dot(vec, xi)) / lower)
        l_emp = max(l_emp, float(np.sqrt(np.sum(vec * vec))) / upper)
        used += 1
    if used == 0:
        raise EmptySampleSet("no usable (z, xi) samples with xi != 0")
    return nu_emp, l_emp
