"""Parameter regime validation and derived exponent algebra.

The diffusion switches between p-growth and q-growth, and every estimate
downstream is driven by a handful of derived exponents:

* the gap threshold  ``tilde_p = p + p/n``  (admissible regime: q < tilde_p),
* the interpolation exponent  ``theta = 2pn(q-2) / (2q(pn - 2n + 2))``,
* the iteration exponent  ``vartheta = tilde_p*theta/p + tilde_p*(1-theta)/2 - 1``
  (with theta evaluated at q -> tilde_p, so it depends on (n, p) only),
* the geometric decay ratio  ``lam`` with  lam**vartheta = 2**(tilde_p*(1+vartheta)).

Two conventions for vartheta are in circulation: with and without the
trailing ``- 1``.  Both are exposed (``vartheta`` is the -1 version used by
all iteration logic, ``vartheta_theorem`` the other); reports downstream can
show results under either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DimensionTooSmall,
    ExponentOrder,
    GapTooWide,
    GapTooWideForEmbedding,
    NonpositiveVartheta,
)

# beyond ~1e12 in magnitude, power chains are evaluated in log space
_LOG_SPACE_CUTOFF = 12.0 * math.log(10.0)


@dataclass(frozen=True)
class ExponentSet:
    """Validated (n, p, q, nu, L, a_sup) with all derived exponents.

    ``theta`` is the interpolation exponent at q -> tilde_p, which is the one
    the iteration and the sup-bound use; the embedding check recomputes
    theta(n, p, q) for its own q.  Invariants: 2 <= p < q < tilde_p,
    theta in (0, 1), vartheta > 0, lam > 1.
    """

    n: int
    p: float
    q: float
    nu: float
    ell_bound: float
    a_sup: float
    tilde_p: float
    theta: float
    vartheta: float
    vartheta_theorem: float
    lam: float


def validate_params(n: int, p: float, q: float, *, min_dim: int = 2) -> bool:
    """Check the admissible regime n >= 2 and 2 <= p < q < p + p/n.

    Raises DimensionTooSmall / ExponentOrder / GapTooWide; returns True when
    the regime holds.  Comparisons are strict floating comparisons with no
    tolerance: the regime boundaries are analytic and callers supply exact
    rationals in practice.
    """
    if int(n) != n or n < min_dim:
        raise DimensionTooSmall(f"need spatial dimension n >= {min_dim}, got {n}")
    if p < 2.0 or q <= p:
        raise ExponentOrder(f"need 2 <= p < q, got p={p}, q={q}")
    if q >= p + p / n:
        raise GapTooWide(f"need q < p + p/n = {p + p / n}, got q={q}")
    return True


def compute_tilde_p(n: int, p: float) -> float:
    """Gap threshold p + p/n."""
    if n < 1:
        raise DimensionTooSmall(f"need n >= 1, got {n}")
    if p < 2.0:
        raise ExponentOrder(f"need p >= 2, got p={p}")
    return p + p / n


def compute_theta(n: int, p: float, q: float) -> float:
    """Interpolation exponent theta(n, p, q) in (0, 1).

    theta = (2pqn - 4pn) / (2pqn - 4qn + 4q); it satisfies the balance
    identity (n-1)*theta/n + (1-theta)*p/2 = p/q, and theta < 1 exactly when
    q < p + p/(n-1).
    """
    if n < 1:
        raise DimensionTooSmall(f"need n >= 1, got {n}")
    if p < 2.0 or q <= p:
        raise ExponentOrder(f"need 2 <= p < q, got p={p}, q={q}")
    if n > 1 and q >= p + p / (n - 1):
        raise GapTooWideForEmbedding(
            f"need q < p + p/(n-1) = {p + p / (n - 1)}, got q={q}"
        )
    num = 2.0 * p * q * n - 4.0 * p * n
    den = 2.0 * p * q * n - 4.0 * q * n + 4.0 * q
    return num / den


def compute_vartheta_and_lambda(exps: ExponentSet) -> tuple[float, float]:
    """Iteration exponent vartheta and decay ratio lam of an ExponentSet.

    vartheta = tilde_p*theta/p + tilde_p*(1-theta)/2 - 1 with the q -> tilde_p
    theta; it is bounded below by tilde_p/p - 1 > 0.  lam solves
    lam**vartheta = 2**(tilde_p*(1+vartheta)).
    """
    return _vartheta_and_lambda(exps.p, exps.tilde_p, exps.theta)


def _vartheta_and_lambda(p: float, tilde_p: float, theta: float) -> tuple[float, float]:
    vartheta = tilde_p * theta / p + tilde_p * (1.0 - theta) / 2.0 - 1.0
    if vartheta <= 0.0:
        raise NonpositiveVartheta(
            f"vartheta = {vartheta} <= 0 (exponent bookkeeping bug)"
        )
    lam = 2.0 ** (tilde_p * (1.0 + vartheta) / vartheta)
    return vartheta, lam


def build_exponents(
    n: int,
    p: float,
    q: float,
    nu: float = 1.0,
    ell_bound: float = 1.0,
    a_sup: float = 0.0,
    *,
    strict: bool = True,
) -> ExponentSet:
    """Validate the regime and assemble an ExponentSet.

    ``strict=False`` relaxes the dimension floor to n >= 1 so that 1-D solver
    benchmarks can carry a flux parameterization; the derived exponents are
    still computed (for n = 1 the embedding hypothesis is vacuous).
    """
    validate_params(n, p, q, min_dim=2 if strict else 1)
    if not (0.0 < nu <= ell_bound):
        raise ExponentOrder(f"need 0 < nu <= L, got nu={nu}, L={ell_bound}")
    if a_sup < 0.0:
        raise ExponentOrder(f"need a_sup >= 0, got {a_sup}")
    tilde_p = compute_tilde_p(n, p)
    theta = compute_theta(n, p, tilde_p)
    vartheta, lam = _vartheta_and_lambda(p, tilde_p, theta)
    return ExponentSet(
        n=int(n),
        p=float(p),
        q=float(q),
        nu=float(nu),
        ell_bound=float(ell_bound),
        a_sup=float(a_sup),
        tilde_p=tilde_p,
        theta=theta,
        vartheta=vartheta,
        vartheta_theorem=vartheta + 1.0,
        lam=lam,
    )


def _pow_chain(factors: list[tuple[float, float]]) -> float:
    """Product of base**exponent terms, switching to log space for extremes.

    All bases must be positive.  The direct product is used when the log
    magnitude stays below ~1e12; beyond that everything is accumulated as
    exponent*log(base) and exponentiated once, which avoids intermediate
    overflow/underflow.
    """
    log_total = 0.0
    for base, expo in factors:
        if base <= 0.0:
            raise ValueError(f"positive base required, got {base}")
        log_total += expo * math.log(base)
    if abs(log_total) > _LOG_SPACE_CUTOFF:
        return math.exp(log_total)
    out = 1.0
    for base, expo in factors:
        out *= base**expo
    return out


def level_magnitude(
    exps: ExponentSet, sigma: float, y0: float, c_star: float
) -> float:
    """Truncation-level magnitude |k| that forces geometric decay.

    |k| = c_star * (1-sigma)**(q/(q-tilde_p)) * y0**(vartheta/((tilde_p-q)*(1+vartheta))).
    The first exponent is negative (q < tilde_p), so |k| blows up as
    sigma -> 1.  y0 = 0 returns 0: any level works on zero energy.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"need sigma in (0,1), got {sigma}")
    if c_star <= 1.0:
        raise ValueError(f"need c_star > 1, got {c_star}")
    if y0 < 0.0:
        raise ValueError(f"need y0 >= 0, got {y0}")
    if y0 == 0.0:
        return 0.0
    chi = exps.vartheta / ((exps.tilde_p - exps.q) * (1.0 + exps.vartheta))
    return _pow_chain(
        [
            (c_star, 1.0),
            (1.0 - sigma, exps.q / (exps.q - exps.tilde_p)),
            (y0, chi),
        ]
    )
