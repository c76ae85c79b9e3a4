"""Gaussian expectations, the two-sided Gaussian tail and closed-form integrals.

Every expectation is against a standard normal ``Z``. Two rule families back
them:

* Gauss-Hermite with the probabilists' weight, normalised to unit mass. Used
  for smooth integrands whose scale in ``Z`` is of order one.
* Composite Gauss-Legendre panels graded around a point of rapid variation.
  Used when an integrand ``f(aZ + b)`` has a kink, or when the slope ``a`` is so
  large that the integrand changes on a scale ``1/a`` that Hermite nodes cannot
  resolve.

Tail convention: ``erfc(z) = 2 * P(Z > z)``, so ``erfc(0) = 1``. This equals the
C-library ``erfc(z / sqrt(2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import special

from .errors import DomainError, ParameterError

__all__ = [
    "DEFAULT_ORDER",
    "QuadContext",
    "hermite_context",
    "panel_context",
    "affine_context",
    "gauss_expect",
    "expect_affine",
    "erfc_scaled",
    "erfcx_scaled",
    "tail_bound_lower",
    "tail_bound_upper",
    "abs_gauss_moment",
    "exp_abs_gauss",
    "weighted_exp_abs_gauss",
    "t_minus_plus",
    "log_cosh",
    "sech",
]

DEFAULT_ORDER = 80
# Beyond |z| = 38 the normal density underflows double precision.
Z_MAX = 38.0
# Largest slope a for which Hermite nodes resolve tanh-like f(aZ + b) to ~1e-12.
SMOOTH_SLOPE = 1.5
_PANEL_NODES = 12
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class QuadContext:
    """Immutable quadrature rule for the standard normal measure.

    Attributes:
        nodes: Abscissas in increasing order.
        weights: Positive weights summing to one.
        order: Number of nodes.
        kind: ``"hermite"`` or ``"panels"``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    kind: str = "hermite"

    def __post_init__(self) -> None:
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ParameterError("nodes and weights must be 1-D arrays of equal length")
        if self.order != self.nodes.size:
            raise ParameterError("order must equal the number of nodes")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)


@lru_cache(maxsize=16)
def hermite_context(order: int = DEFAULT_ORDER) -> QuadContext:
    """Gauss-Hermite rule for ``E f(Z)`` with ``order`` nodes."""
    if order < 2:
        raise ParameterError(f"quadrature order must be >= 2, got {order}")
    x, w = hermegauss(order)
    w = w / w.sum()
    return QuadContext(nodes=np.asarray(x, dtype=float), weights=np.asarray(w, dtype=float),
                       order=int(order), kind="hermite")


@lru_cache(maxsize=4)
def _legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(npts)


def panel_context(breakpoints, nodes_per_panel: int = _PANEL_NODES) -> QuadContext:
    """Composite Gauss-Legendre rule on ``[-Z_MAX, Z_MAX]`` for the normal density.

    Args:
        breakpoints: Interior panel edges. Points outside the domain are dropped
            and the domain ends are always added.
        nodes_per_panel: Legendre nodes per panel.
    """
    pts = np.asarray(list(breakpoints) + [-Z_MAX, Z_MAX], dtype=float)
    pts = np.unique(np.clip(pts, -Z_MAX, Z_MAX))
    keep = np.concatenate(([True], np.diff(pts) > 1e-12))
    pts = pts[keep]
    lo, hi = pts[:-1], pts[1:]
    t, wt = _legendre(nodes_per_panel)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * wt[None, :]).ravel() * np.exp(-0.5 * nodes * nodes) / _SQRT_2PI
    return QuadContext(nodes=nodes, weights=weights, order=int(nodes.size), kind="panels")


def _graded_breakpoints(center: float, scale: float) -> list[float]:
    offsets = scale * np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0])
    fine = np.concatenate((center - offsets, center + offsets))
    coarse = np.arange(-Z_MAX, Z_MAX + 0.5, 1.0)
    return list(fine) + list(coarse)


def affine_context(a: float, b: float, kink: bool = False,
                   order: int = DEFAULT_ORDER) -> QuadContext:
    """Rule suited to ``E f(aZ + b)`` where ``f`` varies on a unit scale near 0.

    Hermite nodes are used when the integrand is smooth and ``a`` is moderate.
    Otherwise panels are graded around ``z = -b/a`` with width ``1/a``.
    """
    a = abs(float(a))
    if not kink and a <= SMOOTH_SLOPE:
        return hermite_context(order)
    if a == 0.0:
        return panel_context([])
    return panel_context(_graded_breakpoints(-float(b) / a, 1.0 / a))


def gauss_expect(f: Callable[[np.ndarray], np.ndarray], ctx: QuadContext | None = None) -> float:
    """Return ``sum_i w_i f(x_i)`` for the rule ``ctx`` (default Hermite, order 80).

    ``f`` receives the whole node array and must return values of the same
    shape, or a scalar.

    Raises:
        DomainError: if ``f`` is not finite at some node.
    """
    if ctx is None:
        ctx = hermite_context()
    vals = np.broadcast_to(np.asarray(f(ctx.nodes), dtype=float), ctx.nodes.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"integrand is not finite at node {i} (z={ctx.nodes[i]!r}): {vals[i]!r}")
    return float(np.dot(ctx.weights, vals))


def expect_affine(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                  kink: bool = False, order: int = DEFAULT_ORDER) -> float:
    """``E f(aZ + b)`` with a rule chosen by :func:`affine_context`."""
    ctx = affine_context(a, b, kink=kink, order=order)
    return gauss_expect(lambda z: f(a * z + b), ctx)


def erfc_scaled(z):
    """Two-sided Gaussian tail ``2 P(Z > z)``.

    Conversion: equals ``scipy.special.erfc(z / sqrt(2))``. For ``z > 0`` the value
    is assembled from the scaled tail to keep full relative precision.
    """
    z = np.asarray(z, dtype=float)
    u = z / math.sqrt(2.0)
    # z*z may overflow for huge z; exp(-inf) = 0 is then the correct tail
    with np.errstate(over="ignore"):
        out = np.where(z > 0, special.erfcx(np.maximum(u, 0.0)) * np.exp(-0.5 * z * z), special.erfc(u))
    return out.item() if out.ndim == 0 else out


def erfcx_scaled(z):
    """``exp(z**2 / 2) * erfc_scaled(z)``, finite for all large positive ``z``."""
    z = np.asarray(z, dtype=float)
    out = special.erfcx(z / math.sqrt(2.0))
    return out.item() if out.ndim == 0 else out


def tail_bound_lower(z):
    """``2 / (z + sqrt(z**2 + 4))``, a lower bound on ``sqrt(pi/2) erfcx_scaled(z)``."""
    z = np.asarray(z, dtype=float)
    out = 2.0 / (z + np.sqrt(z * z + 4.0))
    return out.item() if out.ndim == 0 else out


def tail_bound_upper(z):
    """``2 / (z + sqrt(z**2 + 8/pi))``, an upper bound on ``sqrt(pi/2) erfcx_scaled(z)``."""
    z = np.asarray(z, dtype=float)
    out = 2.0 / (z + np.sqrt(z * z + 8.0 / math.pi))
    return out.item() if out.ndim == 0 else out


def _check_ab(a: float, b: float) -> tuple[float, float]:
    a = float(a)
    b = float(b)
    if not a > 0.0:
        raise ParameterError(f"scale a must be positive, got {a!r}")
    if not b >= 0.0:
        raise ParameterError(f"shift b must be nonnegative, got {b!r}")
    return a, b


def abs_gauss_moment(a: float, b: float) -> float:
    """``E|aZ + b| = a sqrt(2/pi) exp(-(b/a)^2/2) + b (1 - erfc(b/a))``."""
    a, b = _check_ab(a, b)
    r = b / a
    return a * _SQRT_2_OVER_PI * math.exp(-0.5 * r * r) + b * (1.0 - erfc_scaled(r))


def t_minus_plus(a: float, b: float) -> tuple[float, float]:
    """The two pieces ``(t-, t+)`` with ``E exp(-|aZ + b|) = t- + t+``.

    Exponential prefactors are merged with the tail in log space: whenever
    ``erfc`` is evaluated at a positive argument ``s`` the product
    ``exp(a^2/2 - b) erfc(s)`` is rewritten as ``exp(-(b/a)^2/2) erfcx(s)``.
    """
    a, b = _check_ab(a, b)
    r = b / a
    gauss = math.exp(-0.5 * r * r)
    s = a - r
    if s <= 0.0:
        t_minus = math.exp(0.5 * a * a - b) * (1.0 - 0.5 * erfc_scaled(-s))
    else:
        t_minus = 0.5 * gauss * erfcx_scaled(s)
    t_plus = 0.5 * gauss * erfcx_scaled(r + a)
    return t_minus, t_plus


def exp_abs_gauss(a: float, b: float) -> float:
    """``E exp(-|aZ + b|)`` in closed form."""
    t_minus, t_plus = t_minus_plus(a, b)
    return t_minus + t_plus


def weighted_exp_abs_gauss(a: float, b: float) -> float:
    """``E |aZ + b| exp(-|aZ + b|)`` in closed form (Gaussian integration by parts)."""
    t_minus, t_plus = t_minus_plus(a, b)
    r = b / a
    val = b * (t_minus - t_plus) - a * a * (t_minus + t_plus) + a * _SQRT_2_OVER_PI * math.exp(-0.5 * r * r)
    # Cancellation at large a can leave a rounding-sized negative value.
    return max(val, 0.0)


def log_cosh(x):
    """``log cosh x`` without overflow."""
    ax = np.abs(np.asarray(x, dtype=float))
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def sech(x):
    """``1 / cosh x`` without overflow."""
    ax = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-ax)
    return 2.0 * e / (1.0 + e * e)
