"""Free-energy functionals on the cube ``[-1, 1]^N`` and their duality.

``psi_fn`` and ``phi_fn`` are unnormalised (extensive); ``f_tap`` and ``f_ht``
are per spin. All take the shifted matrix ``A = J/sqrt(N) - beta (1 - q) I``
from a :class:`DisorderSample`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .disorder import DisorderSample
from .errors import DomainError, ParameterError
from .gauss_quad import log_cosh
from .rs_scalars import ModelParams

__all__ = [
    "cramer_entropy",
    "cramer_conjugate",
    "edwards_anderson",
    "psi_fn",
    "phi_fn",
    "grad_psi",
    "f_tap",
    "f_ht",
    "f_ht_from_psi",
    "modified_field",
    "duality_gap_bound",
    "plefka_condition",
    "BOUNDARY_MARGIN",
]

LOG2 = math.log(2.0)
# Gradient evaluations reject |m_i| beyond this.
BOUNDARY_MARGIN = 1e-12


def _as_mag(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 1:
        raise ParameterError(f"magnetization must be a vector, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("magnetization has non-finite entries")
    if np.any(np.abs(m) > 1.0):
        i = int(np.argmax(np.abs(m)))
        raise DomainError(f"magnetization component {i} = {m[i]!r} lies outside [-1, 1]")
    return m


def _field(hvec, n: int) -> np.ndarray:
    h = np.broadcast_to(np.asarray(hvec, dtype=float), (n,))
    if not np.all(np.isfinite(h)):
        raise DomainError("field has non-finite entries")
    return h


def cramer_entropy(x):
    """``(1+x)/2 log((1+x)/2) + (1-x)/2 log((1-x)/2)`` with ``0 log 0 = 0``.

    Raises:
        DomainError: if any ``|x| > 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("Cramer entropy is defined on [-1, 1] only")
    up = 0.5 * (1.0 + x)
    dn = 0.5 * (1.0 - x)
    out = xlogy(up, up) + xlogy(dn, dn)
    return out.item() if out.ndim == 0 else out


def cramer_conjugate(y):
    """``log cosh y + log 2``."""
    out = log_cosh(y) + LOG2
    return out.item() if np.ndim(out) == 0 else out


def edwards_anderson(m) -> float:
    """``(1/N) sum m_i^2``."""
    m = np.asarray(m, dtype=float)
    return float(m @ m) / m.size


def _check_sizes(m: np.ndarray, d: DisorderSample) -> None:
    if m.size != d.n:
        raise ParameterError(f"magnetization length {m.size} does not match N={d.n}")


def psi_fn(m, d: DisorderSample, p: ModelParams, hvec) -> float:
    """``(beta/2)(m, A m) + (h, m) - sum I(m_i)``, unnormalised."""
    m = _as_mag(m)
    _check_sizes(m, d)
    h = _field(hvec, d.n)
    am = d.a_matrix @ m
    return float(0.5 * p.beta * (m @ am) + h @ m - np.sum(cramer_entropy(m)))


def phi_fn(m, d: DisorderSample, p: ModelParams, hvec) -> float:
    """``-(beta/2)(m, A m) + sum I*(beta (A m)_i + h_i)``, unnormalised."""
    m = _as_mag(m)
    _check_sizes(m, d)
    h = _field(hvec, d.n)
    am = d.a_matrix @ m
    return float(-0.5 * p.beta * (m @ am) + np.sum(cramer_conjugate(p.beta * am + h)))


def grad_psi(m, d: DisorderSample, p: ModelParams, hvec) -> np.ndarray:
    """``beta (A m)_i + h_i - artanh(m_i)``.

    Raises:
        DomainError: if some ``|m_i| >= 1 - BOUNDARY_MARGIN``.
    """
    m = _as_mag(m)
    _check_sizes(m, d)
    if np.any(np.abs(m) >= 1.0 - BOUNDARY_MARGIN):
        i = int(np.argmax(np.abs(m)))
        raise DomainError(f"gradient is singular at |m_{i}| = {abs(m[i])!r}")
    h = _field(hvec, d.n)
    return p.beta * (d.a_matrix @ m) + h - np.arctanh(m)


def f_tap(m, d: DisorderSample, p: ModelParams, q: float) -> float:
    """Per-spin TAP functional with uniform field ``p.h``.

    ``(1/N)[(beta/2)(m, J m/sqrt(N)) + (h, m) - sum I(m_i)] + (beta^2/4)(1 - q_EA)^2``.
    ``q`` is unused but kept so ``f_tap`` and ``f_ht`` share a signature.
    """
    m = _as_mag(m)
    _check_sizes(m, d)
    n = d.n
    qea = edwards_anderson(m)
    energy = 0.5 * p.beta * float(m @ (d.j_over_sqrt_n @ m)) + p.h * float(m.sum())
    return (energy - float(np.sum(cramer_entropy(m)))) / n + 0.25 * p.beta ** 2 * (1.0 - qea) ** 2


def f_ht(m, d: DisorderSample, p: ModelParams, q: float) -> float:
    """``f_tap - (beta^2/4)(q - q_EA)^2``."""
    qea = edwards_anderson(m)
    return f_tap(m, d, p, q) - 0.25 * p.beta ** 2 * (q - qea) ** 2


def f_ht_from_psi(m, d: DisorderSample, p: ModelParams, q: float) -> float:
    """``psi_fn / N + (beta^2/4)(1 - q^2)``, the second route to ``f_ht``.

    Needs ``d.a_matrix`` built with the same ``q``.
    """
    return psi_fn(m, d, p, p.h) / d.n + 0.25 * p.beta ** 2 * (1.0 - q * q)


def modified_field(mbar, d: DisorderSample, p: ModelParams, hvec) -> np.ndarray:
    """``h - grad_psi(mbar)``, the field for which ``mbar`` is a critical point."""
    h = _field(hvec, d.n)
    return h - grad_psi(mbar, d, p, h)


def duality_gap_bound(m, d: DisorderSample, p: ModelParams, hvec, kappa: float = 1.0) -> dict:
    """Approximate-duality check ``|psi - phi|/N <= (1 + kappa) ||grad psi||_2 / sqrt(N)``.

    Returns a dict with ``gap``, ``bound``, ``holds`` and ``norm_ok`` (the
    hypothesis ``q_EA(m) <= kappa^2``).
    """
    m = _as_mag(m)
    n = d.n
    gap = abs(psi_fn(m, d, p, hvec) - phi_fn(m, d, p, hvec)) / n
    gnorm = float(np.linalg.norm(grad_psi(m, d, p, hvec))) / math.sqrt(n)
    bound = (1.0 + kappa) * gnorm
    return {"gap": gap, "bound": bound, "holds": gap <= bound,
            "norm_ok": edwards_anderson(m) <= kappa * kappa}


def plefka_condition(m, p: ModelParams) -> tuple[float, bool]:
    """``beta^2 (1/N) sum (1 - m_i^2)^2`` and whether it is ``< 1``."""
    m = _as_mag(m)
    v = p.beta ** 2 * float(np.mean((1.0 - m * m) ** 2))
    return v, v < 1.0
