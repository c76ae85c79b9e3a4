"""Ground truth at small N: exact partition function, direct maximisation of
``F^HT`` over the cube and the Gaussian-integral representation of ``Z``.

``-H(sigma) = (beta/2) sum_ij (J/sqrt N)_ij sigma_i sigma_j + h sum_i sigma_i``,
diagonal couplings included.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .disorder import DisorderSample, sample_disorder
from .errors import CapacityError, DomainError, NumericalError
from .functionals import edwards_anderson, f_ht, grad_psi, phi_fn
from .gauss_quad import hermite_context, log_cosh
from .hessian_spec import hessian, sample_shell
from .rs_scalars import ModelParams, RsSolution, solve_q
from .tap_solver import iterate_tap

__all__ = [
    "ExactResult",
    "FhtMaximum",
    "HsResult",
    "brute_force_z",
    "maximize_fht",
    "sqrt_sym",
    "hs_integral",
    "shifted_hs_integral",
    "gap_study",
    "GAP_COLUMNS",
    "MAX_ENUM_N",
    "MAX_HS_N",
]

MAX_ENUM_N = 22
MAX_HS_N = 3
GAP_COLUMNS = ("n", "seed", "log_z_per_spin", "sup_fht", "gap", "q_ea_argmax")
# Low spins enumerated as a dense block; the rest walked in Gray-code order.
_BLOCK_BITS = 12
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ExactResult:
    """One row of the finite-size comparison."""

    n: int
    seed: int
    log_z_per_spin: float
    sup_fht: float
    argmax: np.ndarray
    gap: float
    q_ea_argmax: float


def _spin_block(b: int) -> np.ndarray:
    """All ``2^b`` spin vectors, bit ``k`` of the row index giving spin ``k``."""
    idx = np.arange(1 << b, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(b)) & 1
    return (2 * bits - 1).astype(float)


def brute_force_z(d: DisorderSample, p: ModelParams) -> float:
    """``(1/N) log sum_sigma exp(-H(sigma))``.

    The first ``min(N, 12)`` spins are enumerated as a block; the remaining
    spins follow a Gray-code walk in which the block's local field and the
    walked spins' energy are updated by one column per step. Each step's
    block contribution is reduced by log-sum-exp.

    Raises:
        CapacityError: if ``N > 22``.
    """
    n = d.n
    if n > MAX_ENUM_N:
        raise CapacityError(f"exact enumeration supports N <= {MAX_ENUM_N}, got {n}")
    j = np.asarray(d.j_over_sqrt_n, dtype=float)
    beta, h = p.beta, p.h
    b = min(n, _BLOCK_BITS)
    low = _spin_block(b)
    j_ll = j[:b, :b]
    e_low = 0.5 * beta * np.einsum("ki,ij,kj->k", low, j_ll, low) + h * low.sum(axis=1)
    rest = n - b
    if rest == 0:
        return float(logsumexp(e_low)) / n
    j_lh = j[:b, b:]
    j_hh = j[b:, b:]
    sig = -np.ones(rest)
    field = j_lh @ sig
    hh_field = j_hh @ sig
    e_high = 0.5 * beta * float(sig @ hh_field) + h * float(sig.sum())
    parts = np.empty(1 << rest)
    parts[0] = logsumexp(e_low + beta * (low @ field)) + e_high
    for step in range(1, 1 << rest):
        k = (step & -step).bit_length() - 1
        s_old = sig[k]
        # flipping spin k: delta E = -2 s_k [beta (field_k - J_kk s_k) + h] with J_kk counted in field_k
        delta = -2.0 * s_old * (beta * (hh_field[k] - j_hh[k, k] * s_old) + h)
        e_high += delta
        sig[k] = -s_old
        hh_field -= 2.0 * s_old * j_hh[:, k]
        field -= 2.0 * s_old * j_lh[:, k]
        parts[step] = logsumexp(e_low + beta * (low @ field)) + e_high
    return float(logsumexp(parts)) / n


@dataclass(frozen=True)
class FhtMaximum:
    """Result of :func:`maximize_fht`.

    ``values`` holds ``F^HT`` at every converged start in start order (TAP
    start first); ``nan`` marks a start that did not converge.
    """

    argmax: np.ndarray
    value: float
    grad_norm: float
    values: tuple[float, ...]
    concave_at_argmax: bool
    lambda_max_hessian: float


def _newton_polish(y: np.ndarray, d: DisorderSample, p: ModelParams, max_steps: int = 60) -> np.ndarray:
    # Solve y = h + beta A tanh(y) in field variables, where the cube boundary is at infinity.
    a = d.a_matrix
    beta, h = p.beta, p.h
    eye = np.eye(d.n)

    def resid(v):
        return v - h - beta * (a @ np.tanh(v))

    r = resid(y)
    rn = float(np.linalg.norm(r))
    for _ in range(max_steps):
        if rn <= 1e-14 * math.sqrt(d.n):
            break
        jac = eye - beta * a * (1.0 - np.tanh(y) ** 2)[None, :]
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-6:
            y_new = y + t * step
            r_new = resid(y_new)
            rn_new = float(np.linalg.norm(r_new))
            if rn_new < rn:
                break
            t *= 0.5
        else:
            break
        y, r, rn = y_new, r_new, rn_new
    return y


def _solve_from(m0: np.ndarray, d: DisorderSample, p: ModelParams, max_iter: int) -> np.ndarray:
    m = np.clip(np.asarray(m0, dtype=float), -1.0 + 1e-12, 1.0 - 1e-12)
    a = d.a_matrix
    for _ in range(max_iter):
        new = 0.5 * m + 0.5 * np.tanh(p.h + p.beta * (a @ m))
        if float(np.max(np.abs(new - m))) < 1e-13:
            m = new
            break
        m = new
    y = p.h + p.beta * (a @ m)
    return np.tanh(_newton_polish(y, d, p))


def maximize_fht(d: DisorderSample, p: ModelParams, q: float, restarts: int = 16, seed: int = 0,
                 k_tap: int = 12, max_iter: int = 5000, tol: float = 1e-8,
                 one_minus_q: float | None = None) -> FhtMaximum:
    """Best stationary point of ``F^HT`` over multi-start fixed-point iteration.

    Starts: the TAP iterate ``m^(k_tap)``, then ``restarts`` points with
    ``q_EA`` stratified over ``(0, 1)``. Each start runs the damped map
    ``m <- (m + tanh(h + beta A m)) / 2`` and a Newton polish. A start counts as
    converged when ``||grad psi||_{2,N} < tol``.

    Raises:
        CapacityError: if ``N > 200``.
        NumericalError: if no start converges.
    """
    n = d.n
    if n > 200:
        raise CapacityError(f"maximize_fht is dense; N <= 200 required, got {n}")
    starts = []
    if p.h > 0.0:
        starts.append(iterate_tap(d, p, q, max(k_tap, 2), one_minus_q=one_minus_q).iterates[-1])
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    for i in range(restarts):
        starts.append(sample_shell(n, (i + 0.5) / restarts, rng))
    values, best = [], None
    for m0 in starts:
        m = _solve_from(m0, d, p, max_iter)
        try:
            g = float(np.linalg.norm(grad_psi(m, d, p, p.h))) / math.sqrt(n)
        except DomainError:
            g = math.inf
        if not g < tol:
            values.append(math.nan)
            continue
        v = f_ht(m, d, p, q)
        values.append(v)
        if best is None or v > best[1]:
            best = (m, v, g)
    if best is None:
        raise NumericalError(f"no start converged to a stationary point (N={n}, beta={p.beta}, h={p.h})")
    m, v, g = best
    lam = float(np.linalg.eigvalsh(hessian(m, d, p, q, one_minus_q))[-1])
    return FhtMaximum(argmax=m, value=v, grad_norm=g, values=tuple(values),
                      concave_at_argmax=lam < 0.0, lambda_max_hessian=lam)


def sqrt_sym(a: np.ndarray) -> np.ndarray:
    """Complex symmetric square root with ``sqrt(lambda) = i sqrt(|lambda|)`` for ``lambda < 0``."""
    w, v = np.linalg.eigh(np.asarray(a, dtype=float))
    roots = np.where(w >= 0.0, np.sqrt(np.abs(w)) + 0j, 1j * np.sqrt(np.abs(w)))
    return (v * roots) @ v.T


@dataclass(frozen=True)
class HsResult:
    """Value of the integral, with the two quadrature orders used to accept it.

    ``remainder`` is only set for shifted integrals.
    """

    value: complex
    value_coarse: complex
    log_z_per_spin: complex
    order: int
    remainder: complex | None = None
    phi_value: float | None = None


def _tensor_sum(n: int, order: int, integrand) -> complex:
    ctx = hermite_context(order)
    x, w = ctx.nodes, ctx.weights
    total = 0j
    # Outer dimension chunked so N = 3 needs O(order^2) memory per slice.
    for i in range(order):
        if n == 1:
            pts = np.array([[x[i]]])
            wts = np.array([w[i]])
        else:
            grids = np.meshgrid(*([x] * (n - 1)), indexing="ij")
            wgrid = np.meshgrid(*([w] * (n - 1)), indexing="ij")
            pts = np.column_stack([np.full(grids[0].size, x[i])] + [g.ravel() for g in grids])
            wts = w[i] * np.prod(np.column_stack([g.ravel() for g in wgrid]), axis=1)
        total += complex(np.sum(wts * integrand(pts)))
    return total


def _hs_core(d: DisorderSample, p: ModelParams, order: int, shift: np.ndarray | None) -> complex:
    n = d.n
    root = sqrt_sym(d.a_matrix)
    sb = math.sqrt(p.beta)
    xs = np.zeros(n, dtype=complex) if shift is None else shift

    def integrand(pts):
        y = pts + xs[None, :]
        arg = sb * (y @ root.T) + p.h
        # exp(-x.x* - x*.x*/2): bilinear, the Gaussian weight carries exp(-x.x/2)
        gauss = np.exp(-(pts @ xs) - 0.5 * (xs @ xs))
        return (2.0 ** n) * gauss * np.prod(np.cosh(arg), axis=1)

    return _tensor_sum(n, order, integrand)


def _check_hs(d: DisorderSample) -> None:
    if d.n > MAX_HS_N:
        raise CapacityError(f"tensor quadrature supports N <= {MAX_HS_N}, got {d.n}")


def _refined(d, p, order, tol, shift) -> tuple[complex, complex]:
    fine = _hs_core(d, p, order, shift)
    coarse = _hs_core(d, p, order // 2, shift)
    if abs(fine - coarse) > tol * abs(fine):
        raise NumericalError(
            f"quadrature not converged: order {order // 2} gives {coarse!r}, order {order} gives {fine!r}")
    return fine, coarse


def hs_integral(d: DisorderSample, p: ModelParams, q: float, order: int = 120, tol: float = 1e-8,
                one_minus_q: float | None = None) -> HsResult:
    """``Z = exp(N beta^2 (1 - q)/2) * E_x [2^N prod_j cosh(sqrt(beta) (sqrt(A) x)_j + h)]``.

    ``E_x`` is over a standard Gaussian vector; the tensor Gauss-Hermite rule
    of ``order`` nodes per axis is accepted if it agrees with half the order
    to relative ``tol``. ``d.a_matrix`` must be built with ``q``.

    Raises:
        CapacityError: if ``N > 3``.
        NumericalError: if the refinement check fails.
    """
    _check_hs(d)
    u = 1.0 - q if one_minus_q is None else one_minus_q
    pref = math.exp(0.5 * d.n * p.beta ** 2 * u)
    fine, coarse = _refined(d, p, order, tol, None)
    val = pref * fine
    return HsResult(value=val, value_coarse=pref * coarse, log_z_per_spin=np.log(val) / d.n, order=order)


def shifted_hs_integral(d: DisorderSample, p: ModelParams, q: float, z, order: int = 120, tol: float = 1e-8,
                        one_minus_q: float | None = None) -> HsResult:
    """The same integral with the contour moved through ``x* = sqrt(beta) sqrt(A) z``.

    Also returns ``remainder = (1/N) log(I_shift exp(-phi(z)))`` where ``phi`` is
    the unnormalised dual functional (equal to the integrand's log at ``x*``),
    so that ``(1/N) log Z = phi(z)/N + beta^2 (1 - q)/2 + remainder``.
    """
    _check_hs(d)
    z = np.asarray(z, dtype=float)
    n = d.n
    u = 1.0 - q if one_minus_q is None else one_minus_q
    xs = math.sqrt(p.beta) * (sqrt_sym(d.a_matrix) @ z)
    fine, coarse = _refined(d, p, order, tol, xs)
    pref = math.exp(0.5 * n * p.beta ** 2 * u)
    phi = phi_fn(z, d, p, p.h) if np.all(np.abs(z) <= 1.0) else _phi_unbounded(z, d, p)
    rem = (np.log(fine) - phi) / n
    return HsResult(value=pref * fine, value_coarse=pref * coarse, log_z_per_spin=np.log(pref * fine) / n,
                    order=order, remainder=rem, phi_value=phi)


def _phi_unbounded(z: np.ndarray, d: DisorderSample, p: ModelParams) -> float:
    # phi extends to all of R^N; phi_fn only accepts points of the cube.
    az = d.a_matrix @ z
    return float(-0.5 * p.beta * (z @ az) + np.sum(log_cosh(p.beta * az + p.h) + LOG2))


def gap_study(p: ModelParams, sizes, seeds_per_size: int, sol: RsSolution | None = None,
              base_seed: int = 0, restarts: int = 16) -> list[ExactResult]:
    """``|F_N - sup F^HT|`` per ``(N, seed)`` for seeds ``base_seed .. base_seed + seeds_per_size - 1``."""
    sol = sol or solve_q(p)
    out = []
    for n, s in itertools.product(sizes, range(base_seed, base_seed + seeds_per_size)):
        if n > MAX_ENUM_N:
            raise CapacityError(f"exact enumeration supports N <= {MAX_ENUM_N}, got {n}")
        d = sample_disorder(n, s, p, sol.q, sol.one_minus_q)
        fz = brute_force_z(d, p)
        mx = maximize_fht(d, p, sol.q, restarts=restarts, seed=s, one_minus_q=sol.one_minus_q)
        out.append(ExactResult(n=n, seed=s, log_z_per_spin=fz, sup_fht=mx.value, argmax=mx.argmax,
                               gap=abs(fz - mx.value), q_ea_argmax=edwards_anderson(mx.argmax)))
    return out
