"""Scalar theory of the SK model: overlap q, RS free energy, AT value, the
overlap sequences of the iterative construction, region classifiers and the
large-field bound functions.

Conventions: ``Z, Z', Z''`` are independent standard normals and ``E`` their
joint expectation. Wherever ``1 - q`` or ``q - rho`` can fall below double
precision resolution the complementary quantity is carried explicitly rather
than recovered by subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gauss_quad as gq
from .errors import DomainError, NumericalError, ParameterError

__all__ = [
    "ModelParams",
    "RsSolution",
    "GammaRhoSeq",
    "RegionReport",
    "RhoBar",
    "solve_q",
    "sk_formula",
    "at_condition",
    "psi_map",
    "psi_gap",
    "psi_derivative_at_q",
    "gamma_rho_sequence",
    "theta_fn",
    "r_field",
    "r_star",
    "r_bounds",
    "rho_bar",
    "classify_region",
    "psi_rho",
    "psi_rho_sup",
    "delta_bh",
    "delta_upper_bounds",
    "one_minus_q_bounds",
    "f1_f2",
]

LOG2 = math.log(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
SQRT_3_4 = math.sqrt(0.75)


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature ``beta`` and uniform field ``h``.

    ``beta = 0`` is accepted as the degenerate independent-spin limit.
    """

    beta: float
    h: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise ParameterError(f"beta must be finite and >= 0, got {self.beta!r}")
        if not (math.isfinite(self.h) and self.h >= 0.0):
            raise ParameterError(f"h must be finite and >= 0, got {self.h!r}")


@dataclass(frozen=True)
class RsSolution:
    """Solution of ``q = E tanh^2(beta sqrt(q) Z + h)``.

    ``one_minus_q`` is computed as ``E sech^2(...)`` and stays accurate when
    ``q`` rounds to 1.
    """

    q: float
    one_minus_q: float
    sk: float
    at_value: float
    residual: float
    iterations: int
    method: str

    @property
    def at_ok(self) -> bool:
        return self.at_value <= 1.0


@dataclass(frozen=True)
class GammaRhoSeq:
    """Sequences ``gamma_k``, ``rho_k`` and ``Gamma^2_k = sum_{j<=k} gamma_j^2``.

    Index 0 of each list holds ``k = 1``. ``rho_gaps[k] = q - rho`` and
    ``gamma_sq_gaps[k] = q - Gamma^2`` are propagated directly so that the
    ordering ``Gamma^2_{k-1} < rho_k < q`` stays decidable after ``rho_k``
    rounds to ``q``.
    """

    gammas: tuple[float, ...]
    rhos: tuple[float, ...]
    gamma_sq_partial: tuple[float, ...]
    rho_gaps: tuple[float, ...]
    gamma_sq_gaps: tuple[float, ...]
    q: float
    convention: str

    def ordering_holds(self) -> list[bool]:
        """Per ``k``: ``Gamma^2_{k-1} < rho_k < q`` evaluated on the gaps."""
        out = []
        prev_gap = self.q
        for d, e in zip(self.rho_gaps, self.gamma_sq_gaps):
            out.append(0.0 < d < prev_gap)
            prev_gap = e
        return out


@dataclass(frozen=True)
class RhoBar:
    value: float
    one_minus: float
    branch: str


@dataclass(frozen=True)
class RegionReport:
    """Membership of ``(beta, h)`` in each region, with reasons for failures."""

    beta: float
    h: float
    q: float
    in_d1: bool
    in_d2: bool
    in_d3: bool
    in_d4: bool
    in_d_tilde2: bool
    in_at: bool
    in_d: bool
    rho_bar: float
    theta_of_rho_bar: float
    r_bh: float
    reasons: tuple[str, ...] = field(default_factory=tuple)


# -- helpers -------------------------------------------------------------------

def _as_solution(p: ModelParams, q) -> tuple[float, float]:
    """Return ``(q, 1 - q)`` from a float, a ``(q, 1 - q)`` pair or an :class:`RsSolution`."""
    if isinstance(q, RsSolution):
        return q.q, q.one_minus_q
    if isinstance(q, tuple):
        return float(q[0]), float(q[1])
    if q is None:
        s = solve_q(p)
        return s.q, s.one_minus_q
    q = float(q)
    return q, 1.0 - q


def _tanh_sq_mean(beta: float, h: float, q: float) -> float:
    a = beta * math.sqrt(q)
    return gq.expect_affine(lambda y: np.tanh(y) ** 2, a, h)


def _sech_sq_mean(beta: float, h: float, q: float) -> float:
    a = beta * math.sqrt(q)
    return gq.expect_affine(lambda y: gq.sech(y) ** 2, a, h)


# -- overlap -------------------------------------------------------------------

def solve_q(p: ModelParams, max_iter: int = 10_000, tol: float = 1e-15) -> RsSolution:
    """Solve the replica-symmetric fixed point for ``q``.

    Damped iteration (damping 0.5) on ``u = 1 - q``; if it oscillates, stalls or
    hits the cap, bisection on the residual takes over.

    Raises:
        NumericalError: if the final residual exceeds ``1e-12``.
    """
    beta, h = p.beta, p.h
    if h == 0.0 and beta <= 1.0:
        return _finish(p, 0.0, 1.0, 0, "trivial")

    def g(u: float) -> float:
        return _sech_sq_mean(beta, h, max(1.0 - u, 0.0))

    u = 0.5 if h == 0.0 else g(0.0)
    method = "fixed-point"
    last_step = math.inf
    growth = 0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        target = g(u)
        step = target - u
        if abs(step) <= tol * max(u, 1e-300) or step == 0.0:
            u = target
            converged = True
            break
        growth = growth + 1 if abs(step) >= last_step else 0
        if growth >= 3:
            break
        last_step = abs(step)
        u = u + 0.5 * step
    if not converged:
        method = "bisection"
        u = _bisect_u(g, h == 0.0)
    return _finish(p, 1.0 - u, u, it, method)


def _bisect_u(g, zero_field: bool) -> float:
    # Root of u - g(u) on [0, 1]; at h = 0 exclude the trivial root u = 1.
    lo, hi = 0.0, (1.0 - 1e-12 if zero_field else 1.0)
    flo = lo - g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = mid - g(mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 1e-17 * max(hi, 1e-300):
            break
    return 0.5 * (lo + hi)


def _finish(p: ModelParams, q: float, u: float, iterations: int, method: str) -> RsSolution:
    q = min(max(q, 0.0), 1.0)
    residual = abs(q - _tanh_sq_mean(p.beta, p.h, q))
    if residual > 1e-12:
        raise NumericalError(
            f"overlap equation did not converge at beta={p.beta}, h={p.h}: "
            f"q={q!r}, residual={residual:.3e}, iterations={iterations}, method={method}")
    sk = sk_formula(p, q, one_minus_q=u)
    at_value = _at_value(p, q)
    return RsSolution(q=q, one_minus_q=u, sk=sk, at_value=at_value, residual=residual,
                      iterations=iterations, method=method)


def sk_formula(p: ModelParams, q: float, one_minus_q: float | None = None) -> float:
    """``log 2 + beta^2 (1 - q)^2 / 4 + E log cosh(beta sqrt(q) Z + h)``."""
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    u = 1.0 - q if one_minus_q is None else one_minus_q
    a = p.beta * math.sqrt(q)
    return LOG2 + 0.25 * p.beta ** 2 * u * u + gq.expect_affine(gq.log_cosh, a, p.h)


def _at_value(p: ModelParams, q: float) -> float:
    a = p.beta * math.sqrt(q)
    return p.beta ** 2 * gq.expect_affine(lambda y: gq.sech(y) ** 4, a, p.h)


def at_condition(p: ModelParams, sol: RsSolution | None = None) -> tuple[float, bool]:
    """Return ``beta^2 E cosh^-4(beta sqrt(q) Z + h)`` and whether it is ``<= 1``."""
    q = (sol or solve_q(p)).q
    v = _at_value(p, q)
    return v, v <= 1.0


# -- psi map and the overlap sequences ------------------------------------------

def _th(beta: float, h: float, x):
    return np.tanh(h + beta * x)


def psi_map(t: float, p: ModelParams, q, order: int = gq.DEFAULT_ORDER) -> float:
    """``E_Z [ (E_{Z'} Th(sqrt(t) Z + sqrt(q - t) Z'))^2 ]`` with ``Th(x) = tanh(h + beta x)``.

    The two conditionally independent copies share ``Z`` so the expectation is
    an outer mean of a squared inner mean.

    Raises:
        DomainError: if ``t`` is outside ``[0, q]``.
    """
    q, _ = _as_solution(p, q)
    t = float(t)
    if not 0.0 <= t <= q:
        raise DomainError(f"t must lie in [0, q={q!r}], got {t!r}")
    return _psi_core(p, q, t, q - t, order)


def _psi_core(p: ModelParams, q: float, t: float, gap: float, order: int) -> float:
    beta, h = p.beta, p.h
    a_out = beta * math.sqrt(t)
    a_in = beta * math.sqrt(max(gap, 0.0))
    outer = gq.affine_context(a_out, h, order=order)
    z = outer.nodes
    if a_in <= gq.SMOOTH_SLOPE:
        inner = gq.hermite_context(order)
        vals = np.tanh(h + a_out * z[:, None] + a_in * inner.nodes[None, :]) @ inner.weights
    else:
        vals = np.array([
            gq.expect_affine(np.tanh, a_in, h + a_out * zi, order=order) for zi in z])
    return float(outer.weights @ (vals * vals))


def psi_gap(d: float, p: ModelParams, q, order: int = 40) -> float:
    """``q - psi(q - d)`` computed without cancellation.

    Uses ``q - psi(t) = E_Z Var_{Z'} Th`` and writes the variance as
    ``E (Th' - Th'')^2 / 2`` with
    ``tanh x - tanh y = sinh(x - y) sech(x) sech(y)``, so the result keeps full
    relative precision for arbitrarily small ``d``.
    """
    q, _ = _as_solution(p, q)
    d = float(d)
    if not 0.0 <= d <= q:
        raise DomainError(f"gap must lie in [0, q={q!r}], got {d!r}")
    if d == 0.0:
        return 0.0
    beta, h = p.beta, p.h
    a_out = beta * math.sqrt(q - d)
    a_in = beta * math.sqrt(d)
    outer = gq.affine_context(a_out, h, order=gq.DEFAULT_ORDER)
    inner = gq.hermite_context(order)
    zi = inner.nodes
    w2 = np.outer(inner.weights, inner.weights)
    diff = np.sinh(a_in * (zi[:, None] - zi[None, :]))
    total = 0.0
    for z, w in zip(outer.nodes, outer.weights):
        s = gq.sech(h + a_out * z + a_in * zi)
        total += float(w) * float(np.sum(w2 * (diff * s[:, None] * s[None, :]) ** 2))
    return 0.5 * total


def psi_derivative_at_q(p: ModelParams, q, delta: float = 1e-4) -> float:
    """One-sided second-order difference ``(4 V(delta) - V(2 delta)) / (2 delta)``.

    ``V = psi_gap``; ``psi`` is only defined on ``[0, q]`` so a central
    difference at ``t = q`` is unavailable.
    """
    return float((4.0 * psi_gap(delta, p, q) - psi_gap(2.0 * delta, p, q)) / (2.0 * delta))


def gamma_rho_sequence(p: ModelParams, K: int, gamma1_convention: str = "sqrt_q",
                       sol: RsSolution | None = None) -> GammaRhoSeq:
    """Build ``gamma_k``, ``rho_k`` for ``k = 1..K``.

    Args:
        gamma1_convention: ``"sqrt_q"`` takes ``gamma_1 = E tanh(h + beta sqrt(q) Z)``;
            ``"literal"`` takes ``gamma_1 = E tanh(h + beta Z)``.

    Raises:
        ParameterError: for ``h <= 0``, ``K < 1`` or ``K > 200``.
        NumericalError: if ``q - Gamma^2_{k-1} <= 0`` at some step while the
            rho gap is still positive. Both gaps reaching exactly 0 is
            double-precision saturation; later steps then repeat ``gamma_k = 0``.
    """
    if p.h <= 0.0:
        raise ParameterError("the overlap sequences require h > 0")
    if not 1 <= K <= 200:
        raise ParameterError(f"K must be in [1, 200], got {K}")
    sol = sol or solve_q(p)
    q = sol.q
    if gamma1_convention == "sqrt_q":
        g1 = gq.expect_affine(np.tanh, p.beta * math.sqrt(q), p.h)
    elif gamma1_convention == "literal":
        g1 = gq.expect_affine(np.tanh, p.beta, p.h)
    else:
        raise ParameterError(f"unknown gamma1 convention {gamma1_convention!r}")

    rho1 = math.sqrt(q) * g1
    gammas, rho_gaps, gsq_gaps = [g1], [q - rho1], [q - g1 * g1]
    for k in range(2, K + 1):
        e_prev = gsq_gaps[-1]
        if e_prev == 0.0 and rho_gaps[-1] == 0.0:
            gammas.append(0.0)
            rho_gaps.append(0.0)
            gsq_gaps.append(0.0)
            continue
        if not e_prev > 0.0:
            raise NumericalError(
                f"q - Gamma^2_{k - 1} = {e_prev!r} <= 0 at beta={p.beta}, h={p.h}")
        d = psi_gap(rho_gaps[-1], p, q)
        gammas.append((e_prev - d) / math.sqrt(e_prev))
        rho_gaps.append(d)
        gsq_gaps.append(d * (2.0 - d / e_prev))
    rhos = tuple(q - d for d in rho_gaps)
    gsq = tuple(q - e for e in gsq_gaps)
    return GammaRhoSeq(gammas=tuple(gammas), rhos=rhos, gamma_sq_partial=gsq,
                       rho_gaps=tuple(rho_gaps), gamma_sq_gaps=tuple(gsq_gaps),
                       q=q, convention=gamma1_convention)


# -- region ingredients -----------------------------------------------------------

def theta_fn(rho: float, one_minus_rho: float | None = None) -> float:
    """``36 s + 4 s^(1/2) + s^(1/4) (4 + sqrt(12 (|ln s| + 2)))`` with ``s = 1 - rho``.

    Returns 0 at ``rho = 1`` by continuity.
    """
    s = 1.0 - float(rho) if one_minus_rho is None else float(one_minus_rho)
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got 1 - rho = {s!r}")
    if s == 0.0:
        return 0.0
    return 36.0 * s + 4.0 * math.sqrt(s) + s ** 0.25 * (4.0 + math.sqrt(12.0 * (abs(math.log(s)) + 2.0)))


def r_field(p: ModelParams, q) -> float:
    """``(beta^2 q (1 - q) + E 2|X| exp(-2|X|)) / h`` with ``X = beta sqrt(q) Z + h``."""
    if p.h <= 0.0:
        raise DomainError("r(beta, h) requires h > 0")
    q, u = _as_solution(p, q)
    a = 2.0 * p.beta * math.sqrt(q)
    if a == 0.0:
        weighted = 2.0 * p.h * math.exp(-2.0 * p.h)
    else:
        weighted = gq.weighted_exp_abs_gauss(a, 2.0 * p.h)
    return (p.beta ** 2 * q * u + weighted) / p.h


def r_star(p: ModelParams, q) -> float:
    """Explicit upper bound on :func:`r_field`, split on ``h > 2 beta^2 q``."""
    q, _ = _as_solution(p, q)
    s = p.beta * math.sqrt(q)
    if p.h > 2.0 * p.beta ** 2 * q:
        return (3.0 + 4.0 / math.sqrt(2.0 * math.pi) * s / p.h) * math.exp(-p.h)
    return (1.0 + 6.0 / math.sqrt(2.0 * math.pi) * s / p.h) * math.exp(-0.5 * (p.h / s) ** 2)


def r_bounds(p: ModelParams, q, eta: float) -> dict:
    """Two-sided bounds on ``r`` valid under the moderate or large field hypotheses.

    Returns a dict with keys ``moderate`` and ``large``; each is ``None`` when
    its hypothesis fails, else ``(lower, upper)``.
    """
    q, _ = _as_solution(p, q)
    beta, h = p.beta, p.h
    s = beta * math.sqrt(q)
    out: dict = {"moderate": None, "large": None}
    if 0.0 < eta < 1.0 and h <= 2.0 * eta * beta ** 2 * q:
        inv_x = _SQRT_2_OVER_PI * math.exp(-0.5 * (h / s) ** 2)
        lo = (1.0 - 3.0 / (4.0 * (1.0 - eta ** 2))) * s / h * inv_x
        hi = (1.0 + eta / (1.0 - eta ** 2)) * 2.0 * s / h * inv_x
        out["moderate"] = (lo, hi)
    if eta > 0.0 and h >= 2.0 * (1.0 + eta) * beta ** 2 * q:
        scale = math.exp(-2.0 * (h - beta ** 2 * q))
        lo = _lem9_f(s, eta, 2.0 - 3.0 / (4.0 * (1.0 + eta)), 1.0 / eta) * scale
        hi = _lem9_f(s, eta, 2.0, 3.0 / (4.0 * (1.0 + eta))) * scale
        out["large"] = (lo, hi)
    return out


def _lem9_f(s: float, eta: float, a1: float, a2: float) -> float:
    return a1 + a2 * _SQRT_2_OVER_PI / s * math.exp(-0.5 * (2.0 * eta * s) ** 2)


def rho_bar(p: ModelParams, q) -> RhoBar:
    """Threshold overlap ``[1 - (1 + 1/(h - 1)) r]^2``, scaled by ``q`` unless below ``q``.

    Raises:
        DomainError: if ``h <= 1``.
    """
    if p.h <= 1.0:
        raise DomainError(f"rho_bar requires h > 1, got h={p.h!r}")
    q, u = _as_solution(p, q)
    cr = (1.0 + 1.0 / (p.h - 1.0)) * r_field(p, (q, u))
    base = (1.0 - cr) ** 2
    one_minus_base = cr * (2.0 - cr)
    # base < q  <=>  1 - base > 1 - q, decided on the complements.
    if one_minus_base > u:
        return RhoBar(value=base, one_minus=one_minus_base, branch="square")
    return RhoBar(value=q * base, one_minus=u + q * one_minus_base, branch="scaled")



def classify_region(p: ModelParams, sol: RsSolution | None = None) -> RegionReport:
    """Evaluate every region membership at ``(beta, h)``.

    The rho-dependent region is evaluated at ``rho = rho_bar`` and enforces both
    ``rho <= q`` and ``rho >= sqrt(3/4)``.
    """
    sol = sol or solve_q(p)
    beta, h, q, u = p.beta, p.h, sol.q, sol.one_minus_q
    reasons: list[str] = []
    in_at = sol.at_value <= 1.0
    in_d1 = h > 0.0 and beta < 1.0 / (1.0 + math.sqrt(q))
    in_d3 = h > 0.0 and beta > 0.0 and h / beta > 2.0 and beta ** 2 * u <= 1.0 and h >= 4.0
    ratio = h / beta if beta > 0.0 else math.inf
    # ratio**2 overflows for tiny beta; the exponential is then 0 anyway
    decay = math.exp(-(ratio / 3.0) ** 2) if ratio < 1e150 else 0.0
    in_dt2 = beta > 0.0 and 12.0 * beta * decay < 1.0 and 3.0 <= ratio <= beta * q / 10.0
    r_bh = r_field(p, sol) if h > 0.0 else math.nan
    rb = math.nan
    th = math.nan
    in_d2 = in_d4 = False
    if h > 1.0:
        rbar = rho_bar(p, sol)
        rb = rbar.value
        th = theta_fn(rb, one_minus_rho=min(max(rbar.one_minus, 0.0), 1.0))
        rho_le_q = rbar.one_minus >= u
        in_d4 = rb >= SQRT_3_4
        in_d2 = h > 0.0 and rho_le_q and beta * th < 1.0 and in_d4
        if not rho_le_q:
            reasons.append("rho_bar exceeds q")
        if not in_d4:
            reasons.append("rho_bar below sqrt(3/4)")
        if beta * th >= 1.0:
            reasons.append("beta * theta(rho_bar) >= 1")
    else:
        reasons.append("rho_bar undefined for h <= 1")
    if not in_d3:
        reasons.append("outside D3")
    in_d = in_d1 or (in_d2 and in_d3 and in_d4)
    return RegionReport(beta=beta, h=h, q=q, in_d1=in_d1, in_d2=in_d2, in_d3=in_d3,
                        in_d4=in_d4, in_d_tilde2=in_dt2, in_at=in_at, in_d=in_d,
                        rho_bar=rb, theta_of_rho_bar=th, r_bh=r_bh, reasons=tuple(reasons))


# -- negativity function and its ingredients ---------------------------------------

def delta_bh(rho: float, p: ModelParams, q) -> float:
    """``E[log cosh(sqrt(rho/q) X) - log cosh(X)]`` with ``X = beta sqrt(q) Z + h``."""
    q, _ = _as_solution(p, q)
    rho = float(rho)
    if not 0.0 <= rho <= q:
        raise DomainError(f"rho must lie in [0, q={q!r}], got {rho!r}")
    if rho == q:
        return 0.0
    s = math.sqrt(rho / q)
    a = p.beta * math.sqrt(q)
    return gq.expect_affine(lambda y: gq.log_cosh(s * y) - gq.log_cosh(y), a, p.h)


def delta_upper_bounds(rho: float, p: ModelParams, q) -> tuple[float, float]:
    """The quadratic bound and the linear-in-``(1 - sqrt(rho/q))`` bound on ``delta_bh``."""
    q, _ = _as_solution(p, q)
    a = p.beta * math.sqrt(q)
    h = p.h
    abs_mean = gq.abs_gauss_moment(a, h) if a > 0 else h
    quad = rho / (2.0 * q) * (a * a + h * h) - abs_mean + LOG2
    weighted = gq.weighted_exp_abs_gauss(2.0 * a, 2.0 * h) if a > 0 else 2 * h * math.exp(-2 * h)
    c = 1.0 - math.sqrt(rho / q)
    lin = -c * (abs_mean - weighted) + (math.inf if rho == 0.0 else q / (4.0 * rho) * c * c)
    return quad, lin


def psi_rho(rho: float, p: ModelParams, q) -> float:
    """``sqrt(rho) h (1 - sqrt(rho/q)) + beta^2 (1 - q)(q - rho)/2 + delta_bh(rho)``."""
    qv, u = _as_solution(p, q)
    rho = float(rho)
    return (math.sqrt(rho) * p.h * (1.0 - math.sqrt(rho / qv))
            + 0.5 * p.beta ** 2 * u * (qv - rho) + delta_bh(rho, p, q))


def psi_rho_sup(p: ModelParams, q, upper: float, n_grid: int = 2000,
                tol: float = 1e-8) -> tuple[float, float]:
    """Supremum of :func:`psi_rho` on ``[0, upper)``.

    Uniform grid, then golden-section refinement on the bracket around the
    best grid point.

    Returns:
        ``(rho_at_sup, sup_value)``.
    """
    grid = np.linspace(0.0, upper, n_grid, endpoint=False)
    vals = np.array([psi_rho(r, p, q) for r in grid])
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[i + 1] if i + 1 < n_grid else upper
    best_r, best_v = float(grid[i]), float(vals[i])
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1 = psi_rho(x1, p, q)
    f2 = psi_rho(x2, p, q)
    while hi - lo > tol:
        if f1 > f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = psi_rho(x1, p, q)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = psi_rho(x2, p, q)
    for r, v in ((x1, f1), (x2, f2)):
        if v > best_v and r < upper:
            best_r, best_v = r, v
    return best_r, best_v


# -- bounds on 1 - q ---------------------------------------------------------------

def one_minus_q_bounds(p: ModelParams, q, eta: float = 1.0 / 20.0) -> dict:
    """Sandwiches on ``1 - q``.

    Returns a dict with the value ``one_minus_q`` and keys ``coarse`` (always
    available), ``moderate`` and ``large`` (``None`` unless the field
    hypothesis holds for ``eta``). Each sandwich is ``(lower, upper, holds)``.
    """
    qv, u = _as_solution(p, q)
    beta, h = p.beta, p.h
    s = beta * math.sqrt(qv)
    out: dict = {"one_minus_q": u, "coarse": None, "moderate": None, "large": None}
    if s > 0.0 and h >= 0.0:
        e = gq.exp_abs_gauss(2.0 * s, 2.0 * h)
    else:
        e = math.exp(-2.0 * h)
    out["coarse"] = (e, 4.0 * e, e <= u <= 4.0 * e)
    if s > 0.0 and h > 0.0 and 0.0 < eta < 1.0 and h <= 2.0 * eta * beta ** 2 * qv:
        inv_x = _SQRT_2_OVER_PI * math.exp(-0.5 * (h / s) ** 2)
        lo = 0.25 * math.sqrt(1.0 / ((s * (1.0 + eta)) ** 2 + 1.0)) * inv_x
        hi = 2.0 / (s * (1.0 - eta ** 2)) * inv_x
        out["moderate"] = (lo, hi, lo <= u <= hi)
    if s > 0.0 and h > 0.0 and eta > 0.0 and h >= 2.0 * (1.0 + eta) * beta ** 2 * qv:
        scale = math.exp(-2.0 * (h - beta ** 2 * qv))
        lo = _lem9_f(s, eta, 1.0, 1.0 / (4.0 * eta)) * scale
        hi = _lem9_f(s, eta, 4.0, 2.0 / (1.0 + eta)) * scale
        out["large"] = (lo, hi, lo <= u <= hi)
    return out


def f1_f2(p: ModelParams, q, rho: float) -> tuple[float, float]:
    """``(theta(rho), 2 beta - (beta^2 (1 - q) + 1))``."""
    _, u = _as_solution(p, q)
    return theta_fn(rho), 2.0 * p.beta - (p.beta ** 2 * u + 1.0)
