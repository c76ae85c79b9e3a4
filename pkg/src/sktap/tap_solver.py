"""Two-step-memory TAP iteration and its conditioned Gaussian construction.

Inner products and norms on vectors follow the per-site convention
``<x, y> = (1/N) sum x_i y_i`` and ``||x||_{2,N} = ||x||_2 / sqrt(N)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderSample, spectral_radius
from .errors import NumericalError, ParameterError
from .functionals import edwards_anderson, f_ht, f_tap, grad_psi
from .rs_scalars import GammaRhoSeq, ModelParams

__all__ = [
    "IterateTrace",
    "ConditionedState",
    "iterate_tap",
    "cauchy_increments",
    "overlap_diagnostics",
    "conditioned_iterate",
    "fht_at_iterates",
    "gradient_bound_check",
    "geometric_fit",
    "trace_to_csv",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("k", "norm_sq", "grad_norm", "fht", "ftap", "q_ea", "increment")
# Denominator floor for the orthogonalisation step.
_GS_FLOOR = 1e-10


def _dot(x: np.ndarray, y: np.ndarray) -> float:
    return float(x @ y) / x.size


@dataclass(frozen=True)
class IterateTrace:
    """Iterates ``m^(0..K)`` and per-step diagnostics.

    ``overlaps[k][j] = <m^(k), m^(j)>`` for ``j <= k``. ``grad_norms[k]`` is
    ``||grad psi(m^(k))||_{2,N}`` and is ``nan`` at ``k = 0`` only if the
    gradient cannot be evaluated. ``increments[k] = ||m^(k+1) - m^(k)||_{2,N}^2``.
    """

    iterates: tuple[np.ndarray, ...]
    norms_sq: tuple[float, ...]
    overlaps: tuple[tuple[float, ...], ...]
    grad_norms: tuple[float, ...]
    fht_values: tuple[float, ...]
    ftap_values: tuple[float, ...]
    increments: tuple[float, ...]
    q: float

    @property
    def K(self) -> int:
        return len(self.iterates) - 1


@dataclass
class ConditionedState:
    """Objects of the conditioned construction, indexed from ``s = 1`` at position 0."""

    phis: list[np.ndarray] = field(default_factory=list)
    g_current: np.ndarray | None = None
    zetas: list[np.ndarray] = field(default_factory=list)
    hbars: list[np.ndarray] = field(default_factory=list)
    mbars: list[np.ndarray] = field(default_factory=list)

    def gram(self) -> np.ndarray:
        """Matrix of ``<phi_s, phi_t>``."""
        phi = np.array(self.phis)
        return phi @ phi.T / phi.shape[1]


def iterate_tap(d: DisorderSample, p: ModelParams, q: float, K: int,
                one_minus_q: float | None = None) -> IterateTrace:
    """Run ``m^(k+1) = tanh(h + beta J m^(k)/sqrt(N) - beta^2 (1 - q) m^(k-1))``.

    Starts from ``m^(0) = 0`` and ``m^(1) = sqrt(q) 1``. ``d.a_matrix`` must be
    built with the same ``q`` for the functional values to be consistent.

    Raises:
        ParameterError: if ``h <= 0`` or ``K < 2``.
    """
    if p.h <= 0.0:
        raise ParameterError("the TAP iteration requires h > 0")
    if K < 2:
        raise ParameterError(f"K must be >= 2, got {K}")
    n = d.n
    u = 1.0 - q if one_minus_q is None else one_minus_q
    onsager = p.beta ** 2 * u
    ms = [np.zeros(n), np.full(n, math.sqrt(q))]
    for _ in range(1, K):
        ms.append(np.tanh(p.h + p.beta * (d.j_over_sqrt_n @ ms[-1]) - onsager * ms[-2]))
    overlaps, norms, grads, fhts, ftaps = [], [], [], [], []
    for k, m in enumerate(ms):
        row = tuple(_dot(m, ms[j]) for j in range(k + 1))
        overlaps.append(row)
        norms.append(row[-1])
        grads.append(float(np.linalg.norm(grad_psi(m, d, p, p.h))) / math.sqrt(n))
        ftaps.append(f_tap(m, d, p, q))
        fhts.append(f_ht(m, d, p, q))
    incs = tuple(_dot(ms[k + 1] - ms[k], ms[k + 1] - ms[k]) for k in range(K))
    for m in ms:
        m.setflags(write=False)
    return IterateTrace(iterates=tuple(ms), norms_sq=tuple(norms), overlaps=tuple(overlaps),
                        grad_norms=tuple(grads), fht_values=tuple(fhts), ftap_values=tuple(ftaps),
                        increments=incs, q=q)


def cauchy_increments(t: IterateTrace) -> list[float]:
    """``||m^(k+1) - m^(k)||_{2,N}^2`` for ``k = 0..K-1``."""
    return list(t.increments)


def geometric_fit(values, k_lo: int = 2, k_hi: int = 10) -> tuple[float, float]:
    """Least-squares line through ``log values[k]`` for ``k_lo <= k <= k_hi``.

    Returns:
        ``(rate, r_squared)`` where ``rate = exp(slope)``.
    """
    ks = np.arange(k_lo, k_hi + 1, dtype=float)
    y = np.log(np.asarray(values, dtype=float)[k_lo:k_hi + 1])
    slope, intercept = np.polyfit(ks, y, 1)
    resid = y - (slope * ks + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return math.exp(slope), r2


def overlap_diagnostics(t: IterateTrace, seq: GammaRhoSeq, seq_alt: GammaRhoSeq | None = None) -> dict:
    """Compare empirical overlaps with ``rho_j`` for ``1 <= j < k <= K``.

    The predicted value of ``<m^(k), m^(j)>`` is ``rho_j`` for ``j < k`` and
    ``q`` on the diagonal. With ``seq_alt`` (the other ``gamma_1`` convention)
    both are scored and the convention with the smaller mean deviation is
    reported under ``preferred``.
    """
    def score(s: GammaRhoSeq) -> tuple[list[tuple[int, int, float, float]], float]:
        rows = []
        for k in range(2, t.K + 1):
            for j in range(1, k):
                if j - 1 >= len(s.rhos):
                    continue
                emp = t.overlaps[k][j]
                rows.append((k, j, emp, abs(emp - s.rhos[j - 1])))
        mean = float(np.mean([r[3] for r in rows])) if rows else math.nan
        return rows, mean

    rows, mean = score(seq)
    out = {"rows": rows, "mean_deviation": mean, "convention": seq.convention,
           "diagonal_matches_norms": all(t.overlaps[k][k] == t.norms_sq[k] for k in range(t.K + 1))}
    if seq_alt is not None:
        rows_alt, mean_alt = score(seq_alt)
        out["alt_rows"] = rows_alt
        out["alt_mean_deviation"] = mean_alt
        out["alt_convention"] = seq_alt.convention
        out["preferred"] = seq.convention if mean <= mean_alt else seq_alt.convention
    return out


def _orthonormalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    w = v.copy()
    # Two passes of classical Gram-Schmidt keep the cross terms at rounding level.
    for _ in range(2):
        for phi in basis:
            w -= _dot(w, phi) * phi
    norm = math.sqrt(_dot(w, w))
    if norm < _GS_FLOOR:
        raise NumericalError(
            f"orthogonalisation denominator {norm:.3e} below {_GS_FLOOR:g}: "
            f"new vector is linearly dependent on the first {len(basis)} directions")
    return w / norm


def conditioned_iterate(d: DisorderSample, p: ModelParams, q: float, seq: GammaRhoSeq,
                        K: int) -> ConditionedState:
    """Build ``phi^(s)``, ``zeta^(s)``, ``hbar^(s)``, ``mbar^(s)`` for ``s <= K``.

    ``hbar^(1) = artanh(sqrt(q))`` so ``mbar^(1) = sqrt(q) 1``. For ``k >= 1``
    ``hbar^(k+1) = h + beta sum_{s<k} gamma_s zeta^(s) + beta sqrt(q - Gamma^2_{k-1}) zeta^(k)``,
    and ``g^(k+1) = g^(k) - (xi (x) phi + phi (x) eta - <phi, xi> phi (x) phi)``
    with ``(x (x) y)_ij = x_i y_j / N``.

    Raises:
        ParameterError: if ``K`` is outside ``[1, 30]`` or exceeds the sequence length.
        NumericalError: if orthogonalisation degenerates.
    """
    if not 1 <= K <= 30:
        raise ParameterError(f"K must be in [1, 30], got {K}")
    if K - 1 > len(seq.gammas):
        raise ParameterError(f"sequence has {len(seq.gammas)} terms, need {K - 1}")
    n = d.n
    g = np.array(d.g, dtype=float, copy=True)
    st = ConditionedState()
    hbar = np.full(n, math.atanh(math.sqrt(q)))
    mbar = np.full(n, math.sqrt(q))
    st.hbars.append(hbar)
    st.mbars.append(mbar)
    st.phis.append(_orthonormalize(mbar, []))
    sqrt2 = math.sqrt(2.0)
    for k in range(1, K):
        phi = st.phis[k - 1]
        xi = g @ phi
        eta = g.T @ phi
        st.zetas.append((xi + eta) / sqrt2)
        # rank-one deflation, outer products scaled by 1/N
        c = _dot(phi, xi)
        g -= (np.outer(xi, phi) + np.outer(phi, eta) - c * np.outer(phi, phi)) / n
        gap = seq.gamma_sq_gaps[k - 2] if k >= 2 else q
        field_k = np.full(n, p.h)
        for s in range(k - 1):
            field_k += p.beta * seq.gammas[s] * st.zetas[s]
        field_k += p.beta * math.sqrt(gap) * st.zetas[k - 1]
        st.hbars.append(field_k)
        st.mbars.append(np.tanh(field_k))
        st.phis.append(_orthonormalize(st.mbars[-1], st.phis))
    st.g_current = g
    return st


def fht_at_iterates(t: IterateTrace, d: DisorderSample, p: ModelParams, q: float) -> list[tuple[float, float]]:
    """``(F^HT(m^(k)), F^TAP(m^(k)))`` for each ``k``."""
    return [(f_ht(m, d, p, q), f_tap(m, d, p, q)) for m in t.iterates]


def gradient_bound_check(t: IterateTrace, d: DisorderSample, p: ModelParams, q: float,
                         one_minus_q: float | None = None, radius: float | None = None) -> list[dict]:
    """Per ``k >= 2``: squared gradient norm against two bounds.

    ``printed`` is ``2 beta r^2 incr(k, k-1) + 2 beta^2 (1 - q) incr(k, k-2)``;
    ``corrected`` is what the triangle inequality actually gives,
    ``2 beta^2 r^2 incr(k, k-1) + 2 beta^4 (1 - q)^2 incr(k, k-2)``, with
    ``r`` the spectral radius of ``J/sqrt(N)``.
    """
    u = 1.0 - q if one_minus_q is None else one_minus_q
    r = spectral_radius(d.j_over_sqrt_n) if radius is None else radius
    b = p.beta
    out = []
    ms = t.iterates
    for k in range(2, t.K + 1):
        i1 = _dot(ms[k] - ms[k - 1], ms[k] - ms[k - 1])
        i2 = _dot(ms[k] - ms[k - 2], ms[k] - ms[k - 2])
        g2 = t.grad_norms[k] ** 2
        printed = 2.0 * b * r * r * i1 + 2.0 * b * b * u * i2
        corrected = 2.0 * b * b * r * r * i1 + 2.0 * b ** 4 * u * u * i2
        out.append({"k": k, "grad_sq": g2, "printed": printed, "corrected": corrected,
                    "printed_holds": g2 <= printed, "corrected_holds": g2 <= corrected})
    return out


def trace_to_csv(t: IterateTrace) -> str:
    """One row per ``k`` with :data:`TRACE_COLUMNS`; the last row has an empty increment."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for k, m in enumerate(t.iterates):
        inc = repr(t.increments[k]) if k < len(t.increments) else ""
        w.writerow([k, repr(t.norms_sq[k]), repr(t.grad_norms[k]), repr(t.fht_values[k]),
                    repr(t.ftap_values[k]), repr(edwards_anderson(m)), inc])
    return buf.getvalue()
