"""Seeded Gaussian couplings and extreme-eigenvalue diagnostics.

Stream layout: ``numpy.random.Generator(Philox(seed))`` draws the raw matrix
``g`` with ``standard_normal((n, n))`` in row-major order and divides by
``sqrt(n)``. One generator per ``(n, seed)`` so a sample never depends on how
many other samples are drawn or on which thread draws it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import NumericalError, ParameterError
from .rs_scalars import ModelParams

__all__ = [
    "DisorderSample",
    "sample_disorder",
    "raw_gaussian",
    "symmetrize",
    "spectral_radius",
    "extreme_eigenvalues",
    "dump_matrix",
    "load_matrix",
    "DENSE_LIMIT",
]

# Dense eigendecomposition is used up to this size; Lanczos above it.
DENSE_LIMIT = 200
_SQRT2 = math.sqrt(2.0)


def _readonly(x: np.ndarray) -> np.ndarray:
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class DisorderSample:
    """One realisation of the couplings.

    Attributes:
        n: System size.
        seed: Generator seed.
        g: Raw i.i.d. ``N(0, 1/n)`` matrix.
        j_over_sqrt_n: ``(g + g^T) / sqrt(2)``, bitwise symmetric.
        a_matrix: ``j_over_sqrt_n - beta (1 - q) I``.
        shift: ``beta (1 - q)``.
    """

    n: int
    seed: int
    g: np.ndarray
    j_over_sqrt_n: np.ndarray
    a_matrix: np.ndarray
    shift: float

    @classmethod
    def from_matrix(cls, j_over_sqrt_n, shift: float = 0.0, g=None, seed: int = -1) -> "DisorderSample":
        """Wrap a given symmetric coupling matrix, e.g. a hand-built test case.

        Raises:
            ParameterError: if the matrix is not square and exactly symmetric.
        """
        j = np.array(j_over_sqrt_n, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise ParameterError(f"coupling matrix must be square, got shape {j.shape}")
        if not np.array_equal(j, j.T):
            raise ParameterError("coupling matrix must be exactly symmetric")
        n = j.shape[0]
        gm = np.zeros_like(j) if g is None else np.array(g, dtype=float)
        a = j - shift * np.eye(n)
        return cls(n=n, seed=int(seed), g=_readonly(gm), j_over_sqrt_n=_readonly(j),
                   a_matrix=_readonly(a), shift=float(shift))

    def with_params(self, p: ModelParams, q: float, one_minus_q: float | None = None) -> "DisorderSample":
        """Same couplings, shift recomputed for ``(p, q)``."""
        u = 1.0 - q if one_minus_q is None else one_minus_q
        shift = p.beta * u
        a = self.j_over_sqrt_n - shift * np.eye(self.n)
        return DisorderSample(n=self.n, seed=self.seed, g=self.g, j_over_sqrt_n=self.j_over_sqrt_n,
                              a_matrix=_readonly(a), shift=shift)


def raw_gaussian(n: int, seed: int) -> np.ndarray:
    """i.i.d. ``N(0, 1/n)`` matrix for ``(n, seed)``."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    return rng.standard_normal((n, n)) / math.sqrt(n)


def symmetrize(g: np.ndarray) -> np.ndarray:
    """``(g + g^T) / sqrt(2)``; addition commutes so the result is bitwise symmetric."""
    return (g + g.T) / _SQRT2


def sample_disorder(n: int, seed: int, p: ModelParams, q: float,
                    one_minus_q: float | None = None) -> DisorderSample:
    """Draw the couplings for ``(n, seed)`` and form the shifted matrix for ``(p, q)``."""
    g = raw_gaussian(n, seed)
    j = symmetrize(g)
    u = 1.0 - q if one_minus_q is None else one_minus_q
    shift = p.beta * u
    a = j - shift * np.eye(n)
    return DisorderSample(n=n, seed=int(seed), g=_readonly(g), j_over_sqrt_n=_readonly(j),
                          a_matrix=_readonly(a), shift=float(shift))


def extreme_eigenvalues(m: np.ndarray, tol: float = 1e-10, max_iter: int | None = None) -> tuple[float, float]:
    """``(lambda_min, lambda_max)`` of a symmetric matrix.

    Dense LAPACK for ``n <= DENSE_LIMIT``; implicitly restarted Lanczos
    (ARPACK) otherwise, started from the all-ones vector so runs are repeatable.

    Raises:
        ParameterError: if ``m`` is not square and symmetric.
        NumericalError: if Lanczos does not converge within the cap.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(m).max(initial=0.0)))):
        raise ParameterError("matrix must be symmetric")
    n = m.shape[0]
    if n <= DENSE_LIMIT:
        w = np.linalg.eigvalsh(m)
        return float(w[0]), float(w[-1])
    v0 = np.ones(n)
    cap = max_iter if max_iter is not None else 20 * n
    try:
        lo = eigsh(m, k=1, which="SA", tol=tol, v0=v0, maxiter=cap, return_eigenvectors=False)
        hi = eigsh(m, k=1, which="LA", tol=tol, v0=v0, maxiter=cap, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise NumericalError(f"Lanczos did not converge for n={n} within {cap} iterations") from exc
    return float(lo[0]), float(hi[0])


def spectral_radius(m: np.ndarray, tol: float = 1e-10) -> float:
    """``max(|lambda_max|, |lambda_min|)``."""
    lo, hi = extreme_eigenvalues(m, tol=tol)
    return max(abs(lo), abs(hi))


def dump_matrix(path: str | Path, m: np.ndarray) -> None:
    """Write ``m`` as a little-endian ``uint64`` size header plus ``n*n`` ``float64`` row-major."""
    m = np.asarray(m, dtype="<f8")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", m.shape[0]))
        fh.write(np.ascontiguousarray(m).tobytes(order="C"))


def load_matrix(path: str | Path) -> np.ndarray:
    """Inverse of :func:`dump_matrix`.

    Raises:
        ParameterError: if the file size does not match its header.
    """
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ParameterError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", data[:8])
    if len(data) != 8 + 8 * n * n:
        raise ParameterError(f"{path}: expected {8 + 8 * n * n} bytes for n={n}, got {len(data)}")
    return np.frombuffer(data[8:], dtype="<f8").reshape(n, n).astype(float)
