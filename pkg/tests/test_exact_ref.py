import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sktap.disorder import DisorderSample, sample_disorder
from sktap.errors import CapacityError
from sktap.exact_ref import (
    GAP_COLUMNS,
    MAX_ENUM_N,
    brute_force_z,
    gap_study,
    hs_integral,
    maximize_fht,
    shifted_hs_integral,
    sqrt_sym,
)
from sktap.functionals import f_ht
from sktap.rs_scalars import ModelParams, solve_q
from sktap.tap_solver import iterate_tap

P = ModelParams(0.3, 0.5)
SOL = solve_q(P)
LOG2 = math.log(2.0)

# Pilot run over 30 seeds gave mean gap 0.01027 at N = 12; fixed before acceptance.
GAP_N12_THRESHOLD = 0.015


def naive_log_z(j: np.ndarray, p: ModelParams) -> float:
    n = j.shape[0]
    terms = []
    for s in itertools.product((-1.0, 1.0), repeat=n):
        s = np.array(s)
        terms.append(0.5 * p.beta * s @ j @ s + p.h * s.sum())
    terms = np.array(terms)
    top = terms.max()
    return (top + math.log(np.exp(terms - top).sum())) / n


class TestBruteForce:
    def test_single_site(self):
        d = sample_disorder(1, 4, P, SOL.q)
        j11 = d.j_over_sqrt_n[0, 0]
        expected = math.log(2.0 * math.exp(P.beta * j11 / 2.0) * math.cosh(P.h))
        assert brute_force_z(d, P) == pytest.approx(expected, abs=1e-14)

    def test_two_sites_by_hand(self):
        j = np.array([[0.3, -0.8], [-0.8, 1.1]])
        p = ModelParams(0.6, 0.2)
        d = DisorderSample.from_matrix(j)
        b, h = p.beta, p.h
        # configurations (+,+), (+,-), (-,+), (-,-)
        energies = [
            b / 2 * (0.3 + 1.1 - 1.6) + 2 * h,
            b / 2 * (0.3 + 1.1 + 1.6),
            b / 2 * (0.3 + 1.1 + 1.6),
            b / 2 * (0.3 + 1.1 - 1.6) - 2 * h,
        ]
        expected = math.log(sum(math.exp(e) for e in energies)) / 2
        assert brute_force_z(d, p) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("h", [0.0, 0.5, 2.0])
    def test_zero_temperature_coupling(self, h):
        p = ModelParams(0.0, h)
        d = sample_disorder(10, 0, p, 0.0)
        assert brute_force_z(d, p) == pytest.approx(LOG2 + math.log(math.cosh(h)), abs=1e-14)

    @pytest.mark.parametrize("n", [3, 9, 13, 15])
    def test_matches_naive_sum(self, n):
        d = sample_disorder(n, n, P, SOL.q)
        assert brute_force_z(d, P) == pytest.approx(naive_log_z(d.j_over_sqrt_n, P), abs=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(min_value=0, max_value=10 ** 6))
    def test_permutation_invariance(self, seed):
        d = sample_disorder(8, seed, P, SOL.q)
        perm = np.random.default_rng(seed).permutation(8)
        j = d.j_over_sqrt_n[np.ix_(perm, perm)]
        dp = DisorderSample.from_matrix(j, shift=d.shift)
        assert brute_force_z(dp, P) == pytest.approx(brute_force_z(d, P), abs=1e-13)

    def test_capacity(self):
        d = sample_disorder(MAX_ENUM_N + 1, 0, P, SOL.q)
        with pytest.raises(CapacityError):
            brute_force_z(d, P)


@pytest.fixture(scope="module")
def fht_max():
    d = sample_disorder(50, 0, P, SOL.q)
    return d, maximize_fht(d, P, SOL.q)


class TestMaximizeFht:
    def test_restart_independence(self, fht_max):
        _, mx = fht_max
        vals = np.array(mx.values)
        assert np.all(np.isfinite(vals))
        assert np.max(vals) - np.min(vals) < 1e-8

    def test_stationary(self, fht_max):
        _, mx = fht_max
        assert mx.grad_norm < 1e-8

    def test_concave_at_argmax(self, fht_max):
        _, mx = fht_max
        assert mx.concave_at_argmax and mx.lambda_max_hessian < 0

    def test_dominates_tap_iterate(self, fht_max):
        d, mx = fht_max
        t = iterate_tap(d, P, SOL.q, 12)
        assert mx.value >= f_ht(t.iterates[-1], d, P, SOL.q)

    def test_zero_coupling_optimum(self):
        p = ModelParams(0.0, 0.7)
        d = sample_disorder(20, 1, p, 0.0)
        mx = maximize_fht(d, p, math.tanh(0.7) ** 2, restarts=4)
        assert mx.value == pytest.approx(LOG2 + math.log(math.cosh(0.7)), abs=1e-12)
        assert np.allclose(mx.argmax, math.tanh(0.7), rtol=0, atol=1e-10)

    def test_capacity(self):
        d = sample_disorder(201, 0, P, SOL.q)
        with pytest.raises(CapacityError):
            maximize_fht(d, P, SOL.q)


def scalar_hs(alpha: float, y: float) -> complex:
    root = complex(alpha) ** 0.5
    # one exponent, so the Gaussian factor tames the growth before exp is taken
    f = lambda x: np.exp(-x * x / 2 - root * x * y)  # noqa: E731
    re = quad(lambda x: f(x).real, -np.inf, np.inf, epsabs=1e-13)[0]
    im = quad(lambda x: f(x).imag, -np.inf, np.inf, epsabs=1e-13)[0]
    return complex(re, im) / math.sqrt(2 * math.pi)


class TestHubbardStratonovich:
    @pytest.mark.parametrize("alpha", [-1.0, 1.0])
    def test_scalar_identity(self, alpha):
        v = scalar_hs(alpha, 2.0)
        assert abs(v - math.exp(alpha * 2.0)) < 1e-10

    def test_sqrt_sym_squares_back(self):
        a = sample_disorder(3, 0, P, SOL.q).a_matrix
        r = sqrt_sym(a)
        assert np.allclose(r @ r, a, rtol=0, atol=1e-12)
        assert np.allclose(r, r.T, rtol=0, atol=1e-14)

    def test_matches_enumeration(self):
        d = sample_disorder(2, 5, P, SOL.q)
        z_exact = math.exp(2 * brute_force_z(d, P))
        res = hs_integral(d, P, SOL.q)
        assert abs(res.value.real - z_exact) / z_exact < 1e-6
        assert abs(res.value.imag) < 1e-8 * z_exact

    def test_positive_definite_real(self):
        j = np.array([[2.0, 0.3], [0.3, 1.5]])
        p = ModelParams(0.5, 0.4)
        q = 0.2
        d = DisorderSample.from_matrix(j, shift=p.beta * (1 - q))
        assert np.all(np.linalg.eigvalsh(d.a_matrix) > 0)
        res = hs_integral(d, p, q)
        assert res.value.imag == 0.0
        assert res.value.real == pytest.approx(math.exp(2 * brute_force_z(d, p)), rel=1e-6)

    def test_refinement(self):
        d = sample_disorder(2, 6, P, SOL.q)
        res = hs_integral(d, P, SOL.q)
        assert abs(res.value - res.value_coarse) < 1e-8 * abs(res.value)

    def test_three_sites(self):
        d = sample_disorder(3, 2, P, SOL.q)
        res = hs_integral(d, P, SOL.q, order=60)
        z_exact = math.exp(3 * brute_force_z(d, P))
        assert abs(res.value - z_exact) / z_exact < 1e-6

    def test_capacity(self):
        d = sample_disorder(4, 0, P, SOL.q)
        with pytest.raises(CapacityError):
            hs_integral(d, P, SOL.q)


@pytest.fixture(scope="module")
def base():
    d = sample_disorder(2, 7, P, SOL.q)
    return d, hs_integral(d, P, SOL.q)


class TestShiftedIntegral:
    @pytest.mark.parametrize("seed", range(3))
    def test_shift_invariance(self, base, seed):
        d, ref = base
        z = np.random.default_rng(seed).uniform(-1, 1, 2)
        res = shifted_hs_integral(d, P, SOL.q, z)
        assert abs(res.value - ref.value) < 2e-8 * abs(ref.value)

    @pytest.mark.parametrize("seed", range(3))
    def test_reconstruction(self, base, seed):
        d, _ = base
        z = np.random.default_rng(10 + seed).uniform(-1, 1, 2)
        res = shifted_hs_integral(d, P, SOL.q, z)
        recon = res.phi_value / 2 + P.beta ** 2 * (1 - SOL.q) / 2 + res.remainder
        assert abs(recon - brute_force_z(d, P)) < 1e-6

    def test_zero_shift(self, base):
        d, ref = base
        res = shifted_hs_integral(d, P, SOL.q, np.zeros(2))
        assert res.value == ref.value
        direct = brute_force_z(d, P) - res.phi_value / 2 - P.beta ** 2 * (1 - SOL.q) / 2
        assert abs(res.remainder - direct) < 1e-6

    def test_shift_outside_cube(self, base):
        d, ref = base
        res = shifted_hs_integral(d, P, SOL.q, np.array([1.5, -2.0]))
        assert abs(res.value - ref.value) < 2e-8 * abs(ref.value)


class TestGapStudy:
    def test_zero_coupling(self):
        p = ModelParams(0.0, 0.5)
        rows = gap_study(p, [6, 8], 2, restarts=4)
        assert len(rows) == 4
        assert all(r.gap < 1e-12 for r in rows)

    def test_rows_consistent(self):
        rows = gap_study(P, [6], 3, sol=SOL, restarts=4)
        for r in rows:
            assert r.gap == abs(r.log_z_per_spin - r.sup_fht)
            assert math.isfinite(r.log_z_per_spin)

    def test_n12_threshold(self):
        rows = gap_study(P, [12], 10, sol=SOL, restarts=4)
        assert np.mean([r.gap for r in rows]) < GAP_N12_THRESHOLD

    def test_columns(self):
        assert GAP_COLUMNS == ("n", "seed", "log_z_per_spin", "sup_fht", "gap", "q_ea_argmax")

    def test_capacity(self):
        with pytest.raises(CapacityError):
            gap_study(P, [23], 1, sol=SOL)
