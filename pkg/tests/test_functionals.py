import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sktap.disorder import DisorderSample, sample_disorder
from sktap.errors import DomainError, ParameterError
from sktap.functionals import (
    cramer_conjugate,
    cramer_entropy,
    duality_gap_bound,
    edwards_anderson,
    f_ht,
    f_ht_from_psi,
    f_tap,
    grad_psi,
    modified_field,
    phi_fn,
    plefka_condition,
    psi_fn,
)
from sktap.rs_scalars import ModelParams, solve_q

P = ModelParams(0.3, 0.5)
SOL = solve_q(P)
N = 50
D = sample_disorder(N, 0, P, SOL.q)
LOG2 = math.log(2.0)

interior = st.floats(min_value=-0.999, max_value=0.999)


def random_cube(rng, n, scale=1.0):
    return scale * rng.uniform(-1.0, 1.0, n)


class TestCramer:
    def test_origin(self):
        assert cramer_entropy(0.0) == pytest.approx(-LOG2, rel=1e-15)

    @pytest.mark.parametrize("x", [-1.0, 1.0])
    def test_boundary(self, x):
        assert cramer_entropy(x) == 0.0

    def test_symmetric_on_grid(self):
        x = np.linspace(-1, 1, 201)
        assert np.allclose(cramer_entropy(x), cramer_entropy(-x), rtol=0, atol=1e-15)

    def test_rejects_outside_cube(self):
        with pytest.raises(DomainError):
            cramer_entropy(1.0 + 1e-12)

    def test_conjugate_origin(self):
        assert cramer_conjugate(0.0) == pytest.approx(LOG2, rel=1e-15)

    def test_fenchel_young(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, 1000)
        y = rng.normal(0, 3, 1000)
        assert np.all(x * y <= cramer_entropy(x) + cramer_conjugate(y) + 1e-12)

    @pytest.mark.parametrize("y", [-2.0, 0.0, 3.0])
    def test_conjugate_is_supremum(self, y):
        x = np.linspace(-1, 1, 200001)
        grid_sup = np.max(x * y - cramer_entropy(x))
        assert grid_sup == pytest.approx(cramer_conjugate(y), abs=1e-8)

    @given(interior, st.floats(min_value=-20, max_value=20))
    def test_fenchel_young_property(self, x, y):
        assert x * y <= cramer_entropy(x) + cramer_conjugate(y) + 1e-12


class TestPsiPhi:
    def test_psi_origin(self):
        assert psi_fn(np.zeros(N), D, P, P.h) == pytest.approx(N * LOG2, rel=1e-15)

    def test_phi_origin(self):
        expected = N * (math.log(math.cosh(P.h)) + LOG2)
        assert phi_fn(np.zeros(N), D, P, P.h) == pytest.approx(expected, rel=1e-14)

    def test_hand_two_site(self):
        j = np.array([[0.4, -1.1], [-1.1, 0.2]])
        d = DisorderSample.from_matrix(j, shift=0.25)
        p = ModelParams(0.7, 0.3)
        m = np.array([0.3, -0.6])
        a = j - 0.25 * np.eye(2)
        quad = 0.7 / 2 * (a[0, 0] * 0.09 + 2 * a[0, 1] * 0.3 * -0.6 + a[1, 1] * 0.36)
        ent = sum(((1 + x) / 2) * math.log((1 + x) / 2) + ((1 - x) / 2) * math.log((1 - x) / 2) for x in m)
        expected = quad + 0.3 * (0.3 - 0.6) - ent
        assert psi_fn(m, d, p, 0.3) == pytest.approx(expected, abs=1e-12)

    def test_fenchel_inequality(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            m = random_cube(rng, N)
            assert psi_fn(m, D, P, P.h) <= phi_fn(m, D, P, P.h) + 1e-9

    def test_rejects_outside_cube(self):
        m = np.zeros(N)
        m[3] = 1.5
        with pytest.raises(DomainError):
            psi_fn(m, D, P, P.h)

    def test_rejects_wrong_length(self):
        with pytest.raises(ParameterError):
            psi_fn(np.zeros(N + 1), D, P, P.h)

    def test_closed_cube_allowed(self):
        m = np.ones(N)
        assert math.isfinite(psi_fn(m, D, P, P.h))


class TestGradient:
    def test_finite_difference(self):
        rng = np.random.default_rng(3)
        step = 1e-5
        for _ in range(20):
            m = random_cube(rng, N, 0.9)
            g = grad_psi(m, D, P, P.h)
            fd = np.empty(N)
            for i in range(N):
                e = np.zeros(N)
                e[i] = step
                fd[i] = (psi_fn(m + e, D, P, P.h) - psi_fn(m - e, D, P, P.h)) / (2 * step)
            assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)

    def test_boundary_rejected(self):
        m = np.zeros(N)
        m[0] = 1.0
        with pytest.raises(DomainError):
            grad_psi(m, D, P, P.h)

    def test_zero_at_constructed_critical_point(self):
        rng = np.random.default_rng(4)
        m = random_cube(rng, N, 0.8)
        hbar = modified_field(m, D, P, P.h)
        assert np.max(np.abs(grad_psi(m, D, P, hbar))) <= 1e-12


class TestFreeEnergies:
    def test_on_shell_equal(self):
        m = np.full(N, math.sqrt(SOL.q))
        assert f_ht(m, D, P, SOL.q) == f_tap(m, D, P, SOL.q)

    def test_identity_with_psi(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = random_cube(rng, N)
            assert f_ht(m, D, P, SOL.q) == pytest.approx(f_ht_from_psi(m, D, P, SOL.q), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(interior, min_size=N, max_size=N))
    def test_ht_below_tap(self, vals):
        m = np.array(vals)
        assert f_ht(m, D, P, SOL.q) <= f_tap(m, D, P, SOL.q)

    def test_edwards_anderson(self):
        assert edwards_anderson(np.array([1.0, -1.0, 0.0, 0.0])) == 0.5


class TestDuality:
    def test_modified_field_fixed_at_critical_point(self):
        rng = np.random.default_rng(6)
        m = random_cube(rng, N, 0.8)
        hbar = modified_field(m, D, P, P.h)
        assert np.allclose(modified_field(m, D, P, hbar), hbar, rtol=0, atol=1e-12)

    def test_critical_value_equality(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            m = random_cube(rng, N, 0.95)
            hbar = modified_field(m, D, P, P.h)
            assert abs(psi_fn(m, D, P, hbar) - phi_fn(m, D, P, hbar)) <= 1e-10

    def test_approximate_duality(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            rep = duality_gap_bound(random_cube(rng, N, 0.99), D, P, P.h, kappa=1.0)
            assert rep["norm_ok"] and rep["holds"]


class TestPlefka:
    def test_origin(self):
        v, ok = plefka_condition(np.zeros(10), ModelParams(0.9, 1.0))
        assert v == pytest.approx(0.81) and ok
        _, ok = plefka_condition(np.zeros(10), ModelParams(1.1, 1.0))
        assert not ok

    def test_corners(self):
        v, ok = plefka_condition(np.array([1.0, -1.0, 1.0]), ModelParams(3.0, 1.0))
        assert v == 0.0 and ok
