import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sktap.disorder import sample_disorder
from sktap.errors import DomainError, ParameterError
from sktap.functionals import grad_psi
from sktap.hessian_spec import (
    SCAN_COLUMNS,
    a_coefficients,
    b_coefficients,
    bvh_bound,
    bvh_sigmas,
    bvh_value,
    c0,
    c_matrix,
    component_bounds,
    decompose_c,
    hessian,
    lambda_max,
    negativity_scan,
    operator_norm,
    rho_pm,
    sample_cube,
    sample_shell,
    shell_bound_r,
    standard_thresholds,
    tamed_sigmas,
)
from sktap.rs_scalars import ModelParams, solve_q

P = ModelParams(0.4, 1.0)
SOL = solve_q(P)
DIAG = P.beta ** 2 * (1 - SOL.q) + 1.0

mags = st.lists(st.floats(min_value=-0.999, max_value=0.999), min_size=1, max_size=40)


@pytest.fixture(scope="module")
def d300():
    return sample_disorder(300, 0, P, SOL.q)


class TestHessian:
    def test_origin(self, d300):
        h = hessian(np.zeros(300), d300, P, SOL.q)
        assert np.allclose(h, P.beta * d300.j_over_sqrt_n - DIAG * np.eye(300), rtol=0, atol=1e-15)

    def test_finite_difference(self):
        n = 30
        d = sample_disorder(n, 3, P, SOL.q)
        rng = np.random.default_rng(0)
        step = 1e-6
        for _ in range(5):
            m = rng.uniform(-0.9, 0.9, n)
            fd = np.empty((n, n))
            for i in range(n):
                e = np.zeros(n)
                e[i] = step
                fd[:, i] = (grad_psi(m + e, d, P, P.h) - grad_psi(m - e, d, P, P.h)) / (2 * step)
            assert np.max(np.abs(fd - hessian(m, d, P, SOL.q))) < 1e-5

    def test_boundary_rejected(self, d300):
        m = np.zeros(300)
        m[0] = -1.0
        with pytest.raises(DomainError):
            hessian(m, d300, P, SOL.q)

    @given(mags)
    def test_diagonal_lower_bound(self, vals):
        assert np.all(b_coefficients(np.array(vals), P, SOL.q) >= DIAG)

    def test_origin_top_eigenvalue(self, d300):
        lh = lambda_max(hessian(np.zeros(300), d300, P, SOL.q))
        lj = np.linalg.eigvalsh(d300.j_over_sqrt_n)[-1]
        assert lh == pytest.approx(P.beta * lj - DIAG, abs=1e-10)


class TestCMatrix:
    def test_origin(self, d300):
        c = c_matrix(np.zeros(300), d300, P, SOL.q)
        assert np.allclose(c, d300.j_over_sqrt_n / DIAG, rtol=0, atol=1e-15)

    @given(mags)
    def test_coefficients_capped(self, vals):
        a = a_coefficients(np.array(vals), P, SOL.q)
        assert np.all(a <= c0(1.0, P, SOL.q) + 1e-15)
        assert c0(1.0, P, SOL.q) <= 1.0

    def test_sign_equivalence(self, d300):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = sample_cube(300, rng)
            lh = lambda_max(hessian(m, d300, P, SOL.q))
            lc = lambda_max(c_matrix(m, d300, P, SOL.q))
            assert (lh < 0) == (P.beta * lc < 1)

    def test_sign_equivalence_low_temperature(self, d300):
        # positive top eigenvalue regime: equivalence must still hold
        p = ModelParams(3.0, 0.1)
        sol = solve_q(p)
        d = d300.with_params(p, sol.q)
        for m in (np.zeros(300), np.full(300, 0.2)):
            lh = lambda_max(hessian(m, d, p, sol.q))
            lc = lambda_max(c_matrix(m, d, p, sol.q))
            assert lh > 0 and p.beta * lc > 1


class TestC0:
    def test_unit(self):
        assert c0(1.0, P, SOL.q) == pytest.approx(1.0 / DIAG, rel=1e-15)

    @given(st.floats(min_value=1e-6, max_value=1.0), st.floats(min_value=1e-6, max_value=1.0))
    def test_monotone_and_below_identity(self, y1, y2):
        lo, hi = sorted((y1, y2))
        assert c0(lo, P, SOL.q) <= c0(hi, P, SOL.q)
        assert c0(hi, P, SOL.q) <= hi


class TestDecomposition:
    def test_exact_sum(self, d300):
        rng = np.random.default_rng(2)
        m = sample_shell(300, 0.9, rng)
        th, ths, _ = standard_thresholds(0.9, 0.5)
        dec = decompose_c(m, d300, P, SOL.q, th, ths)
        c = c_matrix(m, d300, P, SOL.q)
        assert np.max(np.abs(dec.under + dec.circ + dec.over - c)) <= 1e-14

    def test_all_sites_retained(self, d300):
        m = np.full(300, 0.1)
        dec = decompose_c(m, d300, P, SOL.q, 0.5, 0.1)
        assert dec.lam.all() and dec.lam_star.all()
        assert not dec.circ.any() and not dec.under.any()

    def test_norm_triangle(self, d300):
        rng = np.random.default_rng(3)
        m = sample_shell(300, 0.8, rng)
        dec = decompose_c(m, d300, P, SOL.q, 0.4, 0.05)
        total = operator_norm(dec.under) + operator_norm(dec.circ) + operator_norm(dec.over)
        assert operator_norm(c_matrix(m, d300, P, SOL.q)) <= total + 1e-12

    def test_rejects_inverted_thresholds(self, d300):
        with pytest.raises(ParameterError):
            decompose_c(np.zeros(300), d300, P, SOL.q, 0.1, 0.2)

    def test_component_bounds_hold(self, d300):
        rng = np.random.default_rng(4)
        m = sample_shell(300, 0.9, rng)
        th, ths, _ = standard_thresholds(0.9, 0.5)
        rep = component_bounds(m, d300, P, SOL.q, th, ths)
        assert rep["over_norm"] <= rep["over_bound"] + 1e-12
        assert rep["under_norm"] <= rep["under_bound"] + 1e-12
        assert not rep["lambda_empty"]


class TestBvh:
    def test_sigma_formulas(self):
        a = np.array([0.2, 0.5, 0.9, 0.4])
        s, s_star = bvh_sigmas(a)
        assert s == pytest.approx(math.sqrt(0.9 * a.mean()), rel=1e-15)
        assert s_star == pytest.approx(0.9 / 2.0, rel=1e-15)

    def test_value_formula(self):
        v = bvh_value(1.0, 0.1, 100, 0.5)
        expected = 1.5 * (2.0 + 6.0 / math.sqrt(math.log(1.5)) * 0.1 * math.sqrt(math.log(100)))
        assert v == pytest.approx(expected, rel=1e-15)

    @given(mags)
    def test_star_sigma_bound(self, vals):
        m = np.array(vals)
        a = a_coefficients(m, P, SOL.q)
        assert bvh_sigmas(a)[1] <= c0(1.0, P, SOL.q) / math.sqrt(m.size) + 1e-15

    def test_shell_sigma_bound(self):
        rng = np.random.default_rng(5)
        rho, eps = 0.8, 0.5
        lo, hi = rho_pm(rho, eps)
        cap = math.sqrt(c0(1.0, P, SOL.q) * c0(1.0 - lo, P, SOL.q))
        for _ in range(20):
            m = sample_shell(200, rng.uniform(lo, hi), rng)
            assert bvh_sigmas(a_coefficients(m, P, SOL.q))[0] <= cap * (1 + 1e-12)

    def test_empirical_norm_below_bound(self):
        rng = np.random.default_rng(6)
        m = sample_cube(300, rng)
        a = a_coefficients(m, P, SOL.q)
        bound = bvh_bound(a, 0.5)
        hits = 0
        for seed in range(50):
            d = sample_disorder(300, 500 + seed, P, SOL.q)
            hits += operator_norm(c_matrix(m, d, P, SOL.q)) <= bound
        assert hits >= 48

    def test_tamed_sigmas_finite(self, d300):
        rng = np.random.default_rng(7)
        m = sample_shell(300, 0.9, rng)
        th, ths, _ = standard_thresholds(0.9, 0.5)
        dec = decompose_c(m, d300, P, SOL.q, th, ths)
        s, s_star = tamed_sigmas(dec.a_tilde, th, P, SOL.q)
        assert math.isfinite(s) and math.isfinite(s_star) and s > 0


class TestShellBound:
    def test_standard_thresholds(self):
        lo, _ = rho_pm(0.9, 0.05)
        th, ths, et = standard_thresholds(0.9, 0.05)
        assert th == pytest.approx((1 - lo) ** 0.5)
        assert ths == pytest.approx((1 - lo) ** 2)
        assert et == pytest.approx((1 - lo) ** 4)

    def test_finite(self):
        th, ths, et = standard_thresholds(0.9, 0.05)
        v = shell_bound_r(0.9, 0.05, et, th, ths, P, SOL.q, 1000)
        assert math.isfinite(v) and v > 0

    def test_decreasing_in_rho(self):
        vals = []
        for rho in np.linspace(0.75, 0.99, 25):
            th, ths, et = standard_thresholds(rho, 0.05)
            vals.append(shell_bound_r(rho, 0.05, et, th, ths, P, SOL.q, 1000))
        assert np.all(np.diff(vals) < 0)

    def test_rejects_bad_thresholds(self):
        with pytest.raises(ParameterError):
            shell_bound_r(0.9, 0.05, 0.01, 0.1, 0.2, P, SOL.q, 1000)


class TestSampling:
    @given(st.integers(min_value=5, max_value=200), st.floats(min_value=0.0, max_value=0.99),
           st.integers(min_value=0, max_value=2 ** 32))
    @settings(max_examples=40, deadline=None)
    def test_shell_hits_target(self, n, target, seed):
        m = sample_shell(n, target, np.random.default_rng(seed))
        assert np.all(np.abs(m) < 1.0)
        assert float(m @ m) / n == pytest.approx(target, abs=1e-10)

    @pytest.mark.parametrize("n", [5, 112, 5000])
    @pytest.mark.parametrize("target", [0.96875, 0.999])
    def test_shell_near_unit_overlap(self, n, target):
        m = sample_shell(n, target, np.random.default_rng(0))
        assert np.max(np.abs(m)) < 1.0
        assert float(m @ m) / n == pytest.approx(target, abs=1e-10)

    def test_shell_rejects_outside(self):
        with pytest.raises(ParameterError):
            sample_shell(10, 1.5, np.random.default_rng(0))

    def test_cube_range(self):
        m = sample_cube(1000, np.random.default_rng(0))
        assert np.all(np.abs(m) < 1.0)


class TestNegativityScan:
    def test_half_plane_negative(self):
        d = sample_disorder(200, 0, P, SOL.q)
        reps = negativity_scan(d, P, SOL.q, None, 0.5, 10, 1, extra_points=[np.zeros(200)])
        assert len(reps) == 11
        for r in reps:
            assert all(r.pass_flags.values()), r.pass_flags
            assert r.lambda_max_h < 0

    def test_shell_scan_flags(self):
        d = sample_disorder(200, 1, P, SOL.q)
        reps = negativity_scan(d, P, SOL.q, 0.5, 0.5, 5, 2)
        assert all(r.pass_flags["mean_a_upper"] and r.pass_flags["sign_equivalence"] for r in reps)

    def test_deterministic(self):
        d = sample_disorder(100, 0, P, SOL.q)
        a = negativity_scan(d, P, SOL.q, None, 0.5, 3, 9)
        b = negativity_scan(d, P, SOL.q, None, 0.5, 3, 9)
        assert [r.lambda_max_h for r in a] == [r.lambda_max_h for r in b]

    def test_columns(self):
        assert SCAN_COLUMNS[:6] == ("point_id", "q_ea", "lambda_max_h", "lambda_max_c", "f2_bound", "bvh_bound")
        assert "region_flags" in SCAN_COLUMNS

    def test_geman_consistency(self):
        d = sample_disorder(2000, 0, P, SOL.q)
        lc = lambda_max(c_matrix(np.zeros(2000), d, P, SOL.q))
        c1 = c0(1.0, P, SOL.q)
        assert abs(lc - 2 * c1) < 0.1 * c1
