import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from equitri import config_surface as cs
from equitri import stationary_phase as sp

SQRT3 = math.sqrt(3)


def coords(d, u1=0.0, up=None, vp=None):
    k = d - 2
    return sp.LocalCoords(u1, np.zeros(k) if up is None else up, np.zeros(k) if vp is None else vp)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_base_point(d):
    p = sp.chart(coords(d))
    x0 = np.zeros(d)
    x0[-1] = 1
    y0 = np.zeros(d)
    y0[0], y0[-1] = SQRT3 / 2, 0.5
    assert np.allclose(p.x, x0) and np.allclose(p.y, y0)
    assert max(abs(r) for r in p.residuals) < 1e-15


def test_v1_along_u1_axis():
    for h in (1e-3, 0.02, -0.05):
        assert sp.v1_quadratic(coords(4, h)) == pytest.approx(h / 2 - SQRT3 / 4 * h * h, abs=1e-16)


def test_window_enforced():
    with pytest.raises(sp.ChartWindowError):
        sp.chart(coords(3, 0.2))
    with pytest.raises(sp.ChartWindowError):
        sp.phase_gradient(coords(3, 0.1), np.ones(3), np.ones(3))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_truncated_chart_residuals_are_cubic(d):
    rng = np.random.default_rng(d)
    assert sp.chart_residual_battery(d, 2000, rng) <= 1.0
    v = rng.standard_normal(2 * d - 3)
    c = sp.LocalCoords.from_flat(1e-2 * v / np.linalg.norm(v), d)
    assert max(abs(r) for r in sp.chart(c).residuals) <= 1e-5


@pytest.mark.parametrize("d", [2, 3, 4])
def test_exact_chart_is_on_the_surface(d):
    rng = np.random.default_rng(7)
    for _ in range(200):
        v = rng.standard_normal(2 * d - 3)
        v *= rng.uniform(0, 0.099) / np.linalg.norm(v)
        p = sp.exact_chart(sp.LocalCoords.from_flat(v, d))
        assert max(abs(r) for r in p.residuals) < 1e-14


def test_exact_and_truncated_charts_agree_to_second_order():
    d = 4
    v = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    for eps in (1e-2, 5e-3):
        c = sp.LocalCoords.from_flat(eps * v, d)
        gap = np.abs(sp.exact_chart(c).y - sp.chart(c).y).max()
        assert gap < 5 * eps**3


def test_implicit_solve():
    assert sp.implicit_solve_check(1, 0, 0.37) == 0.37
    assert abs(sp.implicit_residual(SQRT3, 4, 1e-2)) <= 1e-5
    for t in (1e-2, 1e-3):
        assert sp.implicit_solve_check(2.0, 3.0, -t) == pytest.approx(-t / 2 - 3 * t * t / 8)
    # residual is cubic: shrinking t by 10 shrinks it by about 1000
    r1, r2 = sp.implicit_residual(SQRT3, 4, 1e-2), sp.implicit_residual(SQRT3, 4, 1e-3)
    assert 500 < r1 / r2 < 2000
    with pytest.raises(ValueError):
        sp.implicit_solve_check(0, 1, 0.1)


def test_gradient_reads_off_display():
    xi = np.array([1.0, 0, 0, 0])
    g = sp.phase_gradient(coords(4), xi, np.zeros(4))
    assert g[0] == 1.0 and not g[1:].any()


@pytest.mark.parametrize("d", [2, 3, 4])
def test_closed_gradient_matches_truncated_phase_fd(d):
    rng = np.random.default_rng(11)
    for _ in range(5):
        c = sp.LocalCoords.from_flat(rng.uniform(-0.03, 0.03, 2 * d - 3), d)
        xi, eta = rng.standard_normal((2, d))
        f = lambda v: sp.phase(sp.LocalCoords.from_flat(v, d), xi, eta, exact=False)
        base = c.flat()
        fd = np.array([(f(base + e) - f(base - e)) / 2e-5 for e in 1e-5 * np.eye(2 * d - 3)])
        assert np.allclose(fd, sp.phase_gradient(c, xi, eta), atol=1e-8)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_admissible_pairs_are_critical(d):
    rng = np.random.default_rng(d + 20)
    for _ in range(10):
        xi, eta = sp.random_admissible_pair(d, rng)
        assert sp.is_admissible(xi, eta)
        assert np.abs(sp.phase_gradient(coords(d), xi, eta)).max() < 1e-15
        assert np.abs(sp.gradient_fd(xi, eta)).max() < 1e-8


@pytest.mark.parametrize("d", [2, 3, 4])
def test_hessian_closed_form_vs_finite_differences(d):
    rng = np.random.default_rng(d + 30)
    for _ in range(15):
        xi, eta = sp.random_admissible_pair(d, rng)
        cd = sp.hessian_closed_form(xi, eta)
        H = sp.hessian_fd(xi, eta)
        assert np.abs(H - cd.matrix()).max() < 1e-6
        det = np.linalg.det(H)
        assert abs(det - cd.hessian_det_closed) <= 1e-4 * abs(cd.hessian_det_closed)
        assert abs(cd.det_factored - abs(cd.hessian_det_closed)) < 1e-10 * max(1, cd.det_factored)


def test_degenerate_determinant_examples():
    for d, want in ((2, 1.0), (3, 0.0), (4, 0.0)):
        xi = np.zeros(d)
        xi[-1] = 1
        cd = sp.hessian_closed_form(xi, np.zeros(d))
        assert cd.det_factored == pytest.approx(want)


def test_sin_form_equals_block_form():
    for d in (3, 4, 5):
        for x1 in (0.3, -1.2, 2.0):
            xi = np.zeros(d)
            eta = np.zeros(d)
            xi[0], xi[-1] = x1, 0.7
            eta[-1] = 2 * x1 / SQRT3
            cd = sp.hessian_closed_form(xi, eta)
            assert abs(cd.det_sin_form - cd.det_factored) < 1e-10


def test_non_admissible_is_rejected():
    with pytest.raises(sp.NotAdmissible):
        sp.hessian_closed_form(np.array([1.0, 0, 0]), np.array([0, 0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_first_factor_identity(d, seed):
    xi, eta = sp.random_admissible_pair(d, np.random.default_rng(seed), scale=3.0)
    lhs, rhs = sp.first_factor_identity(xi, eta)
    assert abs(lhs - rhs) < 1e-12
    # the explicit rotation is one of the two in-plane pi/3 rotations
    if abs(xi[0] * eta[-1] - xi[-1] * eta[0]) > 1e-6:
        assert cs.first_factor_min(xi, eta) <= rhs + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_gradient_zero_iff_admissible(d, seed):
    rng = np.random.default_rng(seed)
    xi, eta = rng.standard_normal((2, d))
    g = np.abs(sp.gradient_fd(xi, eta)).max()
    assert (g <= 1e-8 * (np.linalg.norm(xi) + np.linalg.norm(eta))) == sp.is_admissible(xi, eta)


def lemma_int_reference(d, b, rho):
    """Nested adaptive quadrature of the reduced (r, theta) integrand."""
    area = sp.sphere_area(d - 2)

    def inner(r):
        f = lambda th: r ** (d - 1) / math.sqrt(max(r * r + b * b + 2 * r * b * math.cos(th + math.pi / 3), 1e-300))
        return integrate.quad(f, 0, math.pi, points=[2 * math.pi / 3], limit=400)[0]

    return area * integrate.quad(inner, rho, 2 * rho, points=[b] if rho < b < 2 * rho else None,
                                 limit=400)[0]


@pytest.mark.parametrize("d,b", [(3, 1.0), (3, 1.5), (4, 1.3), (4, 0.6)])
def test_lemma_int_against_deterministic_quadrature(d, b):
    eta = np.zeros(d)
    eta[0] = b
    res = sp.lemma_int_quadrature(eta, 1.0, d, 200_000, seed=3)
    ref = lemma_int_reference(d, b, 1.0)
    assert abs(res.value - ref) <= 4 * res.stderr + 1e-3 * ref
    assert res.value > 0


def test_lemma_int_scaling():
    scan = sp.lemma_int_scan(3, [8, 16, 32, 64], 100_000, seed=1)
    assert scan["ratio_spread"] < 3
    assert scan["exponent"] == pytest.approx(2.0, abs=0.2)


def test_lemma_int_preconditions():
    with pytest.raises(ValueError):
        sp.lemma_int_quadrature(np.array([1.0, 0]), 1.0, 2)
    with pytest.raises(ValueError):
        sp.lemma_int_quadrature(np.array([5.0, 0, 0]), 1.0, 3)
    with pytest.raises(ValueError):
        sp.lemma_int_quadrature(np.array([1.0, 0, 0]), 1.0, 3, mc_samples=10)


def test_stratum_underflow_is_raised():
    with pytest.raises(sp.StratumUnderflow):
        sp.lemma_int_quadrature(np.array([1.0, 0, 0]), 1.0, 3, mc_samples=3000, min_accept=0.9)
