import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equitri import config_surface as cs
from equitri.fractal_lab import correlation as corr
from equitri.fractal_lab import measures as fm
from equitri.fractal_lab import spectrum as fs

DIAG = fm.CantorSpec(2, ((0, 0), (1, 1)), 5)


# ---------------------------------------------------------------------------
# measures


def test_keep_all_is_uniform():
    mu = fm.build_cantor(fm.CantorSpec.full(2, 3), 16)
    assert mu.s_nominal == 2
    assert np.allclose(mu.weights, 1 / 256)


def test_single_kept_cell_is_a_point_mass():
    mu = fm.build_cantor(fm.CantorSpec(1, ((0,),), 6), 64, scan=False)
    assert mu.s_nominal == 0
    assert mu.weights[0] == 1 and mu.weights[1:].sum() == 0


def test_grid_too_coarse_for_depth():
    with pytest.raises(ValueError):
        fm.build_cantor(DIAG, 16)
    with pytest.raises(ValueError):
        fm.build_cantor(fm.CantorSpec(1, ((0,), (3,)), 2, base=4), 24)


def test_mask_round_trip():
    spec = fm.CantorSpec.from_mask(2, 0b1001, 3)
    assert spec.keep_pattern == ((0, 0), (1, 1))
    assert spec.mask == 9
    with pytest.raises(ValueError):
        fm.CantorSpec.from_mask(2, 0, 3)
    with pytest.raises(ValueError):
        fm.CantorSpec(2, ((0, 2),), 1)


def test_weights_must_be_probability():
    with pytest.raises(ValueError):
        fm.GridMeasure(np.full((4, 4), 0.1), 4, 2.0)
    with pytest.raises(ValueError):
        fm.GridMeasure(np.array([1.5, -0.5]), 2, 1.0)


def test_ball_condition_exponents():
    uni = fm.build_cantor(fm.CantorSpec.full(2, 5), 64, scan=False)
    assert fm.ball_condition_scan(uni).exponent == pytest.approx(2.0, abs=0.1)
    diag = fm.build_cantor(DIAG, 128, scan=False)
    assert fm.ball_condition_scan(diag).exponent == pytest.approx(1.0, abs=0.2)
    pt = fm.point_mass(2, 64)
    assert fm.ball_condition_scan(pt).exponent == pytest.approx(0.0, abs=0.05)
    with pytest.raises(ValueError):
        fm.ball_condition_scan(uni, [1 / 128, 0.25])


def test_c_mu_estimate_recorded():
    mu = fm.build_cantor(DIAG, 64)
    assert mu.c_mu_estimate is not None and mu.c_mu_estimate > 0


def test_save_load_round_trip(tmp_path):
    mu = fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1), (0, 1)), 3), 16)
    p = tmp_path / "m.bin"
    fm.save_measure(p, mu)
    back = fm.load_measure(p)
    assert np.array_equal(back.weights, mu.weights)
    assert back.N == 16 and back.s_nominal == mu.s_nominal
    assert back.meta["depth"] == 3 and back.meta["keep_pattern"] == [[0, 0], [0, 1], [1, 1]]
    raw = bytearray(p.read_bytes())
    raw[-3] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        fm.load_measure(p)


# ---------------------------------------------------------------------------
# spectra


def test_point_mass_spectrum_is_one():
    sp = fs.grid_fourier(fm.point_mass(2, 8))
    assert np.allclose(sp.values, 1)


def test_uniform_line_matches_dirichlet_and_direct_sum():
    N = 16
    mu = fm.build_cantor(fm.CantorSpec.full(1, 4), N, scan=False)
    sp = fs.grid_fourier(mu, oversample=4)
    h = sp.spacing
    for m in (1, 3, 7):
        xi = m * h
        dirichlet = np.exp(-1j * np.pi * xi * (N - 1) / N) * np.sin(np.pi * xi) / (N * np.sin(np.pi * xi / N))
        assert sp.at([m]) == pytest.approx(dirichlet, abs=1e-13)
        assert sp.at([m]) == pytest.approx(fs.direct_transform(mu, [xi]), abs=1e-13)
    # integer lattice: the uniform atoms are invisible except at multiples of N
    sp1 = fs.grid_fourier(mu)
    assert abs(sp1.at([N // 2])) < 1e-14


def test_origin_shift_enters_as_phase():
    mu = fm.mollify(fm.build_cantor(DIAG, 32, scan=False), 1 / 8)
    sp = fs.grid_fourier(mu, size=2 * mu.M)
    for m in ([1, 2], [5, -3]):
        xi = np.array(m) * sp.spacing
        assert sp.at(m) == pytest.approx(fs.direct_transform(mu, xi), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(0, 2**31 - 1))
def test_spectrum_invariants_random_measures(d, seed):
    rng = np.random.default_rng(seed)
    w = rng.random((8,) * d) * (rng.random((8,) * d) < 0.5)
    w.flat[0] += 1e-3
    mu = fm.GridMeasure(w / w.sum(), 8, 1.0)
    sp = fs.grid_fourier(mu, oversample=2)  # checks mu_hat(0), |mu_hat| <= 1, Hermitian
    assert sp.values[(0,) * d] == pytest.approx(1)


def test_annulus_energy_point_mass_counts_lattice_points():
    sp = fs.grid_fourier(fm.point_mass(2, 32))
    r = fs.lattice_norms(sp)
    count = int(((r >= 4) & (r < 8)).sum())
    assert fs.annulus_energy(sp, 4) == pytest.approx(count)
    with pytest.raises(ValueError):
        fs.annulus_energy(sp, 16)


def test_annulus_energy_exponents():
    diag = fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1)), 7), 128, scan=False)
    assert fs.energy_exponent(fs.grid_fourier(diag), [2, 4, 8, 16]) == pytest.approx(1.0, abs=0.3)
    half = fm.build_cantor(fm.CantorSpec(1, ((0,), (1,)), 6, base=4), 4096, scan=False)
    R = [2, 4, 8, 16, 32, 64, 128, 256, 512]
    assert fs.energy_exponent(fs.grid_fourier(half, oversample=2), R) == pytest.approx(0.5, abs=0.3)
    pt = fs.grid_fourier(fm.point_mass(2, 64))
    assert fs.energy_exponent(pt, [2, 4, 8, 16]) == pytest.approx(2.0, abs=0.2)


# ---------------------------------------------------------------------------
# mollification


def test_mollify_conserves_mass_and_flattens_uniform():
    uni = fm.build_cantor(fm.CantorSpec.full(2, 5), 32, scan=False)
    out = fm.mollify(uni, 1 / 8)
    assert abs(out.weights.sum() - 1) < 1e-12
    F = out.density()
    rad = int(round((0 - out.origin) * out.N))
    interior = F[rad + 8:rad + 24, rad + 8:rad + 24]
    assert interior.max() / uni.sup_norm() <= 1 + 1e-6


def test_mollify_rejects_tiny_delta():
    with pytest.raises(ValueError):
        fm.mollify(fm.point_mass(2, 32), 1 / 32)


def test_point_mass_sup_norm_scales_like_delta_to_minus_d():
    scan = fm.sup_norm_scan(fm.point_mass(2, 64), [4 / 64, 8 / 64, 16 / 64])
    assert scan.exponent == pytest.approx(-2.0, abs=0.1)


def test_cantor_sup_norm_exponent():
    diag = fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1)), 7), 128, scan=False)
    scan = fm.sup_norm_scan(diag, [4 / 128, 8 / 128, 16 / 128, 32 / 128])
    assert scan.exponent == pytest.approx(-1.0, abs=0.3)


def test_discrete_bump_matches_analytic_transform():
    delta = 1 / 4
    mu = fm.mollify(fm.point_mass(2, 64), delta)
    sp = fs.grid_fourier(mu, size=mu.M + (mu.M % 2))
    for m in ([1, 0], [2, 3], [6, 1]):
        xi = np.array(m) * sp.spacing
        assert abs(sp.at(m)) == pytest.approx(abs(fs.bump_hat(np.linalg.norm(xi), 2, delta)), abs=2e-3)


# ---------------------------------------------------------------------------
# configuration integrals


def brute_point_mass_sum(spec, R_cut, t):
    """h^{2d} sum of sigma_hat(t xi, t eta) over all lattice pairs, pair by pair."""
    ball = corr.ball_lattice(spec, R_cut)
    h = spec.spacing
    total = 0.0
    for a, b in itertools.product(ball.m, repeat=2):
        total += cs.sigma_hat_quad(cs.FreqPair(t * h * a, t * h * b)).real
    return total * h ** (2 * spec.d)


@pytest.mark.parametrize("d,P", [(2, 8), (3, 4)])
def test_point_mass_frequency_sum_against_brute_force(d, P):
    spec = fs.grid_fourier(fm.point_mass(d, 4), size=P)
    t = np.array([0.3, 0.6, 1.0])
    nu = corr.triple_correlation_freq(spec, t, cs.SigmaEvaluator(d), R_cut=2.0)
    for k, tk in enumerate(t):
        assert nu.densities[k] == pytest.approx(brute_point_mass_sum(spec, 2.0, tk), abs=1e-8)


def test_frequency_sum_is_real_and_positive_for_uniform():
    mu = fm.build_cantor(fm.CantorSpec.full(2, 4), 16, scan=False)
    nu = corr.triple_correlation_freq(fs.grid_fourier(mu, size=32), corr.t_grid_for(0.25))
    assert nu.total_mass > 0
    assert abs(nu.imag_part) <= 1e-6 * abs(nu.total_mass)
    assert nu.total_mass == pytest.approx(np.dot(nu.weights, nu.densities))


def test_frequency_sum_converges_in_cutoff_for_smooth_measure():
    mu = fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1)), 1), 16, scan=False)
    mud = fm.mollify(mu, 1 / 8, 2)
    spec = fs.grid_fourier(mud, size=corr._padded_size(mud), hat_order=1)
    t = corr.t_grid_for(0.25, 8)
    a = corr.triple_correlation_freq(spec, t, R_cut=4.0).total_mass
    b = corr.triple_correlation_freq(spec, t, R_cut=8.0).total_mass
    assert abs(a - b) < 0.05 * abs(b)


def test_budget_and_cutoff_guards():
    spec = fs.grid_fourier(fm.point_mass(2, 16), size=32)
    with pytest.raises(corr.PairBudgetExceeded):
        corr.triple_correlation_freq(spec, R_cut=8.0, max_terms=1000)
    with pytest.raises(ValueError):
        corr.triple_correlation_freq(spec, R_cut=9.0)
    ev = cs.SigmaEvaluator(3, spec=cs.QuadratureSpec(sphere_nodes=16))
    spec3 = fs.grid_fourier(fm.point_mass(3, 8))
    with pytest.raises(cs.QuadratureRefusal):
        corr.triple_correlation_freq(spec3, [1.0], ev, R_cut=4.0)


def test_spatial_side_signs():
    uni = fm.mollify(fm.build_cantor(fm.CantorSpec.full(2, 3), 16, scan=False), 1 / 8, 2)
    assert corr.triple_correlation_space(uni, 0.25, 8, seed=1).value > 0
    pt = fm.mollify(fm.point_mass(2, 32), 1 / 16, 2)
    assert abs(corr.triple_correlation_space(pt, 0.25, 8, seed=1).value) < 1e-20
    with pytest.raises(ValueError):
        corr.triple_correlation_space(pt, 0.1, 4)


def test_spatial_side_is_seed_reproducible():
    mu = fm.mollify(fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1)), 2), 16, scan=False), 1 / 8, 2)
    a = corr.triple_correlation_space(mu, 0.25, 6, seed=3)
    b = corr.triple_correlation_space(mu, 0.25, 6, seed=3)
    assert a.value == b.value


def test_tail_scan_is_monotone_and_checks_grid():
    mu = fm.build_cantor(fm.CantorSpec(2, ((0, 0), (1, 1)), 3), 16, scan=False)
    spec = fs.grid_fourier(mu, oversample=2)
    fit = corr.tail_bound_scan(spec, None, [1, 2, 3, 4, 5], s=1.0)
    assert fit.meta["monotone"]
    assert fit.meta["predicted_slope"] == pytest.approx(-(3 - 4 - 3) / 2)
    with pytest.raises(ValueError):
        corr.tail_bound_scan(spec, None, [1, 2, 8])


def test_tail_scan_lookup_path_in_three_dimensions():
    mu = fm.build_cantor(fm.CantorSpec.full(3, 2), 4, scan=False)
    spec = fs.grid_fourier(mu, oversample=2)
    fit = corr.tail_bound_scan(spec, cs.SigmaEvaluator(3), [0.5, 1.0, 1.5], t=0.5)
    assert fit.meta["monotone"] and fit.slope < 0


def test_positivity_point_mass_not_positive():
    rep = corr.positivity_report(fm.point_mass(2, 16), [1 / 4, 1 / 8], 0.25, rotation_samples=4)
    assert not rep.positive
    with pytest.raises(ValueError):
        corr.positivity_report(fm.point_mass(2, 16), [1 / 8, 1 / 4], 0.25)
    with pytest.raises(ValueError):
        corr.positivity_report(fm.point_mass(2, 16), [1 / 16], 0.25)


def test_positivity_uniform_small_grid():
    mu = fm.build_cantor(fm.CantorSpec.full(2, 4), 16, scan=False)
    rep = corr.positivity_report(mu, [1 / 4, 1 / 8], 0.25, rotation_samples=8)
    assert rep.positive
    assert all(r["I"] > 0 for r in rep.rows)
