import math

import numpy as np
import pytest

from weyllab.errors import (DomainError, IncompleteSpectrum, WindowTooSmall)
from weyllab.manifolds import (flat_torus, make_round_sphere, round_sphere,
                               surface_of_revolution)
from weyllab.spectra import (sphere_spectrum, surface_spectrum,
                             torus_spectrum)
from weyllab.weyl import (
    CountingSeries,
    build_smoothing_kernel,
    circle_integral_quadrature,
    counting,
    counting_grid,
    fit_remainder,
    kuznecov,
    localized_counting,
    projector_kernel,
    smoothed_series,
    smoothed_series_direct,
    weyl_main_term,
)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def s2():
    return sphere_spectrum(2, 520.0)


@pytest.fixture(scope="module")
def torus():
    return torus_spectrum((TWO_PI, TWO_PI), 30.0)


@pytest.fixture(scope="module")
def radial():
    return surface_spectrum(make_round_sphere(), 12.0)


@pytest.fixture(scope="module")
def kernel():
    return build_smoothing_kernel(1.0)


# --- counting ----------------------------------------------------------------

def test_counting_sphere_at_10(s2):
    cs = counting(s2, np.array([10.0]))
    assert cs.N[0] == 100
    assert cs.main[0] == pytest.approx(100.0)
    assert cs.E[0] == pytest.approx(0.0, abs=1e-9)


def test_counting_torus_at_5(torus):
    cs = counting(torus, np.array([5.0]))
    assert cs.N[0] == 81
    assert cs.main[0] == pytest.approx(25 * math.pi)
    assert cs.E[0] == pytest.approx(81 - 25 * math.pi)


def test_counting_below_zero(torus):
    cs = counting(torus, np.array([-1.0, 0.0]))
    assert cs.N[0] == 0
    assert cs.N[1] == 1


def test_counting_requires_complete_spectrum(torus):
    with pytest.raises(IncompleteSpectrum):
        counting(torus, np.array([100.0]))


def test_counting_jumps_equal_multiplicities(s2):
    for j in (3, 10, 25):
        lam = s2.lambdas[j]
        below = np.nextafter(lam, -np.inf)
        cs = counting(s2, np.array([below, lam]))
        assert cs.N[1] - cs.N[0] == s2.mults[j]


def test_counting_grid_resolves_jumps(s2):
    grid = counting_grid(s2, 5.0, 50.0)
    cs = counting(s2, grid)
    assert np.max(cs.E) > 0 and np.min(cs.E) < 0


# --- localized counting --------------------------------------------------------

def test_localized_counting_homogeneous_band(radial):
    lams = np.array([4.0, 8.0, 11.0])
    band = (-0.4, 0.7)
    loc = localized_counting(radial, band, lams)
    full = counting(radial, lams)
    # on the round sphere the diagonal kernel is constant: the band count
    # is the volume fraction of the full count
    frac = loc.volume / full.volume
    assert np.allclose(loc.N, frac * full.N, rtol=1e-6)


def test_localized_counting_full_band_matches_counting(radial):
    lams = np.array([4.0, 8.0, 11.0])
    loc = localized_counting(radial, (-math.pi / 2, math.pi / 2), lams)
    full = counting(radial, lams)
    assert np.allclose(loc.N, full.N, atol=1e-8)


def test_localized_partition_sums_to_counting(radial):
    lams = np.array([6.0, 10.0])
    cuts = [-math.pi / 2, -0.5, 0.3, 1.0, math.pi / 2]
    total = np.zeros_like(lams)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total = total + localized_counting(radial, (lo, hi), lams).N
    assert np.allclose(total, counting(radial, lams).N, atol=1e-8)


# --- projector kernels ---------------------------------------------------------

def test_kernel_diagonal_equals_count_over_area(s2):
    man = round_sphere(2)
    kv = projector_kernel(man, (0.3, 0.2), (0.3, 0.2), 10.0)
    assert kv.Pi == pytest.approx(100 / (4 * math.pi), rel=1e-12)
    assert kv.comparison == pytest.approx(100 / (4 * math.pi), rel=1e-12)


def test_kernel_hermitian_symmetry():
    man = flat_torus((TWO_PI, TWO_PI))
    x, y = (0.1, 0.2), (0.4, 1.0)
    k1 = projector_kernel(man, x, y, 20.0)
    k2 = projector_kernel(man, y, x, 20.0)
    assert k1.Pi == pytest.approx(k2.Pi, abs=1e-10)


def test_kernel_positivity_on_diagonal():
    man = flat_torus((TWO_PI, TWO_PI))
    for lam in (5.0, 12.0, 20.0):
        kv = projector_kernel(man, (0.7, 0.1), (0.7, 0.1), lam)
        assert kv.Pi >= 0


def test_torus_offdiagonal_envelope():
    man = flat_torus((TWO_PI, TWO_PI))
    kv = projector_kernel(man, (0.0, 0.0), (0.1, 0.0), 50.0)
    # remainder measured against the sqrt(lambda) envelope scale
    assert abs(kv.E0) <= 5.0 * math.sqrt(50.0)


def test_revolution_kernel_consistency(radial):
    man = surface_of_revolution(make_round_sphere())
    kv = projector_kernel(man, (0.4, 1.1), (0.4, 1.1), 8.0, spec=radial)
    # homogeneous: N(lambda)/(4 pi)
    expected = radial.count(8.0) / (4 * math.pi)
    assert kv.Pi == pytest.approx(float(expected), rel=1e-7)


def test_kernel_domain_errors():
    man = flat_torus((TWO_PI, TWO_PI))
    with pytest.raises(DomainError):
        projector_kernel(man, (0.0, 0.0), (math.pi, 0.0), 10.0)


# --- smoothing kernel ----------------------------------------------------------

def test_kernel_mass_is_one(kernel):
    from scipy.integrate import simpson
    ds = kernel.s_table[1] - kernel.s_table[0]
    mass = 2 * simpson(kernel.rho_table, dx=ds) - 0.0
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_rho_hat_plateau_and_support(kernel):
    assert kernel.rho_hat(0.0) == pytest.approx(1.0, abs=1e-12)
    assert kernel.rho_hat(0.9) == pytest.approx(1.0, abs=1e-12)
    assert float(kernel.rho_hat(2.1)) == 0.0
    assert float(kernel.rho_hat(1.9)) == 0.0      # support is [-1.75, 1.75]


def test_decay_constants_tabulated(kernel):
    assert set(kernel.decay_constants) == set(range(1, 9))
    assert kernel.decay_constants[4] < math.inf


def test_P_limits(kernel):
    assert kernel.P(np.array([1e9]))[0] == pytest.approx(1.0, abs=1e-9)
    assert kernel.P(np.array([-1e9]))[0] == pytest.approx(0.0, abs=1e-9)
    assert kernel.P(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-9)


def test_single_eigenvalue_smoothing(kernel):
    from weyllab.spectra import Spectrum
    spec = Spectrum(np.array([0.0]), np.array([1]), 1e4, 1, 1.0, "pt")
    lam = np.array([3.0, -2.0])
    sm = smoothed_series(spec, lam, kernel)
    assert sm[0] == pytest.approx(float(kernel.P(np.array([3.0]))[0]))
    assert sm[1] == pytest.approx(float(kernel.P(np.array([-2.0]))[0]))


def test_smoothed_far_above_spectrum_is_total(kernel):
    s = sphere_spectrum(2, 500.0)
    lam = np.array([30.0])
    sm = smoothed_series(s, lam, kernel)
    # below the top by much more than the kernel tail: close to N
    assert sm[0] == pytest.approx(float(s.count(30.0)), rel=0.1)


def test_smoothed_series_window_guard(kernel):
    s = sphere_spectrum(2, 50.0)
    with pytest.raises(WindowTooSmall):
        smoothed_series(s, np.array([45.0]), kernel)


def test_table_vs_direct_convolution(kernel, s2):
    rng = np.random.default_rng(3)
    lams = rng.uniform(15.0, 60.0, 8)
    sm = smoothed_series(s2, lams, kernel)
    W = float(s2.count(lams.max() + kernel.s_table[-1]))
    bound = kernel.consistency_bound(W)
    for i, lam in enumerate(lams):
        direct = smoothed_series_direct(s2, lam, kernel)
        assert abs(sm[i] - direct) <= bound


def test_table_vs_direct_other_scale(s2):
    K5 = build_smoothing_kernel(5.0)
    lams = np.array([20.0, 41.3])
    sm = smoothed_series(s2, lams, K5)
    W = float(s2.count(lams.max() + K5.s_table[-1] / 5.0))
    for i, lam in enumerate(lams):
        direct = smoothed_series_direct(s2, lam, K5)
        assert abs(sm[i] - direct) <= K5.consistency_bound(W)


# --- kuznecov ------------------------------------------------------------------

def test_circle_integrals_of_nonzero_modes_vanish(radial):
    prof = make_round_sphere()
    worst = max(abs(circle_integral_quadrature(mode, 0.3, prof))
                for (m, k), mode in radial.basis.modes.items() if m != 0)
    assert worst < 1e-10


def test_point_kuznecov_equals_diagonal_kernel(radial):
    man = surface_of_revolution(make_round_sphere())
    x = ("point", 0.4, 1.1)
    lams = np.array([3.0, 4.0, 5.0])
    ks = kuznecov(radial, x, x, lams, t0=1.0, tail_tol=0.02)
    for i, lam in enumerate(lams):
        kv = projector_kernel(man, (0.4, 1.1), (0.4, 1.1), lam, spec=radial)
        assert ks.values[i] == pytest.approx(kv.Pi, abs=1e-8)


def test_equator_kuznecov_odd_modes_vanish(radial):
    # P_l(0) = 0 for odd l: odd radial parity contributes nothing
    for (m, k), mode in radial.basis.modes.items():
        if m == 0 and k % 2 == 1:
            assert abs(float(mode(0.0))) < 1e-8


def test_kuznecov_monotone_for_equal_targets(radial):
    eq = ("circle", 0.0)
    lams = np.linspace(2.0, 5.0, 12)
    ks = kuznecov(radial, eq, eq, lams, t0=1.0, tail_tol=0.02)
    assert np.all(np.diff(ks.values) >= -1e-12)
    assert ks.trunc_bound >= 0.0


# --- remainder fits -------------------------------------------------------------

def test_fit_synthetic_log_model_exact():
    lam = np.geomspace(20, 200, 400)
    E = lam / np.log(lam)
    cs = CountingSeries(lam, E + lam ** 2, lam ** 2, E, 2, 4 * math.pi)
    fit = fit_remainder(cs, "log", (20, 200))
    assert fit.constant == pytest.approx(1.0, abs=1e-6)
    assert fit.trend == pytest.approx(1.0, abs=1e-6)


def test_fit_sphere_standard_bracket(s2):
    grid = counting_grid(s2, 20.0, 200.0)
    cs = counting(s2, grid)
    fit = fit_remainder(cs, "standard", (20, 200))
    assert 0.5 <= fit.constant <= 4.0
    assert 0.8 <= fit.trend <= 1.25


def test_fit_power_window_guard(s2):
    cs = counting(s2, counting_grid(s2, 20.0, 100.0))
    with pytest.raises(DomainError):
        fit_remainder(cs, "standard", (5, 100))


def test_weyl_main_term_values():
    # S^2: lambda^2; 2-torus (2pi)^2: pi lambda^2
    assert weyl_main_term(10.0, 2, 4 * math.pi) == pytest.approx(100.0)
    assert weyl_main_term(10.0, 2, 4 * math.pi ** 2) == pytest.approx(
        100 * math.pi)
