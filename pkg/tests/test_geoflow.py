import math

import numpy as np
import pytest

from weyllab.errors import DomainError
from weyllab.geoflow import (
    PhasePoint,
    best_rational,
    clairaut_constant,
    classify_tori,
    convergents,
    d_rotation_number,
    d_rotation_number_in_epsilon,
    expansion_rate,
    integrate_geodesic,
    rotation_number,
    rotation_number_ode,
    theta_half,
    turning_points,
    unit_phase_point,
)
from weyllab.manifolds import (
    PerturbationSpec,
    flat_torus,
    make_perturbed_sphere,
    make_pendulum_profile,
    make_round_sphere,
    round_sphere,
    surface_of_revolution,
)

SPHERE = make_round_sphere()
SPEC = PerturbationSpec(epsilon=0.01, a=0.5, b=1.0)
PERT = make_perturbed_sphere(SPEC)


# --- Clairaut data ---------------------------------------------------------

def test_clairaut_constant_equatorial_and_meridian():
    eq = PhasePoint(0.0, 0.0, 0.0, 1.0)
    assert clairaut_constant(eq, SPHERE) == 1.0
    mer = PhasePoint(0.3, 0.0, 1.0, 0.0)
    assert clairaut_constant(mer, SPHERE) == 0.0


def test_clairaut_constant_mixed_direction():
    p = unit_phase_point(SPHERE, 0.0, 0.0, math.pi / 4)
    c = clairaut_constant(p, SPHERE)
    assert c == pytest.approx(math.cos(math.pi / 4), rel=1e-12)
    s_minus, s_plus = turning_points(c, SPHERE)
    assert s_plus == pytest.approx(math.pi / 4, abs=1e-11)


def test_turning_points_symmetric():
    s_minus, s_plus = turning_points(math.sqrt(0.5), SPHERE)
    assert s_plus == pytest.approx(math.pi / 4, abs=1e-11)
    assert s_minus == pytest.approx(-math.pi / 4, abs=1e-11)


def test_turning_points_domain():
    with pytest.raises(DomainError):
        turning_points(1.5, SPHERE)
    with pytest.raises(DomainError):
        turning_points(0.0, SPHERE)


def test_turning_points_asymmetric_on_one_sided_perturbation():
    # with only the northern band perturbed, the turning points of orbits
    # reaching into the band are no longer mirror images
    spec = PerturbationSpec(epsilon=0.01, a=0.5, b=1.0,
                            f_minus=lambda s: np.zeros_like(np.asarray(s, float)))
    one_sided = make_perturbed_sphere(spec)
    c = float(one_sided.alpha(0.7))
    s_minus, s_plus = turning_points(c, one_sided)
    assert s_plus == pytest.approx(0.7, abs=1e-11)
    assert abs(s_minus + 0.7) > 1e-4
    assert float(one_sided.alpha(s_minus)) == pytest.approx(c, abs=1e-11)


def test_theta_half_round_sphere_is_pi():
    for s_plus in (0.3, 0.7, 1.2):
        assert theta_half(s_plus, "plus", SPHERE) == pytest.approx(
            math.pi, abs=1e-9)


def test_theta_half_even_symmetry():
    s_plus = 0.8
    s_minus = -s_plus
    assert theta_half(s_minus, "minus", SPHERE) == pytest.approx(
        theta_half(s_plus, "plus", SPHERE), abs=1e-10)


def test_rotation_number_round_sphere():
    orb = rotation_number(0.5, SPHERE)
    assert orb.Theta0 == pytest.approx(2 * math.pi, abs=1e-9)
    assert orb.return_time == pytest.approx(2 * math.pi, abs=1e-9)
    assert orb.theta_plus == pytest.approx(math.pi, abs=1e-9)


def test_rotation_number_unseen_perturbation():
    # orbit with s_plus < a never enters the bump support
    orb = rotation_number(0.25, PERT)
    assert orb.Theta0 == pytest.approx(2 * math.pi, abs=1e-10)
    assert orb.s_minus == pytest.approx(-0.25, abs=1e-10)


def test_pendulum_theta0_sqrt_lower_bound():
    pend = make_pendulum_profile(4.0)
    s_plus = pend.s_max + 0.01
    orb = rotation_number(s_plus, pend)
    assert orb.Theta0 > 0.5 * math.sqrt(0.01)


# --- derivative of the rotation number -------------------------------------

def test_d_rotation_number_round_sphere_vanishes():
    for s_plus in (0.4, 0.9, 1.3):
        assert abs(d_rotation_number(s_plus, SPHERE, "formula")) < 1e-10


def test_d_rotation_number_formula_vs_fd():
    for s_plus in (0.9, 1.1, 1.3):
        f = d_rotation_number(s_plus, PERT, "formula")
        fd = d_rotation_number(s_plus, PERT, "finite_difference")
        assert abs(f - fd) < 1e-3 * max(abs(fd), 1e-8)


def test_d_rotation_number_pendulum_nonvanishing():
    pend = make_pendulum_profile(4.0)
    for s_plus in (0.1, 0.8, 1.4):
        assert abs(d_rotation_number(pend.s_max + s_plus * 0.9, pend,
                                     "finite_difference")) > 0


def test_epsilon_derivative_positive_and_consistent():
    h = 1e-4
    plus = make_perturbed_sphere(PerturbationSpec(epsilon=h, a=0.5, b=1.0))
    minus = make_perturbed_sphere(PerturbationSpec(epsilon=-h, a=0.5, b=1.0))
    for s_plus in (1.0, 1.2, 1.5):
        D = d_rotation_number_in_epsilon(SPEC, s_plus)
        fd = (d_rotation_number(s_plus, plus, "formula")
              - d_rotation_number(s_plus, minus, "formula")) / (2 * h)
        assert D > 0
        assert abs(D - fd) < 1e-3 * abs(fd)


# --- flow -------------------------------------------------------------------

def test_equatorial_orbit_is_invariant_circle():
    p0 = PhasePoint(0.0, 0.0, 0.0, float(PERT.alpha(0.0)))
    tr = integrate_geodesic(p0, 10.0, PERT)
    t = np.linspace(0, 10, 21)
    y = tr(t)
    assert np.max(np.abs(y[0])) < 1e-12
    assert np.max(np.abs(y[1] - t / float(PERT.alpha(0.0)))) < 1e-9


def test_round_sphere_closure_at_2pi():
    p0 = unit_phase_point(SPHERE, 0.3, 1.0, 0.7)
    tr = integrate_geodesic(p0, 2 * math.pi, SPHERE)
    end = tr(2 * math.pi)
    start = p0.as_array()
    dtheta = (end[1] - start[1]) % (2 * math.pi)
    dtheta = min(dtheta, 2 * math.pi - dtheta)
    assert abs(end[0] - start[0]) < 1e-7
    assert dtheta < 1e-7
    assert abs(end[2] - start[2]) < 1e-7
    assert abs(end[3] - start[3]) < 1e-7


def test_conservation_along_flow():
    p0 = unit_phase_point(PERT, -0.4, 0.0, 1.1)
    T = 30.0
    tr = integrate_geodesic(p0, T, PERT)
    report = tr.conservation_report()
    assert report["unit_speed_drift"] < 1e-8 * (1 + T)
    assert report["clairaut_drift"] < 1e-8 * (1 + T)


def test_meridian_closed_form():
    p0 = PhasePoint(0.2, 0.5, 1.0, 0.0)
    tr = integrate_geodesic(p0, 8.0, SPHERE)
    y = tr(np.array([0.0, 2 * math.pi]))
    assert y[0, 1] == pytest.approx(0.2, abs=1e-12)
    t_pole = math.pi / 2 - 0.2
    mid = tr(t_pole + 0.3)
    assert mid[1] == pytest.approx((0.5 + math.pi) % (2 * math.pi), abs=1e-12)


def test_ode_vs_quadrature_rotation_number():
    for s_plus in (0.4, 1.0, 1.4):
        orb = rotation_number(s_plus, PERT)
        theta_ode, t_ode = rotation_number_ode(s_plus, PERT)
        assert abs(orb.Theta0 - theta_ode) < 1e-6
        assert abs(orb.return_time - t_ode) < 1e-6


def test_mirror_symmetry_conjugation():
    # (s, theta, xi_s, xi_theta) -> (s, -theta, xi_s, -xi_theta) conjugates
    # the flow to itself
    p0 = unit_phase_point(PERT, 0.2, 0.7, 0.9)
    pm = PhasePoint(p0.s, -p0.theta, p0.xi_s, -p0.xi_theta)
    T = 5.0
    y = integrate_geodesic(p0, T, PERT)(T)
    ym = integrate_geodesic(pm, T, PERT)(T)
    assert abs(y[0] - ym[0]) < 1e-8
    assert abs(y[1] + ym[1]) % (2 * math.pi) < 1e-8
    assert abs(y[2] - ym[2]) < 1e-8
    assert abs(y[3] + ym[3]) < 1e-8


# --- rationality and classification ----------------------------------------

def test_convergents_of_pi():
    cs = convergents(math.pi, 1000)
    assert (22, 7) in cs and (355, 113) in cs


def test_best_rational_golden_ratio():
    golden = (1 + math.sqrt(5)) / 2
    p, q, err = best_rational(golden, 50)
    assert err > 1e-9  # badly approximable


def test_classify_round_sphere_all_periodic():
    out = classify_tori(SPHERE, np.linspace(0.1, 1.5, 12))
    assert all(c.status == "periodic" and (c.p, c.q) == (1, 1) for c in out)
    assert not any(c.status == "aperiodic" for c in out)


def test_classify_perturbed_bands():
    grid = np.linspace(0.05, math.pi / 2 - 0.05, 25)
    out = classify_tori(PERT, grid)
    for c in out:
        if c.s_plus < 0.5:
            assert c.status == "periodic" and (c.p, c.q) == (1, 1)
        if c.s_plus >= 1.0:
            assert c.status == "aperiodic"


def test_classify_synthetic_golden_table(monkeypatch):
    # a synthetic profile whose rotation number is the golden angle should
    # never read as periodic at q_max = 50
    golden = (1 + math.sqrt(5)) / 2
    p, q, err = best_rational(golden, 50)
    assert err > 1e-9


# --- expansion rate ---------------------------------------------------------

def test_expansion_rate_flat_torus_zero():
    est = expansion_rate(flat_torus((2 * math.pi, 2 * math.pi)))
    assert est.lambda_max == 0.0


def test_expansion_rate_round_sphere_zero():
    est = expansion_rate(round_sphere(2))
    assert est.lambda_max == 0.0


def test_expansion_rate_perturbed_sphere_integrable():
    m = surface_of_revolution(PERT)
    est = expansion_rate(m, sample_count=6, T=30.0, seed=3)
    est2 = expansion_rate(m, sample_count=6, T=60.0, seed=3)
    assert est.lambda_max >= 0.0
    assert abs(est.lambda_max - est2.lambda_max) <= 0.2 * max(
        est.lambda_max, est2.lambda_max, 1e-12)
    assert np.all(np.diff(est.growth) >= 0)
