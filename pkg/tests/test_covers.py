import math

import numpy as np
import pytest

from weyllab.covers import (
    CircleTarget,
    CosphereSet,
    ResolutionFunction,
    build_good_cover,
    check_sublogarithmic,
    family_budget,
    looping_pair_measure,
    near_periodic_measure,
    nonselflooping_test,
    omega,
    recurrence_measure,
    split_bad_good,
    sublog_inequalities,
    wrap_angle,
)
from weyllab.errors import DomainError
from weyllab.flows import (
    RevolutionMetric,
    TorusFlow,
    TorusMetric,
    product_max_distance,
)
from weyllab.manifolds import (
    PerturbationSpec,
    flat_torus,
    make_perturbed_sphere,
    make_round_sphere,
    round_sphere,
    surface_of_revolution,
)

TWO_PI = 2 * math.pi
TORUS = flat_torus((TWO_PI, TWO_PI))
SPHERE = round_sphere(2)


# --- resolution functions ----------------------------------------------------

GRID = np.geomspace(1e-6, 0.5, 40)


def test_sublogarithmic_boundary_case():
    assert check_sublogarithmic(ResolutionFunction.logarithmic(1.0),
                                GRID)["pass"]


def test_sublogarithmic_constant():
    assert check_sublogarithmic(ResolutionFunction.constant(5.0),
                                GRID)["pass"]


def test_sublogarithmic_rejects_power():
    out = check_sublogarithmic(ResolutionFunction.power(1.0), GRID)
    assert not out["pass"]
    assert out["witness"] < 1.0 / math.e


def test_sublogarithmic_power_log():
    assert check_sublogarithmic(ResolutionFunction.power_log(1.0, 0.5),
                                GRID)["pass"]


def test_omega_of_scaled_log():
    out = omega(ResolutionFunction.logarithmic(0.7),
                np.geomspace(1e-8, 1e-2, 30))
    assert out["value"] == pytest.approx(0.7, abs=1e-9)


def test_omega_affine_within_one_percent():
    out = omega(ResolutionFunction.logarithmic(2.0, offset=3.0),
                np.geomspace(1e-8, 1e-2, 30))
    assert out["value"] == pytest.approx(2.0, rel=0.01)


def test_omega_sublog_decays():
    out = omega(ResolutionFunction.power_log(1.0, 0.5),
                np.geomspace(1e-8, 1e-2, 30))
    assert out["value"] < 0.3
    assert out["tag"] in ("decreasing-tail", "affine-extrapolated")


def test_sublog_inequalities_logarithm_and_sqrt():
    assert sublog_inequalities(ResolutionFunction.logarithmic(1.0),
                               1e-4, 1e-2, 10.0)["pass"]
    assert sublog_inequalities(ResolutionFunction.power_log(1.0, 0.5),
                               1e-4, 1e-2, 10.0)["pass"]


# --- phase metric ------------------------------------------------------------

def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(0)
    n = 100_000
    metric = RevolutionMetric(make_round_sphere())

    def rand_states():
        s = rng.uniform(-1.4, 1.4, n)
        th = rng.uniform(0, TWO_PI, n)
        psi = rng.uniform(0, TWO_PI, n)
        a = make_round_sphere().alpha(s)
        return np.column_stack([s, th, np.cos(psi), a * np.sin(psi)])

    A, B, C = rand_states(), rand_states(), rand_states()
    dAB = metric.distance(A, B)
    dBC = metric.distance(B, C)
    dAC = metric.distance(A, C)
    assert np.all(dAC <= dAB + dBC + 1e-12)


def test_product_max_metric_triangle():
    rng = np.random.default_rng(1)
    n = 100_000
    m = TorusMetric((TWO_PI, TWO_PI))

    def rand_states():
        x = rng.uniform(0, TWO_PI, (n, 2))
        phi = rng.uniform(0, TWO_PI, n)
        return np.column_stack([x, np.cos(phi), np.sin(phi)])

    A1, B1, C1 = rand_states(), rand_states(), rand_states()
    A2, B2, C2 = rand_states(), rand_states(), rand_states()
    dAB = product_max_distance(m, m, (A1, A2), (B1, B2))
    dBC = product_max_distance(m, m, (B1, B2), (C1, C2))
    dAC = product_max_distance(m, m, (A1, A2), (C1, C2))
    assert np.all(dAC <= dAB + dBC + 1e-12)


# --- near-periodic measures --------------------------------------------------

def test_torus_near_periodic_matches_lattice_oracle():
    U = CosphereSet(TORUS, kind="full")
    est = near_periodic_measure(U, 1.0, 10.0, 0.01, samples=50_000, seed=42)
    assert est.brute_force is not None
    assert abs(est.value - est.brute_force) <= 3.0 * est.half_width


def test_round_sphere_near_periodic_is_everything():
    U = CosphereSet(SPHERE, kind="full")
    est = near_periodic_measure(U, 1.0, 7.0, 0.05, samples=2000, seed=1)
    assert est.value == est.total


def test_near_periodic_monotone_in_T_and_R():
    U = CosphereSet(TORUS, kind="full")
    base = near_periodic_measure(U, 1.0, 6.0, 0.01, samples=20_000, seed=7)
    more_T = near_periodic_measure(U, 1.0, 12.0, 0.01, samples=20_000, seed=7)
    more_R = near_periodic_measure(U, 1.0, 6.0, 0.02, samples=20_000, seed=7)
    assert base.value <= more_T.value
    assert base.value <= more_R.value


def test_near_periodic_requires_samples():
    with pytest.raises(DomainError):
        near_periodic_measure(CosphereSet(TORUS), 1.0, 5.0, 0.01, samples=10)


def test_perturbed_band_short_window_is_empty():
    spec = PerturbationSpec(epsilon=0.01, a=0.5, b=1.0)
    m = surface_of_revolution(make_perturbed_sphere(spec))
    U = CosphereSet(m, kind="band", s0=1.05, s1=1.45)
    est = near_periodic_measure(U, 1.0, 5.0, 0.02, samples=2000, seed=3)
    assert est.value == 0.0


# --- looping pairs -----------------------------------------------------------

def test_torus_looping_matches_lattice_oracle():
    e1, e2, prod = looping_pair_measure(TORUS, (0.3, 0.4), (0.3, 0.4),
                                        1.0, 10.0, 1e-3,
                                        samples=30_000, seed=5)
    assert abs(e1.value - e1.brute_force) <= 3.0 * e1.half_width
    assert prod == pytest.approx(e1.value * e2.value * 100.0)


def test_round_sphere_self_looping_is_full():
    e1, _, _ = looping_pair_measure(SPHERE, (0.3, 0.2), (0.3, 0.2),
                                    1.0, 7.0, 0.05, samples=2000, seed=2)
    assert e1.value == e1.total


def test_pole_pair_looping_scales_linearly():
    spec = PerturbationSpec(epsilon=0.01, a=0.5, b=1.0)
    m = surface_of_revolution(make_perturbed_sphere(spec))
    pole = (math.pi / 2 - 1e-6, 0.0)
    vals = {}
    for R in (0.04, 0.02):
        e1, _, _ = looping_pair_measure(m, (0.3, 0.0), pole, 1.0, 7.0, R,
                                        samples=2000, seed=3)
        vals[R] = e1.value
    # estimate <= C R with a stable constant under halving
    assert vals[0.02] / 0.02 <= 2.0 * (vals[0.04] / 0.04) + 1.0


# --- recurrence --------------------------------------------------------------

T_OF_EPS = ResolutionFunction(
    lambda e: 1.0 / np.maximum(np.asarray(e, dtype=float), 1e-6),
    form="1/eps")


def test_torus_recurrence_passes():
    v = recurrence_measure(TORUS, (0.3, 0.4), R0=0.2, t_func=T_OF_EPS,
                           T_func=ResolutionFunction.logarithmic(5.0),
                           r=0.05, R=0.05, eps_list=(0.5,),
                           samples=4000, seed=11)
    assert v.passes
    assert not v.failures


def test_round_sphere_recurrence_fails():
    v = recurrence_measure(SPHERE, (0.3, 0.2), R0=0.2, t_func=T_OF_EPS,
                           T_func=ResolutionFunction.constant(8.0),
                           r=0.05, R=0.05, eps_list=(0.5,),
                           samples=3000, seed=4)
    assert not v.passes
    assert v.failures


def test_recurrence_vacuous_window_passes():
    v = recurrence_measure(TORUS, (0.3, 0.4), R0=0.2,
                           t_func=ResolutionFunction.constant(50.0),
                           T_func=ResolutionFunction.constant(5.0),
                           r=0.05, R=0.05, eps_list=(0.5,), samples=2000,
                           seed=4)
    assert v.passes and not v.failures


# --- good covers -------------------------------------------------------------

def test_fiber_circle_cover_counts_and_audits():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    r = 0.01
    cover = build_good_cover(target, tau=0.1, r=r)
    n = len(cover.tubes)
    assert math.ceil(TWO_PI / (2 * r)) <= n <= math.ceil(TWO_PI / r)
    assert cover.D <= family_budget(1)
    assert cover.audit_disjointness() >= 0.0
    audit = cover.audit_coverage(10_000, seed=3)
    assert audit["pass"]


def test_cover_halving_radius_ratio():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    n1 = len(build_good_cover(target, tau=0.1, r=0.01).tubes)
    n2 = len(build_good_cover(target, tau=0.1, r=0.02).tubes)
    assert 1.0 / 3.0 <= n2 / n1 <= 1.0


def test_cover_rejects_long_tubes():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    with pytest.raises(DomainError):
        build_good_cover(target, tau=10.0, r=0.05)


def test_conormal_cover_builds():
    spec = PerturbationSpec(epsilon=0.01, a=0.5, b=1.0)
    m = surface_of_revolution(make_perturbed_sphere(spec))
    target = CircleTarget(m, kind="conormal", s_circle=0.4)
    cover = build_good_cover(target, tau=0.2, r=0.05)
    assert cover.audit_disjointness() >= 0.0
    assert cover.audit_coverage(2000, seed=1)["pass"]


# --- non-self-looping and splitting -----------------------------------------

def test_slope_one_tube_loops_with_period_witness():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    tau, r = 2.0, 0.05
    cover = build_good_cover(target, tau=tau, r=r, anchor=math.pi / 4)
    idx = int(np.argmin(np.abs(wrap_angle(cover.center_params()
                                          - math.pi / 4))))
    # window cleared of the tube's own time extent: the witness falls in
    # the period-return zone 2 pi sqrt(2) - 2 (tau + r)
    t_clear = 2 * (tau + r) + 0.1
    res = nonselflooping_test(cover, [idx], t_clear, 5.0,
                              sample_density=10, seed=2)
    assert res["verdict"] == "looping"
    assert 4.5 <= res["witness"].time <= 5.0
    # with t0 only 1, the overlap with its own time extent already loops
    res0 = nonselflooping_test(cover, [idx], 1.0, 5.0, sample_density=6,
                               seed=2)
    assert res0["verdict"] == "looping"


def test_golden_tube_does_not_loop():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    golden = (1 + math.sqrt(5)) / 2
    psi_g = math.atan2(golden, 1.0)
    cover = build_good_cover(target, tau=0.1, r=0.01, anchor=psi_g)
    idx = int(np.argmin(np.abs(wrap_angle(cover.center_params() - psi_g))))
    res = nonselflooping_test(cover, [idx], 1.0, 20.0, sample_density=10,
                              seed=2)
    assert res["verdict"] == "nonlooping"
    assert res["signs"]


def test_empty_window_vacuously_nonlooping():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    cover = build_good_cover(target, tau=0.1, r=0.01)
    res = nonselflooping_test(cover, [0], 5.0, 1.0)
    assert res["verdict"] == "nonlooping" and res["vacuous"]


def test_split_torus_against_lattice_criterion():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    cover = build_good_cover(target, tau=0.3, r=0.04)
    split = split_bad_good(cover, cover, 1.0, 10.0, S=0.16,
                           sample_density=5, seed=7)
    assert len(split.bad) + len(split.good) == len(cover.tubes)
    # every tube whose center direction S-loops must be bad
    flow = TorusFlow((TWO_PI, TWO_PI))
    for tube in cover.tubes:
        st = np.array([[0.0, 0.0, math.cos(tube.center_param),
                        math.sin(tube.center_param)]])
        m = flow.target_min(st, np.array([0.0, 0.0]), 1.0, 10.0)[0]
        if m < 0.16:
            assert tube.index in split.bad


def test_split_monotone_in_T():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    cover = build_good_cover(target, tau=0.3, r=0.04)
    s1 = split_bad_good(cover, cover, 1.0, 10.0, S=0.16, sample_density=5,
                        seed=7)
    s2 = split_bad_good(cover, cover, 1.0, 14.0, S=0.16, sample_density=5,
                        seed=7)
    assert set(s1.bad).issubset(set(s2.bad))


def test_split_empty_window_all_good():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    cover = build_good_cover(target, tau=0.3, r=0.04)
    s = split_bad_good(cover, cover, 5.0, 1.0, S=0.16)
    assert not s.bad and len(s.good) == len(cover.tubes)


def test_split_round_sphere_all_bad_past_2pi():
    target = CircleTarget(SPHERE, kind="fiber", x=(0.3, 0.2))
    cover = build_good_cover(target, tau=0.3, r=0.04)
    s = split_bad_good(cover, cover, 1.0, 7.0, S=0.16, sample_density=4,
                       seed=1)
    assert len(s.bad) == len(cover.tubes)


def test_split_requires_S_geq_4r():
    target = CircleTarget(TORUS, kind="fiber", x=(0.0, 0.0))
    cover = build_good_cover(target, tau=0.3, r=0.04)
    with pytest.raises(DomainError):
        split_bad_good(cover, cover, 1.0, 10.0, S=0.1)


def test_torus_target_min_translation_invariant():
    # the exact window scan must not depend on which lattice
    # representative the base point uses (regression: corner-positioned
    # sources missed approach times near T)
    flow = TorusFlow((TWO_PI, TWO_PI))
    omega = np.array([math.cos(0.7), math.sin(0.7)])
    corner = np.array([[6.2, 6.2, omega[0], omega[1]]])
    wrapped = np.array([[6.2 - TWO_PI, 6.2 - TWO_PI, omega[0], omega[1]]])
    y = np.array([0.3, 0.1])
    a = flow.target_min(corner, y, 1.0, 10.0)[0]
    b = flow.target_min(wrapped, y, 1.0, 10.0)[0]
    assert a == pytest.approx(b, abs=1e-12)


def test_smoothed_counting_monotone():
    from weyllab.spectra import sphere_spectrum
    from weyllab.weyl import build_smoothing_kernel, smoothed_series
    K = build_smoothing_kernel(1.0)
    s = sphere_spectrum(2, 520.0)
    lams = np.linspace(30.0, 60.0, 101)
    sm = smoothed_series(s, lams, K)
    assert np.all(np.diff(sm) > -K.tail_tol * s.total)
