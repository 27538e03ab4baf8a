"""Geodesic dynamics on surfaces of revolution.

Clairaut integrals, rotation numbers and their derivatives, Hamiltonian
flow integration with conserved-quantity monitoring, periodic-torus
classification, and expansion-rate estimation.

Orbits are parametrized by the right turning point ``s_plus``; angular
advances are anchored at the profile maximum ``s_max`` (equal to 0 for
mirror-symmetric profiles, which recovers the usual split at the equator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DegenerateInput, DomainError, StepFailure
from .manifolds import HALF_PI, ModelManifold, ProfileCurve
from .quadrature import tanh_sinh

_CLAIRAUT_REL_TOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    """Point of the cotangent bundle in the (s, theta) chart."""

    s: float
    theta: float
    xi_s: float
    xi_theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.theta, self.xi_s, self.xi_theta])

    def unit_defect(self, profile: ProfileCurve) -> float:
        a = float(profile.alpha(self.s))
        return abs(self.xi_s ** 2 + self.xi_theta ** 2 / a ** 2 - 1.0)


def unit_phase_point(profile: ProfileCurve, s: float, theta: float,
                     psi: float) -> PhasePoint:
    """Unit-cosphere point with fiber angle psi: (xi_s, xi_theta/alpha) = (cos, sin)."""
    a = float(profile.alpha(s))
    return PhasePoint(s, theta, math.cos(psi), a * math.sin(psi))


@dataclass(frozen=True)
class ClairautOrbit:
    """Conserved data of an integrable orbit with right turning point s_plus."""

    c: float
    s_plus: float
    s_minus: float
    theta_plus: float
    theta_minus: float
    Theta0: float
    return_time: float


@dataclass(frozen=True)
class TorusClassification:
    s_plus: float
    status: str                  # "periodic" | "aperiodic" | "uncertain"
    Theta0: float
    dTheta0: float
    p: Optional[int] = None
    q: Optional[int] = None


@dataclass(frozen=True)
class ExpansionEstimate:
    lambda_max: float
    T_grid: np.ndarray
    growth: np.ndarray
    tail_slope: float = 0.0
    model: str = ""


# ---------------------------------------------------------------------------
# Clairaut data


def clairaut_constant(p: PhasePoint, profile: ProfileCurve) -> float:
    """Conserved |xi_theta| (equals alpha at the turning points)."""
    if p.unit_defect(profile) > 1e-6:
        raise DomainError("phase point is not on the unit cosphere bundle")
    return abs(p.xi_theta)


def turning_points(c: float, profile: ProfileCurve,
                   xtol: float = 1e-12) -> tuple[float, float]:
    """Roots of alpha = c on either side of the profile maximum."""
    if not (0.0 < c < profile.alpha_max):
        raise DomainError(
            f"Clairaut constant {c} outside (0, {profile.alpha_max})")

    def g(s):
        return float(profile.alpha(s)) - c

    s_plus = brentq(g, profile.s_max, HALF_PI - 1e-15, xtol=xtol)
    s_minus = brentq(g, -HALF_PI + 1e-15, profile.s_max, xtol=xtol)
    return float(s_minus), float(s_plus)


def s_minus_of(s_plus: float, profile: ProfileCurve) -> float:
    """Left turning point paired with s_plus (same Clairaut constant)."""
    c = float(profile.alpha(s_plus))
    return turning_points(c, profile)[0]


def _alpha_sq_gap(profile: ProfileCurve, w, c: float, s_turn: float,
                  dw):
    """alpha(w)^2 - c^2, cancellation-guarded near the turning point.

    ``dw = w - s_turn`` is supplied in exact arithmetic by the quadrature
    rule.  Within 1e-5 of the turning point the difference alpha(w) - c is
    replaced by its two-term Taylor expansion (exact derivative
    evaluators), which keeps the relative error of the gap near machine
    precision instead of eps/distance.
    """
    a = profile.alpha(w)
    gap = (a - c) * (a + c)
    dw = np.asarray(dw, dtype=float)
    near = np.abs(dw) < 1e-5
    if np.any(near):
        da = float(profile.d_alpha(s_turn))
        dda = float(profile.dd_alpha(s_turn))
        diff = da * dw + 0.5 * dda * dw * dw
        gap = np.where(near, diff * (a + c), gap)
    return np.where(gap > 1e-300, gap, np.inf)


def _singular_segment(numer, profile: ProfileCurve, c: float, lo: float,
                      hi: float, s_turn: float,
                      rel_tol: float = _CLAIRAUT_REL_TOL) -> float:
    """int_lo^hi numer(w) / sqrt(alpha^2 - c^2) dw, singular at s_turn.

    ``s_turn`` must be one of the endpoints (a turning point of the orbit);
    the other endpoint is regular.
    """
    at_hi = abs(s_turn - hi) < abs(s_turn - lo)

    def f(w, d_lo, d_hi):
        dw = -d_hi if at_hi else d_lo
        return numer(w) / np.sqrt(_alpha_sq_gap(profile, w, c, s_turn, dw))

    return tanh_sinh(f, lo, hi, rel_tol=rel_tol, endpoint_distances=True)[0]


def _theta_segment(profile: ProfileCurve, c: float, lo: float, hi: float,
                   s_turn: float, rel_tol: float = _CLAIRAUT_REL_TOL) -> float:
    """int_lo^hi (c/alpha) / sqrt(alpha^2 - c^2) dw."""
    return _singular_segment(lambda w: c / profile.alpha(w), profile, c,
                             lo, hi, s_turn, rel_tol)


def _time_segment(profile: ProfileCurve, c: float, lo: float, hi: float,
                  s_turn: float, rel_tol: float = _CLAIRAUT_REL_TOL) -> float:
    """int_lo^hi alpha / sqrt(alpha^2 - c^2) dw."""
    return _singular_segment(lambda w: profile.alpha(w), profile, c,
                             lo, hi, s_turn, rel_tol)


def theta_half(s_turn: float, side: str, profile: ProfileCurve) -> float:
    """Azimuthal advance over a half oscillation anchored at the equator.

    ``side="plus"`` gives theta_+(s_turn) = 2 int_0^{s_turn}; ``side="minus"``
    the mirror advance.  Requires the orbit to straddle s = 0.
    """
    c = float(profile.alpha(s_turn))
    if side == "plus":
        if not (profile.s_max < s_turn < HALF_PI):
            raise DomainError(f"s_turn={s_turn} is not a right turning point")
        if float(profile.alpha(0.0)) <= c:
            raise DomainError("orbit does not reach the equator; "
                              "use rotation_number for the full advance")
        return 2.0 * _theta_segment(profile, c, 0.0, s_turn, s_turn)
    if side == "minus":
        if not (-HALF_PI < s_turn < profile.s_max):
            raise DomainError(f"s_turn={s_turn} is not a left turning point")
        if float(profile.alpha(0.0)) <= c:
            raise DomainError("orbit does not reach the equator")
        return 2.0 * _theta_segment(profile, c, s_turn, 0.0, s_turn)
    raise DomainError(f"side must be 'plus' or 'minus', got {side!r}")


def rotation_number(s_plus: float, profile: ProfileCurve) -> ClairautOrbit:
    """Full Clairaut data of the orbit with right turning point s_plus.

    Theta0 = theta_+ + theta_-, the azimuthal advance over one full radial
    oscillation; the return time is the period of that oscillation.  The
    two half advances are split at the profile maximum, so they agree with
    the equator-anchored definition on mirror-symmetric profiles.
    """
    if not (profile.s_max < s_plus < HALF_PI):
        raise DomainError(f"s_plus={s_plus} outside ({profile.s_max}, pi/2)")
    c = float(profile.alpha(s_plus))
    s_minus = s_minus_of(s_plus, profile)
    anchor = profile.s_max
    th_p = 2.0 * _theta_segment(profile, c, anchor, s_plus, s_plus)
    th_m = 2.0 * _theta_segment(profile, c, s_minus, anchor, s_minus)
    t_p = 2.0 * _time_segment(profile, c, anchor, s_plus, s_plus)
    t_m = 2.0 * _time_segment(profile, c, s_minus, anchor, s_minus)
    return ClairautOrbit(c=c, s_plus=s_plus, s_minus=s_minus,
                         theta_plus=th_p, theta_minus=th_m,
                         Theta0=th_p + th_m, return_time=t_p + t_m)


# ---------------------------------------------------------------------------
# Derivative of the rotation number


def _d_theta_plus_formula(profile: ProfileCurve, s_plus: float,
                          split_frac: float = 0.5) -> float:
    """d theta_+ / d s_plus by the split-integral identity.

    The half advance from the anchor z to s_plus is differentiated by
    integrating by parts on (beta, s_plus) and differentiating under the
    integral on (z, beta), beta = z + split_frac (s_plus - z).  The result
    is independent of the split point; callers verify insensitivity by
    re-evaluating at a second split.
    """
    z = profile.s_max
    c = float(profile.alpha(s_plus))
    beta = z + split_frac * (s_plus - z)
    a_beta = float(profile.alpha(beta))
    da_beta = float(profile.d_alpha(beta))
    if abs(da_beta) < 1e-8 or (s_plus - z) < 1e-6:
        raise DegenerateInput(
            f"cannot place the split point for s_plus={s_plus}")
    da_sp = float(profile.d_alpha(s_plus))

    def f1(w, d_lo, d_hi):
        a = profile.alpha(w)
        da = profile.d_alpha(w)
        dda = profile.dd_alpha(w)
        gap = _alpha_sq_gap(profile, w, c, s_plus, -d_hi)
        return ((a * a - 2.0 * c * c) * (2.0 * da * da + a * dda)
                / (np.sqrt(gap) * a ** 3 * da ** 2))

    I1 = tanh_sinh(f1, beta, s_plus, rel_tol=_CLAIRAUT_REL_TOL,
                   endpoint_distances=True)[0]
    boundary = ((a_beta ** 2 - 2.0 * c * c)
                / (math.sqrt(a_beta ** 2 - c * c) * a_beta ** 2 * da_beta))

    def f2(w):
        a = profile.alpha(w)
        gap = (a - c) * (a + c)
        return a / gap ** 1.5

    I2 = tanh_sinh(f2, z, beta, rel_tol=_CLAIRAUT_REL_TOL)[0]
    return 2.0 * da_sp * (I1 - boundary + I2)


def d_rotation_number(s_plus: float, profile: ProfileCurve,
                      method: str = "formula",
                      fd_step: float = 1e-4) -> float:
    """d Theta0 / d s_plus, by the exact identity or by central differences."""
    if method == "finite_difference":
        h = fd_step
        hi = min(s_plus + h, HALF_PI - 1e-9)
        lo = max(s_plus - h, profile.s_max + 1e-9)
        f_hi = rotation_number(hi, profile).Theta0
        f_lo = rotation_number(lo, profile).Theta0
        return (f_hi - f_lo) / (hi - lo)
    if method != "formula":
        raise DomainError(f"unknown method {method!r}")

    d_plus = _d_theta_plus_formula(profile, s_plus)
    # Mirror side through the reflected profile: theta_-(s_-; alpha) equals
    # theta_+(-s_-; alpha reflected), so d theta_-/d s_- = -d theta_+ at -s_-.
    s_minus = s_minus_of(s_plus, profile)
    refl = profile.reflected()
    d_minus = -_d_theta_plus_formula(refl, -s_minus)
    ds_minus = float(profile.d_alpha(s_plus)) / float(profile.d_alpha(s_minus))
    return d_plus + d_minus * ds_minus


def d_rotation_number_in_epsilon(spec, s_plus: float) -> float:
    """d/d eps of d Theta0/d s_plus at eps = 0 for a bump perturbation.

    Closed form on the round sphere: each bump contributes the weighted
    integral of f against (2 alpha0^2(w) + alpha0^2(s))/ (alpha0^2(w) -
    alpha0^2(s))^{5/2}; valid for s_plus >= b (orbit turning outside the
    support).
    """
    if s_plus < spec.b:
        raise DomainError("closed form requires s_plus >= b")
    c = math.cos(s_plus)

    def kernel(w, c_val):
        a0 = np.cos(w)
        gap = a0 * a0 - c_val * c_val
        return (2.0 * a0 * a0 + c_val * c_val) / gap ** 2.5

    def supported(f_bump, c_val):
        def f(w):
            val = f_bump(w)
            out = np.zeros_like(val)
            m = val > 0
            if np.any(m):
                out[m] = val[m] * kernel(w[m], c_val)
            return out
        return f

    I_plus = tanh_sinh(supported(spec.f_plus, c), spec.a, spec.b,
                       rel_tol=1e-11)[0]
    # -2 alpha0'(s_plus) I_plus with alpha0' = -sin
    d_eps_d_theta_plus = 2.0 * math.sin(s_plus) * I_plus

    s_minus = -s_plus            # round-sphere pairing
    I_minus = tanh_sinh(supported(spec.f_minus, math.cos(s_minus)),
                        -spec.b, -spec.a, rel_tol=1e-11)[0]
    d_eps_d_theta_minus = 2.0 * math.sin(s_minus) * I_minus

    # At eps = 0 the background is round: d theta_-/d s_- vanishes and
    # d s_-/d s_+ = -1, so the mixed derivative combines with a minus sign.
    return d_eps_d_theta_plus - d_eps_d_theta_minus


# ---------------------------------------------------------------------------
# Hamiltonian flow


class Trajectory:
    """Dense-output geodesic trajectory in the (s, theta) chart."""

    def __init__(self, eval_fn: Callable, t_span: tuple[float, float],
                 profile: ProfileCurve):
        self._eval = eval_fn
        self.t_span = t_span
        self.profile = profile

    def __call__(self, t):
        return self._eval(np.asarray(t, dtype=float))

    def conservation_report(self, n_check: int = 200) -> dict:
        t = np.linspace(self.t_span[0], self.t_span[1], n_check)
        y = self(t)
        a = self.profile.alpha(y[0])
        unit = y[2] ** 2 + y[3] ** 2 / a ** 2 - 1.0
        return {
            "unit_speed_drift": float(np.max(np.abs(unit))),
            "clairaut_drift": float(np.max(np.abs(y[3] - y[3][0]))),
        }


def _hamilton_rhs(profile: ProfileCurve):
    def rhs(t, y):
        s, theta, xi_s, xi_t = y
        a = float(profile.alpha(s))
        da = float(profile.d_alpha(s))
        return [xi_s, xi_t / (a * a), xi_t * xi_t * da / a ** 3, 0.0]

    return rhs


def _meridian_trajectory(p0: PhasePoint, T: float,
                         profile: ProfileCurve) -> Trajectory:
    """Closed-form meridian geodesic (passes through both poles).

    Unit speed along the profile curve; position unfolds on the meridian
    great circle of length 2 pi with theta jumping by pi at each pole.
    """
    if p0.xi_s >= 0:
        phi0, theta_front = p0.s, p0.theta
    else:
        phi0, theta_front = math.pi - p0.s, p0.theta + math.pi

    def eval_fn(t):
        t = np.atleast_1d(t)
        phi = np.mod(phi0 + t + HALF_PI, 2.0 * math.pi) - HALF_PI
        front = phi <= HALF_PI
        s = np.where(front, phi, math.pi - phi)
        theta = np.where(front, theta_front, theta_front + math.pi)
        xi_s = np.where(front, 1.0, -1.0)
        out = np.vstack([s, np.mod(theta, 2.0 * math.pi), xi_s,
                         np.zeros_like(s)])
        return out if out.shape[1] > 1 else out[:, 0]

    return Trajectory(eval_fn, (0.0, T), profile)


def integrate_geodesic(p0: PhasePoint, T: float, profile: ProfileCurve,
                       rtol: float = 1e-10, atol: float = 1e-10) -> Trajectory:
    """Adaptive high-order integration of the unit cosphere geodesic flow.

    Meridian data (xi_theta = 0) is dispatched to the pole-safe closed form;
    the chart equations degenerate there.
    """
    if p0.unit_defect(profile) > 1e-6:
        raise DomainError("initial data must lie on the unit cosphere bundle")
    if abs(p0.xi_theta) < 1e-12:
        return _meridian_trajectory(p0, T, profile)
    sol = solve_ivp(_hamilton_rhs(profile), (0.0, T), p0.as_array(),
                    method="DOP853", dense_output=True, rtol=rtol, atol=atol)
    if not sol.success:
        raise StepFailure(f"integration failed: {sol.message}")
    return Trajectory(lambda t: sol.sol(t), (0.0, T), profile)


def rotation_number_ode(s_plus: float, profile: ProfileCurve,
                        rtol: float = 1e-11, t_max: float = 40.0):
    """(Theta0, return time) measured from the flow's turning-point return map.

    Starts at the right turning point and integrates until xi_s falls back
    through zero, i.e. one full radial oscillation.  Independent route used
    to cross-validate the quadrature values.
    """
    c = float(profile.alpha(s_plus))
    y0 = [s_plus, 0.0, 0.0, c]
    rhs = _hamilton_rhs(profile)

    # burn in past the start (xi_s = 0 there, which would trigger the
    # event immediately), then stop at the first falling crossing: the
    # return to the right turning point after one full oscillation
    t_burn = 0.1
    sol_burn = solve_ivp(rhs, (0.0, t_burn), y0, method="DOP853",
                         rtol=rtol, atol=rtol)
    if not sol_burn.success:
        raise StepFailure(f"return-map burn-in failed: {sol_burn.message}")

    def falling(t, y):
        return y[2]

    falling.direction = -1.0
    falling.terminal = True

    sol = solve_ivp(rhs, (t_burn, t_max), sol_burn.y[:, -1],
                    method="DOP853", rtol=rtol, atol=rtol,
                    dense_output=True, events=falling)
    if not sol.success:
        raise StepFailure(f"return-map integration failed: {sol.message}")
    times = sol.t_events[0]
    if len(times) == 0:
        raise StepFailure("no return within the time cap")
    t_ret = float(times[0])
    theta_ret = float(sol.sol(t_ret)[1])
    return theta_ret, t_ret


# ---------------------------------------------------------------------------
# Rationality detection and torus classification


def convergents(x: float, q_max: int) -> list[tuple[int, int]]:
    """Continued-fraction convergents p/q of x with q <= q_max."""
    out = []
    p_prev, q_prev = 1, 0
    p_cur, q_cur = int(math.floor(x)), 1
    out.append((p_cur, q_cur))
    frac = x - math.floor(x)
    for _ in range(64):
        if frac < 1e-18:
            break
        x = 1.0 / frac
        a = int(math.floor(x))
        frac = x - a
        p_next = a * p_cur + p_prev
        q_next = a * q_cur + q_prev
        if q_next > q_max:
            break
        out.append((p_next, q_next))
        p_prev, q_prev, p_cur, q_cur = p_cur, q_cur, p_next, q_next
    return out


def best_rational(x: float, q_max: int) -> tuple[int, int, float]:
    """Best convergent approximation (p, q, error) with q <= q_max."""
    best = (0, 1, abs(x))
    for p, q in convergents(x, q_max):
        err = abs(x - p / q)
        if err < best[2]:
            best = (p, q, err)
    return best


def classify_tori(profile: ProfileCurve, grid: Iterable[float],
                  q_max: int = 50, rational_tol: float = 1e-9,
                  deriv_floor: float = 1e-6) -> list[TorusClassification]:
    """Classify the invariant tori over a grid of right turning points.

    A torus is aperiodic when |d Theta0 / d s_plus| clears the floor with a
    derivative sign stable across the five nearest grid points; otherwise
    periodic when Theta0/2pi admits a convergent p/q with q <= q_max within
    rational_tol; otherwise uncertain.
    """
    grid = np.asarray(sorted(grid), dtype=float)
    thetas = np.array([rotation_number(s, profile).Theta0 for s in grid])
    derivs = np.array([d_rotation_number(s, profile, "finite_difference")
                       for s in grid])
    out = []
    n = len(grid)
    for i, s in enumerate(grid):
        window = derivs[max(0, i - 2):min(n, i + 3)]
        stable_sign = np.all(np.sign(window) == np.sign(derivs[i]))
        if abs(derivs[i]) > deriv_floor and stable_sign:
            out.append(TorusClassification(s, "aperiodic", thetas[i],
                                           derivs[i]))
            continue
        ratio = thetas[i] / (2.0 * math.pi)
        p, q, err = best_rational(ratio, q_max)
        if err < rational_tol:
            out.append(TorusClassification(s, "periodic", thetas[i],
                                           derivs[i], p=p, q=q))
        else:
            out.append(TorusClassification(s, "uncertain", thetas[i],
                                           derivs[i]))
    return out


# ---------------------------------------------------------------------------
# Expansion rate


def _variational_rhs(profile: ProfileCurve):
    def rhs(t, y):
        s, theta, xi_s, xi_t = y[:4]
        a = float(profile.alpha(s))
        da = float(profile.d_alpha(s))
        dda = float(profile.dd_alpha(s))
        J = np.zeros((4, 4))
        J[0, 2] = 1.0
        J[1, 0] = -2.0 * xi_t * da / a ** 3
        J[1, 3] = 1.0 / (a * a)
        J[2, 0] = xi_t * xi_t * (dda * a - 3.0 * da * da) / a ** 4
        J[2, 3] = 2.0 * xi_t * da / a ** 3
        M = y[4:].reshape(4, 4)
        dy = np.empty(20)
        dy[0] = xi_s
        dy[1] = xi_t / (a * a)
        dy[2] = xi_t * xi_t * da / a ** 3
        dy[3] = 0.0
        dy[4:] = (J @ M).ravel()
        return dy

    return rhs


def expansion_rate(manifold: ModelManifold, sample_count: int = 24,
                   T: float = 40.0, seed: int = 7,
                   lambda_floor: float = 0.02) -> ExpansionEstimate:
    """Estimate the maximal expansion rate of the geodesic flow.

    Integrates the tangent (variational) equations along sampled orbits and
    fits the tail slope of max log ||dphi_t||; reports 0 when the growth is
    better explained as polynomial (sub-exponential).
    """
    t_grid = np.linspace(T / 20.0, T, 40)
    if manifold.kind == "flat_torus":
        # free flow: dphi_t = [[I, t P], [0, I]] with P a projector
        growth = np.log(np.sqrt(2.0 + t_grid ** 2))
        return ExpansionEstimate(0.0, t_grid, growth, tail_slope=0.0,
                                 model="polynomial")
    if manifold.kind == "round_sphere" and manifold.n == 2:
        growth = np.log(np.sqrt(2.0) * np.ones_like(t_grid))
        return ExpansionEstimate(0.0, t_grid, growth, tail_slope=0.0,
                                 model="bounded")
    if manifold.kind != "surface_of_revolution":
        raise DomainError(f"no flow available for kind {manifold.kind!r}")

    profile = manifold.profile
    rng = np.random.default_rng(seed)
    best = np.full_like(t_grid, -np.inf)
    for _ in range(sample_count):
        s0 = rng.uniform(-1.2, 1.2)
        psi = rng.uniform(0.15, math.pi - 0.15)
        a0 = float(profile.alpha(s0))
        y0 = np.concatenate(([s0, 0.0, math.cos(psi), a0 * math.sin(psi)],
                             np.eye(4).ravel()))
        sol = solve_ivp(_variational_rhs(profile), (0.0, T), y0,
                        method="DOP853", rtol=1e-9, atol=1e-9,
                        t_eval=t_grid)
        if not sol.success:
            raise StepFailure(f"variational integration failed: {sol.message}")
        norms = np.array([np.linalg.norm(sol.y[4:, i].reshape(4, 4), 2)
                          for i in range(len(t_grid))])
        best = np.maximum(best, np.log(norms))
    growth = np.maximum.accumulate(best)

    def window_slope(lo, hi):
        m = (t_grid >= lo) & (t_grid <= hi)
        A = np.vstack([t_grid[m], np.ones(m.sum())]).T
        coef, *_ = np.linalg.lstsq(A, growth[m], rcond=None)
        return float(coef[0])

    # Exponential growth keeps a steady slope across dyadic windows; any
    # polynomial growth of log-norm halves it (or worse).
    slope_early = window_slope(T / 4.0, T / 2.0)
    slope_late = window_slope(T / 2.0, T)
    if slope_late < lambda_floor or slope_late < 0.7 * slope_early:
        return ExpansionEstimate(0.0, t_grid, growth, tail_slope=slope_late,
                                 model="polynomial")
    return ExpansionEstimate(slope_late, t_grid, growth,
                             tail_slope=slope_late, model="exponential")


def ehrenfest_time(lambda_max_rate: float, h: float) -> float:
    """log(1/h) / (2 Lambda_max); infinite when the rate vanishes."""
    if lambda_max_rate <= 0:
        return math.inf
    return math.log(1.0 / h) / (2.0 * lambda_max_rate)
