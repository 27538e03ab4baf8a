"""Phase-space tube combinatorics and dynamical-size estimators.

Resolution-function calculus, good covers over circle targets with exact
section-chart audits, non-self-looping tests, bad/good splittings, and
Monte-Carlo measures of near-periodic, looping, and recurrent sets with
exact lattice oracles on flat tori.

All measure estimators work with the fixed background phase metric of
:mod:`weyllab.flows` and classify a sample by its certified closest
approach; the criterion radius is twice the nominal scale R (the
ball-to-ball contact distance), with integration slack folded in and
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import AuditFailure, CoverFailure, DomainError
from .flows import (MERIDIAN_C_FLOOR, RevolutionFlow, RoundSphereFlow,
                    TorusFlow, wrap_angle)
from .manifolds import HALF_PI, ModelManifold, make_round_sphere
from .quadrature import tanh_sinh


# ---------------------------------------------------------------------------
# Resolution functions


@dataclass
class ResolutionFunction:
    """Scale-to-time horizon T(R), decreasing and continuous on (0, R_max)."""

    eval: Callable
    form: str = "custom"
    R_max: float = 1.0

    def __call__(self, R):
        return self.eval(np.asarray(R, dtype=float))

    @classmethod
    def logarithmic(cls, c: float = 1.0, offset: float = 0.0):
        return cls(lambda R: offset + c * np.log(1.0 / R),
                   form=f"{offset} + {c} log(1/R)")

    @classmethod
    def power_log(cls, c: float = 1.0, beta: float = 1.0):
        return cls(lambda R: c * np.log(1.0 / R) ** beta,
                   form=f"{c} (log 1/R)^{beta}")

    @classmethod
    def constant(cls, value: float):
        return cls(lambda R: np.full_like(np.asarray(R, dtype=float), value),
                   form=f"constant {value}")

    @classmethod
    def power(cls, p: float, c: float = 1.0):
        return cls(lambda R: c * np.asarray(R, dtype=float) ** (-p),
                   form=f"{c} R^-{p}")


def check_sublogarithmic(T: ResolutionFunction, grid,
                         slack: float = 1e-8) -> dict:
    """Verify -1/(R log 1/R) <= (log T)'(R) <= 0 on the grid.

    The derivative is taken numerically (central step R * 1e-6); returns
    {"pass": bool, "witness": R or None}.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise DomainError("grid must lie in (0, 1)")
    h = grid * 1e-6
    logT = lambda R: np.log(T(R))
    deriv = (logT(grid + h) - logT(grid - h)) / (2 * h)
    lower = -1.0 / (grid * np.log(1.0 / grid))
    # slack scales with the bound (the logarithm itself sits exactly on
    # it) plus the cancellation noise of the central difference
    noise = np.finfo(float).eps * np.abs(logT(grid)) / h
    tol = slack * (1.0 + np.abs(lower)) + noise
    bad = (deriv > tol) | (deriv < lower - tol)
    if np.any(bad):
        return {"pass": False, "witness": float(grid[bad][0])}
    return {"pass": True, "witness": None}


def omega(T: ResolutionFunction, R_grid) -> dict:
    """Estimate Omega(T) = limsup T(R)/log(1/R) as R -> 0.

    Returns the raw tail-maximum of the ratio plus a linear-in-log
    extrapolation (slope of T against log 1/R), tagged by which one the
    data supports.
    """
    R_grid = np.sort(np.asarray(R_grid, dtype=float))[::-1]
    L = np.log(1.0 / R_grid)
    vals = T(R_grid)
    ratio = vals / L
    tail = max(1, len(R_grid) // 3)
    ratio_max = float(np.max(ratio[-tail:]))
    A = np.vstack([L[-tail:], np.ones(tail)]).T
    coef, res, *_ = np.linalg.lstsq(A, vals[-tail:], rcond=None)
    slope = float(coef[0])
    resid = float(res[0]) if len(res) else 0.0
    fit_ok = resid <= 1e-12 * max(1.0, float(np.sum(vals[-tail:] ** 2)))
    decreasing = bool(ratio[-1] < ratio[0])
    value = slope if fit_ok else ratio_max
    tag = "affine-extrapolated" if fit_ok else (
        "decreasing-tail" if decreasing else "ratio-max")
    return {"value": value, "ratio_max": ratio_max, "slope": slope,
            "tag": tag}


def invert_resolution(T: ResolutionFunction, s: float,
                      lo: float = 1e-300, hi: float = 0.999999) -> float:
    """R with T(R) = s (T decreasing); bisection."""
    f = lambda R: float(T(np.array([R]))[0]) - s
    if f(hi) > 0 or f(lo) < 0:
        raise DomainError(f"value {s} outside the range of T on [{lo}, {hi}]")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def sublog_inequalities(T: ResolutionFunction, a: float, b: float,
                        mu: float, n_pairs: int = 5, seed: int = 0) -> dict:
    """Evaluate the sub-logarithmic comparison inequalities numerically.

    Checks (i) T(b) <= T(a) <= (log a / log b) T(b) for 0 < a < b < 1,
    (ii) T(R) <= (log R / (log mu + log R)) T(mu R) at R = a, and (iii)
    convexity f(x) <= (x/y) f(y) for f(x) = -log(T^{-1}(x)) on random
    pairs.
    """
    if not (0 < a < b < 1):
        raise DomainError("need 0 < a < b < 1")
    Ta = float(T(np.array([a]))[0])
    Tb = float(T(np.array([b]))[0])
    item1 = (Tb <= Ta + 1e-12) and (Ta <= (math.log(a) / math.log(b)) * Tb
                                    + 1e-9 * abs(Ta))
    lhs2 = float(T(np.array([a]))[0])
    rhs2 = (math.log(a) / (math.log(mu) + math.log(a))) \
        * float(T(np.array([mu * a]))[0])
    item2 = lhs2 <= rhs2 + 1e-9 * abs(rhs2)

    rng = np.random.default_rng(seed)
    s_lo = float(T(np.array([b]))[0])
    s_hi = float(T(np.array([a]))[0])
    item3 = True
    pairs = []
    if s_hi > s_lo * (1 + 1e-12):
        for _ in range(n_pairs):
            x, y = np.sort(rng.uniform(s_lo, s_hi, 2))
            if y - x < 1e-9:
                continue
            fx = -math.log(invert_resolution(T, x))
            fy = -math.log(invert_resolution(T, y))
            ok = fx <= (x / y) * fy + 1e-7 * abs(fy)
            pairs.append((float(x), float(y), bool(ok)))
            item3 = item3 and ok
    return {"monotone_and_log_ratio": bool(item1),
            "scale_comparison": bool(item2),
            "inverse_convexity": bool(item3),
            "pairs": pairs,
            "pass": bool(item1 and item2 and item3)}


# ---------------------------------------------------------------------------
# Flows and samplers per manifold


def flow_for(manifold: ModelManifold):
    if manifold.kind == "flat_torus":
        return TorusFlow(manifold.periods)
    if manifold.kind == "round_sphere" and manifold.n == 2:
        return RoundSphereFlow(make_round_sphere())
    if manifold.kind == "surface_of_revolution":
        if manifold.profile.label == "round sphere":
            return RoundSphereFlow(manifold.profile)
        return RevolutionFlow(manifold.profile)
    raise DomainError(f"no flow for manifold kind {manifold.kind!r}")


@dataclass
class CosphereSet:
    """Descriptor of a subset of the unit cosphere bundle.

    kinds: "full"; "band" (s in [s0, s1], revolution surfaces); "fiber"
    (S*_x M over the point x); "conormal" (unit conormals of the latitude
    circle s = s0).  Liouville measure = area x fiber angle.
    """

    manifold: ModelManifold
    kind: str = "full"
    s0: float = None
    s1: float = None
    x: tuple = None
    s_circle: float = None

    def total_measure(self) -> float:
        m = self.manifold
        if self.kind == "full":
            return m.volume * 2.0 * math.pi
        if self.kind == "band":
            prof = m.profile
            area = 2.0 * math.pi * tanh_sinh(
                lambda s: prof.alpha(s), self.s0, self.s1, rel_tol=1e-12)[0]
            return area * 2.0 * math.pi
        if self.kind == "fiber":
            return 2.0 * math.pi
        if self.kind == "conormal":
            return 2.0 * 2.0 * math.pi * float(
                m.profile.alpha(self.s_circle))
        raise DomainError(f"unknown set kind {self.kind!r}")

    def sample(self, n: int, seed: int) -> np.ndarray:
        m = self.manifold
        if m.kind == "flat_torus":
            if self.kind != "full":
                raise DomainError("torus sets other than the full cosphere "
                                  "are not needed by the estimators")
            u = qmc.Halton(d=3, scramble=True, seed=seed).random(n)
            x = u[:, :2] * np.asarray(m.periods)
            phi = 2.0 * math.pi * u[:, 2]
            return np.column_stack([x, np.cos(phi), np.sin(phi)])

        prof = m.profile if m.kind == "surface_of_revolution" \
            else make_round_sphere()
        if self.kind in ("full", "band"):
            lo = self.s0 if self.kind == "band" else (-HALF_PI + 1e-6)
            hi = self.s1 if self.kind == "band" else (HALF_PI - 1e-6)
            u = qmc.Halton(d=3, scramble=True, seed=seed).random(n)
            grid = np.linspace(lo, hi, 4097)
            dens = prof.alpha(grid)
            cdf = np.concatenate([[0.0], np.cumsum(
                0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
            cdf /= cdf[-1]
            s = np.interp(u[:, 0], cdf, grid)
            theta = 2.0 * math.pi * u[:, 1]
            psi = 2.0 * math.pi * u[:, 2]
            a = prof.alpha(s)
            return np.column_stack([s, theta, np.cos(psi),
                                    a * np.sin(psi)])
        if self.kind == "fiber":
            s0, th0 = self.x
            u = qmc.Halton(d=1, scramble=True, seed=seed).random(n)[:, 0]
            psi = 2.0 * math.pi * u
            a = float(prof.alpha(s0))
            return np.column_stack([np.full(n, s0), np.full(n, th0),
                                    np.cos(psi), a * np.sin(psi)])
        if self.kind == "conormal":
            s0 = self.s_circle
            u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
            theta = 2.0 * math.pi * u[:, 0]
            sign = np.where(u[:, 1] < 0.5, 1.0, -1.0)
            return np.column_stack([np.full(n, s0), theta, sign,
                                    np.zeros(n)])
        raise DomainError(f"unknown set kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Measure estimates


@dataclass
class MeasureEstimate:
    value: float
    half_width: float
    samples: int
    total: float
    criterion_radius: float
    inflation: float = 0.0
    brute_force: Optional[float] = None

    @staticmethod
    def hoeffding(frac: float, n: int, total: float) -> float:
        return math.sqrt(math.log(2.0 / 0.01) / (2.0 * n)) * total


def _mirror(states: np.ndarray) -> np.ndarray:
    out = states.copy()
    out[:, 2] *= -1.0
    out[:, 3] *= -1.0
    return out


def _torus_near_periodic_fraction_exact(flow: TorusFlow, t0: float, T: float,
                                        thresh: float) -> float:
    """Exact angular fraction of directions with a near return (2-d torus).

    Per lattice point the admissible direction set is an angular interval
    found by monotone bisection; the union is merged exactly.
    """
    if flow.d != 2:
        raise DomainError("exact oracle implemented for 2-d tori")
    lat = flow._lattice(T + 1.0)
    lat = lat[np.any(lat != 0.0, axis=1)]
    intervals = []
    for k in lat:
        nk = math.hypot(*k)
        phi_k = math.atan2(k[1], k[0])

        def m_of(beta):
            om = np.array([[math.cos(phi_k + beta), math.sin(phi_k + beta)]])
            return float(flow._window_min(om, k[None, None, :], t0, T)[0, 0])

        if m_of(0.0) >= thresh:
            continue
        lo, hi = 0.0, math.pi / 2
        if m_of(hi) < thresh:
            beta_star = hi
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if m_of(mid) < thresh:
                    lo = mid
                else:
                    hi = mid
            beta_star = 0.5 * (lo + hi)
        intervals.append((phi_k - beta_star, phi_k + beta_star))
    return _merge_circle_intervals(intervals)


def near_periodic_measure(U: CosphereSet, t0: float, T: float, R: float,
                          samples: int = 100_000,
                          seed: int = 0) -> MeasureEstimate:
    """mu(B(P^R_U(t0, T), R)) estimated by certified closest approach.

    A sample counts when its orbit returns within 2R of the start in the
    window t0 <= |t| <= T (the contact distance of two R-balls); on flat
    tori the exact lattice value fills ``brute_force``.
    """
    if samples < 1000:
        raise DomainError("use at least 1e3 samples")
    if t0 > T:
        total = U.total_measure()
        return MeasureEstimate(0.0, 0.0, samples, total, 2.0 * R,
                               brute_force=0.0 if
                               U.manifold.kind == "flat_torus" else None)
    flow = flow_for(U.manifold)
    states = U.sample(samples, seed)
    total = U.total_measure()
    thresh = 2.0 * R
    inflation = 0.0

    if isinstance(flow, TorusFlow):
        mins = flow.self_return_min(states, t0, T)
        frac = float(np.mean(mins < thresh))
        brute = _torus_near_periodic_fraction_exact(flow, t0, T, thresh)
        hw = MeasureEstimate.hoeffding(frac, samples, total)
        return MeasureEstimate(frac * total, hw, samples, total, thresh,
                               brute_force=brute * total)

    if isinstance(flow, RoundSphereFlow):
        mins = flow.self_return_min(states, t0, T)
        frac = float(np.mean(mins < thresh))
        hw = MeasureEstimate.hoeffding(frac, samples, total)
        return MeasureEstimate(frac * total, hw, samples, total, thresh)

    # generic revolution surface: two-sided via the mirror conjugation,
    # near-meridian data through the pole-safe closed form
    metric = flow.metric
    hits = np.zeros(samples)
    merid = np.abs(states[:, 3]) < MERIDIAN_C_FLOOR
    if np.any(merid):
        res = thresh / 4.0
        best = _meridian_scan(states[merid], t0, T, res,
                              lambda y, ref: metric.distance(y, ref),
                              self_reference=True)
        hits[merid] = (best < thresh).astype(float)
        inflation = max(inflation, 0.5 * res + MERIDIAN_C_FLOOR)
    reg = np.nonzero(~merid)[0]
    if len(reg):
        sub = states[reg]
        doubled = np.vstack([sub, _mirror(sub)])
        ref = doubled.copy()

        # base-distance scan certifies non-return at unit Lipschitz rate
        # (the full phase distance dominates the base distance); only
        # samples whose base orbit nearly returns need the full-metric
        # refinement
        def base_to_start(y):
            return metric.base_distance_to_state(y, ref)

        coarse, _, slack = flow.scan_min(doubled, t0, T, base_to_start,
                                         lipschitz=1.0)
        n = len(sub)
        mins = np.minimum(coarse[:n], coarse[n:])
        slack2 = np.maximum(slack[:n], slack[n:])
        candidates = mins - slack2 <= thresh
        for j in np.nonzero(candidates)[0]:
            i = reg[j]
            spd = float(flow.phase_speed_bound(states[i:i + 1])[0])
            res = thresh / (4.0 * spd)
            m_fwd = flow.refine_min(states[i], t0, T,
                                    lambda y: metric.distance(
                                        y, np.broadcast_to(states[i],
                                                           y.shape)), res)
            m_bwd = flow.refine_min(_mirror(states[i:i + 1])[0], t0, T,
                                    lambda y: metric.distance(
                                        y, np.broadcast_to(
                                            _mirror(states[i:i + 1])[0],
                                            y.shape)), res)
            hits[i] = 1.0 if min(m_fwd, m_bwd) < thresh else 0.0
            inflation = max(inflation, spd * res + flow.ode_budget)
    frac = float(np.mean(hits))
    hw = MeasureEstimate.hoeffding(frac, samples, total)
    return MeasureEstimate(frac * total, hw, samples, total, thresh,
                           inflation=inflation)


def _meridian_scan(states, t0, T, resolution, dist_fn,
                   self_reference=False, target=None, metric=None):
    """Grid scan of (near-)meridian orbits through the closed form.

    Both time directions; the grid slack (unit Lipschitz rate) and the
    O(MERIDIAN_C_FLOOR) position error of the meridian approximation are
    the caller's reported inflation.
    """
    from .flows import meridian_states
    states = np.asarray(states, dtype=float).reshape(-1, 4)
    best = np.full(len(states), np.inf)
    t_grid = np.arange(t0, T + resolution, resolution)
    for sign in (1.0, -1.0):
        for t in t_grid:
            moved = meridian_states(states, sign * t)
            if self_reference:
                d = dist_fn(moved, states)
            else:
                d = dist_fn(moved)
            best = np.minimum(best, d)
    return best


def _merge_circle_intervals(intervals) -> float:
    """Total measure of a union of angular intervals (fraction of 2 pi)."""
    if not intervals:
        return 0.0
    pts = sorted((a % (2 * math.pi), b - a) for a, b in intervals)
    merged = []
    for start, length in pts:
        end = start + length
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    total = sum(e - s for s, e in merged)
    if merged and merged[-1][1] > 2 * math.pi and merged[0][0] >= 0:
        overlap = min(merged[-1][1] - 2 * math.pi,
                      merged[0][1]) - merged[0][0]
        if overlap > 0:
            total -= overlap
    return min(total / (2 * math.pi), 1.0)


def _torus_looping_fraction_exact(flow: TorusFlow, delta: np.ndarray,
                                  t0: float, T: float,
                                  thresh: float) -> float:
    """Exact angular fraction of directions passing near x + delta.

    The backward window toward a displacement v equals the forward window
    toward -v, so both time directions are covered by the two target
    families +-delta + lattice, each with a monotone one-sided profile.
    """
    lat = flow._lattice(T + 1.0 + float(np.max(np.abs(delta))))
    targets = np.vstack([delta[None, :] + lat, -delta[None, :] + lat])
    intervals = []
    for v in targets:
        nv = math.hypot(*v)
        if nv < 1e-14:
            if t0 <= 0:
                return 1.0
            continue
        phi_v = math.atan2(v[1], v[0])

        def m_of(beta):
            om = np.array([[math.cos(phi_v + beta), math.sin(phi_v + beta)]])
            return float(flow._window_min(om, v[None, None, :], t0, T)[0, 0])

        if m_of(0.0) >= thresh:
            continue
        lo, hi = 0.0, math.pi
        if m_of(hi) < thresh:
            beta_star = hi
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if m_of(mid) < thresh:
                    lo = mid
                else:
                    hi = mid
            beta_star = 0.5 * (lo + hi)
        intervals.append((phi_v - beta_star, phi_v + beta_star))
    return _merge_circle_intervals(intervals)


def looping_pair_measure(manifold: ModelManifold, x, y, t0: float, T: float,
                         R: float, samples: int = 20_000, seed: int = 0):
    """Both one-sided looping measures of the pair (x, y) plus the product.

    Targets are points (fiber spheres); a sample in S*_xM counts when its
    orbit passes within 2R of y in the window.  Returns (est_xy, est_yx,
    product_with_T2) where the product realizes the pair quantity
    mu_x mu_y T^2.
    """
    ests = []
    for src, dst, sd in ((x, y, seed), (y, x, seed + 1)):
        flow = flow_for(manifold)
        U = CosphereSet(manifold, kind="fiber", x=src)
        total = U.total_measure()
        thresh = 2.0 * R
        if manifold.kind == "flat_torus":
            states = _torus_fiber_sample(manifold, src, samples, sd)
            mins = flow.target_min(states, np.asarray(dst, dtype=float),
                                   t0, T)
            frac = float(np.mean(mins < thresh))
            delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
            brute = _torus_looping_fraction_exact(flow, delta, t0, T, thresh)
            hw = MeasureEstimate.hoeffding(frac, samples, total)
            ests.append(MeasureEstimate(frac * total, hw, samples, total,
                                        thresh, brute_force=brute * total))
            continue
        states = U.sample(samples, sd)
        if isinstance(flow, RoundSphereFlow):
            mins = flow.target_min(states, dst, t0, T)
            frac = float(np.mean(mins < thresh))
            hw = MeasureEstimate.hoeffding(frac, samples, total)
            ests.append(MeasureEstimate(frac * total, hw, samples, total,
                                        thresh))
            continue
        metric = flow.metric
        inflation = 0.0
        hits = np.zeros(samples)

        def dist_to_target(ystates):
            return metric.base_distance_to_point(ystates, dst)

        merid = np.abs(states[:, 3]) < MERIDIAN_C_FLOOR
        if np.any(merid):
            res = thresh / 4.0
            best = _meridian_scan(states[merid], t0, T, res, dist_to_target)
            hits[merid] = (best < thresh).astype(float)
            inflation = max(inflation, 0.5 * res + MERIDIAN_C_FLOOR)
        reg = np.nonzero(~merid)[0]
        if len(reg):
            sub = states[reg]
            doubled = np.vstack([sub, _mirror(sub)])
            # base-distance criterion: the Lipschitz rate is the unit speed
            coarse, _, slack = flow.scan_min(doubled, t0, T, dist_to_target,
                                             lipschitz=1.0)
            n = len(sub)
            mins = np.minimum(coarse[:n], coarse[n:])
            slack2 = np.maximum(slack[:n], slack[n:])
            hits[reg] = (mins + slack2 < thresh).astype(float)
            ambiguous = np.nonzero((mins - slack2 <= thresh)
                                   & (mins + slack2 >= thresh))[0]
            for j in ambiguous:
                i = reg[j]
                res = thresh / 4.0
                m1 = flow.refine_min(states[i], t0, T, dist_to_target, res)
                m2 = flow.refine_min(_mirror(states[i:i + 1])[0], t0, T,
                                     dist_to_target, res)
                hits[i] = 1.0 if min(m1, m2) < thresh else 0.0
                inflation = max(inflation, res + flow.ode_budget)
        frac = float(np.mean(hits))
        hw = MeasureEstimate.hoeffding(frac, samples, total)
        ests.append(MeasureEstimate(frac * total, hw, samples, total, thresh,
                                    inflation=inflation))
    product = ests[0].value * ests[1].value * T * T
    return ests[0], ests[1], product


def _torus_fiber_sample(manifold, x, n, seed):
    u = qmc.Halton(d=1, scramble=True, seed=seed).random(n)[:, 0]
    phi = 2.0 * math.pi * u
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.full(n, x[0]), np.full(n, x[1]),
                            np.cos(phi), np.sin(phi)])


# ---------------------------------------------------------------------------
# Recurrence


@dataclass
class RecurrenceVerdict:
    passes: bool
    scale_R0: float
    probes: list
    failures: list
    details: dict = field(default_factory=dict)


def recurrence_measure(manifold: ModelManifold, x, R0: float,
                       t_func: ResolutionFunction,
                       T_func: ResolutionFunction, r: float, R: float,
                       eps_list=(0.5,), n_dyadic: int = 3,
                       probe_count: int = 4, samples: int = 4000,
                       seed: int = 0) -> RecurrenceVerdict:
    """Dyadic-ball recurrence test at the point x.

    For probe directions rho and test arcs A = B(rho, R0 2^-k) the
    estimator checks, for one of the two time directions, that the mass
    returning rR-close to A within times [t(eps), T(r)] stays below
    eps mu(B(A, R)).  A finite test family under-approximates the full
    quantifier; the verdict reports exactly which (A, eps) pairs fail.
    """
    if not (0 < R < R0):
        raise DomainError("need 0 < R < R0")
    flow = flow_for(manifold)
    total = 2.0 * math.pi
    thresh = 2.0 * r * R
    T_r = float(T_func(np.array([r]))[0])
    rng = np.random.default_rng(seed)
    probe_angles = rng.uniform(0.0, 2.0 * math.pi, probe_count)
    failures = []
    probes = []
    for psi0 in probe_angles:
        best_sign = None
        for sign in (+1, -1):
            sign_ok = True
            for k in range(n_dyadic):
                a_k = R0 * 0.5 ** k
                for eps in eps_list:
                    t_eps = float(t_func(np.array([eps]))[0])
                    mu_target = eps * min(2.0 * (a_k + R), total)
                    if T_r <= t_eps:
                        continue      # empty window: vacuous pass
                    est = _recurrence_mass(flow, manifold, x, psi0, a_k,
                                           thresh, t_eps, T_r, sign,
                                           samples, seed)
                    if est >= mu_target:
                        sign_ok = False
                        failures.append({"psi0": float(psi0), "k": k,
                                         "eps": float(eps), "sign": sign,
                                         "estimate": est,
                                         "allowed": mu_target})
            if sign_ok:
                best_sign = sign
                break
        probes.append({"psi0": float(psi0), "best_sign": best_sign})
    passes = all(p["best_sign"] is not None for p in probes)
    return RecurrenceVerdict(passes, R0, probes, failures,
                             details={"T_r": T_r, "threshold": thresh})


def _recurrence_mass(flow, manifold, x, psi0, a_k, thresh, t_lo, t_hi,
                     sign, samples, seed):
    """Estimated mass of B(R^{rR}_{A, sign}, rR) on the fiber circle."""
    if isinstance(flow, TorusFlow):
        # fiber distance is flow-invariant: the condition splits exactly
        u = qmc.Halton(d=1, scramble=True, seed=seed).random(samples)[:, 0]
        psi = 2.0 * math.pi * u
        fiber_gap = np.maximum(wrap_angle(psi - psi0) - a_k, 0.0)
        near_A = fiber_gap < thresh
        om = np.column_stack([np.cos(psi), np.sin(psi)])
        lat = flow._lattice(t_hi + 1.0)
        targets = np.broadcast_to(lat[None, :, :],
                                  (samples,) + lat.shape)
        base_min = flow._window_min(sign * om, targets, t_lo, t_hi).min(axis=1)
        hits = near_A & (base_min < thresh)
        return float(np.mean(hits)) * 2.0 * math.pi

    if isinstance(flow, RoundSphereFlow):
        u = qmc.Halton(d=1, scramble=True, seed=seed).random(samples)[:, 0]
        psi = 2.0 * math.pi * u
        prof = flow.profile
        a = float(prof.alpha(x[0]))
        states = np.column_stack([np.full(samples, x[0]),
                                  np.full(samples, x[1]),
                                  np.cos(psi), a * np.sin(psi)])
        fiber_gap = np.maximum(wrap_angle(psi - psi0) - a_k, 0.0)
        near_A = fiber_gap < thresh
        # candidate return times: closures at 2 pi k inside the window
        hits = np.zeros(samples, dtype=bool)
        for k in range(0, int(t_hi / (2 * math.pi)) + 2):
            t_star = min(max(2 * math.pi * k, t_lo), t_hi)
            moved = flow.flow(states, -sign * t_star)
            base = flow.metric.base_distance_to_point(moved, x)
            fib = np.maximum(wrap_angle(flow.metric.fiber_angle(moved)
                                        - psi0) - a_k, 0.0)
            hits |= (np.maximum(base, fib) < thresh)
        hits &= near_A
        return float(np.mean(hits)) * 2.0 * math.pi

    raise DomainError("recurrence estimator supports flat tori and the "
                      "round sphere")


# ---------------------------------------------------------------------------
# Tubes and good covers over circle targets


@dataclass
class CircleTarget:
    """A circle of cosphere directions serving as the cover transversal.

    kind "fiber": S*_x M parametrized by the fiber angle psi; kind
    "conormal": the two unit conormal circles of a latitude (parametrized
    by theta, one component per sign).  Section coordinates at parameter u
    are (transverse base offset, circle parameter); the max metric makes
    section balls boxes, so all cover audits are exact in this chart.
    """

    manifold: ModelManifold
    kind: str = "fiber"
    x: tuple = None
    s_circle: float = None
    component: int = +1

    def circumference(self) -> float:
        if self.kind == "fiber":
            return 2.0 * math.pi
        prof = self.manifold.profile
        # background round-chart length of the latitude circle
        return 2.0 * math.pi * math.cos(self.s_circle)

    def param_distance(self, u1, u2) -> np.ndarray:
        scale = self.circumference() / (2.0 * math.pi)
        return wrap_angle(np.asarray(u1) - np.asarray(u2)) * scale

    def state(self, u):
        prof = self.manifold.profile if self.manifold.kind \
            == "surface_of_revolution" else make_round_sphere()
        if self.kind == "fiber":
            s0, th0 = self.x
            a = float(prof.alpha(s0))
            u = np.asarray(u, dtype=float)
            return np.column_stack([np.full_like(u, s0),
                                    np.full_like(u, th0),
                                    np.cos(u), a * np.sin(u)])
        u = np.asarray(u, dtype=float)
        return np.column_stack([np.full_like(u, self.s_circle), u,
                                float(self.component) * np.ones_like(u),
                                np.zeros_like(u)])

    def tau_inj(self) -> float:
        """Conservative injectivity time of the section flow-out.

        On a flat torus a tube self-overlap needs a lattice point within
        the tube radius of a flow segment, impossible below half the
        shortest period; on surfaces of revolution the background
        injectivity scale is of order one.
        """
        if self.manifold.kind == "flat_torus":
            return min(self.manifold.periods) / 2.0
        return 1.0


@dataclass
class Tube:
    index: int
    center_param: float
    center_state: np.ndarray
    radius: float
    half_time: float
    family: int = -1


@dataclass
class GoodCover:
    target: CircleTarget
    tubes: list
    families: list            # list of index lists
    r: float
    tau: float

    @property
    def D(self) -> int:
        return len(self.families)

    def center_params(self) -> np.ndarray:
        return np.array([t.center_param for t in self.tubes])

    def audit_disjointness(self) -> float:
        """Exact same-family 3r-disjointness: centers >= 6r apart.

        Within the section flow-out (tau + 3r below the injectivity time),
        two inflated tubes meet iff their section boxes do, iff the center
        parameters are closer than 6r.  Returns the worst margin.
        """
        margin = math.inf
        for fam in self.families:
            params = np.array([self.tubes[i].center_param for i in fam])
            if len(params) < 2:
                continue
            d = self.target.param_distance(params[:, None], params[None, :])
            np.fill_diagonal(d, np.inf)
            margin = min(margin, float(np.min(d)) - 6.0 * self.r)
        return margin

    def audit_coverage(self, n_probes: int = 10_000, seed: int = 0) -> dict:
        """Probe containment of the half-inflated target in the tube union.

        Probes live on the section: transverse offset below r/2 never
        obstructs (max metric), so coverage reduces to the parameter
        circle.
        """
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.0, 2.0 * math.pi, n_probes)
        params = self.center_params()
        scale = self.target.circumference() / (2.0 * math.pi)
        gaps = wrap_angle(u[:, None] - params[None, :]) * scale
        nearest = np.min(gaps, axis=1)
        failures = int(np.sum(nearest >= self.r))
        return {"pass": failures == 0, "failures": failures,
                "worst": float(np.max(nearest))}


def family_budget(dim: int) -> int:
    """Dimensional bound for good-cover families (greedy coloring)."""
    return 13 ** dim


def build_good_cover(target: CircleTarget, tau: float, r: float,
                     anchor: float = 0.0) -> GoodCover:
    """Greedy maximal r-separated centers, families by greedy coloring.

    The 6r-proximity graph on centers captures inflated-tube intersection
    exactly for circle targets, so the greedy coloring certifies the
    family disjointness by construction; the family count is checked
    against the dimensional budget.  ``anchor`` rotates the candidate
    grid so a center lands exactly on a direction of interest.
    """
    if tau + 3.0 * r >= target.tau_inj():
        raise DomainError(f"tau + 3r = {tau + 3 * r} reaches the section "
                          f"injectivity time {target.tau_inj()}")
    scale = target.circumference() / (2.0 * math.pi)
    n_cand = max(64, int(math.ceil(2.0 * math.pi * scale / (r / 8.0))))
    cand = anchor + np.linspace(0.0, 2.0 * math.pi, n_cand, endpoint=False)
    chosen: list[float] = []
    for u in cand:
        if not chosen:
            chosen.append(float(u))
            continue
        d = target.param_distance(np.array(chosen), u)
        if np.all(d >= r):
            chosen.append(float(u))
    # maximality: a leftover gap of 2r or more admits its midpoint (the
    # candidate grid can straddle the narrow admissible zone)
    for _ in range(8):
        params = np.sort(np.mod(np.array(chosen), 2.0 * math.pi))
        gaps = np.diff(np.concatenate([params,
                                       [params[0] + 2.0 * math.pi]]))
        scale_g = target.circumference() / (2.0 * math.pi)
        wide = np.nonzero(gaps * scale_g >= 2.0 * r)[0]
        if len(wide) == 0:
            break
        for i in wide:
            chosen.append(float(params[i] + 0.5 * gaps[i]))
    params = np.sort(np.mod(np.array(chosen), 2.0 * math.pi))
    states = target.state(params)
    tubes = [Tube(i, float(params[i]), states[i], r, tau)
             for i in range(len(params))]

    # greedy coloring of the 6r-proximity graph
    n = len(tubes)
    colors = np.full(n, -1, dtype=int)
    dmat = target.param_distance(params[:, None], params[None, :])
    for i in range(n):
        neighbor_colors = {colors[j] for j in range(n)
                           if j != i and dmat[i, j] < 6.0 * r
                           and colors[j] >= 0}
        c = 0
        while c in neighbor_colors:
            c += 1
        colors[i] = c
        tubes[i].family = c
    n_fam = int(colors.max()) + 1
    if n_fam > family_budget(1):
        raise CoverFailure(f"greedy coloring used {n_fam} families, "
                           f"budget {family_budget(1)}")
    families = [[i for i in range(n) if colors[i] == f]
                for f in range(n_fam)]
    cover = GoodCover(target, tubes, families, r, tau)
    margin = cover.audit_disjointness()
    if margin < 0:
        raise CoverFailure(f"same-family tubes overlap by {-margin}")
    return cover


# ---------------------------------------------------------------------------
# Non-self-looping and the bad/good splitting


@dataclass
class LoopingWitness:
    point: np.ndarray
    time: float
    tube_index: int


def _tube_samples(cover: GoodCover, indices, per_tube: int, seed: int):
    """Phase points filling the tubes: section offsets and time offsets."""
    rng = np.random.default_rng(seed)
    flow = flow_for(cover.target.manifold)
    out = []
    for i in indices:
        tube = cover.tubes[i]
        psi = tube.center_param + rng.uniform(-tube.radius, tube.radius,
                                              per_tube)
        # deterministic center samples at the extremes of the time extent
        psi = np.concatenate([[tube.center_param] * 3, psi])
        base_states = cover.target.state(psi)
        times = np.concatenate([
            [0.0, tube.half_time + tube.radius,
             -(tube.half_time + tube.radius)],
            rng.uniform(-(tube.half_time + tube.radius),
                        tube.half_time + tube.radius, per_tube)])
        for j in range(len(psi)):
            out.append((i, flow_state(flow, base_states[j], times[j])))
    return out


def flow_state(flow, state, t):
    if isinstance(flow, TorusFlow):
        return flow.flow(state[None, :], t)[0]
    if isinstance(flow, RoundSphereFlow):
        return flow.flow(state[None, :], t)[0]
    y = state[None, :].copy()
    n_steps = max(1, int(abs(t) / 0.01))
    h = t / n_steps
    for _ in range(n_steps):
        y = flow._step(y, h)
    return y[0]


def nonselflooping_test(cover: GoodCover, indices, t0: float, T0: float,
                        sample_density: int = 8, seed: int = 0) -> dict:
    """Test whether the tube union is [t0, T0] non-self looping.

    Samples the union, flows each sample over both windows, and tests
    re-entry into the union (within the integration budget inflation).
    Either clean time direction certifies the disjunction; a failure in
    both returns a witness in the forward direction when one exists.
    """
    if T0 < t0:
        return {"verdict": "nonlooping", "signs": [+1, -1],
                "witness": None, "vacuous": True}
    target = cover.target
    manifold = target.manifold
    flow = flow_for(manifold)
    tubes = [cover.tubes[i] for i in indices]
    samples = _tube_samples(cover, indices, sample_density, seed)

    witnesses = {+1: None, -1: None}
    if isinstance(flow, TorusFlow) and target.kind == "fiber":
        x0 = np.asarray(target.x, dtype=float)
        for sign in (+1, -1):
            for i, state in samples:
                st = state.copy()
                if sign < 0:
                    st[2:] *= -1.0
                for tube in tubes:
                    hit = flow.tube_entry_windows(
                        np.concatenate([st[:2] - x0, st[2:]]),
                        tube.center_param if sign > 0
                        else (tube.center_param + math.pi),
                        tube.half_time, tube.radius, t0, T0)
                    if hit is not None:
                        if witnesses[sign] is None:
                            witnesses[sign] = LoopingWitness(
                                state, sign * hit, tube.index)
                        break
                if witnesses[sign] is not None:
                    break
    else:
        # candidate-time membership scan through the closed-form or
        # integrated flow: distance of the flowed sample to the tube
        # centers in the section chart
        scan_ts = np.linspace(t0, T0, max(64, int((T0 - t0) / 0.05)))
        for sign in (+1, -1):
            for i, state in samples:
                for t in scan_ts:
                    moved = flow_state(flow, state, sign * t)
                    if _in_tube_union(flow, cover, tubes, moved,
                                      slack=0.05):
                        if witnesses[sign] is None:
                            witnesses[sign] = LoopingWitness(state,
                                                             sign * t, -1)
                        break
                if witnesses[sign] is not None:
                    break

    clean = [s for s in (+1, -1) if witnesses[s] is None]
    if clean:
        return {"verdict": "nonlooping", "signs": clean, "witness": None,
                "vacuous": False}
    return {"verdict": "looping", "signs": [],
            "witness": witnesses[+1] or witnesses[-1], "vacuous": False}


def _in_tube_union(flow, cover: GoodCover, tubes, state, slack: float):
    metric = flow.metric
    centers = np.stack([t.center_state for t in tubes])
    d = metric.distance(np.broadcast_to(state, centers.shape), centers)
    radii = np.array([t.radius + t.half_time + slack for t in tubes])
    # a point within the tube lies within half_time + r flow-distance of
    # the center, hence within that phase distance (unit speed)
    return bool(np.any(d < radii))


@dataclass
class CoverSplit:
    bad: list
    good: list
    params: dict


def split_bad_good(cover1: GoodCover, cover2: GoodCover, t0: float, T: float,
                   S: float, sample_density: int = 6,
                   seed: int = 0) -> CoverSplit:
    """Split cover1 into tubes looping toward cover2 (bad) and the rest.

    A tube is bad when a sampled section point of its 2r-neighborhood
    loops S-close to the partner target within [t0, T].  Every good tube
    is then audited by a direct flow test over the shrunken window; an
    audit failure means undersampling and is raised, never absorbed.
    """
    if S < 4.0 * cover1.r:
        raise DomainError("the splitting needs S >= 4r")
    if T < t0:
        return CoverSplit([], [t.index for t in cover1.tubes],
                          {"t0": t0, "T": T, "S": S})
    manifold = cover1.target.manifold
    flow = flow_for(manifold)
    target2 = cover2.target
    rng = np.random.default_rng(seed)

    def loop_min(states):
        if isinstance(flow, TorusFlow):
            return flow.target_min(states, np.asarray(target2.x), t0, T)
        if isinstance(flow, RoundSphereFlow):
            return flow.target_min(states, target2.x, t0, T)
        doubled = np.vstack([states, _mirror(states)])
        coarse, _, slack = flow.scan_min(
            doubled, t0, T,
            lambda y: flow.metric.base_distance_to_point(y, target2.x),
            lipschitz=1.0)
        n = len(states)
        return np.minimum(coarse[:n], coarse[n:]) - np.max(slack)

    bad, good = [], []
    for tube in cover1.tubes:
        psi = tube.center_param + rng.uniform(-2 * tube.radius,
                                              2 * tube.radius,
                                              sample_density)
        psi = np.concatenate([[tube.center_param], psi])
        states = cover1.target.state(psi)
        mins = loop_min(states)
        if np.any(mins < S):
            bad.append(tube.index)
        else:
            good.append(tube.index)

    # audit the good tubes: over the window shrunken by the tube time
    # extent, no sampled tube point may reach the core of a partner tube
    # (base distance to the partner target below its radius)
    pad = 2.0 * (cover1.tau + cover1.r)
    lo, hi = t0 + pad, T - pad
    if hi > lo:
        def loop_min_window(states):
            if isinstance(flow, TorusFlow):
                return flow.target_min(states, np.asarray(target2.x), lo, hi)
            if isinstance(flow, RoundSphereFlow):
                return flow.target_min(states, target2.x, lo, hi)
            doubled = np.vstack([states, _mirror(states)])
            coarse, _, slack = flow.scan_min(
                doubled, lo, hi,
                lambda y: flow.metric.base_distance_to_point(y, target2.x),
                lipschitz=1.0)
            n = len(states)
            return np.minimum(coarse[:n], coarse[n:]) - np.max(slack)

        for idx in good:
            tube = cover1.tubes[idx]
            psi = tube.center_param + rng.uniform(-tube.radius, tube.radius,
                                                  sample_density)
            states = cover1.target.state(psi)
            if np.any(loop_min_window(states) < cover2.r):
                raise AuditFailure(
                    f"good tube {idx} failed its flow audit; raise "
                    f"sample_density")
    return CoverSplit(bad, good, {"t0": t0, "T": T, "S": S})
