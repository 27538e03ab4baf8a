"""Laplace spectra: closed forms, product merge, and separable radial solver.

Surfaces of revolution separate into radial problems per angular mode m:

    -(alpha u')'/alpha + (m^2/alpha^2) u = lambda^2 u,

with boundedness at the poles.  Eigenvalues are located by a generalized
Pruefer angle whose winding count is an exact eigenvalue counter, so
completeness below the cutoff is certified by integer arithmetic.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, IncompleteInput, SolverFailure
from .manifolds import (HALF_PI, ModelManifold, ProfileCurve, manifold_volume,
                        sphere_volume)

SOLVER_VERSION = "1"

_GROUP_TOL = 1e-8          # relative clustering of merged frequencies
_CHEB_N = 2048


# ---------------------------------------------------------------------------
# Spectrum container


@dataclass
class Spectrum:
    """Sorted frequency/multiplicity list, complete below ``lambda_max``."""

    lambdas: np.ndarray
    mults: np.ndarray
    lambda_max: float
    dim: int
    volume: float
    label: str
    mode_tags: Optional[list] = None        # per entry: list of (m, k)
    basis: Optional["SurfaceEigenbasis"] = None

    def __post_init__(self):
        order = np.argsort(self.lambdas)
        self.lambdas = np.asarray(self.lambdas, dtype=float)[order]
        self.mults = np.asarray(self.mults, dtype=int)[order]
        if self.mode_tags is not None:
            self.mode_tags = [self.mode_tags[i] for i in order]
        if len(self.lambdas):
            if self.lambdas[0] < -1e-12:
                raise DomainError("negative frequency in spectrum")

    def count(self, lam) -> np.ndarray:
        """N(lam) with the half-open convention lambda_j <= lam."""
        lam = np.asarray(lam, dtype=float)
        idx = np.searchsorted(self.lambdas, lam, side="right")
        csum = np.concatenate([[0], np.cumsum(self.mults)])
        return csum[idx]

    @property
    def total(self) -> int:
        return int(np.sum(self.mults))


def _group(lams: np.ndarray, mults: np.ndarray, tags=None):
    """Merge entries whose frequencies agree to _GROUP_TOL (relative)."""
    order = np.argsort(lams)
    lams, mults = lams[order], mults[order]
    if tags is not None:
        tags = [tags[i] for i in order]
    out_l, out_m, out_t = [], [], []
    for i, lam in enumerate(lams):
        if out_l and abs(lam - out_l[-1]) <= _GROUP_TOL * (1.0 + lam):
            out_m[-1] += mults[i]
            if tags is not None:
                out_t[-1].extend(tags[i])
        else:
            out_l.append(lam)
            out_m.append(int(mults[i]))
            if tags is not None:
                out_t.append(list(tags[i]))
    return (np.array(out_l), np.array(out_m, dtype=int),
            out_t if tags is not None else None)


# ---------------------------------------------------------------------------
# Closed forms


def sphere_spectrum(n: int, lambda_max: float) -> Spectrum:
    """Round unit n-sphere: frequencies sqrt(k(k+n-1))."""
    if n < 1:
        raise DomainError("sphere dimension must be >= 1")
    lams, mults = [], []
    k = 0
    while True:
        lam2 = k * (k + n - 1)
        if lam2 > lambda_max ** 2:
            break
        if n == 1:
            mult = 1 if k == 0 else 2
        else:
            mult = (math.comb(k + n, n) - math.comb(k + n - 2, n)
                    if k >= 2 else (1 if k == 0 else n + 1))
        lams.append(math.sqrt(lam2))
        mults.append(mult)
        k += 1
    return Spectrum(np.array(lams), np.array(mults), lambda_max, n,
                    sphere_volume(n), f"S^{n}")


def torus_spectrum(periods, lambda_max: float) -> Spectrum:
    """Flat torus R^d / (L_1 Z x ... x L_d Z): dual-lattice norms."""
    periods = tuple(float(p) for p in periods)
    if any(p <= 0 for p in periods):
        raise DomainError("periods must be positive")
    axes = [np.arange(-int(lambda_max * L / (2 * math.pi)) - 1,
                      int(lambda_max * L / (2 * math.pi)) + 2)
            for L in periods]
    grids = np.meshgrid(*axes, indexing="ij")
    lam2 = np.zeros_like(grids[0], dtype=float)
    for g, L in zip(grids, periods):
        lam2 += (2 * math.pi * g / L) ** 2
    lam2 = lam2.ravel()
    lam2 = lam2[lam2 <= lambda_max ** 2 * (1 + 1e-14)]
    vals, counts = np.unique(np.round(lam2, 9), return_counts=True)
    return Spectrum(np.sqrt(vals), counts, lambda_max, len(periods),
                    math.prod(periods), f"torus{periods}")


def product_spectrum(s1: Spectrum, s2: Spectrum,
                     lambda_max: float) -> Spectrum:
    """Frequencies sqrt(l1^2 + l2^2), multiplicities multiplied."""
    for s in (s1, s2):
        if s.lambda_max < lambda_max - 1e-12:
            raise IncompleteInput(
                f"factor {s.label} truncated at {s.lambda_max} < {lambda_max}")
    l2a = s1.lambdas[s1.lambdas <= lambda_max] ** 2
    m_a = s1.mults[s1.lambdas <= lambda_max]
    l2b = s2.lambdas[s2.lambdas <= lambda_max] ** 2
    m_b = s2.mults[s2.lambdas <= lambda_max]
    sums = l2a[:, None] + l2b[None, :]
    mults = m_a[:, None] * m_b[None, :]
    keep = sums <= lambda_max ** 2 * (1 + 1e-14)
    lams = np.sqrt(sums[keep])
    lams, mults, _ = _group(lams, mults[keep])
    return Spectrum(lams, mults, lambda_max, s1.dim + s2.dim,
                    s1.volume * s2.volume, f"{s1.label} x {s2.label}")


# ---------------------------------------------------------------------------
# Chebyshev storage for radial eigenfunctions


def _cheb_nodes(n: int) -> np.ndarray:
    """Chebyshev extrema on [-pi/2, pi/2], ascending."""
    return -HALF_PI * np.cos(np.pi * np.arange(n) / (n - 1))


def _cheb_coeffs(vals: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients from values at the extrema grid (ascending x).

    Supports batched rows: vals shape (..., n).
    """
    n = vals.shape[-1]
    v = vals[..., ::-1]                 # descending x for the DCT convention
    ext = np.concatenate([v, v[..., -2:0:-1]], axis=-1)
    c = np.fft.rfft(ext, axis=-1).real / (n - 1)
    c[..., 0] *= 0.5
    c[..., -1] *= 0.5
    return c[..., :n]


@dataclass
class ModeEigenfunction:
    """Radial factor u_{m,k}(s) of an eigenfunction u(s) e^{i m theta}.

    Normalized so the full complex eigenfunction has unit L^2 norm:
    2 pi int u^2 alpha ds = 1 (each of +-m carries its own copy; real
    cosine/sine pairs are linear combinations with the same normalization).
    """

    m: int
    k: int
    lam: float
    coeffs: np.ndarray = field(repr=False)         # Chebyshev of u
    weight_coeffs: np.ndarray = field(repr=False)  # antiderivative of 2pi u^2 alpha

    def __call__(self, s):
        return np.polynomial.chebyshev.chebval(
            np.asarray(s, dtype=float) / HALF_PI, self.coeffs)

    def band_weight(self, s0: float, s1: float) -> float:
        """2 pi int_{s0}^{s1} u^2 alpha ds (the localized mass)."""
        ends = np.polynomial.chebyshev.chebval(
            np.array([s0, s1]) / HALF_PI, self.weight_coeffs)
        return float(ends[1] - ends[0])


class SurfaceEigenbasis:
    """Store of radial eigenfunctions keyed by (m, k), m >= 0."""

    def __init__(self, profile: ProfileCurve):
        self.profile = profile
        self.modes: dict[tuple[int, int], ModeEigenfunction] = {}

    def add(self, mode: ModeEigenfunction):
        self.modes[(mode.m, mode.k)] = mode

    def __getitem__(self, key):
        return self.modes[key]

    def __len__(self):
        return len(self.modes)


# ---------------------------------------------------------------------------
# Radial solver


def _bessel_logderiv(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d/dx log J_m(x) for small x, by the three-term power series."""
    y = 0.25 * x * x
    S = 1.0 - y / (m + 1) + y * y / (2.0 * (m + 1) * (m + 2))
    dS = -1.0 / (m + 1) + y / ((m + 1) * (m + 2))
    return m / x + 0.5 * x * dS / S


class _RadialGrid:
    """Graded integration grid shared by a whole eigenvalue batch.

    Bulk spacing resolves the fastest Pruefer winding (~lambda_max); near
    the poles the spacing shrinks like alpha/(m_max+1), which keeps the
    boundary-layer attraction stable for explicit RK4.
    """

    def __init__(self, profile: ProfileCurve, lam_max: float, m_max: int,
                 hi: float, delta: float = 1e-4):
        lo = -HALF_PI + delta
        h_bulk = 0.08 / (2.0 * lam_max + 2.0)
        pts = [lo]
        s = lo
        while s < hi:
            a = float(profile.alpha(s))
            h = min(h_bulk, 0.7 * a / (m_max + 1.0))
            s = min(s + h, hi)
            pts.append(s)
        self.s = np.array(pts)
        mid = 0.5 * (self.s[:-1] + self.s[1:])
        self.h = np.diff(self.s)
        self.a0 = profile.alpha(self.s[:-1])
        self.da0 = profile.d_alpha(self.s[:-1])
        self.am = profile.alpha(mid)
        self.dam = profile.d_alpha(mid)
        self.a1 = profile.alpha(self.s[1:])
        self.da1 = profile.d_alpha(self.s[1:])
        self.delta = delta


def _theta_rhs(theta, a, da, m2, lam2):
    kap2 = m2 + lam2 * a * a
    kap = np.sqrt(kap2)
    st, ct = np.sin(theta), np.cos(theta)
    return (lam2 * a * da / kap2 * st * ct
            + kap / a * ct * ct
            + (lam2 * a - m2 / a) / kap * st * st)


def _integrate_theta(grid: _RadialGrid, m: np.ndarray,
                     lam2: np.ndarray) -> np.ndarray:
    """Pruefer angle at the grid end for each (m, lam2) pair (RK4)."""
    m = np.asarray(m, dtype=float)
    m2 = m * m
    x = np.sqrt(lam2) * grid.delta
    r0 = float(grid.a0[0]) * np.sqrt(lam2) * _bessel_logderiv(m, x)
    kap0 = np.sqrt(m2 + lam2 * grid.a0[0] ** 2)
    theta = np.arctan2(kap0, r0)
    for i in range(len(grid.h)):
        h = grid.h[i]
        k1 = _theta_rhs(theta, grid.a0[i], grid.da0[i], m2, lam2)
        k2 = _theta_rhs(theta + 0.5 * h * k1, grid.am[i], grid.dam[i], m2, lam2)
        k3 = _theta_rhs(theta + 0.5 * h * k2, grid.am[i], grid.dam[i], m2, lam2)
        k4 = _theta_rhs(theta + h * k3, grid.a1[i], grid.da1[i], m2, lam2)
        theta = theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return theta


def _integrate_uw(grid: _RadialGrid, m: np.ndarray, lam2: np.ndarray):
    """Linear pass collecting the radial solution along the grid.

    Returns (U, logscale) with U[:, j] the renormalized solution at grid
    node j and logscale the accumulated log of the stripped factors, so the
    true solution is U * exp(logscale - logscale_ref) rowwise.
    """
    m = np.asarray(m, dtype=float)
    m2 = m * m
    n = len(grid.s)
    batch = len(lam2)
    U = np.empty((batch, n))
    LS = np.empty((batch, n))
    x = np.sqrt(lam2) * grid.delta
    u = np.ones(batch)
    w = float(grid.a0[0]) * np.sqrt(lam2) * _bessel_logderiv(m, x)
    logs = np.zeros(batch)
    U[:, 0], LS[:, 0] = u, logs

    def rhs(u, w, a, m2, lam2):
        return w / a, (m2 / a - lam2 * a) * u

    for i in range(len(grid.h)):
        h = grid.h[i]
        du1, dw1 = rhs(u, w, grid.a0[i], m2, lam2)
        du2, dw2 = rhs(u + 0.5 * h * du1, w + 0.5 * h * dw1, grid.am[i], m2, lam2)
        du3, dw3 = rhs(u + 0.5 * h * du2, w + 0.5 * h * dw2, grid.am[i], m2, lam2)
        du4, dw4 = rhs(u + h * du3, w + h * dw3, grid.a1[i], m2, lam2)
        u = u + (h / 6.0) * (du1 + 2 * du2 + 2 * du3 + du4)
        w = w + (h / 6.0) * (dw1 + 2 * dw2 + 2 * dw3 + dw4)
        scale = np.maximum(np.maximum(np.abs(u), np.abs(w)), 1e-30)
        u /= scale
        w /= scale
        logs = logs + np.log(scale)
        U[:, i + 1], LS[:, i + 1] = u, logs
    return U, LS, u, w, logs


def surface_spectrum(profile: ProfileCurve, lambda_max: float,
                     m_max: Optional[int] = None,
                     with_eigenfunctions: bool = True,
                     bisect_tol: float = 1e-10) -> Spectrum:
    """Spectrum of the Laplacian on the surface of revolution of ``profile``.

    Eigenvalues are counted and bracketed through the monotone matching
    angle F(lambda^2) = theta_left + theta_right at the profile maximum;
    the integer winding at the cutoff certifies that no eigenvalue below
    ``lambda_max`` is missed.
    """
    a_max = profile.alpha_max
    m_needed = int(math.ceil(lambda_max * a_max)) + 2
    if m_max is None:
        m_max = m_needed
    if m_max < lambda_max * a_max:
        raise DomainError(f"m_max={m_max} below lambda_max*max alpha")

    mid = profile.s_max
    refl = profile.reflected()
    grid_L = _RadialGrid(profile, lambda_max, m_max, hi=mid)
    grid_R = _RadialGrid(refl, lambda_max, m_max, hi=-mid)

    def F(m_arr, lam2_arr):
        return (_integrate_theta(grid_L, m_arr, lam2_arr)
                + _integrate_theta(grid_R, m_arr, lam2_arr))

    lam2_hi = lambda_max ** 2
    lam2_lo = min(1e-6, lam2_hi * 1e-9)

    # ----- enumerate targets per mode via the winding count
    modes = [m for m in range(0, m_max + 1)
             if m * m <= lam2_hi * a_max * a_max + 1e-9]
    m_arr = np.array(modes, dtype=float)
    F_hi = F(m_arr, np.full(len(modes), lam2_hi))
    F_lo = F(m_arr, np.full(len(modes), lam2_lo))
    targets_m, targets_n = [], []
    counts = {}
    for i, m in enumerate(modes):
        n_lo = int(math.floor(F_lo[i] / math.pi + 1e-9))
        n_hi = int(math.floor(F_hi[i] / math.pi + 1e-9))
        counts[m] = n_hi - n_lo
        for n in range(n_lo + 1, n_hi + 1):
            targets_m.append(m)
            targets_n.append(n)
    targets_m = np.array(targets_m, dtype=float)
    targets_goal = np.array(targets_n, dtype=float) * math.pi

    # ----- vectorized bisection over all targets at once
    lo = np.full(len(targets_m), lam2_lo)
    hi = np.full(len(targets_m), lam2_hi)
    f_lo = F(targets_m, lo) - targets_goal
    f_hi = F(targets_m, hi) - targets_goal
    if np.any(f_lo > 0) or np.any(f_hi < -1e-9):
        raise SolverFailure("bracket endpoints do not straddle a target",
                            bracket=(lam2_lo, lam2_hi))
    n_iter = max(1, int(math.ceil(math.log2((lam2_hi - lam2_lo) / bisect_tol))))
    for _ in range(n_iter):
        mid_l2 = 0.5 * (lo + hi)
        f_mid = F(targets_m, mid_l2) - targets_goal
        take_hi = f_mid >= 0
        hi = np.where(take_hi, mid_l2, hi)
        f_hi = np.where(take_hi, f_mid, f_hi)
        lo = np.where(take_hi, lo, mid_l2)
        f_lo = np.where(take_hi, f_mid, f_lo)
    # final secant polish inside the converged bracket
    denom = np.where(np.abs(f_hi - f_lo) > 0, f_hi - f_lo, 1.0)
    lam2_star = lo - f_lo * (hi - lo) / denom
    lam_star = np.sqrt(np.maximum(lam2_star, 0.0))

    # ----- assemble entries
    lams = [0.0]
    mults = [1]
    tags = [[(0, 0)]]
    k_counter = {m: (1 if m == 0 else 0) for m in modes}
    entry_of_target = []
    for i in range(len(targets_m)):
        m = int(targets_m[i])
        k = k_counter[m]
        k_counter[m] = k + 1
        lams.append(lam_star[i])
        mults.append(1 if m == 0 else 2)
        tags.append([(m, k)])
        entry_of_target.append((m, k))

    vol = manifold_volume(
        ModelManifold(kind="surface_of_revolution", dim=2, profile=profile))

    basis = None
    if with_eigenfunctions:
        basis = SurfaceEigenbasis(profile)
        basis.add(_constant_mode(profile, vol))
        _build_eigenfunctions(profile, grid_L, grid_R, targets_m, lam2_star,
                              entry_of_target, basis)

    lam_arr, mult_arr, tag_arr = _group(np.array(lams), np.array(mults), tags)
    spec = Spectrum(lam_arr, mult_arr, lambda_max, 2, vol,
                    profile.label, mode_tags=tag_arr, basis=basis)
    spec.mode_counts = counts
    spec.mode_counts[0] = counts.get(0, 0) + 1   # constant mode
    return spec


def _constant_mode(profile: ProfileCurve, vol: float) -> ModeEigenfunction:
    nodes = _cheb_nodes(_CHEB_N)
    u = np.full(_CHEB_N, 1.0 / math.sqrt(vol))
    coeffs = _cheb_coeffs(u)
    wvals = 2.0 * math.pi * u * u * profile.alpha(nodes)
    w_coeffs = np.polynomial.chebyshev.chebint(_cheb_coeffs(wvals)) * HALF_PI
    return ModeEigenfunction(0, 0, 0.0, coeffs, w_coeffs)


def _build_eigenfunctions(profile, grid_L, grid_R, targets_m, lam2_star,
                          entry_of_target, basis, chunk: int = 192):
    from scipy.interpolate import CubicSpline

    nodes = _cheb_nodes(_CHEB_N)
    alpha_nodes = profile.alpha(nodes)
    mid = profile.s_max
    left_nodes = nodes <= mid
    for start in range(0, len(targets_m), chunk):
        sl = slice(start, start + chunk)
        m_b = targets_m[sl]
        l2_b = lam2_star[sl]
        UL, LSL, uL, wL, logsL = _integrate_uw(grid_L, m_b, l2_b)
        UR, LSR, uR, wR, logsR = _integrate_uw(grid_R, m_b, l2_b)

        # true values relative to the matching point scale
        valsL = UL * np.exp(LSL - LSL[:, -1][:, None])
        valsR = UR * np.exp(LSR - LSR[:, -1][:, None])
        # glue: scale the right side for continuity, picking whichever of
        # u or w = alpha u' dominates at the matching point (odd modes
        # vanish there, where the u-ratio is pure shooting noise)
        kap_mid = np.sqrt(m_b ** 2 + l2_b * float(profile.alpha(mid)) ** 2)
        use_u = np.abs(kap_mid * uL) >= np.abs(wL)
        gamma = np.where(use_u,
                         uL / np.where(np.abs(uR) > 0, uR, 1.0),
                         -wL / np.where(np.abs(wR) > 0, wR, 1.0))

        splL = CubicSpline(grid_L.s, valsL.T)
        splR = CubicSpline(grid_R.s, valsR.T)
        n_rows = len(m_b)
        u_nodes = np.empty((n_rows, _CHEB_N))
        u_nodes[:, left_nodes] = splL(nodes[left_nodes]).T
        u_nodes[:, ~left_nodes] = (splR(-nodes[~left_nodes]).T
                                   * gamma[:, None])

        wvals = 2.0 * math.pi * u_nodes ** 2 * alpha_nodes[None, :]
        w_coeffs = np.polynomial.chebyshev.chebint(
            _cheb_coeffs(wvals), axis=-1) * HALF_PI
        norm2 = (np.polynomial.chebyshev.chebvander(1.0, w_coeffs.shape[-1] - 1)
                 @ w_coeffs.T).ravel() - \
                (np.polynomial.chebyshev.chebvander(-1.0, w_coeffs.shape[-1] - 1)
                 @ w_coeffs.T).ravel()
        scale = 1.0 / np.sqrt(norm2)
        u_nodes *= scale[:, None]
        coeffs = _cheb_coeffs(u_nodes)
        wvals = 2.0 * math.pi * u_nodes ** 2 * alpha_nodes[None, :]
        w_coeffs = np.polynomial.chebyshev.chebint(
            _cheb_coeffs(wvals), axis=-1) * HALF_PI
        for row in range(n_rows):
            m, k = entry_of_target[start + row]
            basis.add(ModeEigenfunction(m, k, math.sqrt(l2_b[row]),
                                        coeffs[row], w_coeffs[row]))


# ---------------------------------------------------------------------------
# Dispatch and caching


def spectrum_for_manifold(m: ModelManifold, lambda_max: float,
                          with_eigenfunctions: bool = True) -> Spectrum:
    if m.kind == "round_sphere":
        return sphere_spectrum(m.n, lambda_max)
    if m.kind == "flat_torus":
        return torus_spectrum(m.periods, lambda_max)
    if m.kind == "product":
        s1 = spectrum_for_manifold(m.factors[0], lambda_max, False)
        s2 = spectrum_for_manifold(m.factors[1], lambda_max, False)
        return product_spectrum(s1, s2, lambda_max)
    if m.kind == "surface_of_revolution":
        return surface_spectrum(m.profile, lambda_max,
                                with_eigenfunctions=with_eigenfunctions)
    raise DomainError(f"unknown manifold kind {m.kind!r}")


def profile_hash(profile: ProfileCurve) -> str:
    s = np.linspace(-HALF_PI, HALF_PI, 257)
    payload = profile.label.encode() + np.ascontiguousarray(
        profile.alpha(s)).tobytes()
    return hashlib.sha256(payload).hexdigest()[:16]


def save_spectrum(spec: Spectrum, path: str) -> None:
    """Cache frequencies/multiplicities with provenance (no eigenfunctions)."""
    meta = {
        "lambda_max": spec.lambda_max, "dim": spec.dim,
        "volume": spec.volume, "label": spec.label,
        "solver_version": SOLVER_VERSION,
    }
    np.savez(path, lambdas=spec.lambdas, mults=spec.mults,
             meta=json.dumps(meta))


def load_spectrum(path: str) -> Spectrum:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    return Spectrum(data["lambdas"], data["mults"], meta["lambda_max"],
                    meta["dim"], meta["volume"], meta["label"])
