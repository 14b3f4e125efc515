"""Conditional-law machinery for the two-state Markov drift.

The time-reversed signal Q_t splits into a drift integral Q1_t =
int_0^t e^{-lambda s} mu_s ds, supported on a growing interval, plus an
independent Gaussian part with density phi(t, .). Conditioning mu_0 on Q_t
therefore needs the conditional c.d.f.s u(t, .), v(t, .) of Q1_t given the
starting state. Finite t: a first-order upwind solve of their transport
system on the moving support (a point mass e^{-alpha t} sits at the left
endpoint of u, e^{-beta t} at the right endpoint of v: the zero-jump
events). t = infinity: u/v collapse to scaled Beta laws handled in closed
form, with Gauss-Jacobi nodes absorbing the endpoint singularities of the
Beta kernel in every convolution integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import (CFLViolationError, NumericError, OutsideSupportError,
                     QuadratureError, SchemeInstabilityError)
from .models import CTMC2Drift, ModelParams, NonlinearFilter, validate

GAMMA_DOMAIN_MAX = 60.0


def gamma_fn(x: float) -> float:
    """Gamma function on (0, 60], relative error well under 1e-10."""
    if not (0.0 < x <= GAMMA_DOMAIN_MAX):
        raise ValueError(f"gamma_fn domain is (0, {GAMMA_DOMAIN_MAX}], got {x}")
    return math.gamma(x)


def _ctmc(params: ModelParams) -> CTMC2Drift:
    validate(params)
    d = params.drift
    if not isinstance(d, CTMC2Drift):
        raise TypeError("filter machinery requires a two-state Markov drift")
    return d


@dataclass(frozen=True)
class QDecomposition:
    """Support endpoints of the drift integral and the Gaussian part's law."""

    params: ModelParams

    def support(self, t: float) -> tuple[float, float]:
        d = self.params.drift
        lam = self.params.lam
        w = (1.0 - math.exp(-lam * t)) / lam
        return d.rho1 * w, d.rho2 * w

    def phi_params(self, t: float) -> tuple[float, float]:
        """(mean, variance) of the Gaussian part at time t."""
        lam, sig2 = self.params.lam, self.params.sigma**2
        mean = -sig2 * (1.0 - math.exp(-lam * t)) / (2.0 * lam)
        var = sig2 * (1.0 - math.exp(-2.0 * lam * t)) / (2.0 * lam)
        return mean, var

    def phi(self, t: float, x):
        mean, var = self.phi_params(t)
        x = np.asarray(x, dtype=float)
        return np.exp(-((x - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)

    def phi_inf_params(self) -> tuple[float, float]:
        lam, sig2 = self.params.lam, self.params.sigma**2
        return -sig2 / (2.0 * lam), sig2 / (2.0 * lam)

    def phi_inf(self, x):
        mean, var = self.phi_inf_params()
        x = np.asarray(x, dtype=float)
        return np.exp(-((x - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


@lru_cache(maxsize=64)
def _beta_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes s in (0,1) and weights summing to 1 for E_{Beta(a,b)}[f(s)]."""
    x, w = special.roots_jacobi(n, b - 1.0, a - 1.0)
    s = 0.5 * (x + 1.0)
    w = w / w.sum()
    return s, w


@dataclass(frozen=True)
class StationaryLaw:
    """Limit law of the drift integral: scaled/shifted Beta on [rho1/l, rho2/l].

    a_exp = alpha/lambda and b_exp = beta/lambda are the Beta exponents;
    u_inf ~ Beta(a_exp, b_exp + 1), v_inf ~ Beta(a_exp + 1, b_exp) on the
    support, and the unconditional mixture is Beta(a_exp, b_exp). c and
    d = beta*c/alpha normalize the kernel l(z).
    """

    params: ModelParams
    a_exp: float = field(init=False)
    b_exp: float = field(init=False)
    lo: float = field(init=False)
    hi: float = field(init=False)
    c: float = field(init=False)
    d: float = field(init=False)

    def __post_init__(self):
        dr = _ctmc(self.params)
        lam = self.params.lam
        a = dr.alpha / lam
        b = dr.beta / lam
        for name, val in (("a_exp", a), ("b_exp", b)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "lo", dr.rho1 / lam)
        object.__setattr__(self, "hi", dr.rho2 / lam)
        log_c = (2.0 * math.log(lam) + math.lgamma(a + b + 1.0)
                 - math.log(dr.beta) - (a + b) * math.log(dr.rho2 - dr.rho1)
                 - math.lgamma(a) - math.lgamma(b))
        c = math.exp(log_c)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", dr.beta * c / dr.alpha)

    def _s(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def kernel(self, z):
        """l(z) = (lambda z - rho1)^(a_exp-1) * (rho2 - lambda z)^(b_exp-1)."""
        dr = self.params.drift
        lam = self.params.lam
        z = np.asarray(z, dtype=float)
        return (lam * z - dr.rho1) ** (self.a_exp - 1.0) * (dr.rho2 - lam * z) ** (self.b_exp - 1.0)

    def u_inf(self, x):
        """Conditional c.d.f. of the limit drift integral given the low start."""
        return special.betainc(self.a_exp, self.b_exp + 1.0, self._s(x))

    def v_inf(self, x):
        """Conditional c.d.f. given the high start."""
        return special.betainc(self.a_exp + 1.0, self.b_exp, self._s(x))

    def mixture_cdf(self, x):
        """Unconditional (stationary-weighted) c.d.f.; equals Beta(a_exp, b_exp)."""
        return special.betainc(self.a_exp, self.b_exp, self._s(x))

    def nodes(self, extra_a: float = 0.0, extra_b: float = 0.0,
              n: int = 192) -> tuple[np.ndarray, np.ndarray]:
        """(z nodes, unit weights) for E_{Beta(a+extra_a, b+extra_b)}[f(z)]."""
        s, w = _beta_nodes(self.a_exp + extra_a, self.b_exp + extra_b, n)
        z = self.lo + (self.hi - self.lo) * s
        return z, w


def stationary_law(params: ModelParams) -> StationaryLaw:
    """Build the limit law; exponents must stay inside the Gamma domain."""
    dr = _ctmc(params)
    for name, val in (("alpha/lambda", dr.alpha / params.lam),
                      ("beta/lambda", dr.beta / params.lam)):
        if not (0.0 < val <= GAMMA_DOMAIN_MAX):
            raise QuadratureError(
                f"Beta exponent {name} = {val:.3g} outside supported range (0, {GAMMA_DOMAIN_MAX}]",
                achieved_tol=float("inf"))
    return StationaryLaw(params=params)


def p_q_infinity(params: ModelParams, x, law: StationaryLaw | None = None,
                 n_nodes: int = 192) -> tuple[np.ndarray, np.ndarray]:
    """Limit conditional densities of Q given each starting state.

    p_inf = (Beta(a, b+1) law of the drift integral) convolved with the
    Gaussian part; q_inf likewise with Beta(a+1, b). Gauss-Jacobi nodes
    carry the (possibly unbounded) Beta endpoint weights exactly.
    """
    law = stationary_law(params) if law is None else law
    q = QDecomposition(params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    zp, wp = law.nodes(0.0, 1.0, n_nodes)
    zq, wq = law.nodes(1.0, 0.0, n_nodes)
    p = q.phi_inf(x[:, None] - zp[None, :]) @ wp
    qq = q.phi_inf(x[:, None] - zq[None, :]) @ wq
    return p, qq


# --- finite-t transport solve -------------------------------------------------

@dataclass(frozen=True)
class UVGrid:
    """Snapshots of the conditional c.d.f.s on the unit spatial grid.

    xi is the fixed grid on [0, 1]; physical coordinates at snapshot time t
    are lo(t) + xi * (hi(t) - lo(t)). u rows carry the left-endpoint atom
    exp(-alpha t) as their first value; v rows end at 1 including the
    right-endpoint atom exp(-beta t).
    """

    params: ModelParams
    xi: np.ndarray
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def support(self, t: float) -> tuple[float, float]:
        return QDecomposition(self.params).support(t)

    def row(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"time {t} not recorded; snapshots at {self.times}")
        return idx

    def x_physical(self, t: float) -> np.ndarray:
        lo, hi = self.support(t)
        return lo + self.xi * (hi - lo)

    def u_at(self, t: float, x) -> np.ndarray:
        """u(t, x) by linear interpolation in the physical coordinate."""
        i = self.row(t)
        xs = self.x_physical(self.times[i])
        return np.interp(np.asarray(x, dtype=float), xs, self.u[i],
                         left=0.0, right=1.0)

    def v_at(self, t: float, x) -> np.ndarray:
        i = self.row(t)
        xs = self.x_physical(self.times[i])
        return np.interp(np.asarray(x, dtype=float), xs, self.v[i],
                         left=0.0, right=1.0)

    def to_csv(self, path) -> None:
        """Write rows (t, x_physical, u, v) for every snapshot and grid node."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,x_physical,u,v\n")
            for i, t in enumerate(self.times):
                xs = self.x_physical(t)
                for j in range(self.xi.size):
                    fh.write(f"{float(t)!r},{float(xs[j])!r},{float(self.u[i, j])!r},{float(self.v[i, j])!r}\n")


def _auto_steps(params: ModelParams, t0: float, t_max: float, nx: int,
                cfl: float) -> int:
    """Step count the adaptive CFL ladder needs from t0 to t_max."""
    d = params.drift
    lam = params.lam
    dxi = 1.0 / (nx - 1)
    rate = max(d.alpha, d.beta)
    # sum dt * (s(t)/dxi + rate) <= cfl per step; integral of s is log(e^{lam t}-1)
    advect = (np.log(np.expm1(lam * t_max)) - np.log(np.expm1(lam * t0))) / dxi
    return int(np.ceil((advect + rate * (t_max - t0)) / cfl)) + 1


def solve_uv_pde(params: ModelParams, t_max: float, nx: int = 512,
                 nt: int | None = None, cfl: float = 0.9,
                 snapshot_times=None) -> UVGrid:
    """March the conditional c.d.f.s to t_max with first-order upwinding.

    The moving support is mapped to xi in [0, 1], where the transport speeds
    become -xi * s(t) for u (inflow at xi = 1) and (1 - xi) * s(t) for v
    (inflow at xi = 0), s(t) = lambda / (1 - e^{-lambda t}). Explicit Euler
    steps obey dt * (s/dxi + max(alpha, beta)) <= cfl, which keeps the
    update a convex combination (monotone, range-preserving). Boundary
    values are imposed exactly each step.

    nt, when given, is the total step budget; fewer steps than the CFL
    ladder requires raises CFLViolationError, more simply refines uniformly.
    """
    d = _ctmc(params)
    if nx < 64:
        raise ValueError(f"nx must be >= 64, got {nx}")
    if not (0 < cfl <= 1.0):
        raise ValueError(f"cfl must be in (0, 1], got {cfl}")
    lam = params.lam
    t0 = 1e-3 / max(lam, d.alpha, d.beta, 1.0)
    if not (t_max > t0):
        raise ValueError(f"t_max must exceed the startup time {t0:.2e}")

    cfl_eff = cfl
    if nt is not None:
        n_auto = _auto_steps(params, t0, t_max, nx, cfl)
        if nt < n_auto:
            raise CFLViolationError(
                f"nt = {nt} below the {n_auto} steps required by the CFL bound "
                f"(cfl = {cfl}, nx = {nx})")
        cfl_eff = cfl * n_auto / nt

    snaps = sorted(set(float(t) for t in (snapshot_times if snapshot_times is not None else [t_max])))
    if any(not (t0 < t <= t_max) for t in snaps):
        raise ValueError(f"snapshot times must lie in ({t0:.2e}, {t_max}]")

    xi = np.linspace(0.0, 1.0, nx)
    dxi = xi[1] - xi[0]
    rate = max(d.alpha, d.beta)

    u = math.exp(-d.alpha * t0) + (1.0 - math.exp(-d.alpha * t0)) * xi
    v = (1.0 - math.exp(-d.beta * t0)) * xi
    v[-1] = 1.0

    out_u, out_v, out_t = [], [], []
    t = t0
    pending = list(snaps)
    while pending:
        target = pending.pop(0)
        while t < target:
            s = lam / (-math.expm1(-lam * t))
            dt = min(cfl_eff / (s / dxi + rate), target - t)
            # u: leftward characteristics, difference toward xi+
            du = np.empty_like(u)
            du[:-1] = (u[1:] - u[:-1]) / dxi
            du[-1] = 0.0
            dv = np.empty_like(v)
            dv[1:] = (v[1:] - v[:-1]) / dxi
            dv[0] = 0.0
            u_new = u + dt * (xi * s * du - d.alpha * (u - v))
            v_new = v + dt * (-(1.0 - xi) * s * dv - d.beta * (v - u))
            t += dt
            u, v = u_new, v_new
            u[0] = math.exp(-d.alpha * t)
            u[-1] = 1.0
            v[0] = 0.0
            v[-1] = 1.0
        out_u.append(u.copy())
        out_v.append(v.copy())
        out_t.append(t)

    grid = UVGrid(params=params, xi=xi, times=np.asarray(out_t),
                  u=np.asarray(out_u), v=np.asarray(out_v))
    _check_grid(grid)
    return grid


def _check_grid(grid: UVGrid, tol: float = 1e-9) -> None:
    for name, arr in (("u", grid.u), ("v", grid.v)):
        if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
            raise SchemeInstabilityError(f"{name} left [0, 1] beyond tolerance")
        if np.any(np.diff(arr, axis=1) < -tol):
            raise SchemeInstabilityError(f"{name} is non-monotone beyond tolerance")


# --- conditional densities and the filter --------------------------------------

def conditional_densities(params: ModelParams, t: float, x,
                          grid: UVGrid | None = None,
                          law: StationaryLaw | None = None,
                          nx: int = 512, n_nodes: int = 192):
    """Densities p(t, x), q(t, x) of Q_t given the low/high starting state.

    Finite t: Stieltjes convolution of the grid c.d.f. increments with
    phi(t, .), the endpoint atoms convolved explicitly (differentiating
    through a point mass on the grid would be ill-posed). t = math.inf:
    closed-form Beta convolutions. Negative values beyond -1e-10 indicate a
    broken grid and raise.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if math.isinf(t):
        p, q = p_q_infinity(params, x, law=law, n_nodes=n_nodes)
    else:
        d = _ctmc(params)
        if grid is None:
            grid = solve_uv_pde(params, t_max=t, nx=nx, snapshot_times=[t])
        qd = QDecomposition(params)
        i = grid.row(t)
        xs = grid.x_physical(grid.times[i])
        mid = 0.5 * (xs[1:] + xs[:-1])
        atom_u = grid.u[i, 0]
        atom_v = math.exp(-d.beta * grid.times[i])
        du = np.diff(grid.u[i])
        dv = np.diff(grid.v[i])
        dv[-1] = max(dv[-1] - atom_v, 0.0)
        lo, hi = xs[0], xs[-1]
        p = atom_u * qd.phi(t, x - lo) + qd.phi(t, x[:, None] - mid[None, :]) @ du
        q = atom_v * qd.phi(t, x - hi) + qd.phi(t, x[:, None] - mid[None, :]) @ dv
    if np.any(p < -1e-10) or np.any(q < -1e-10):
        raise NumericError("negative conditional density: grid or quadrature failure")
    return p, q


def filter_expectation(params: ModelParams, t: float, x,
                       grid: UVGrid | None = None,
                       law: StationaryLaw | None = None,
                       n_nodes: int = 192):
    """E[mu_0 | Q_t = x] = (rho1 beta p + rho2 alpha q) / (beta p + alpha q).

    Accepts t = math.inf for the stationary filter. Raises
    OutsideSupportError where both densities have fully underflowed.
    """
    d = _ctmc(params)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    p, q = conditional_densities(params, t, x_arr, grid=grid, law=law, n_nodes=n_nodes)
    wp = d.beta * np.maximum(p, 0.0)
    wq = d.alpha * np.maximum(q, 0.0)
    total = wp + wq
    if np.any(total < 1e-300):
        bad = x_arr[total < 1e-300]
        raise OutsideSupportError(
            f"conditional densities vanish at x = {bad[:3]}...; filter undefined there")
    out = (d.rho1 * wp + d.rho2 * wq) / total
    return out if np.ndim(x) else float(out[0])


def g_infinity(params: ModelParams, x, law: StationaryLaw | None = None,
               n_nodes: int = 192):
    """Stationary optimal weight: E[mu_0 | Q_inf = x] / sigma^2."""
    val = filter_expectation(params, math.inf, x, law=law, n_nodes=n_nodes)
    return val / params.sigma**2


def filter_strategy(params: ModelParams, n_grid: int = 4001,
                    pad_sigmas: float = 12.0) -> NonlinearFilter:
    """Tabulated g_infinity as a total, vectorized strategy evaluator.

    Evaluated once on a wide grid and linearly interpolated; beyond the
    grid the filter saturates at its exact asymptotes rho1/sigma^2 and
    rho2/sigma^2, so the evaluator is total on R.
    """
    d = _ctmc(params)
    law = stationary_law(params)
    qd = QDecomposition(params)
    mean, var = qd.phi_inf_params()
    pad = pad_sigmas * math.sqrt(var)
    zs = np.linspace(law.lo + mean - pad, law.hi + mean + pad, n_grid)
    gs = g_infinity(params, zs, law=law)
    lo_w, hi_w = d.rho1 / params.sigma**2, d.rho2 / params.sigma**2

    def g(z: np.ndarray) -> np.ndarray:
        return np.interp(z, zs, gs, left=lo_w, right=hi_w)

    return NonlinearFilter(g=g, name="filter")


def long_run_growth_ctmc(params: ModelParams, n_nodes: int = 192,
                         n_outer: int = 4096, pad_sigmas: float = 8.0,
                         tail_tol: float = 1e-9) -> float:
    """Long-run log growth of the stationary filter weight:

        prefactor * int [ (int z l(z) phi_inf(y - z) dz)^2
                          / int l(z) phi_inf(y - z) dz ] dy,

    prefactor = c beta lambda^2 (rho2 - rho1) / (2 sigma^2 (alpha + beta)).
    The outer integral is truncated pad_sigmas Gaussian widths beyond the
    shifted support; the Gaussian tail estimate guards the truncation.
    """
    d = _ctmc(params)
    law = stationary_law(params)
    qd = QDecomposition(params)
    mean, var = qd.phi_inf_params()
    sd = math.sqrt(var)

    # inner integrals as expectations under the unconditional Beta law
    z_nodes, w = law.nodes(0.0, 0.0, n_nodes)
    # int l(z) f(z) dz = norm * E_Beta[f]; norm cancels prefactor to lambda^2/(2 sigma^2)
    a, b = law.a_exp, law.b_exp
    log_norm = ((a + b - 1.0) * math.log(d.rho2 - d.rho1)
                + special.betaln(a, b) - math.log(params.lam))
    norm = math.exp(log_norm)
    prefactor = (law.c * d.beta * params.lam**2 * (d.rho2 - d.rho1)
                 / (2.0 * params.sigma**2 * (d.alpha + d.beta)))

    y_lo = law.lo + mean - pad_sigmas * sd
    y_hi = law.hi + mean + pad_sigmas * sd
    # composite Gauss-Legendre panels over [y_lo, y_hi]
    gl_x, gl_w = np.polynomial.legendre.leggauss(32)
    n_panels = max(8, n_outer // 32)
    edges = np.linspace(y_lo, y_hi, n_panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    ys = (mids[:, None] + half[:, None] * gl_x[None, :]).ravel()
    wy = (half[:, None] * gl_w[None, :]).ravel()

    phi = qd.phi_inf(ys[:, None] - z_nodes[None, :])
    N = phi @ w
    M = phi @ (w * z_nodes)
    integrand = np.where(N > 0.0, M * M / np.where(N > 0.0, N, 1.0), 0.0)
    value = prefactor * norm * float(integrand @ wy)

    # Gaussian tail bound on the discarded mass: |z| <= max support bound
    zmax = max(abs(law.lo), abs(law.hi))
    tail_mass = math.erfc(pad_sigmas / math.sqrt(2.0))
    tail = prefactor * norm * zmax**2 * tail_mass
    if tail > tail_tol * max(abs(value), 1.0):
        raise QuadratureError(
            f"outer integral truncation too coarse (tail estimate {tail:.3e})",
            achieved_tol=tail)
    return value
