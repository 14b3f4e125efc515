"""Seeded path simulation and wealth accounting with proportional costs.

Path generation follows the daily discretization

    X_{i+1} = X_i + (mu_i - sigma^2/2) dt + sigma sqrt(dt) z_i
    Y_{i+1} = Y_i + lambda (X_i - Y_i) dt
    mu_{i+1} = mu_i + kappa (mu_bar - mu_i) dt + delta sqrt(dt) zbar_i   (OU)

with the Markov drift simulated by exact exponential holding times and the
X increment integrating the piecewise-constant drift exactly across jumps
inside a step. Every path draws from its own counter-based substream keyed
(seed, path index), so ensembles are bit-identical for any chunking or
worker count.

Wealth accounting mirrors a daily rebalancing desk: the portfolio carries
weight f_i over [i, i+1); after the price move the new target weight is
evaluated at (t_{i+1}, Z_{i+1}) and the share change Delta solves the
self-financing pair

    Pi_{i+1} = Pi_(i+1)- - omega |Delta| e^{X_{i+1}}
    f_{i+1} Pi_{i+1} = (f_i Pi_i / e^{X_i} + Delta) e^{X_{i+1}}

in closed form. All strategies start with one share of the risky asset and
no cash (f_0 = 1); no trade happens on the terminal day. A path whose
wealth would drop to <= 0 is frozen at its last positive value, trades no
more, and is flagged bankrupt.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (LeverageCostSingularityError, ResourceLimitError,
                     ValidationError)
from .models import (BuyAndHold, CTMC2Drift, ModelParams, OUDrift, SimConfig,
                     Strategy, validate, validate_sim)

MAX_ELEMENTS = 40_000_000  # n_paths * (n_steps + 1) bound per bundle (~1.3 GB of arrays)


@dataclass(frozen=True)
class PathBundle:
    """Ensemble of discretized (X, Y, Z, mu) trajectories, shape (n_paths, n_steps+1)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    dt: float
    seed: int
    model: str
    params: ModelParams
    x0: float
    pi0: float
    path_offset: int = 0

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def n_steps(self) -> int:
        return self.x.shape[1] - 1

    def identity_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.model}|{self.seed}|{self.path_offset}|{self.dt!r}|{self.x0!r}".encode())
        h.update(self.x.tobytes())
        return h.hexdigest()[:16]

    def dump_csv(self, path, max_paths: int = 5) -> None:
        """Debug dump of the first `max_paths` paths: path, step, X, Y, Z, mu."""
        k = min(max_paths, self.n_paths)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("path,step,X,Y,Z,mu\n")
            for p in range(k):
                for i in range(self.n_steps + 1):
                    fh.write(f"{p},{i},{float(self.x[p, i])!r},{float(self.y[p, i])!r},"
                             f"{float(self.z[p, i])!r},{float(self.mu[p, i])!r}\n")


def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                     index & 0xFFFFFFFFFFFFFFFF]))


def _fill_ou(params: ModelParams, config: SimConfig, offset: int,
             sl: slice, x, y, mu) -> None:
    d: OUDrift = params.drift
    n_steps = config.n_steps
    lo, hi = sl.start, sl.stop
    m = hi - lo
    zs = np.empty((m, n_steps), dtype=float)
    zbars = np.empty((m, n_steps), dtype=float)
    mu0 = np.empty(m, dtype=float)
    for j in range(m):
        g = _path_rng(config.seed, offset + lo + j)
        mu0[j] = g.standard_normal()
        pair = g.standard_normal((n_steps, 2))
        zs[j] = pair[:, 0]
        zbars[j] = pair[:, 1]

    dt, sig = config.dt, params.sigma
    sq = math.sqrt(dt)
    x[sl, 0] = config.x0
    y[sl, 0] = 0.0
    mu[sl, 0] = d.m1_0 + math.sqrt(d.v1_0) * mu0
    for i in range(n_steps):
        x[sl, i + 1] = x[sl, i] + (mu[sl, i] - 0.5 * sig**2) * dt + sig * sq * zs[:, i]
        y[sl, i + 1] = y[sl, i] + params.lam * (x[sl, i] - y[sl, i]) * dt
        mu[sl, i + 1] = mu[sl, i] + d.kappa * (d.mu_bar - mu[sl, i]) * dt + d.delta * sq * zbars[:, i]


def _ctmc_jump_times(g: np.random.Generator, start_high: bool,
                     alpha: float, beta: float, horizon: float) -> np.ndarray:
    """Exact jump epochs of the chain on [0, horizon] from one substream."""
    times = []
    t = 0.0
    high = start_high
    while True:
        chunk = g.standard_exponential(32)
        for e in chunk:
            t += e / (beta if high else alpha)
            if t > horizon:
                return np.asarray(times)
            times.append(t)
            high = not high


def _fill_ctmc(params: ModelParams, config: SimConfig, offset: int,
               sl: slice, x, y, mu) -> None:
    d: CTMC2Drift = params.drift
    n_steps = config.n_steps
    dt, sig = config.dt, params.sigma
    sq = math.sqrt(dt)
    horizon = n_steps * dt
    p_high = d.alpha / (d.alpha + d.beta)
    bounds = np.arange(n_steps + 1) * dt

    lo, hi = sl.start, sl.stop
    for j in range(hi - lo):
        g = _path_rng(config.seed, offset + lo + j)
        start_high = g.random() < p_high
        jumps = _ctmc_jump_times(g, start_high, d.alpha, d.beta, horizon)
        zs = g.standard_normal(n_steps)

        # piecewise-constant drift: state on [jumps[k-1], jumps[k]) alternates
        k = np.searchsorted(jumps, bounds, side="right")
        state_of = np.where((k % 2 == 0) == start_high, d.rho2, d.rho1)
        # cumulative integral of mu at jump epochs, then linear within sojourns
        if jumps.size:
            seg_states = np.where((np.arange(jumps.size) % 2 == 0) == start_high,
                                  d.rho2, d.rho1)
            seg_lens = np.diff(np.concatenate(([0.0], jumps)))
            cum = np.concatenate(([0.0], np.cumsum(seg_states * seg_lens)))
            last_jump = np.concatenate(([0.0], jumps))
            integral = cum[k] + state_of * (bounds - last_jump[k])
        else:
            integral = state_of * bounds
        d_int = np.diff(integral)

        row = lo + j
        x[row, 0] = config.x0
        mu[row, :] = state_of
        x[row, 1:] = config.x0 + np.cumsum(d_int - 0.5 * sig**2 * dt + sig * sq * zs)

    y[sl, 0] = 0.0
    for i in range(n_steps):
        y[sl, i + 1] = y[sl, i] + params.lam * (x[sl, i] - y[sl, i]) * dt


def simulate_paths(params: ModelParams, config: SimConfig,
                   path_offset: int = 0, workers: int | None = None) -> PathBundle:
    """Generate a seeded ensemble; deterministic for fixed (seed, offsets).

    `path_offset` shifts the substream indices so large runs can be built
    in chunks that agree bitwise with a single monolithic call. `workers`
    (default: EXPMA_THREADS or 1) parallelizes over disjoint path blocks.
    """
    validate(params)
    validate_sim(config)
    n_steps = config.n_steps
    n = config.n_paths
    if n * (n_steps + 1) > MAX_ELEMENTS:
        raise ResourceLimitError(
            f"n_paths*(n_steps+1) = {n * (n_steps + 1)} exceeds {MAX_ELEMENTS}; "
            "simulate in path chunks (path_offset) instead")

    if workers is None:
        workers = int(os.environ.get("EXPMA_THREADS", "1") or "1")
    workers = max(1, workers)

    x = np.empty((n, n_steps + 1), dtype=float)
    y = np.empty_like(x)
    mu = np.empty_like(x)
    fill = _fill_ou if params.is_ou else _fill_ctmc

    block = max(256, -(-n // (4 * workers)))
    slices = [slice(i, min(i + block, n)) for i in range(0, n, block)]
    if workers == 1 or len(slices) == 1:
        for sl in slices:
            fill(params, config, path_offset, sl, x, y, mu)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda sl: fill(params, config, path_offset, sl, x, y, mu),
                          slices))

    return PathBundle(x=x, y=y, z=x - y, mu=mu, dt=config.dt, seed=config.seed,
                      model="ou" if params.is_ou else "ctmc2", params=params,
                      x0=config.x0, pi0=config.pi0, path_offset=path_offset)


# --- wealth accounting ----------------------------------------------------------

@dataclass(frozen=True)
class WealthLedger:
    """Per-path wealth, weights, and trades under one strategy and cost rate.

    wealth[:, i]      post-rebalance wealth at day i (wealth[:, 0] = pi0)
    pre_wealth[:, i]  pre-rebalance wealth at day i+1, i = 0..n_steps-1
    weights[:, i]     risky weight held over [i, i+1), i = 0..n_steps-1
    delta[:, i]       shares traded at day i (0 at i = 0 and the final day)
    cost[:]           cumulative transaction cost paid per path
    bankrupt[:]       paths frozen at their last positive wealth
    """

    wealth: np.ndarray
    pre_wealth: np.ndarray
    weights: np.ndarray
    delta: np.ndarray
    cost: np.ndarray
    bankrupt: np.ndarray
    dt: float
    omega: float
    pi0: float
    x0: float
    strategy_name: str

    @property
    def n_paths(self) -> int:
        return self.wealth.shape[0]

    @property
    def n_steps(self) -> int:
        return self.wealth.shape[1] - 1

    def total_returns(self) -> np.ndarray:
        return (self.wealth[:, -1] - self.pi0) / self.pi0


def rebalance_delta(f_next, f_cur, pi_cur, x_cur, x_next, omega: float):
    """Share change moving weight f_cur -> f_next after the move x_cur -> x_next.

    Solves the self-financing pair exactly; the cost branch is picked by the
    sign of the trade itself (the numerator below), which is the unique
    sign-consistent solution. Raises LeverageCostSingularityError when the
    applicable 1 +/- omega*f_next denominator is numerically zero.
    """
    f_next = np.asarray(f_next, dtype=float)
    f_cur = np.asarray(f_cur, dtype=float)
    pi_cur = np.asarray(pi_cur, dtype=float)
    ex = np.exp(np.asarray(x_next, dtype=float) - np.asarray(x_cur, dtype=float))
    pi_pre = pi_cur * (1.0 - f_cur + f_cur * ex)
    numer = f_next * pi_pre - f_cur * pi_cur * ex
    den = np.where(numer >= 0.0, 1.0 + omega * f_next, 1.0 - omega * f_next)
    if np.any(np.abs(den) < 1e-10):
        raise LeverageCostSingularityError(
            "1 +/- omega*f_next vanished; share-change equation singular")
    return numer / (den * np.exp(np.asarray(x_next, dtype=float)))


def run_strategy(bundle: PathBundle, strategy: Strategy, omega: float,
                 force_cost_path: bool = False) -> WealthLedger:
    """Evaluate one strategy on a shared path bundle.

    Strategies receive paths, never generate them, so every strategy in an
    experiment consumes identical randomness. `force_cost_path` routes
    omega = 0 through the transaction-cost arithmetic (used to verify the
    frictionless shortcut is bit-identical).
    """
    if not (0.0 <= omega < 1.0):
        raise ValidationError([("omega", "omega_out_of_range",
                                f"omega must be in [0, 1), got {omega}")])
    if not (bundle.pi0 > 0.0):
        raise ValidationError([("pi0", "nonpositive_pi0",
                                f"initial wealth must be positive, got {bundle.pi0}")])
    n, S = bundle.n_paths, bundle.n_steps
    x, z = bundle.x, bundle.z
    pi0 = bundle.pi0

    if isinstance(strategy, BuyAndHold):
        wealth = pi0 * np.exp(x - bundle.x0)
        return WealthLedger(
            wealth=wealth, pre_wealth=wealth[:, 1:].copy(),
            weights=np.ones((n, S)), delta=np.zeros((n, S + 1)),
            cost=np.zeros(n), bankrupt=np.zeros(n, dtype=bool),
            dt=bundle.dt, omega=omega, pi0=pi0, x0=bundle.x0,
            strategy_name=strategy.name)

    wealth = np.empty((n, S + 1))
    pre_wealth = np.empty((n, S))
    weights = np.empty((n, S))
    delta = np.zeros((n, S + 1))
    cost = np.zeros(n)
    bankrupt = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    wealth[:, 0] = pi0
    weights[:, 0] = 1.0
    frictionless = omega == 0.0 and not force_cost_path

    for i in range(S):
        pi = wealth[:, i]
        f = weights[:, i]
        ex = np.exp(x[:, i + 1] - x[:, i])
        pi_pre = pi * (1.0 - f + f * ex)
        pre_wealth[:, i] = pi_pre

        if i + 1 == S:
            newly = active & (pi_pre <= 0.0)
            wealth[:, S] = np.where(newly, pi, pi_pre)
            bankrupt |= newly
            break

        t_next = (i + 1) * bundle.dt
        f_next = np.asarray(strategy.weights(t_next, z[:, i + 1]), dtype=float)
        if f_next.shape != (n,):
            f_next = np.broadcast_to(f_next, (n,)).astype(float)
        if not np.all(np.isfinite(f_next)):
            raise ValidationError([("strategy", "nonfinite_weight",
                                    f"strategy produced non-finite weights at t={t_next}")])
        f_next = np.where(active, f_next, 0.0)
        d_shares = rebalance_delta(f_next, f, pi, x[:, i], x[:, i + 1], omega)

        if frictionless:
            nxt = pi_pre
            trade_cost = None
        else:
            trade_cost = omega * np.abs(d_shares) * np.exp(x[:, i + 1])
            nxt = pi_pre - trade_cost

        newly = active & (nxt <= 0.0)
        if newly.any():
            nxt = np.where(newly, pi, nxt)
            f_next = np.where(newly, 0.0, f_next)
            d_shares = np.where(newly, 0.0, d_shares)
            bankrupt |= newly
            active &= ~newly
        wealth[:, i + 1] = nxt
        weights[:, i + 1] = f_next
        delta[:, i + 1] = d_shares
        if trade_cost is not None:
            cost += np.where(bankrupt, 0.0, trade_cost)

    return WealthLedger(wealth=wealth, pre_wealth=pre_wealth, weights=weights,
                        delta=delta, cost=cost, bankrupt=bankrupt,
                        dt=bundle.dt, omega=omega, pi0=pi0, x0=bundle.x0,
                        strategy_name=strategy.name)


def self_financing_residuals(ledger: WealthLedger, bundle: PathBundle):
    """Max relative residuals of the two rebalancing identities.

    Returns (holding residual, wealth-update residual), each the maximum
    over non-bankrupt paths and days 1..n_steps-1, relative to wealth.
    """
    ok = ~ledger.bankrupt
    if not ok.any():
        return 0.0, 0.0
    x = bundle.x[ok]
    w = ledger.wealth[ok]
    pre = ledger.pre_wealth[ok]
    f = ledger.weights[ok]
    dl = ledger.delta[ok]
    S = ledger.n_steps

    i = np.arange(0, S - 1)  # transition i -> i+1 with a rebalance at i+1
    shares_before = f[:, i] * w[:, i] / np.exp(x[:, i])
    lhs = f[:, i + 1] * w[:, i + 1]
    rhs = (shares_before + dl[:, i + 1]) * np.exp(x[:, i + 1])
    r_holding = np.max(np.abs(lhs - rhs) / np.maximum(np.abs(w[:, i + 1]), 1e-300))

    update = pre[:, i] - ledger.omega * np.abs(dl[:, i + 1]) * np.exp(x[:, i + 1])
    r_wealth = np.max(np.abs(w[:, i + 1] - update) / np.maximum(np.abs(w[:, i + 1]), 1e-300))
    r_terminal = np.max(np.abs(w[:, S] - pre[:, S - 1])
                        / np.maximum(np.abs(w[:, S]), 1e-300))
    return float(r_holding), float(max(r_wealth, r_terminal))
