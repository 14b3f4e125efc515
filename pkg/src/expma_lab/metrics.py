"""Performance statistics over a wealth ledger, with Monte Carlo standard errors.

Conventions: simple returns, zero risk-free rate, daily (unannualized)
Sharpe from the pooled path-day series with sample (n-1) standard deviation.
A per-path-averaged Sharpe is carried as a secondary reading. Bankrupt
paths stay in the total-return average at their frozen value but are
excluded from the daily-return pooling. Zero return variance yields an
undefined Sharpe (None), never a number.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .models import SimConfig
from .simulate import WealthLedger


@dataclass(frozen=True)
class MetricsReport:
    """Return/Sharpe/growth summary of one (strategy, cost rate) cell."""

    total_return: float
    avg_daily_return: float
    sharpe_daily: float | None
    sharpe_per_path: float | None
    log_growth_rate: float
    se_total_return: float
    se_avg_daily_return: float
    se_sharpe: float | None
    se_log_growth: float
    n_paths: int
    n_steps: int
    n_days_pooled: int
    bankrupt_count: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def compute_metrics(ledger: WealthLedger, config: SimConfig | None = None) -> MetricsReport:
    """Summarize a ledger; `config`, when given, is cross-checked for shape."""
    n, S = ledger.n_paths, ledger.n_steps
    if n == 0 or S == 0:
        raise ValidationError([("ledger", "empty_ledger", "ledger has no paths or steps")])
    if config is not None:
        if config.n_paths != n or config.n_steps != S:
            raise ValidationError([("config", "shape_mismatch",
                                    f"config says {config.n_paths}x{config.n_steps}, "
                                    f"ledger is {n}x{S}")])

    pi0 = ledger.pi0
    total = (ledger.wealth[:, -1] - pi0) / pi0
    total_return = float(total.mean())
    se_total = float(total.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    ok = ~ledger.bankrupt
    bankrupt_count = int(ledger.bankrupt.sum())
    w_ok = ledger.wealth[ok]
    daily = w_ok[:, 1:] / w_ok[:, :-1] - 1.0
    pooled = daily.ravel()
    n_pooled = pooled.size
    if n_pooled == 0:
        raise ValidationError([("ledger", "all_bankrupt", "no non-bankrupt paths to pool")])
    avg_daily = float(pooled.mean())
    sd_pooled = float(pooled.std(ddof=1)) if n_pooled > 1 else 0.0
    se_daily = sd_pooled / math.sqrt(n_pooled) if n_pooled > 1 else 0.0

    # zero variance up to float rounding of the return arithmetic
    degenerate = sd_pooled <= abs(avg_daily) * 1e-9
    if sd_pooled > 0.0 and not degenerate:
        sharpe = avg_daily / sd_pooled
        se_sharpe = math.sqrt((1.0 + 0.5 * sharpe**2) / n_pooled)
    else:
        sharpe = None
        se_sharpe = None

    # secondary reading: Sharpe per path, then averaged
    means = daily.mean(axis=1)
    stds = daily.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_path = np.where(stds > 0.0, means / stds, np.nan)
    per_path = per_path[np.isfinite(per_path)]
    sharpe_pp = float(per_path.mean()) if per_path.size else None

    T = S * ledger.dt
    logs = np.log(ledger.wealth[:, -1] / pi0) / T
    log_growth = float(logs.mean())
    se_log = float(logs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    return MetricsReport(
        total_return=total_return,
        avg_daily_return=avg_daily,
        sharpe_daily=sharpe,
        sharpe_per_path=sharpe_pp,
        log_growth_rate=log_growth,
        se_total_return=se_total,
        se_avg_daily_return=se_daily,
        se_sharpe=se_sharpe,
        se_log_growth=se_log,
        n_paths=n,
        n_steps=S,
        n_days_pooled=n_pooled,
        bankrupt_count=bankrupt_count,
    )
