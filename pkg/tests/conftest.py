import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from expma_lab import CTMC2Drift, ModelParams, OUDrift, SimConfig

# benchmark parameter set (monthly units) used throughout
BENCHMARK = dict(kappa=0.0226, mu_bar=0.0034, delta=8.2404e-4)
SIGMA1 = 0.0436
DEFAULT_SEED = 20260809


@pytest.fixture(scope="session")
def benchmark_params() -> ModelParams:
    return ModelParams(drift=OUDrift(**BENCHMARK), sigma=SIGMA1, lam=2.0)


@pytest.fixture(scope="session")
def ctmc_params() -> ModelParams:
    # the two-state example set; lam chosen off the excluded alpha+beta value
    return ModelParams(drift=CTMC2Drift(rho1=-0.2, rho2=0.3, alpha=1.0, beta=1.0),
                       sigma=0.2, lam=2.5)


@pytest.fixture(scope="session")
def ctmc_gentle_params() -> ModelParams:
    # mild leverage so daily-rebalanced wealth tracks the continuous-time
    # growth formulas inside Monte Carlo error
    return ModelParams(drift=CTMC2Drift(rho1=-0.01, rho2=0.015, alpha=1.0, beta=1.0),
                       sigma=0.05, lam=2.5)


@pytest.fixture(scope="session")
def desk_config() -> SimConfig:
    return SimConfig(horizon_months=24.0, n_paths=10_000, seed=DEFAULT_SEED)
