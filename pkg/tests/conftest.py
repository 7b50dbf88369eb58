import numpy as np
import pytest

from swemg import driver, problems


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure solver work,
    not compilation."""
    p = problems.by_name("uniform-flow")
    for flux in ("hll", "llf", "roe"):
        cfg = driver.SolverConfig(flux=flux, n_coarse_levels=1, n_mg=1,
                                  max_newton_steps=2)
        driver.run_newton_mg(p, cfg, 8)
    p2 = problems.by_name("round-bump-channel")
    cfg = driver.SolverConfig(flux="hllc", n_coarse_levels=1, n_mg=1,
                              eps_init=2.0, max_newton_steps=2)
    driver.run_newton_mg(p2, cfg, (8, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
