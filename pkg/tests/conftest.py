import numpy as np
import pytest

from llot.grids import Grid, AtomicPlan, marginal
from llot.presets import (
    fixture_paired_smooth,
    fixture_two_site,
    identity_fixtures,
)


@pytest.fixture(scope="session")
def two_site_fixture():
    name, grid, plan, eps_list = fixture_two_site()
    rho = marginal(plan, grid)
    return grid, plan, rho, eps_list


@pytest.fixture(scope="session")
def paired_smooth_fixture():
    name, grid, plan, eps_list = fixture_paired_smooth()
    rho = marginal(plan, grid)
    return grid, plan, rho, eps_list


@pytest.fixture(scope="session")
def all_identity_fixtures():
    out = []
    for name, grid, plan, eps_list in identity_fixtures():
        out.append((name, grid, plan, marginal(plan, grid), eps_list))
    return out
