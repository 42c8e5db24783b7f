import itertools
import math

import numpy as np
import pytest

from llot.errors import ValidationError
from llot.grids import AtomicPlan, Grid, h1_seminorm_sqrt, marginal
from llot.mollifier import BumpProfile, GridKernel, ScaledMollifier
from llot.presets import kinetic_instance
from llot.quantum import (
    MixedStateKernel,
    OrbitalSet,
    dense_kernel_matrix,
    det_square_identity,
    kernel_eval,
    kinetic_trace,
    one_particle_density,
    quadratic_form,
    slater,
    trace,
)
from llot.regularizer import build_regularized, density_of, kinetic_of_sqrt


@pytest.fixture(scope="module")
def small_state(two_site_fixture_mod):
    grid, plan, rho, eps_list = two_site_fixture_mod
    rp = build_regularized(plan, rho, eps_list[0])
    return grid, rp, MixedStateKernel(rp)


@pytest.fixture(scope="module")
def two_site_fixture_mod():
    from llot.presets import fixture_two_site
    name, grid, plan, eps_list = fixture_two_site()
    rho = marginal(plan, grid)
    return grid, plan, rho, eps_list


@pytest.fixture(scope="module")
def smooth_state():
    from llot.presets import fixture_paired_smooth
    name, grid, plan, eps_list = fixture_paired_smooth()
    rho = marginal(plan, grid)
    rp = build_regularized(plan, rho, eps_list[0])
    return grid, rp, MixedStateKernel(rp)


def orbital_set(grid, centers, eps, rho=None):
    kernel = GridKernel(ScaledMollifier(BumpProfile(1), eps), grid.h)
    return OrbitalSet(np.asarray(centers, dtype=float)[:, None], kernel, rho)


def test_slater_repeated_orbital_vanishes():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 0.5], 0.2)
    for x in ([0.4, 0.6], [0.5, 0.55], [0.45, 0.5]):
        assert slater(orbs, np.array(x)[:, None]) == 0.0


def test_slater_antisymmetry():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 1.25], 0.2)
    x = np.array([[0.4375], [1.1875]])
    swapped = x[::-1]
    assert slater(orbs, swapped) == pytest.approx(-slater(orbs, x), rel=1e-12)


def test_slater_normalization_by_quadrature():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 1.25], 0.2)
    axis = g.axis()
    total = 0.0
    for i in range(32):
        for j in range(32):
            total += slater(orbs, np.array([[axis[i]], [axis[j]]])) ** 2
    assert total * g.h**2 == pytest.approx(1.0, abs=1e-8)


def test_det_square_identity_far_configuration():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 1.25], 0.2)
    lhs, rhs = det_square_identity(orbs, np.array([[1.875], [1.9375]]))
    assert lhs == 0.0 and rhs == 0.0


def test_det_square_identity_at_centers():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 1.25], 0.2)
    lhs, rhs = det_square_identity(orbs, np.array([[0.5], [1.25]]))
    amp0 = orbs.kernel.amp_at(np.array([0.0]))
    assert lhs == pytest.approx(amp0**4, rel=1e-13)
    assert rhs == pytest.approx(amp0**4, rel=1e-13)


def test_det_square_identity_random_points():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 1.25], 0.2)
    rng = np.random.default_rng(3)
    worst = 0.0
    scale = 0.0
    for _ in range(100):
        x = np.stack([rng.uniform(0.3, 0.7, 1), rng.uniform(1.05, 1.45, 1)])
        lhs, rhs = det_square_identity(orbs, x)
        worst = max(worst, abs(lhs - rhs))
        scale = max(scale, abs(lhs))
    assert worst <= 1e-14 * max(scale, 1e-300)


def test_det_square_identity_requires_disjoint_supports():
    g = Grid.line(0.0, 1 / 16, 32)
    orbs = orbital_set(g, [0.5, 0.75], 0.2)
    with pytest.raises(ValidationError, match="disjoint supports"):
        det_square_identity(orbs, np.array([[0.5], [0.75]]))


def test_kernel_diagonal_equals_smoothed_plan(smooth_state):
    grid, rp, K = smooth_state
    rng = np.random.default_rng(11)
    worst = 0.0
    scale = 0.0
    for _ in range(200):
        a = rng.integers(rp.source.n_atoms)
        x = rp.source.configs[a] + rng.uniform(-2 * rp.eps, 2 * rp.eps, (2, 1))
        diag = kernel_eval(K, x, x)
        direct = rp.evaluate(x)
        worst = max(worst, abs(diag - direct))
        scale = max(scale, abs(direct))
    assert worst <= 1e-12 * scale


def test_kernel_vanishes_on_coincident_coordinates(small_state):
    grid, rp, K = small_state
    x = np.array([[0.25], [0.25]])
    xp = np.array([[0.25], [1.5]])
    assert kernel_eval(K, x, xp) == 0.0


def test_kernel_hermitian(smooth_state):
    grid, rp, K = smooth_state
    rng = np.random.default_rng(5)
    worst = 0.0
    scale = 0.0
    for _ in range(100):
        a, b = rng.integers(rp.source.n_atoms, size=2)
        x = rp.source.configs[a] + rng.uniform(-rp.eps, rp.eps, (2, 1))
        xp = rp.source.configs[b] + rng.uniform(-rp.eps, rp.eps, (2, 1))
        v1 = kernel_eval(K, x, xp)
        v2 = kernel_eval(K, xp, x)
        worst = max(worst, abs(v1 - v2))
        scale = max(scale, abs(v1))
    assert worst <= 1e-14 * max(scale, 1e-300)


def test_kernel_antisymmetry_is_exact(small_state):
    grid, rp, K = small_state
    x = np.array([[0.25], [1.5]])
    xp = np.array([[0.3125], [1.4375]])
    v = kernel_eval(K, x, xp)
    assert kernel_eval(K, x[::-1], xp) == -v
    assert kernel_eval(K, x, xp[::-1]) == -v
    assert kernel_eval(K, x[::-1], xp[::-1]) == v


def test_trace_is_one(all_identity_fixtures):
    for name, grid, plan, rho, eps_list in all_identity_fixtures:
        for eps in eps_list:
            rp = build_regularized(plan, rho, eps)
            assert abs(trace(MixedStateKernel(rp)) - 1.0) <= 1e-10, (name, eps)


def test_trace_single_particle():
    grid = Grid.line(0.0, 1 / 16, 32)
    plan = AtomicPlan.from_atoms([((0.5,), 0.5), ((1.0,), 0.5)], dim=1)
    rho = marginal(plan, grid)
    rp = build_regularized(plan, rho, 0.2)
    assert trace(MixedStateKernel(rp)) == pytest.approx(rho.mass(), abs=1e-12)


def test_trace_against_dense_diagonal(small_state):
    grid, rp, K = small_state
    t = rp.tensor()
    assert trace(K) == pytest.approx(t.sum() * grid.h**2, abs=1e-12)


def test_density_matches_pinned_marginal(all_identity_fixtures):
    for name, grid, plan, rho, eps_list in all_identity_fixtures:
        rp = build_regularized(plan, rho, eps_list[0])
        dens = one_particle_density(MixedStateKernel(rp))
        assert dens.l1_distance(rho) <= 1e-10, name


def test_density_matches_classical_marginal_nodewise(smooth_state):
    grid, rp, K = smooth_state
    dq = one_particle_density(K).values
    dc = density_of(rp).values
    scale = dc.max()
    assert np.abs(dq - dc).max() <= 1e-12 * scale


def test_kinetic_trace_single_particle():
    grid = Grid.line(0.0, 1 / 32, 64)
    axis = grid.axis()
    nodes = axis[(axis >= 0.5) & (axis <= 1.25)]
    w = np.cos(np.pi * (nodes - 0.875) / 0.75) ** 4
    w /= w.sum()
    plan = AtomicPlan.from_atoms([((s,), ws) for s, ws in zip(nodes, w)], dim=1)
    rho = marginal(plan, grid)
    rp = build_regularized(plan, rho, 0.2)
    analytic, quad = kinetic_trace(MixedStateKernel(rp))
    formula = h1_seminorm_sqrt(rho) + BumpProfile(1).moments()[0] / 0.2**2
    assert analytic == pytest.approx(formula, rel=1e-13)
    assert quad == pytest.approx(analytic, rel=2e-2)


def test_kinetic_trace_eps_halving_shift(smooth_state):
    grid, rp, K = smooth_state
    eps = rp.eps
    analytic_1, _ = kinetic_trace(K)
    rp2 = build_regularized(rp.source, rp.rho, eps / 2.0)
    analytic_2, _ = kinetic_trace(MixedStateKernel(rp2))
    grad_moment = BumpProfile(1).moments()[0]
    expected_shift = rp.n * 3.0 * grad_moment / eps**2
    assert analytic_2 - analytic_1 == pytest.approx(expected_shift, rel=1e-10)


def test_kinetic_trace_refinement_order_two():
    rels = []
    hs = []
    for npts, h in ((32, 1 / 16), (64, 1 / 32), (128, 1 / 64)):
        grid, plan, rho = kinetic_instance(npts, h)
        rp = build_regularized(plan, rho, 0.15)
        analytic, quad = kinetic_trace(MixedStateKernel(rp))
        rels.append(abs(analytic - quad) / analytic)
        hs.append(h)
    slope = np.polyfit(np.log(hs), np.log(rels), 1)[0]
    assert 1.8 <= slope <= 2.2
    assert rels[-1] <= 1e-3


def test_cauchy_schwarz_direction(all_identity_fixtures):
    for name, grid, plan, rho, eps_list in all_identity_fixtures:
        rp = build_regularized(plan, rho, eps_list[0])
        _, quad = kinetic_trace(MixedStateKernel(rp))
        assert kinetic_of_sqrt(rp) <= quad * 1.05, name


def test_positivity_random_vectors(small_state):
    grid, rp, K = small_state
    rng = np.random.default_rng(17)
    for _ in range(100):
        psi = rng.standard_normal((grid.n_sites,) * 2)
        val = quadratic_form(K, psi)
        assert val >= -1e-12 * float((psi * psi).sum())


def test_quadratic_form_matches_dense(small_state):
    grid, rp, K = small_state
    mat = dense_kernel_matrix(K)
    rng = np.random.default_rng(23)
    for _ in range(5):
        psi = rng.standard_normal((grid.n_sites,) * 2)
        direct = psi.ravel() @ mat @ psi.ravel() * grid.h**4
        assert quadratic_form(K, psi) == pytest.approx(direct, rel=1e-12)


def test_dense_matrix_antisymmetry(small_state):
    grid, rp, K = small_state
    mat = dense_kernel_matrix(K).reshape(32, 32, 32, 32)
    swapped = mat.transpose(1, 0, 2, 3)
    assert np.array_equal(swapped, -mat)


def test_dense_matrix_positive_semidefinite(small_state):
    grid, rp, K = small_state
    mat = dense_kernel_matrix(K)
    eigs = np.linalg.eigvalsh(mat)
    assert eigs.min() >= -1e-12 * max(eigs.max(), 1.0)
