"""Marginal-pinned smoothing of atomic symmetric plans.

Given a symmetric atomic plan P with binned one-particle marginal rho, the
smoothed plan is represented through per-coordinate transfer vectors

    T_c(x) = rho(x) * sum_z kappa(x - z) kappa(z - c) / (rho * kappa)(z) * h^d

one per distinct atom-coordinate node c, where kappa is the renormalized
squared mollifier kernel on the grid.  The smoothed plan is then

    P_eps(x_1, ..., x_n) = sum_atoms w * prod_k T_{c(atom,k)}(x_k),

a probability density on the n-fold tensor grid.  Because kappa has unit
discrete mass and atoms sit on nodes, the one-particle marginal of P_eps
equals rho exactly (up to float rounding), for every eps.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional

import numpy as np
from scipy import signal

from .errors import ValidationError
from .grids import (
    AtomicPlan,
    Grid,
    GridDensity,
    h1_seminorm_sqrt,
    is_symmetric,
    l1_gradient,
    marginal,
    separation,
    snap_to_grid,
)
from .mollifier import BumpProfile, GridKernel, ScaledMollifier, convolve_sq

DENOM_FLOOR = 1e-300
MAX_TENSOR_ENTRIES = 1 << 22


class Observable:
    """Symmetric configuration functional with first and second derivatives.

    Subclasses evaluate on batches of configurations of shape (m, n, dim).
    """

    def value_many(self, configs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_many(self, configs: np.ndarray, j: int) -> np.ndarray:
        """Gradient block d/dx_j, shape (m, dim)."""
        raise NotImplementedError

    def hess_many(self, configs: np.ndarray, j: int, k: int) -> np.ndarray:
        """Second-derivative block d^2/dx_j dx_k, shape (m, dim, dim)."""
        raise NotImplementedError

    def value(self, config) -> float:
        return float(self.value_many(np.asarray(config, dtype=float)[None])[0])


class CoulombPair(Observable):
    """Pairwise repulsion sum_{j<k} 1/|x_j - x_k|; +inf on coincidence."""

    def value_many(self, configs):
        configs = np.asarray(configs, dtype=float)
        m, n, _ = configs.shape
        out = np.zeros(m)
        for j in range(n):
            for k in range(j + 1, n):
                r = np.sqrt(((configs[:, j] - configs[:, k]) ** 2).sum(-1))
                with np.errstate(divide="ignore"):
                    out += np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), np.inf)
        return out

    def grad_many(self, configs, j):
        configs = np.asarray(configs, dtype=float)
        m, n, d = configs.shape
        out = np.zeros((m, d))
        for k in range(n):
            if k == j:
                continue
            u = configs[:, j] - configs[:, k]
            r = np.sqrt((u * u).sum(-1))
            out -= u / r[:, None] ** 3
        return out

    def hess_many(self, configs, j, k):
        configs = np.asarray(configs, dtype=float)
        m, n, d = configs.shape
        eye = np.eye(d)
        out = np.zeros((m, d, d))
        if j == k:
            for l in range(n):
                if l == j:
                    continue
                u = configs[:, j] - configs[:, l]
                r = np.sqrt((u * u).sum(-1))[:, None, None]
                out += -eye / r**3 + 3.0 * u[:, :, None] * u[:, None, :] / r**5
        else:
            u = configs[:, j] - configs[:, k]
            r = np.sqrt((u * u).sum(-1))[:, None, None]
            out = eye / r**3 - 3.0 * u[:, :, None] * u[:, None, :] / r**5
        return out


class SingleParticleSum(Observable):
    """sum_j phi(x_j) for a scalar phi with supplied derivatives.

    ``phi``, ``dphi``, ``d2phi`` act on coordinate arrays of shape (m, dim).
    """

    def __init__(self, phi: Callable, dphi: Callable, d2phi: Callable):
        self.phi = phi
        self.dphi = dphi
        self.d2phi = d2phi

    def value_many(self, configs):
        configs = np.asarray(configs, dtype=float)
        return sum(np.asarray(self.phi(configs[:, j]), dtype=float)
                   for j in range(configs.shape[1]))

    def grad_many(self, configs, j):
        configs = np.asarray(configs, dtype=float)
        g = np.asarray(self.dphi(configs[:, j]), dtype=float)
        return g.reshape(configs.shape[0], configs.shape[2])

    def hess_many(self, configs, j, k):
        configs = np.asarray(configs, dtype=float)
        m, _, d = configs.shape
        if j != k:
            return np.zeros((m, d, d))
        hs = np.asarray(self.d2phi(configs[:, j]), dtype=float)
        return hs.reshape(m, d, d)


class Constant(Observable):
    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def value_many(self, configs):
        return np.full(np.asarray(configs).shape[0], self.c)

    def grad_many(self, configs, j):
        m, _, d = np.asarray(configs).shape
        return np.zeros((m, d))

    def hess_many(self, configs, j, k):
        m, _, d = np.asarray(configs).shape
        return np.zeros((m, d, d))


class SmoothedPlan:
    """Plain mollification Q_eps of an atomic plan (no marginal correction).

    Q_eps(z_1,...,z_n) = sum_atoms w * prod_k kappa(z_k - y_k); its marginal
    is rho * kappa, the denominator of the pinned construction.
    """

    def __init__(self, source: AtomicPlan, m: ScaledMollifier, grid: Grid):
        self.source = snap_to_grid(source, grid)
        self.m = m
        self.grid = grid
        self.kernel = GridKernel(m, grid.h)

    def evaluate(self, config) -> float:
        config = np.asarray(config, dtype=float).reshape(self.source.n, self.source.dim)
        total = 0.0
        for atom, w in zip(self.source.configs, self.source.weights):
            prod = w
            for k in range(self.source.n):
                node = self.grid.node(self.grid.index_of(config[k]))
                prod *= float(self.kernel.amp_at(node - atom[k]) ** 2)
                if prod == 0.0:
                    break
            total += prod
        return total

    def density(self) -> GridDensity:
        values = np.zeros(self.grid.shape)
        cube_idx = self.kernel.offsets
        for atom, w in zip(self.source.configs, self.source.weights):
            for k in range(self.source.n):
                c = np.array(self.grid.index_of(atom[k]))
                for o, v in zip(cube_idx, self.kernel.sq):
                    z = tuple(c + o)
                    if self.grid.contains_index(z):
                        values[z] += w / self.source.n * v
        return GridDensity(self.grid, values)


class RegularizedPlan:
    """Evaluator for the marginal-pinned smoothing of an atomic plan."""

    def __init__(self, source: AtomicPlan, rho: GridDensity,
                 m: ScaledMollifier, kernel: GridKernel, denom: GridDensity,
                 alpha: float, centers: list, center_of: np.ndarray,
                 transfer: np.ndarray, windows: list):
        self.source = source
        self.rho = rho
        self.m = m
        self.kernel = kernel
        self.denom = denom
        self.alpha = alpha
        self.centers = centers          # list of multi-index tuples
        self.center_of = center_of      # (n_atoms, n) -> row of `transfer`
        self.transfer = transfer        # (n_centers, n_sites) flat T vectors
        self.windows = windows          # per center: (flat z idx, kappa, q)

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def eps(self) -> float:
        return self.m.eps

    def evaluate(self, config) -> float:
        """P_eps at a configuration (coordinates snapped to nearest nodes)."""
        config = np.asarray(config, dtype=float).reshape(self.n, self.source.dim)
        sites = [self.grid.flat_index_of(config[k]) for k in range(self.n)]
        total = 0.0
        for a in range(self.source.n_atoms):
            prod = self.source.weights[a]
            for k in range(self.n):
                prod *= self.transfer[self.center_of[a, k], sites[k]]
                if prod == 0.0:
                    break
            total += prod
        return float(total)

    def tensor(self, max_entries: int = MAX_TENSOR_ENTRIES) -> np.ndarray:
        """Dense density on the n-fold tensor grid, shape grid.shape * n."""
        s = self.grid.n_sites
        if s**self.n > max_entries:
            raise ValidationError(
                f"tensor grid of {s}^{self.n} = {s**self.n} entries exceeds "
                f"the {max_entries} limit"
            )
        flat = np.zeros((s,) * self.n)
        for a in range(self.source.n_atoms):
            vecs = [self.transfer[self.center_of[a, k]] for k in range(self.n)]
            term = self.source.weights[a]
            for k, v in enumerate(vecs):
                shape = [1] * self.n
                shape[k] = s
                term = term * v.reshape(shape)
            flat += term
        return flat.reshape(self.grid.shape * self.n)

    def mass(self) -> float:
        cell = self.grid.cell_volume
        total = 0.0
        for a in range(self.source.n_atoms):
            prod = self.source.weights[a]
            for k in range(self.n):
                prod *= self.transfer[self.center_of[a, k]].sum() * cell
            total += prod
        return float(total)

    def density(self) -> GridDensity:
        """One-particle marginal of P_eps (coordinate-averaged)."""
        cell = self.grid.cell_volume
        acc = np.zeros(self.grid.n_sites)
        for a in range(self.source.n_atoms):
            w = self.source.weights[a]
            masses = [self.transfer[self.center_of[a, k]].sum() * cell
                      for k in range(self.n)]
            for k in range(self.n):
                others = 1.0
                for l in range(self.n):
                    if l != k:
                        others *= masses[l]
                acc += (w / self.n) * others * self.transfer[self.center_of[a, k]]
        return GridDensity(self.grid, acc.reshape(self.grid.shape))


def build_regularized(plan: AtomicPlan, rho: GridDensity, eps: float,
                      profile: Optional[BumpProfile] = None,
                      marginal_tol: float = 1e-8) -> RegularizedPlan:
    """Construct the marginal-pinned smoothing evaluator.

    Validates that the plan is symmetric and node-supported, that ``eps`` is
    below a quarter of the plan separation, that ``rho`` is the binned
    marginal of the plan, and that the support keeps a kernel radius of
    margin from the grid boundary (required for the exact identities).
    """
    grid = rho.grid
    plan = snap_to_grid(plan, grid, max_shift=grid.h)
    if not is_symmetric(plan, tol=1e-9):
        raise ValidationError("plan is not permutation symmetric; symmetrize it first")
    if plan.n >= 2:
        alpha = separation(plan).alpha
        if not eps < alpha / 4.0:
            raise ValidationError(
                f"mollifier too wide for separation {alpha:.6g}: "
                f"eps must be below {alpha / 4.0:.6g}, got {eps:.6g}"
            )
    else:
        alpha = math.inf
    binned = marginal(plan, grid)
    if binned.l1_distance(rho) > marginal_tol:
        raise ValidationError(
            f"rho differs from the binned plan marginal by "
            f"{binned.l1_distance(rho):.3g} in L1 (tolerance {marginal_tol:g})"
        )
    profile = profile or BumpProfile(grid.dim)
    m = ScaledMollifier(profile, float(eps))
    kernel = GridKernel(m, grid.h)

    support_idx = np.argwhere(rho.values > 0)
    lo = support_idx.min(axis=0)
    hi = support_idx.max(axis=0)
    if np.any(lo < kernel.halfwidth) or np.any(hi > grid.npts - 1 - kernel.halfwidth):
        raise ValidationError(
            "density support too close to the grid boundary for this eps; "
            "enlarge the grid or shrink eps"
        )

    denom = convolve_sq(rho, m)

    centers: list = []
    center_index: dict = {}
    center_of = np.empty((plan.n_atoms, plan.n), dtype=int)
    for a in range(plan.n_atoms):
        for k in range(plan.n):
            c = grid.index_of(plan.configs[a, k])
            if c not in center_index:
                center_index[c] = len(centers)
                centers.append(c)
            center_of[a, k] = center_index[c]

    cell = grid.cell_volume
    cube = kernel.sq_cube()
    denom_vals = denom.values
    transfer = np.empty((len(centers), grid.n_sites))
    windows = []
    for ci, c in enumerate(centers):
        u = np.zeros(grid.shape)
        flat_idx = []
        kap = []
        q = []
        for o, v in zip(kernel.offsets, kernel.sq):
            z = tuple(np.array(c) + o)
            if not grid.contains_index(z):
                raise ValidationError(
                    "density support too close to the grid boundary for this eps"
                )
            dz = denom_vals[z]
            if dz <= DENOM_FLOOR:
                if v > 0:
                    raise ValidationError("density vanishes near plan support")
                continue
            u[z] = v / dz
            flat_idx.append(np.ravel_multi_index(z, grid.shape))
            kap.append(v)
            q.append(v / dz)
        spread = signal.convolve(u, cube, mode="same", method="direct")
        transfer[ci] = (rho.values * spread * cell).ravel()
        windows.append((np.array(flat_idx, dtype=int), np.array(kap), np.array(q)))

    return RegularizedPlan(plan, rho, m, kernel, denom, alpha,
                           centers, center_of, transfer, windows)


def density_of(rp: RegularizedPlan) -> GridDensity:
    """One-particle marginal of the smoothed plan; equals rho to rounding."""
    return rp.density()


def kinetic_of_sqrt(rp: RegularizedPlan, max_entries: int = MAX_TENSOR_ENTRIES) -> float:
    """Dirichlet energy of sqrt(P_eps) on the n-fold tensor grid."""
    t = rp.tensor(max_entries=max_entries)
    g = np.sqrt(t)
    h = rp.grid.h
    total = 0.0
    for axis in range(g.ndim):
        d = np.gradient(g, h, axis=axis, edge_order=2)
        total += (d * d).sum()
    return float(total * rp.grid.cell_volume**rp.n)


def integrate_observable(rp: RegularizedPlan, obs: Observable,
                         max_entries: int = MAX_TENSOR_ENTRIES) -> float:
    """Integral of a symmetric observable against the smoothed plan.

    Evaluated on the support of the tensor density only, so costs that blow
    up on coincidence points (Coulomb) are never touched where P_eps = 0.
    """
    t = rp.tensor(max_entries=max_entries).ravel()
    s = rp.grid.n_sites
    nz = np.nonzero(t)[0]
    if nz.size == 0:
        return 0.0
    pts = rp.grid.points()
    site_idx = np.unravel_index(nz, (s,) * rp.n)
    configs = np.stack([pts[i] for i in site_idx], axis=1)
    vals = obs.value_many(configs)
    return float((vals * t[nz]).sum() * rp.grid.cell_volume**rp.n)


def integrate_plan(plan: AtomicPlan, obs: Observable) -> float:
    """Integral of an observable against an atomic plan (finite sum)."""
    return float((obs.value_many(plan.configs) * plan.weights).sum())


def _support_region_configs(rp: RegularizedPlan, reach: float,
                            max_axis_samples: int = 25) -> np.ndarray:
    """Grid configurations within ``reach`` of some atom, intersected with
    the separated region (pairwise distances >= alpha - 4 eps).

    Boxes around distinct atoms are sampled with a per-axis stride keeping
    about ``max_axis_samples`` nodes per coordinate, deduplicated across
    atoms; the atom configurations themselves are always included.
    """
    grid = rp.grid
    pts = grid.points()
    span = int(math.ceil(reach / grid.h))
    stride = max(1, int(math.ceil((2 * span + 1) / max_axis_samples)))
    lower = max(rp.alpha - 4.0 * rp.eps, 0.0) if np.isfinite(rp.alpha) else 0.0
    seen_boxes = set()
    blocks = []
    for a in range(rp.source.n_atoms):
        key = tuple(rp.center_of[a])
        if key in seen_boxes:
            continue
        seen_boxes.add(key)
        axes = []
        for k in range(rp.n):
            c = np.array(rp.centers[rp.center_of[a, k]])
            lo = np.maximum(c - span, 0)
            hi = np.minimum(c + span, grid.npts - 1)
            ranges = [np.unique(np.concatenate([np.arange(l, hh + 1, stride), [hh]]))
                      for l, hh in zip(lo, hi)]
            mesh = np.meshgrid(*ranges, indexing="ij")
            flat = np.ravel_multi_index([mm.ravel() for mm in mesh], grid.shape)
            axes.append(flat)
        mesh = np.meshgrid(*axes, indexing="ij")
        tuples = np.stack([mm.ravel() for mm in mesh], axis=1)
        blocks.append(tuples)
    tuples = np.unique(np.concatenate(blocks, axis=0), axis=0)
    configs = pts[tuples]  # (m, n, dim)
    atom_cfgs = rp.source.configs
    configs = np.concatenate([configs, atom_cfgs], axis=0)
    if rp.n >= 2 and configs.size:
        keep = np.ones(configs.shape[0], dtype=bool)
        for j in range(rp.n):
            for k in range(j + 1, rp.n):
                r = np.sqrt(((configs[:, j] - configs[:, k]) ** 2).sum(-1))
                keep &= r >= lower - 1e-12
        configs = configs[keep]
    return configs


def potential_error(rp: RegularizedPlan, obs: Observable,
                    max_entries: int = MAX_TENSOR_ENTRIES) -> tuple:
    """Measured smoothing error of an observable and its a priori bound.

    Returns ``(lhs, bound)`` with ``lhs = |int obs dP_eps - int obs dP|`` and

        bound = eps^2 * ( sum_j sup|grad_j obs| * int|grad rho| * M2
                          + 2 * sum_{j,k} sup|hess_{jk} obs| ),

    where M2 is the second moment of the squared profile and the sup norms
    are taken over a dense sample of the separated region near the plan
    support (the observable need not be bounded globally).
    """
    lhs = abs(integrate_observable(rp, obs, max_entries=max_entries)
              - integrate_plan(rp.source, obs))
    region = _support_region_configs(rp, reach=4.0 * rp.eps)
    if region.size == 0:
        region = rp.source.configs
    l1g = l1_gradient(rp.rho)
    m2 = rp.m.base.moments()[1]
    grad_sum = 0.0
    hess_sum = 0.0
    for j in range(rp.n):
        g = obs.grad_many(region, j)
        grad_sum += float(np.sqrt((g * g).sum(-1)).max())
        for k in range(rp.n):
            hmat = obs.hess_many(region, j, k)
            norms = np.linalg.norm(hmat, ord=2, axis=(1, 2))
            hess_sum += float(norms.max())
    bound = rp.eps**2 * (grad_sum * l1g * m2 + 2.0 * hess_sum)
    return float(lhs), float(bound)
