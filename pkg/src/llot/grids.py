"""Uniform grids, discrete densities, and atomic symmetric plans.

Conventions used throughout the package:

* A grid node is ``origin + i * h`` componentwise, ``i`` a multi-index with
  ``0 <= i_k < npts``.  All axes share the same spacing and point count.
* A :class:`GridDensity` stores *density values* (not masses); the quadrature
  mass of a region is ``sum(values) * h**dim``.
* An :class:`AtomicPlan` is a finitely supported symmetric probability on
  configuration space: a list of ``(X, w)`` with ``X`` an ``(n, dim)`` array
  of particle positions and ``w > 0`` summing to one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError

MASS_TOL = 1e-10
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid in ``dim`` dimensions."""

    dim: int
    origin: np.ndarray
    h: float
    npts: int

    def __post_init__(self):
        if self.h <= 0:
            raise ValidationError("grid spacing must be positive")
        if self.npts < 2:
            raise ValidationError("grid needs at least 2 points per axis")
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        if origin.shape != (self.dim,):
            raise ValidationError(f"origin must have shape ({self.dim},)")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def line(cls, start: float, h: float, npts: int) -> "Grid":
        """One-dimensional grid starting at ``start``."""
        return cls(dim=1, origin=np.array([start]), h=float(h), npts=int(npts))

    @property
    def shape(self) -> tuple:
        return (self.npts,) * self.dim

    @property
    def n_sites(self) -> int:
        return self.npts**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis(self, k: int = 0) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.npts)

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(n_sites, dim)``, C-order."""
        axes = [self.axis(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def index_of(self, x) -> tuple:
        """Multi-index of the node nearest to ``x`` (clipped to the grid)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x - self.origin) / self.h).astype(int)
        idx = np.clip(idx, 0, self.npts - 1)
        return tuple(int(i) for i in idx)

    def flat_index_of(self, x) -> int:
        return int(np.ravel_multi_index(self.index_of(x), self.shape))

    def node(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, dtype=float)

    def contains_index(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < self.npts))


@dataclass
class GridDensity:
    """Nonnegative density sampled on a grid.

    ``mass_convention`` is ``"probability"`` (mass 1) or ``"particle_number"``
    (mass equal to ``n_particles``).  All internal computations use the
    probability convention; mass-N inputs are rescaled at the file boundary.
    Derived grid fields (smoothed denominators, boundary-truncated
    convolutions) use ``"free"``, which skips the mass check.
    """

    grid: Grid
    values: np.ndarray
    mass_convention: str = "probability"
    n_particles: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if np.any(values < 0):
            raise ValidationError("density values must be nonnegative")
        self.values = values
        if self.mass_convention not in ("probability", "particle_number", "free"):
            raise ValidationError(f"unknown mass convention {self.mass_convention!r}")
        if self.mass_convention == "free":
            return
        target = 1.0 if self.mass_convention == "probability" else float(self.n_particles)
        if abs(self.mass() - target) > MASS_TOL * max(1.0, target):
            raise ValidationError(
                f"density mass {self.mass():.12g} differs from {target} "
                f"beyond {MASS_TOL:g}"
            )

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def to_probability(self) -> "GridDensity":
        if self.mass_convention == "probability":
            return self
        return GridDensity(self.grid, self.values / self.n_particles, "probability")

    def l1_distance(self, other: "GridDensity") -> float:
        return float(np.abs(self.values - other.values).sum() * self.grid.cell_volume)


def density_from_values(grid: Grid, raw, convention: str = "probability",
                        n_particles: int = 1, normalize: bool = False) -> GridDensity:
    """Build a density, optionally rescaling ``raw`` to unit mass first."""
    raw = np.asarray(raw, dtype=float).reshape(grid.shape)
    if normalize:
        total = raw.sum() * grid.cell_volume
        if total <= 0:
            raise ValidationError("cannot normalize a density with zero mass")
        raw = raw / total
    return GridDensity(grid, raw, convention, n_particles)


@dataclass
class AtomicPlan:
    """Finitely supported symmetric ``n``-particle probability measure."""

    n: int
    dim: int
    configs: np.ndarray  # (m, n, dim)
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        configs = np.asarray(self.configs, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if configs.ndim != 3 or configs.shape[1:] != (self.n, self.dim):
            raise ValidationError(f"configs must have shape (m, {self.n}, {self.dim})")
        if weights.shape != (configs.shape[0],):
            raise ValidationError("weights must match configs")
        if configs.shape[0] == 0:
            raise ValidationError("empty measure")
        if np.any(weights <= 0):
            raise ValidationError("atom weights must be positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(
                f"atom weights sum to {weights.sum():.15g}, expected 1"
            )
        self.configs = configs
        self.weights = weights

    @classmethod
    def from_atoms(cls, atoms, dim: Optional[int] = None) -> "AtomicPlan":
        """Build from ``[(config, weight), ...]``; configs of shape (n,) mean dim=1."""
        if not atoms:
            raise ValidationError("empty measure")
        first = np.atleast_2d(np.asarray(atoms[0][0], dtype=float))
        if dim is None:
            dim = first.shape[-1] if np.asarray(atoms[0][0]).ndim > 1 else 1
        configs = []
        weights = []
        for x, w in atoms:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x[:, None] if dim == 1 else x.reshape(-1, dim)
            configs.append(x)
            weights.append(float(w))
        configs = np.stack(configs)
        return cls(n=configs.shape[1], dim=dim, configs=configs,
                   weights=np.asarray(weights))

    @property
    def n_atoms(self) -> int:
        return self.configs.shape[0]

    def sorted_copy(self) -> "AtomicPlan":
        """Atoms reordered by lexicographic configuration; for determinism."""
        keys = [tuple(c.ravel()) for c in self.configs]
        order = sorted(range(self.n_atoms), key=lambda i: keys[i])
        return AtomicPlan(self.n, self.dim, self.configs[order], self.weights[order])


@dataclass
class SeparationReport:
    """Minimum pairwise particle distance over all atoms of a plan."""

    alpha: float
    violating_atom: Optional[np.ndarray] = None


def _config_key(config: np.ndarray) -> bytes:
    return np.ascontiguousarray(config).tobytes()


def symmetrize(plan: AtomicPlan) -> AtomicPlan:
    """Average atom weights over all coordinate permutations.

    The result assigns each configuration the mean of the input weights of
    its n! permuted copies, so the output is permutation invariant and total
    mass is preserved exactly.  Idempotent.
    """
    perms = list(itertools.permutations(range(plan.n)))
    merged: dict = {}
    for config, w in zip(plan.configs, plan.weights):
        share = w / len(perms)
        for perm in perms:
            permuted = config[list(perm)]
            key = _config_key(permuted)
            if key in merged:
                merged[key][1] += share
            else:
                merged[key] = [permuted, share]
    items = sorted(merged.items(), key=lambda kv: kv[0])
    configs = np.stack([v[0] for _, v in items])
    weights = np.array([v[1] for _, v in items])
    weights = weights / weights.sum()
    return AtomicPlan(plan.n, plan.dim, configs, weights)


def is_symmetric(plan: AtomicPlan, tol: float = 1e-12) -> bool:
    """Whether every permutation of every atom carries the same weight."""
    table = {}
    for config, w in zip(plan.configs, plan.weights):
        table[_config_key(config)] = table.get(_config_key(config), 0.0) + w
    for config, w in zip(plan.configs, plan.weights):
        total = table[_config_key(config)]
        for perm in itertools.permutations(range(plan.n)):
            key = _config_key(config[list(perm)])
            if key not in table or abs(table[key] - total) > tol:
                return False
    return True


def separation(plan: AtomicPlan) -> SeparationReport:
    """Exact minimum pairwise distance |x_i - x_j| over atoms and pairs i != j."""
    if plan.n < 2:
        raise ValidationError("separation undefined for single particle")
    best = np.inf
    worst_atom = None
    for config in plan.configs:
        diff = config[:, None, :] - config[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        iu = np.triu_indices(plan.n, k=1)
        m = dist[iu].min()
        if m < best:
            best = m
            worst_atom = config
    report = SeparationReport(alpha=float(best))
    if best == 0.0:
        report.violating_atom = worst_atom
    return report


def snap_to_grid(plan: AtomicPlan, grid: Grid, max_shift: Optional[float] = None) -> AtomicPlan:
    """Move every atom coordinate to its nearest grid node.

    The exact marginal and trace identities of the smoothing constructions
    hold only for node-supported plans, so plans are snapped on entry.
    """
    snapped = np.empty_like(plan.configs)
    shift = 0.0
    for a in range(plan.n_atoms):
        for k in range(plan.n):
            idx = grid.index_of(plan.configs[a, k])
            node = grid.node(idx)
            shift = max(shift, float(np.max(np.abs(node - plan.configs[a, k]))))
            snapped[a, k] = node
    if max_shift is not None and shift > max_shift:
        raise ValidationError(
            f"atom coordinates are {shift:.3g} away from the nearest node, "
            f"more than the allowed {max_shift:.3g}"
        )
    merged: dict = {}
    for config, w in zip(snapped, plan.weights):
        key = _config_key(config)
        if key in merged:
            merged[key][1] += w
        else:
            merged[key] = [config, float(w)]
    items = sorted(merged.items(), key=lambda kv: kv[0])
    configs = np.stack([v[0] for _, v in items])
    weights = np.array([v[1] for _, v in items])
    return AtomicPlan(plan.n, plan.dim, configs, weights)


def marginal(plan: AtomicPlan, grid: Grid, bandwidth: float = 0.0) -> GridDensity:
    """One-particle marginal of a symmetric plan, binned to grid nodes.

    Each atom spreads weight ``w / n`` onto the nearest node of each of its
    ``n`` coordinates.  With ``bandwidth > 0`` the binned marginal is
    convolved with the squared mollifier kernel of that width (plotting aid
    only; the exact identities use the raw binned marginal).
    """
    if plan.n_atoms == 0:
        raise ValidationError("empty measure")
    if bandwidth < 0:
        raise ValidationError("bandwidth must be nonnegative")
    values = np.zeros(grid.shape)
    cell = grid.cell_volume
    for config, w in zip(plan.configs, plan.weights):
        for k in range(plan.n):
            values[grid.index_of(config[k])] += w / (plan.n * cell)
    rho = GridDensity(grid, values)
    if bandwidth > 0:
        from .mollifier import BumpProfile, ScaledMollifier, convolve_sq

        m = ScaledMollifier(BumpProfile(grid.dim), bandwidth)
        rho = convolve_sq(rho, m)
    return rho


def h1_seminorm_sqrt(rho: GridDensity) -> float:
    """Dirichlet energy of sqrt(rho): quadrature of |grad sqrt(rho)|^2.

    The square root is taken before differencing; central differences in the
    interior, second-order one-sided at array edges.  Second-order accurate
    for smooth densities bounded away from zero on their support interior.
    """
    g = np.sqrt(rho.values)
    h = rho.grid.h
    total = np.zeros_like(g)
    for axis in range(rho.grid.dim):
        d = np.gradient(g, h, axis=axis, edge_order=2)
        total += d * d
    return float(total.sum() * rho.grid.cell_volume)


def l1_gradient(rho: GridDensity) -> float:
    """Quadrature of |grad rho| (sum of finite-difference gradient norms)."""
    h = rho.grid.h
    sq = np.zeros_like(rho.values)
    for axis in range(rho.grid.dim):
        d = np.gradient(rho.values, h, axis=axis, edge_order=2)
        sq += d * d
    return float(np.sqrt(sq).sum() * rho.grid.cell_volume)
