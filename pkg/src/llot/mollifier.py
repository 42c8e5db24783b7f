"""The radial bump profile, its scaled family, and grid convolution.

The continuum profile is ``chi(x) = c * exp(-1/(1-|x|^2))`` inside the unit
ball and 0 outside, with ``c`` fixed once per dimension so that the squared
profile integrates to one.  The scaled family is
``chi_eps(x) = eps**(-d/2) * chi(x/eps)``, supported in the ball of radius
``eps`` and still normalized in the squared sense.

For grid work the squared kernel is *resampled and renormalized*: the values
of ``chi_eps**2`` on the offset lattice are divided by their own quadrature
sum, so the discrete kernel has unit mass exactly.  Every downstream identity
(marginal pinning, unit trace) is exact in floating point because of this.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import NumericalError, ValidationError
from .grids import Grid, GridDensity

QUAD_TOL = 1e-9


def unit_sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 for dim=1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _raw_profile(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    return out


def _raw_profile_deriv(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    one = 1.0 - ri * ri
    out[inside] = np.exp(-1.0 / one) * (-2.0 * ri / one**2)
    return out


@lru_cache(maxsize=8)
def _normalization(dim: int) -> float:
    area = unit_sphere_area(dim)
    val, err = integrate.quad(
        lambda r: _raw_profile(r) ** 2 * r ** (dim - 1), 0.0, 1.0,
        epsabs=1e-14, epsrel=1e-13, limit=200,
    )
    if err > QUAD_TOL:
        raise NumericalError(f"profile normalization quadrature reached only {err:.2e}")
    return 1.0 / math.sqrt(area * val)


@lru_cache(maxsize=8)
def _moments(dim: int) -> tuple:
    profile = BumpProfile(dim)
    area = unit_sphere_area(dim)
    g, g_err = integrate.quad(
        lambda r: profile.radial_deriv(r) ** 2 * r ** (dim - 1), 0.0, 1.0,
        epsabs=1e-13, epsrel=1e-12, limit=200,
    )
    s, s_err = integrate.quad(
        lambda r: r * r * profile.radial(r) ** 2 * r ** (dim - 1), 0.0, 1.0,
        epsabs=1e-13, epsrel=1e-12, limit=200,
    )
    if area * g_err > QUAD_TOL or area * s_err > QUAD_TOL:
        raise NumericalError(
            f"moment quadrature reached only {max(g_err, s_err):.2e}"
        )
    return area * g, area * s


@dataclass(frozen=True)
class BumpProfile:
    """Radial bump with support in the unit ball and unit squared mass."""

    dim: int = 1

    @property
    def c(self) -> float:
        return _normalization(self.dim)

    def radial(self, r):
        """Profile value as a function of the radius."""
        return self.c * _raw_profile(r)

    def radial_deriv(self, r):
        return self.c * _raw_profile_deriv(r)

    def __call__(self, x):
        """Evaluate at points; ``x`` is (..., dim) or scalar radii for dim 1."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            r = np.abs(x)
        else:
            r = np.sqrt((x * x).sum(axis=-1))
        return self.radial(r)

    def moments(self) -> tuple:
        """(integral of |grad chi|^2, integral of |u|^2 chi(u)^2).

        Both by adaptive quadrature with absolute error below 1e-9; raises
        :class:`NumericalError` if the quadrature cannot certify that.
        Cached per dimension.
        """
        return _moments(self.dim)


@dataclass(frozen=True)
class ScaledMollifier:
    """``chi_eps(x) = eps**(-d/2) chi(x/eps)``, support radius eps."""

    base: BumpProfile
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError("mollifier width must be positive")

    @property
    def dim(self) -> int:
        return self.base.dim

    def __call__(self, x):
        scale = self.eps ** (-self.dim / 2.0)
        return scale * self.base(np.asarray(x, dtype=float) / self.eps)

    def radial(self, r):
        scale = self.eps ** (-self.dim / 2.0)
        return scale * self.base.radial(np.asarray(r, dtype=float) / self.eps)

    def radial_deriv(self, r):
        scale = self.eps ** (-self.dim / 2.0 - 1.0)
        return scale * self.base.radial_deriv(np.asarray(r, dtype=float) / self.eps)

    def grad_sq_moment(self) -> float:
        return self.base.moments()[0] / self.eps**2

    def second_moment(self) -> float:
        return self.base.moments()[1] * self.eps**2


def eval_chi(m: ScaledMollifier, x):
    """Pointwise chi_eps; exactly zero for |x| >= eps."""
    return m(x)


class GridKernel:
    """``chi_eps`` resampled on the offset lattice of a grid and renormalized.

    ``offsets`` are the integer lattice vectors ``o`` with ``|o*h| < eps``;
    ``amp[o]`` is the renormalized amplitude with ``sum(amp**2) * h**d == 1``
    and ``sq = amp**2`` the unit-mass squared kernel used for smoothing.
    """

    def __init__(self, m: ScaledMollifier, h: float):
        if h <= 0:
            raise ValidationError("grid spacing must be positive")
        if m.eps < h:
            raise ValidationError("kernel unresolved")
        self.m = m
        self.h = float(h)
        self.dim = m.dim
        reach = int(math.ceil(m.eps / h))
        rng = range(-reach, reach + 1)
        offsets = [
            o for o in itertools.product(rng, repeat=self.dim)
            if math.sqrt(sum(v * v for v in o)) * h < m.eps
        ]
        self.offsets = np.array(offsets, dtype=int)
        self.halfwidth = int(np.abs(self.offsets).max())
        radii = np.sqrt((self.offsets.astype(float) ** 2).sum(axis=1)) * h
        raw = m.radial(radii)
        norm = (raw**2).sum() * h**self.dim
        if norm <= 0:
            raise ValidationError("kernel unresolved")
        self.norm = float(norm)
        self.amp = raw / math.sqrt(norm)
        self.sq = self.amp**2

    def amp_at(self, u):
        """Renormalized amplitude at arbitrary displacements ``u``."""
        u = np.asarray(u, dtype=float)
        if self.dim == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            r = np.abs(u)
        else:
            r = np.sqrt((u * u).sum(axis=-1))
        return self.m.radial(r) / math.sqrt(self.norm)

    def amp_deriv_at(self, r):
        """Radial derivative of the renormalized amplitude."""
        return self.m.radial_deriv(r) / math.sqrt(self.norm)

    def sq_cube(self) -> np.ndarray:
        """Dense ``(2k+1,)*dim`` array of the squared kernel (zeros off-ball)."""
        side = 2 * self.halfwidth + 1
        cube = np.zeros((side,) * self.dim)
        for o, v in zip(self.offsets, self.sq):
            cube[tuple(o + self.halfwidth)] = v
        return cube

    def discrete_grad_sq(self) -> float:
        """Offset-lattice quadrature of |grad amp|^2 (radial derivative)."""
        radii = np.sqrt((self.offsets.astype(float) ** 2).sum(axis=1)) * self.h
        d = self.amp_deriv_at(radii)
        return float((d * d).sum() * self.h**self.dim)


def convolve_sq(rho: GridDensity, m: ScaledMollifier) -> GridDensity:
    """``rho`` convolved with the renormalized squared kernel of ``m``.

    Mass is preserved to machine precision whenever the support of ``rho``
    keeps a kernel radius of margin from the grid boundary.
    """
    from scipy import signal

    kernel = GridKernel(m, rho.grid.h)
    cube = kernel.sq_cube() * rho.grid.cell_volume
    # signal.convolve keeps denormal-size tail contributions that
    # ndimage.convolve truncates; the denominators downstream need them
    out = signal.convolve(rho.values, cube, mode="same", method="direct")
    return GridDensity(rho.grid, np.maximum(out, 0.0), "free")
