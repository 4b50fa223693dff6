"""Periodic film profiles and the discrete geometry built on them.

A film occupies ``{(x, y) : x in the periodic cell, 0 < y < h(x)}`` for a
positive profile ``h`` on the cell ``(0, width)^(dim-1)`` with ``dim`` equal
to 2 or 3.  This module provides:

* :class:`Profile` -- positive periodic height samples with spectral
  derivatives and (de)serialization,
* :class:`SurfaceGeometry` -- unit normal, shape operator, mean curvature and
  area element of the free surface, plus tangential calculus helpers,
* :class:`DomainMapping` -- the blending diffeomorphism that carries the film
  under profile ``h`` onto the film under a nearby profile ``g`` while fixing
  the substrate,
* :class:`MappedGrid` -- the tensor collocation grid ``(x, s*h(x))`` used by
  the elasticity solvers, with chain-rule derivative operators and positive
  quadrature weights.
"""

from __future__ import annotations

import numpy as np

from .spectral import (
    barycentric_resample,
    cheb_diff_matrix,
    cheb_lobatto_nodes,
    clenshaw_curtis_weights,
    fourier_derivative,
    fourier_diff_matrix,
    fourier_nodes,
    fourier_wavenumbers,
)

__all__ = [
    "Profile",
    "SurfaceGeometry",
    "surface_geometry",
    "DomainMapping",
    "build_mapping",
    "MappedGrid",
    "build_grid",
    "tangential_gradient",
    "tangential_jacobian",
    "tangential_divergence",
    "surface_integral",
]

_MIN_SURFACE_N = 8
_MIN_GRID_NY = 4


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class Profile:
    """Positive periodic height function sampled on a uniform grid.

    Parameters
    ----------
    samples : array
        Shape ``(n,)`` for a two-dimensional film or ``(n, n)`` for a
        three-dimensional one.  All values must be strictly positive.
    width : float
        Side length of the periodic cell, 1 by default.
    """

    def __init__(self, samples, width: float = 1.0):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            dim = 2
        elif samples.ndim == 2 and samples.shape[0] == samples.shape[1]:
            dim = 3
        else:
            raise ValueError(f"profile samples must be (n,) or (n, n), got {samples.shape}")
        if samples.shape[0] < 4:
            raise ValueError(f"profile needs at least 4 samples per direction, got {samples.shape[0]}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("profile samples must be finite")
        if samples.min() <= 0.0:
            raise ValueError(f"profile must be strictly positive, min sample = {samples.min()}")
        if width <= 0.0:
            raise ValueError(f"cell width must be positive, got {width}")
        self.samples = _readonly(samples)
        self.dim = dim
        self.n = samples.shape[0]
        self.width = float(width)
        self._fourier_cache = None

    # -- basic queries -----------------------------------------------------

    @property
    def xshape(self) -> tuple:
        return self.samples.shape

    def nodes(self) -> tuple:
        """Per-direction coordinate arrays of the sample grid."""
        x = fourier_nodes(self.n, self.width)
        return (x,) * (self.dim - 1)

    def min(self) -> float:
        return float(self.samples.min())

    def max(self) -> float:
        return float(self.samples.max())

    @property
    def fourier_cache(self) -> np.ndarray:
        """Lazily built FFT coefficients of the samples."""
        if self._fourier_cache is None:
            self._fourier_cache = np.fft.fftn(self.samples)
        return self._fourier_cache

    def grad(self) -> np.ndarray:
        """Spectral gradient at the sample nodes, shape ``(dim-1,) + xshape``."""
        coeff = self.fourier_cache
        out = np.empty((self.dim - 1,) + self.xshape)
        for axis in range(self.dim - 1):
            k = fourier_wavenumbers(self.n, self.width)
            shape = [1] * (self.dim - 1)
            shape[axis] = self.n
            out[axis] = np.real(np.fft.ifftn(coeff * (1j * k).reshape(shape)))
        return out

    # -- evaluation between nodes -------------------------------------------

    def _normalize_points(self, points) -> np.ndarray:
        """Coerce to shape ``(..., dim-1)``; bare arrays are allowed for dim 2."""
        points = np.asarray(points, dtype=float)
        if self.dim == 2 and (points.ndim == 0 or points.shape[-1] != 1):
            points = points[..., None]
        return points

    def _eval_fourier(self, points: np.ndarray, derivative: int | None) -> np.ndarray:
        """Trigonometric interpolation at arbitrary points.

        ``points`` has shape ``(..., dim-1)``; ``derivative`` selects one
        x-direction for a first derivative or None for plain values.
        """
        points = self._normalize_points(points)
        coeff = self.fourier_cache / self.n ** (self.dim - 1)
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=1.0 / self.n) / self.width
        kd = fourier_wavenumbers(self.n, self.width)
        if self.dim == 2:
            phase = np.exp(1j * np.multiply.outer(points[..., 0], k))
            c = coeff * (1j * kd) if derivative == 0 else coeff
            return np.real(phase @ c)
        e1 = np.exp(1j * np.multiply.outer(points[..., 0], k))
        e2 = np.exp(1j * np.multiply.outer(points[..., 1], k))
        c = coeff.copy()
        if derivative is not None:
            c = c * (1j * kd).reshape((self.n, 1) if derivative == 0 else (1, self.n))
        return np.real(np.einsum("...a,ab,...b->...", e1, c, e2))

    def eval(self, points) -> np.ndarray:
        """Profile values at arbitrary cell points.

        For ``dim == 2`` a bare coordinate array is accepted; in general
        ``points`` carries a trailing axis of length ``dim - 1``.
        """
        return self._eval_fourier(points, None)

    def eval_grad(self, points) -> np.ndarray:
        """Profile gradient at arbitrary cell points, shape ``(..., dim-1)``."""
        return np.stack(
            [self._eval_fourier(points, a) for a in range(self.dim - 1)], axis=-1
        )

    # -- constructors and serialization --------------------------------------

    @classmethod
    def flat(cls, dim: int, n: int, thickness: float, width: float = 1.0) -> "Profile":
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        shape = (n,) if dim == 2 else (n, n)
        return cls(np.full(shape, float(thickness)), width=width)

    @classmethod
    def from_fourier_modes(
        cls, dim: int, n: int, modes, width: float = 1.0
    ) -> "Profile":
        """Build a profile from ``{"mode": m, "amplitude": a, "phase": p}`` terms.

        Each term contributes ``a * cos(2*pi*(m . x)/width + p)``; mode 0 (or
        ``[0, 0]``) is the constant offset.
        """
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        x = fourier_nodes(n, width)
        if dim == 2:
            grids = (x,)
        else:
            grids = np.meshgrid(x, x, indexing="ij")
        shape = (n,) if dim == 2 else (n, n)
        samples = np.zeros(shape)
        for term in modes:
            m = term["mode"]
            amp = float(term["amplitude"])
            phase = float(term.get("phase", 0.0))
            mvec = np.atleast_1d(np.asarray(m, dtype=float))
            if mvec.size != dim - 1:
                raise ValueError(f"mode {m} has wrong dimension for dim={dim}")
            arg = sum(2.0 * np.pi * mvec[a] * grids[a] / width for a in range(dim - 1))
            samples = samples + amp * np.cos(arg + phase)
        return cls(samples, width=width)

    def to_config(self) -> dict:
        return {
            "kind": "samples",
            "dim": self.dim,
            "n": self.n,
            "width": self.width,
            "samples": self.samples.ravel().tolist(),
        }

    @classmethod
    def from_config(cls, cfg: dict, n: int | None = None) -> "Profile":
        kind = cfg.get("kind", "samples")
        width = float(cfg.get("width", 1.0))
        if kind == "flat":
            dim = int(cfg.get("dim", 2))
            nn = int(cfg.get("n", n if n is not None else 0))
            return cls.flat(dim, nn, float(cfg["thickness"]), width=width)
        if kind == "fourier":
            dim = int(cfg.get("dim", 2))
            nn = int(cfg.get("n", n if n is not None else 0))
            modes = list(cfg["modes"])
            return cls.from_fourier_modes(dim, nn, modes, width=width)
        if kind == "samples":
            dim = int(cfg.get("dim", 2))
            samples = np.asarray(cfg["samples"], dtype=float)
            if dim == 3:
                nn = int(round(samples.size ** 0.5))
                samples = samples.reshape(nn, nn)
            return cls(samples, width=width)
        raise ValueError(f"unknown profile kind {kind!r}")


class SurfaceGeometry:
    """Discrete geometry of the free surface of a film profile.

    Attributes
    ----------
    normal : array, ``xshape + (N,)``
        Outward unit normal ``(-grad h, 1) / sqrt(1 + |grad h|^2)``.
    shape_operator : array, ``xshape + (N, N)``
        Gradient of the normal extended constantly in the vertical direction,
        restricted to the tangent space.  Annihilates the normal on both
        sides and its trace is the mean curvature.
    mean_curvature : array, ``xshape``
    area_jacobian : array, ``xshape``
        ``sqrt(1 + |grad h|^2)``, the surface measure density over the cell.
    """

    def __init__(self, profile: Profile):
        if profile.n < _MIN_SURFACE_N:
            raise ValueError(
                f"surface geometry needs n >= {_MIN_SURFACE_N} points per direction, got {profile.n}"
            )
        self.profile = profile
        N = profile.dim
        grad_h = profile.grad()  # (N-1,) + xshape
        self.grad_h = _readonly(np.moveaxis(grad_h, 0, -1))  # xshape + (N-1,)
        jac = np.sqrt(1.0 + np.sum(self.grad_h**2, axis=-1))
        normal = np.concatenate([-self.grad_h, np.ones(profile.xshape + (1,))], axis=-1)
        normal /= jac[..., None]
        self.normal = _readonly(normal)
        self.area_jacobian = _readonly(jac)

        # full gradient of the vertically constant extension of the normal
        dnu = np.zeros(profile.xshape + (N, N))
        for a in range(N - 1):
            dnu[..., :, a] = fourier_derivative(normal, width=profile.width, axis=a)
        proj = np.eye(N) - normal[..., :, None] * normal[..., None, :]
        B = dnu @ proj
        self.shape_operator = _readonly(B)
        self.mean_curvature = _readonly(np.trace(B, axis1=-2, axis2=-1))

        xw = (profile.width / profile.n) ** (N - 1)
        self.surface_weights = _readonly(xw * jac)

    @property
    def dim(self) -> int:
        return self.profile.dim


def surface_geometry(profile: Profile) -> SurfaceGeometry:
    """Normal, shape operator, mean curvature and area element of ``h``."""
    return SurfaceGeometry(profile)


# -- tangential calculus on the free surface --------------------------------


def _surface_x_gradient(geom: SurfaceGeometry, values: np.ndarray) -> np.ndarray:
    """Horizontal spectral gradient of per-node surface data, ``(..., N-1)``."""
    prof = geom.profile
    out = np.empty(values.shape + (prof.dim - 1,))
    for a in range(prof.dim - 1):
        out[..., a] = fourier_derivative(values, width=prof.width, axis=a)
    return out


def tangential_gradient(geom: SurfaceGeometry, phi: np.ndarray) -> np.ndarray:
    """Tangential gradient of a scalar surface field, shape ``xshape + (N,)``.

    The field is extended constantly in the vertical direction; projecting its
    full gradient onto the tangent space gives the tangential gradient, which
    does not depend on the extension.
    """
    phi = np.asarray(phi, dtype=float)
    gx = _surface_x_gradient(geom, phi)
    full = np.concatenate([gx, np.zeros(phi.shape + (1,))], axis=-1)
    return full - np.sum(full * geom.normal, axis=-1)[..., None] * geom.normal


def tangential_jacobian(geom: SurfaceGeometry, vec: np.ndarray) -> np.ndarray:
    """Row-wise tangential gradients of a surface vector field.

    ``vec`` has shape ``xshape + (m,)``; the result ``xshape + (m, N)`` holds
    the tangential gradient of each component in its rows.
    """
    vec = np.asarray(vec, dtype=float)
    prof = geom.profile
    N = prof.dim
    m = vec.shape[-1]
    full = np.zeros(prof.xshape + (m, N))
    for a in range(N - 1):
        full[..., a] = fourier_derivative(vec, width=prof.width, axis=a)
    proj = np.eye(N) - geom.normal[..., :, None] * geom.normal[..., None, :]
    return full @ proj


def tangential_divergence(geom: SurfaceGeometry, vec: np.ndarray) -> np.ndarray:
    """Tangential divergence of a surface field with values in R^N."""
    jac = tangential_jacobian(geom, vec)
    return np.trace(jac, axis1=-2, axis2=-1)


def surface_integral(geom: SurfaceGeometry, values: np.ndarray) -> float:
    """Integral over the free surface of per-node values."""
    return float(np.sum(geom.surface_weights * values))


# -- blending diffeomorphism -------------------------------------------------


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        fa = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        fb = np.where(1.0 - t > 0.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return fa / (fa + fb)


def _smoothstep_prime(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ts = np.clip(np.where(inside, t, 0.5), 1e-8, 1.0 - 1e-8)
    fa = np.exp(-1.0 / ts)
    fb = np.exp(-1.0 / (1.0 - ts))
    dfa = fa / ts**2
    dfb = -fb / (1.0 - ts) ** 2
    den = fa + fb
    val = (dfa * den - fa * (dfa + dfb)) / den**2
    return np.where(inside, val, 0.0)


class DomainMapping:
    """Diffeomorphism carrying the film under ``h`` onto the film under ``g``.

    The map keeps horizontal coordinates and shifts the vertical one by a
    smooth cutoff profile concentrated near the free surface:

        (x, y) -> (x, y + rho(y - h(x)) * (g(x) - h(x)))

    where ``rho`` is 1 on ``(-m0/4, m0/4)`` and vanishes outside
    ``(-m0/2, m0/2)`` with ``m0 = min h``.  The substrate plane is fixed and
    the sup displacement never exceeds ``max |g - h|``.
    """

    def __init__(self, base: Profile, target: Profile):
        if base.dim != target.dim or base.n != target.n or base.width != target.width:
            raise ValueError("base and target profiles must share the same grid")
        gap = float(np.abs(target.samples - base.samples).max())
        m0 = base.min()
        if not gap < m0 / 4.0:
            raise ValueError(
                "profiles too far apart for the blending map: "
                f"max|g - h| = {gap:.6g} must be < (min h)/4 = {m0 / 4.0:.6g}"
            )
        self.base = base
        self.target = target
        self.m0 = m0
        self.gap = gap

    def _rho(self, t: np.ndarray) -> np.ndarray:
        return _smoothstep((self.m0 / 2.0 - np.abs(t)) / (self.m0 / 4.0))

    def _rho_prime(self, t: np.ndarray) -> np.ndarray:
        inner = (self.m0 / 2.0 - np.abs(t)) / (self.m0 / 4.0)
        return _smoothstep_prime(inner) * (-np.sign(t)) / (self.m0 / 4.0)

    def vertical(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """New vertical coordinate of the point ``(x, y)``."""
        h = self.base.eval(x)
        g = self.target.eval(x)
        return y + self._rho(y - h) * (g - h)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> tuple:
        return x, self.vertical(x, y)

    def gradient(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Jacobian of the map at ``(x, y)``, shape ``(..., N, N)``."""
        y = np.asarray(y, dtype=float)
        N = self.base.dim
        h = self.base.eval(x)
        g = self.target.eval(x)
        dh = self.base.eval_grad(x)
        dg = self.target.eval_grad(x)
        rho = self._rho(y - h)
        drho = self._rho_prime(y - h)
        out = np.zeros(np.broadcast_shapes(h.shape, y.shape) + (N, N))
        for a in range(N - 1):
            out[..., a, a] = 1.0
            out[..., N - 1, a] = drho * (-dh[..., a]) * (g - h) + rho * (dg[..., a] - dh[..., a])
        out[..., N - 1, N - 1] = 1.0 + drho * (g - h)
        return out

    def inverse_vertical(self, x: np.ndarray, yprime: np.ndarray) -> np.ndarray:
        """Solve ``vertical(x, y) = yprime`` for y, column by column."""
        yprime = np.asarray(yprime, dtype=float)
        h = self.base.eval(x)
        g = self.target.eval(x)
        y = np.array(yprime, dtype=float)
        for _ in range(60):
            rho = self._rho(y - h)
            res = y + rho * (g - h) - yprime
            slope = 1.0 + self._rho_prime(y - h) * (g - h)
            step = res / slope
            y = y - step
            if np.abs(step).max() < 1e-14 * max(1.0, np.abs(yprime).max()):
                break
        return y

    def sup_displacement(self, refine: int = 4) -> float:
        """max |Phi - id| on a refined sample of the film; bounded by max|g-h|."""
        prof = self.base
        nfine = refine * prof.n
        x = fourier_nodes(nfine, prof.width)
        if prof.dim == 2:
            pts = x[:, None]
        else:
            g1, g2 = np.meshgrid(x, x, indexing="ij")
            pts = np.stack([g1, g2], axis=-1)
        h = prof.eval(pts)
        smax = 4 * 8
        out = 0.0
        for s in np.linspace(0.0, 1.0, smax):
            y = s * h
            out = max(out, float(np.abs(self.vertical(pts, y) - y).max()))
        return out


def build_mapping(base: Profile, target: Profile) -> DomainMapping:
    """Blending diffeomorphism from the film of ``base`` to that of ``target``."""
    return DomainMapping(base, target)


# -- mapped tensor grid -------------------------------------------------------


class MappedGrid:
    """Collocation grid ``(x_j, s_k * h(x_j))`` over the film of a profile.

    Horizontal directions are uniform periodic grids differentiated
    spectrally, the vertical direction is Chebyshev-Lobatto in the scaled
    coordinate ``s = y / h(x)``.  The grid owns:

    * the chain-rule first-derivative operators needed for gradients of nodal
      fields,
    * positive volume quadrature weights (trapezoid in x, Clenshaw-Curtis in
      s, metric factor ``h``),
    * the free-surface row ``s = 1`` with its :class:`SurfaceGeometry`.
    """

    def __init__(self, profile: Profile, ny: int):
        if ny < _MIN_GRID_NY:
            raise ValueError(f"mapped grid needs ny >= {_MIN_GRID_NY}, got ny={ny}")
        self.profile = profile
        self.geom = SurfaceGeometry(profile)
        self.ny = ny
        self.dim = profile.dim
        self.xshape = profile.xshape
        self.nx = int(np.prod(profile.xshape))

        self.s = cheb_lobatto_nodes(ny)
        self.Ds = cheb_diff_matrix(ny)
        self.swts = clenshaw_curtis_weights(ny)

        n, width, N = profile.n, profile.width, profile.dim
        self.Dx = fourier_diff_matrix(n, width)
        if N == 2:
            self._Lx = (self.Dx,)
        else:
            eye = np.eye(n)
            self._Lx = (np.kron(self.Dx, eye), np.kron(eye, self.Dx))

        h = profile.samples
        grad_h = np.moveaxis(profile.grad(), 0, -1)  # xshape + (N-1,)
        self.h = h
        self.y = h[..., None] * self.s  # xshape + (ny,)

        # chain-rule coefficients: d/dx_a = Lx_a - (s dh_a / h) d/ds,
        # d/dy = (1/h) d/ds
        self.slope = np.empty(profile.xshape + (ny, N - 1))
        for a in range(N - 1):
            self.slope[..., a] = -(grad_h[..., a] / h)[..., None] * self.s
        self.vertical_scale = (1.0 / h)[..., None] * np.ones(ny)

        xw = (width / n) ** (N - 1)
        self.wq = xw * h[..., None] * self.swts  # xshape + (ny,)
        self.surface_index = ny - 1

    # -- derivative application ------------------------------------------------

    def x_derivative(self, u: np.ndarray, axis: int) -> np.ndarray:
        """Periodic spectral derivative along horizontal axis ``axis``."""
        return fourier_derivative(u, width=self.profile.width, axis=axis)

    def s_derivative(self, u: np.ndarray) -> np.ndarray:
        """Collocation derivative along the scaled vertical axis.

        The s axis is assumed to be axis ``dim - 1`` of the nodal array, i.e.
        fields are laid out ``xshape + (ny, ...)``.
        """
        ax = self.dim - 1
        return np.moveaxis(np.tensordot(self.Ds, u, axes=(1, ax)), 0, ax)

    def scalar_gradient(self, u: np.ndarray) -> np.ndarray:
        """Physical gradient of one scalar nodal field, ``xshape + (ny, N)``."""
        us = self.s_derivative(u)
        out = np.empty(u.shape + (self.dim,))
        for a in range(self.dim - 1):
            out[..., a] = self.x_derivative(u, a) + self.slope[..., a] * us
        out[..., self.dim - 1] = self.vertical_scale * us
        return out

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient of a vector nodal field ``xshape + (ny, m)``.

        Returns ``xshape + (ny, m, N)`` with rows indexed by the component.
        """
        us = self.s_derivative(u)
        out = np.empty(u.shape + (self.dim,))
        for a in range(self.dim - 1):
            out[..., a] = self.x_derivative(u, a) + self.slope[..., a, None] * us
        out[..., self.dim - 1] = self.vertical_scale[..., None] * us
        return out

    # -- quadrature --------------------------------------------------------------

    def volume_integral(self, values: np.ndarray) -> float:
        """Integral over the film of per-node values."""
        return float(np.sum(self.wq * values))

    def assembly_operators(self):
        """Dense building blocks for bilinear-form assembly.

        Returns ``(Lx, Ds, pcoef, scoef)`` where ``Lx`` is the list of
        flattened-horizontal derivative matrices (one per horizontal
        direction), ``Ds`` the vertical collocation matrix, and for every
        physical direction ``a`` the gradient acts on a flattened nodal field
        as ``pcoef[a] * (Lx_a u) + scoef[a] * (u Ds^T)`` with per-node
        coefficient arrays of shape ``(nx, ny)``.
        """
        N = self.dim
        nx, ny = self.nx, self.ny
        pcoef = []
        scoef = []
        for a in range(N - 1):
            pcoef.append(np.ones((nx, ny)))
            scoef.append(self.slope[..., a].reshape(nx, ny))
        pcoef.append(None)
        scoef.append(self.vertical_scale.reshape(nx, ny))
        return self._Lx, self.Ds, pcoef, scoef

    def surface_trace(self, u: np.ndarray) -> np.ndarray:
        """Values of a nodal field on the free-surface row ``s = 1``."""
        ax = self.dim - 1
        return np.take(u, self.surface_index, axis=ax)


def build_grid(profile: Profile, ny: int) -> MappedGrid:
    """Mapped collocation grid over the film of ``profile``."""
    return MappedGrid(profile, ny)
