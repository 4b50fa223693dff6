"""Shared spectral building blocks: Fourier differentiation on uniform periodic
grids and Chebyshev-Lobatto collocation on [0, 1].

Everything in the package that differentiates or integrates numerically goes
through these helpers, so their conventions are fixed here once:

* periodic directions use n equispaced nodes x_j = j*L/n (no duplicated
  endpoint) and trigonometric differentiation via the FFT,
* the wall-normal direction uses ny Chebyshev-Lobatto nodes mapped to [0, 1]
  in ascending order (s_0 = 0 at the substrate, s_{ny-1} = 1 at the free
  surface) with Clenshaw-Curtis quadrature weights.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "fourier_nodes",
    "fourier_wavenumbers",
    "fourier_derivative",
    "fourier_diff_matrix",
    "cheb_lobatto_nodes",
    "cheb_diff_matrix",
    "clenshaw_curtis_weights",
    "barycentric_resample",
    "trig_interpolate",
]


def fourier_nodes(n: int, width: float = 1.0) -> np.ndarray:
    """Equispaced periodic nodes j*width/n, j = 0..n-1."""
    if n < 4:
        raise ValueError(f"periodic grid needs n >= 4, got n={n}")
    return (width / n) * np.arange(n)


def fourier_wavenumbers(n: int, width: float = 1.0) -> np.ndarray:
    """Signed integer mode frequencies scaled to the cell, as 2*pi*m/width.

    For even n the Nyquist mode is zeroed, which is the usual convention for
    odd-order derivatives of real samples.
    """
    m = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        m = m.copy()
        m[n // 2] = 0.0
    return 2.0 * np.pi * m / width


def fourier_derivative(values: np.ndarray, width: float = 1.0, axis: int = 0) -> np.ndarray:
    """Spectral derivative of real periodic samples along one axis."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    k = fourier_wavenumbers(n, width)
    shape = [1] * values.ndim
    shape[axis] = n
    coeff = np.fft.fft(values, axis=axis)
    coeff *= (1j * k).reshape(shape)
    return np.real(np.fft.ifft(coeff, axis=axis))


def fourier_diff_matrix(n: int, width: float = 1.0) -> np.ndarray:
    """Dense first-derivative matrix acting on periodic nodal samples.

    Built by differentiating the identity with the FFT so that the matrix and
    the transform path are bit-compatible.
    """
    return fourier_derivative(np.eye(n), width=width, axis=0)


def cheb_lobatto_nodes(ny: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [0, 1], ascending, endpoints included."""
    if ny < 4:
        raise ValueError(f"wall-normal grid needs ny >= 4, got ny={ny}")
    m = ny - 1
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(ny) / m))


def _lobatto_barycentric_weights(ny: int) -> np.ndarray:
    w = np.ones(ny)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def cheb_diff_matrix(ny: int) -> np.ndarray:
    """First-derivative collocation matrix on the ascending [0, 1] nodes.

    Uses the barycentric form with the negative-sum trick for the diagonal,
    which keeps the matrix accurate up to large ny.
    """
    s = cheb_lobatto_nodes(ny)
    w = _lobatto_barycentric_weights(ny)
    ds = s[:, None] - s[None, :]
    np.fill_diagonal(ds, 1.0)
    d = (w[None, :] / w[:, None]) / ds
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def clenshaw_curtis_weights(ny: int) -> np.ndarray:
    """Quadrature weights on [0, 1] for the Chebyshev-Lobatto nodes.

    The weights integrate every polynomial of degree <= ny-1 exactly; they are
    obtained by matching the Chebyshev moments, which for this size is a small
    well-conditioned cosine system.
    """
    m = ny - 1
    j = np.arange(ny)
    # T_row[p, k] = T_p(x_k) with x_k = cos(pi k / m), descending in x.
    T = np.cos(np.pi * np.outer(j, j) / m)
    moments = np.zeros(ny)
    p = np.arange(0, ny, 2)
    moments[p] = 2.0 / (1.0 - p.astype(float) ** 2)
    moments[0] = 2.0
    w = np.linalg.solve(T, moments)
    # map [-1, 1] -> [0, 1] and flip to ascending s
    return 0.5 * w[::-1]


def barycentric_resample(values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Evaluate a Chebyshev-Lobatto nodal expansion at arbitrary points.

    ``values`` holds samples at ``cheb_lobatto_nodes(ny)`` in its last axis,
    ``targets`` holds evaluation points in [0, 1] whose leading axes broadcast
    against ``values[..., 0]``; the result has the shape of ``targets``.
    Points that coincide with a node return the nodal value exactly.
    """
    values = np.asarray(values, dtype=float)
    ny = values.shape[-1]
    s = cheb_lobatto_nodes(ny)
    w = _lobatto_barycentric_weights(ny)

    t = np.asarray(targets, dtype=float)
    if t.ndim == values.ndim and t.shape[:-1] == values.shape[:-1]:
        # one set of targets per nodal column
        values = values[..., None, :]
    diff = t[..., None] - s  # (..., ny)
    exact = np.abs(diff) < 1e-14
    safe = np.where(exact, 1.0, diff)
    kern = w / safe
    kern = np.where(exact, 0.0, kern)
    num = np.einsum("...k,...k->...", kern, np.broadcast_to(values, kern.shape))
    den = kern.sum(axis=-1)

    hit = exact.any(axis=-1)
    den = np.where(hit, 1.0, den)
    out = num / den
    if np.any(hit):
        idx = exact.argmax(axis=-1)
        nodal = np.take_along_axis(np.broadcast_to(values, kern.shape), idx[..., None], axis=-1)
        out = np.where(hit, nodal[..., 0], out)
    return out


def trig_interpolate(samples: np.ndarray, width: float, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of periodic nodal samples at arbitrary points.

    ``samples`` is a full periodic grid, shape ``(n,)`` or ``(n, n)``;
    ``points`` carries a trailing coordinate axis matching the grid dimension
    (a bare array is accepted in the one-dimensional case).  Exact at the
    nodes and spectrally accurate in between.
    """
    samples = np.asarray(samples, dtype=float)
    ndim = samples.ndim
    if ndim not in (1, 2):
        raise ValueError(f"samples must be a 1d or 2d periodic grid, got ndim={samples.ndim}")
    n = samples.shape[0]
    if ndim == 2 and samples.shape != (n, n):
        raise ValueError(f"2d samples must be square, got {samples.shape}")
    points = np.asarray(points, dtype=float)
    if ndim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
        points = points[..., None]
    if points.shape[-1] != ndim:
        raise ValueError(f"points must end with a length-{ndim} coordinate axis")
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / width
    if ndim == 1:
        coeff = np.fft.fft(samples) / n
        phase = np.exp(1j * np.multiply.outer(points[..., 0], k))
        return np.real(phase @ coeff)
    coeff = np.fft.fft2(samples) / n**2
    e1 = np.exp(1j * np.multiply.outer(points[..., 0], k))
    e2 = np.exp(1j * np.multiply.outer(points[..., 1], k))
    return np.real(np.einsum("...a,ab,...b->...", e1, coeff, e2))
