"""Bulk elastic energy and equilibrium fields over a film domain.

The film stores elastic energy ``int W(grad u)`` with ``u`` pinned to a
mismatched lattice at the substrate and laterally periodic.  Two density
kinds are supported:

* ``linear`` -- ``W(xi) = 0.5 * C sym(xi) : sym(xi)`` acting on the gradient
  of a *displacement*; the substrate mismatch is a strain matrix ``A`` and
  ``u = (A x + q(x), 0)`` at the substrate line.
* ``nonlinear`` -- a compressible log-determinant model acting on the
  gradient of a *deformation*: ``W(xi) = (mu/2)(|xi|^2 - N) - mu log det xi
  + (lam/2)(log det xi)^2`` on ``det xi > 0``, minimized exactly at the
  identity with value zero.  The substrate datum is a stretch matrix and the
  vertical base component is the identity ``y``.

Fields are represented as ``base + p`` where the base carries the
(non-periodic) substrate datum in closed form and ``p`` lives on the mapped
collocation grid, vanishes on the substrate row and is laterally periodic.
Energy, residual and tangent are assembled from the same discrete gradient
operators, so the residual is the exact derivative of the discrete energy
and the tangent its exact second derivative -- the identities the stability
module and the finite-difference oracles both rely on.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, solve_triangular
from scipy.sparse.linalg import LinearOperator, eigsh

from .geometry import MappedGrid, Profile, build_grid

__all__ = [
    "ElasticDensity",
    "LinearDensity",
    "NonlinearDensity",
    "elastic_density_from_config",
    "MismatchDatum",
    "ElasticField",
    "NewtonError",
    "assemble_residual",
    "assemble_hessian",
    "h1_gram",
    "interior_weight_vector",
    "solve_critical_point",
    "continue_critical_point",
    "coercivity_constant",
    "legendre_hadamard_check",
    "local_min_probe",
]


# -- densities -----------------------------------------------------------------


class ElasticDensity:
    """Base interface: energy density on matrix gradients with derivatives.

    ``value``, ``stress`` and ``tangent`` are vectorized over leading axes of
    ``xi`` with shape ``(..., dim, dim)``; ``tangent`` returns the full
    second-derivative tensor laid out ``(..., i, a, m, b)`` for
    ``d^2 W / d xi_ia d xi_mb``.
    """

    dim: int
    kind: str

    def value(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stress(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def admissible(self, xi: np.ndarray) -> bool:
        """Whether all gradients lie in the density's domain."""
        return True


def isotropic_tensor(dim: int, lam: float, mu: float) -> np.ndarray:
    """The tensor ``C[i,a,m,b] = lam d_ia d_mb + mu (d_im d_ab + d_ib d_am)``."""
    I = np.eye(dim)
    return (
        lam * np.einsum("ia,mb->iamb", I, I)
        + mu * np.einsum("im,ab->iamb", I, I)
        + mu * np.einsum("ib,am->iamb", I, I)
    )


def _symmetrize_tensor(C: np.ndarray) -> np.ndarray:
    C = 0.5 * (C + C.transpose(1, 0, 2, 3))  # minor, first pair
    C = 0.5 * (C + C.transpose(0, 1, 3, 2))  # minor, second pair
    return 0.5 * (C + C.transpose(2, 3, 0, 1))  # major


def _sym_basis(dim: int):
    basis = []
    for i in range(dim):
        for j in range(i, dim):
            E = np.zeros((dim, dim))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = np.sqrt(0.5)
            basis.append(E)
    return basis


class LinearDensity(ElasticDensity):
    """Quadratic density ``0.5 * C sym(xi) : sym(xi)`` on displacement gradients."""

    kind = "linear"

    def __init__(self, C: np.ndarray):
        C = np.asarray(C, dtype=float)
        if C.ndim != 4 or len(set(C.shape)) != 1:
            raise ValueError(f"elasticity tensor must have shape (N,N,N,N), got {C.shape}")
        self.dim = C.shape[0]
        self.C = _symmetrize_tensor(C)
        basis = _sym_basis(self.dim)
        Q = np.array([[np.einsum("iamb,ia,mb->", self.C, E, F) for F in basis] for E in basis])
        eigs = np.linalg.eigvalsh(Q)
        if eigs.min() <= 1e-12 * max(eigs.max(), 1.0):
            raise ValueError(
                f"elasticity tensor must be positive definite on symmetric matrices, "
                f"min eigenvalue {eigs.min():.3g}"
            )

    @classmethod
    def isotropic(cls, dim: int, lam: float, mu: float) -> "LinearDensity":
        if mu <= 0.0 or lam + 2.0 * mu / dim <= 0.0:
            raise ValueError(f"need mu > 0 and lam + 2 mu / N > 0, got lam={lam}, mu={mu}")
        return cls(isotropic_tensor(dim, lam, mu))

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        return 0.5 * np.einsum("...ia,iamb,...mb->...", xi, self.C, xi)

    def stress(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.einsum("iamb,...mb->...ia", self.C, xi)

    def tangent(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.broadcast_to(self.C, xi.shape[:-2] + self.C.shape)


class NonlinearDensity(ElasticDensity):
    """Compressible log-determinant density on deformation gradients.

    ``W(xi) = (mu/2)(|xi|^2 - N) - mu log det xi + (lam/2)(log det xi)^2``
    is nonnegative, vanishes exactly at the identity together with its
    stress, and its tangent at the identity is the isotropic tensor with
    moduli ``(lam, mu)``.
    """

    kind = "nonlinear"

    def __init__(self, dim: int, lam: float, mu: float):
        if mu <= 0.0 or lam < 0.0:
            raise ValueError(f"need mu > 0 and lam >= 0, got lam={lam}, mu={mu}")
        self.dim = dim
        self.lam = float(lam)
        self.mu = float(mu)

    def _logdet(self, xi):
        det = np.linalg.det(xi)
        if np.any(det <= 0.0):
            raise ValueError("deformation gradient left the domain det > 0")
        return np.log(det)

    def admissible(self, xi):
        return bool(np.all(np.linalg.det(np.asarray(xi, dtype=float)) > 0.0))

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        ld = self._logdet(xi)
        frob = np.einsum("...ia,...ia->...", xi, xi)
        return 0.5 * self.mu * (frob - self.dim) - self.mu * ld + 0.5 * self.lam * ld**2

    def stress(self, xi):
        xi = np.asarray(xi, dtype=float)
        ld = self._logdet(xi)
        inv_t = np.swapaxes(np.linalg.inv(xi), -1, -2)
        return self.mu * xi + (self.lam * ld - self.mu)[..., None, None] * inv_t

    def tangent(self, xi):
        xi = np.asarray(xi, dtype=float)
        ld = self._logdet(xi)
        inv_t = np.swapaxes(np.linalg.inv(xi), -1, -2)
        I = np.eye(self.dim)
        out = np.einsum("im,ab->iamb", self.mu * I, I)
        out = np.broadcast_to(out, xi.shape[:-2] + out.shape).copy()
        out += self.lam * np.einsum("...ia,...mb->...iamb", inv_t, inv_t)
        coef = self.lam * ld - self.mu
        out -= coef[..., None, None, None, None] * np.einsum(
            "...ib,...ma->...iamb", inv_t, inv_t
        )
        return out


def elastic_density_from_config(cfg: dict, dim: int) -> ElasticDensity:
    """Build a density from its JSON configuration block."""
    kind = cfg["kind"]
    if kind == "linear":
        if "tensor" in cfg:
            return LinearDensity(np.asarray(cfg["tensor"], dtype=float))
        return LinearDensity.isotropic(dim, float(cfg["lam"]), float(cfg["mu"]))
    if kind == "nonlinear":
        return NonlinearDensity(dim, float(cfg["lam"]), float(cfg["mu"]))
    raise ValueError(f"unknown elastic density kind {kind!r}")


# -- substrate mismatch ---------------------------------------------------------


class MismatchDatum:
    """Dirichlet datum at the substrate: ``(A x + q(x), 0)``.

    ``A`` is the horizontal mismatch matrix ((N-1) x (N-1), a scalar for a
    two-dimensional film) and ``q`` an optional laterally periodic
    perturbation given as cosine terms per horizontal component.  For the
    linear kind ``A`` is a strain and may vanish or be indefinite; for the
    nonlinear kind the induced base deformation must be orientation
    preserving, which requires ``det A > 0``.
    """

    def __init__(self, A, dim: int, modes=None):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape != (dim - 1, dim - 1):
            raise ValueError(f"mismatch matrix must be {(dim - 1, dim - 1)}, got {A.shape}")
        self.A = A
        self.dim = dim
        self.modes = [dict(t) for t in modes] if modes else []
        for term in self.modes:
            c = int(term.get("component", 0))
            if not 0 <= c < dim - 1:
                raise ValueError(f"mode component {c} out of range for dim={dim}")

    @classmethod
    def from_misfit(cls, e0: float, dim: int, kind: str, modes=None) -> "MismatchDatum":
        """Shorthand for an isotropic misfit of size ``e0``.

        The linear kind reads it as the strain ``e0 * I``; the nonlinear kind
        as the stretch ``(1 + e0) * I`` of the substrate lattice.
        """
        scale = e0 if kind == "linear" else 1.0 + e0
        return cls(scale * np.eye(dim - 1), dim, modes=modes)

    def periodic_part(self, profile: Profile) -> np.ndarray:
        """Samples of ``q`` on the horizontal grid, shape ``xshape + (dim-1,)``."""
        from .spectral import fourier_nodes

        x = fourier_nodes(profile.n, profile.width)
        grids = (x,) if self.dim == 2 else np.meshgrid(x, x, indexing="ij")
        out = np.zeros(profile.xshape + (self.dim - 1,))
        for term in self.modes:
            c = int(term.get("component", 0))
            m = np.atleast_1d(np.asarray(term["mode"], dtype=float))
            amp = float(term["amplitude"])
            phase = float(term.get("phase", 0.0))
            arg = sum(
                2.0 * np.pi * m[a] * grids[a] / profile.width for a in range(self.dim - 1)
            )
            out[..., c] += amp * np.cos(arg + phase)
        return out

    def to_config(self) -> dict:
        return {"A": self.A.tolist(), "modes": [dict(t) for t in self.modes]}


# -- discrete fields -------------------------------------------------------------


def _base_parts(grid: MappedGrid, datum: MismatchDatum, density: ElasticDensity):
    """Closed-form base field and its exact gradient on the grid nodes."""
    from .spectral import fourier_derivative, fourier_nodes

    N = grid.dim
    if datum.dim != N or density.dim != N:
        raise ValueError("profile, datum and density dimensions must agree")
    kappa = 1.0 if density.kind == "nonlinear" else 0.0
    if density.kind == "nonlinear" and np.linalg.det(datum.A) <= 0.0:
        raise ValueError("nonlinear kind needs an orientation-preserving mismatch, det A > 0")

    prof = grid.profile
    x = fourier_nodes(prof.n, prof.width)
    grids = (x,) if N == 2 else np.meshgrid(x, x, indexing="ij")
    q = datum.periodic_part(prof)  # xshape + (N-1,)

    base = np.zeros(prof.xshape + (grid.ny, N))
    for c in range(N - 1):
        horiz = sum(datum.A[c, a] * grids[a] for a in range(N - 1)) + q[..., c]
        base[..., c] = horiz[..., None]
    base[..., N - 1] = kappa * grid.y

    base_grad = np.zeros(prof.xshape + (grid.ny, N, N))
    for c in range(N - 1):
        for a in range(N - 1):
            dq = fourier_derivative(q[..., c], width=prof.width, axis=a)
            base_grad[..., c, a] = (datum.A[c, a] + dq)[..., None]
    base_grad[..., N - 1, N - 1] = kappa
    return base, base_grad


class ElasticField:
    """An elastic state ``base + p`` on a mapped grid.

    ``p`` is the nodal unknown, shape ``xshape + (ny, dim)``, zero on the
    substrate row; the base carries the mismatch datum exactly.
    """

    def __init__(self, grid: MappedGrid, datum: MismatchDatum, density: ElasticDensity, p=None):
        self.grid = grid
        self.datum = datum
        self.density = density
        self.base, self.base_grad = _base_parts(grid, datum, density)
        shape = grid.profile.xshape + (grid.ny, grid.dim)
        if p is None:
            p = np.zeros(shape)
        else:
            p = np.asarray(p, dtype=float)
            if p.shape != shape:
                raise ValueError(f"p must have shape {shape}, got {p.shape}")
            if np.abs(p[..., 0, :]).max() > 1e-13:
                raise ValueError("p must vanish on the substrate row")
        self.p = p

    def with_p(self, p: np.ndarray) -> "ElasticField":
        new = object.__new__(ElasticField)
        new.grid, new.datum, new.density = self.grid, self.datum, self.density
        new.base, new.base_grad = self.base, self.base_grad
        new.p = p
        return new

    def total(self) -> np.ndarray:
        """Nodal samples of the full field, ``xshape + (ny, dim)``."""
        return self.base + self.p

    def gradient(self) -> np.ndarray:
        """Samples of the field gradient, ``xshape + (ny, dim, dim)``."""
        return self.base_grad + self.grid.gradient(self.p)

    def gradient_derivative(self) -> np.ndarray:
        """Third-order samples ``d(grad u)_ia / dx_b``, ``xshape + (ny, N, N, N)``."""
        g = self.gradient()
        N = self.grid.dim
        out = np.empty(g.shape + (N,))
        for i in range(N):
            for a in range(N):
                out[..., i, a, :] = self.grid.scalar_gradient(g[..., i, a])
        return out

    def energy(self) -> float:
        return self.grid.volume_integral(self.density.value(self.gradient()))

    def surface_stress(self) -> np.ndarray:
        """Stress samples on the free-surface row."""
        return self.grid.surface_trace(self.density.stress(self.gradient()))

    def surface_energy_density(self) -> np.ndarray:
        """Elastic energy density on the free-surface row."""
        return self.grid.surface_trace(self.density.value(self.gradient()))


# -- assembly ---------------------------------------------------------------------


def _flat_shapes(grid: MappedGrid):
    nx, ny, N = grid.nx, grid.ny, grid.dim
    return nx, ny, N, nx * (ny - 1) * N


def interior_weight_vector(grid: MappedGrid) -> np.ndarray:
    """Quadrature weights per interior dof (repeated across components)."""
    nx, ny, N, _ = _flat_shapes(grid)
    w = grid.wq.reshape(nx, ny)[:, 1:]
    return np.repeat(w.ravel(), N)


def assemble_residual(grid: MappedGrid, weighted_stress: np.ndarray) -> np.ndarray:
    """Interior-dof gradient of ``sum_nodes w * W`` given ``w * stress`` samples.

    ``weighted_stress`` has shape ``xshape + (ny, N, N)`` and already carries
    the quadrature weights.  Returns the flattened residual over interior
    dofs (all rows above the substrate).
    """
    nx, ny, N, nd = _flat_shapes(grid)
    Lx, Ds, pcoef, scoef = grid.assembly_operators()
    F = weighted_stress.reshape(nx, ny, N, N)
    out = np.zeros((nx, ny - 1, N))
    Ds_cols = Ds[:, 1:]
    for a in range(N):
        Fa = F[..., a]
        if pcoef[a] is not None:
            out += np.einsum("rj,rti->jti", Lx[a], Fa)[:, 1:]
        out += np.einsum("tk,rti->rki", Ds_cols, scoef[a][..., None] * Fa)
    return out.ravel()


def assemble_hessian(grid: MappedGrid, weighted_tangent: np.ndarray) -> np.ndarray:
    """Dense interior-dof matrix of the quadratic form with given coefficients.

    ``weighted_tangent`` has shape ``xshape + (ny, N, N, N, N)`` laid out
    ``(i, a, m, b)`` and carries the quadrature weights; the result is the
    matrix of ``sum_nodes w * C[grad v, grad w]`` over interior dofs.  The
    same routine assembles elastic tangents, unit-coefficient stiffness
    matrices, and any other gradient-gradient form.
    """
    nx, ny, N, nd = _flat_shapes(grid)
    nyc = ny - 1
    Lx, Ds, pcoef, scoef = grid.assembly_operators()
    Cw = weighted_tangent.reshape(nx, ny, N, N, N, N)
    K = np.zeros((nx, nyc, N, nx, nyc, N))
    Ds_cols = Ds[:, 1:]          # samples t, trial/test dofs k >= 1
    Ds_int = Ds[1:, 1:]          # samples pinned to interior rows
    rows = np.arange(nyc)
    cols = np.arange(nx)
    for a in range(N):
        for b in range(N):
            C_ab = Cw[:, :, :, a, :, b]  # (nx, ny, N, N)
            sa, sb = scoef[a], scoef[b]
            if pcoef[a] is not None and pcoef[b] is not None:
                T1 = np.einsum("rj,rtim,rp->jtipm", Lx[a], C_ab[:, 1:], Lx[b], optimize=True)
                K[:, rows, :, :, rows, :] += T1.transpose(1, 0, 2, 3, 4)
            if pcoef[a] is not None:
                coef = sb[..., None, None] * C_ab
                K += np.einsum("rj,rtim,tq->jtirqm", Lx[a], coef[:, 1:], Ds_int, optimize=True)
            if pcoef[b] is not None:
                coef = sa[..., None, None] * C_ab
                K += np.einsum("tk,rtim,rp->rkiptm", Ds_int, coef[:, 1:], Lx[b], optimize=True)
            coef = (sa * sb)[..., None, None] * C_ab
            T4 = np.einsum("tk,rtim,tq->rkiqm", Ds_cols, coef, Ds_cols, optimize=True)
            K[cols, :, :, cols, :, :] += T4
    K = K.reshape(nd, nd)
    return 0.5 * (K + K.T)


def h1_gram(grid: MappedGrid) -> np.ndarray:
    """Gram matrix of the first-order Sobolev inner product on interior dofs."""
    nx, ny, N, nd = _flat_shapes(grid)
    I = np.eye(N)
    eye4 = np.einsum("im,ab->iamb", I, I)
    G = assemble_hessian(grid, grid.wq[..., None, None, None, None] * eye4)
    G[np.diag_indices(nd)] += interior_weight_vector(grid)
    return G


# -- solves -----------------------------------------------------------------------


class NewtonError(RuntimeError):
    """Equilibrium solve failed; carries the residual history."""

    def __init__(self, message: str, residuals):
        super().__init__(f"{message} (residual history: {[f'{r:.3e}' for r in residuals]})")
        self.residuals = list(residuals)


def _interior(grid: MappedGrid, p: np.ndarray) -> np.ndarray:
    nx, ny, N, _ = _flat_shapes(grid)
    return p.reshape(nx, ny, N)[:, 1:].ravel()


def _from_interior(grid: MappedGrid, vec: np.ndarray) -> np.ndarray:
    nx, ny, N, _ = _flat_shapes(grid)
    p = np.zeros((nx, ny, N))
    p[:, 1:] = vec.reshape(nx, ny - 1, N)
    return p.reshape(grid.profile.xshape + (ny, N))


def solve_critical_point(
    profile: Profile,
    datum: MismatchDatum,
    density: ElasticDensity,
    ny: int,
    p0: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int = 50,
) -> tuple[ElasticField, dict]:
    """Equilibrium elastic field over a profile by a guarded Newton iteration.

    Minimizes the discrete energy over fields that match the substrate datum
    and are laterally periodic.  For the linear kind the energy is quadratic
    and one step converges; the nonlinear kind backtracks on the energy and
    refuses steps that leave the admissible set.  Returns the field and an
    info dict with iteration count, final residual norm and energy.
    """
    grid = build_grid(profile, ny)
    field = ElasticField(grid, datum, density, p=p0)
    p = field.p.copy()
    residuals = []
    scale = None
    for it in range(max_iter):
        work = field.with_p(p)
        gradu = work.gradient()
        if not density.admissible(gradu):
            raise NewtonError("iterate left the admissible set", residuals)
        energy = grid.volume_integral(density.value(gradu))
        stress_w = grid.wq[..., None, None] * density.stress(gradu)
        r = assemble_residual(grid, stress_w)
        rnorm = float(np.linalg.norm(r))
        residuals.append(rnorm)
        if scale is None:
            scale = 1.0 + rnorm
        if rnorm <= tol * scale:
            result = field.with_p(p)
            info = {"iterations": it, "residual_norm": rnorm, "energy": energy}
            return result, info
        tangent_w = grid.wq[..., None, None, None, None] * density.tangent(gradu)
        K = assemble_hessian(grid, tangent_w)
        try:
            dp_vec = cho_solve(cho_factor(K), -r)
        except LinAlgError:
            dp_vec = np.linalg.solve(K, -r)
        dp = _from_interior(grid, dp_vec)
        slope = float(r @ dp_vec)
        t = 1.0
        while True:
            cand = p + t * dp
            cand_grad = field.with_p(cand).gradient()
            if density.admissible(cand_grad):
                cand_energy = grid.volume_integral(density.value(cand_grad))
                if cand_energy <= energy + 1e-4 * t * slope:
                    break
            t *= 0.5
            if t < 1e-8:
                raise NewtonError("line search failed", residuals)
        p = cand
    raise NewtonError(f"no convergence in {max_iter} iterations", residuals)


def continue_critical_point(
    field: ElasticField, new_profile: Profile, ny: int | None = None, **kwargs
) -> tuple[ElasticField, dict]:
    """Re-solve on a nearby profile, warm-starting from an existing field.

    The previous unknown is transported by matching scaled heights: the new
    node at ``(x, s * g(x))`` takes the old nodal value interpolated at the
    same physical height clipped into the old film, i.e. the unknown is
    resampled column by column in the vertical coordinate.  For the linear
    kind this only saves Newton iterations; for the nonlinear kind it keeps
    the iterate inside the admissible set when the profile step is small.
    """
    from .spectral import barycentric_resample

    grid = field.grid
    ny_new = ny if ny is not None else grid.ny
    if new_profile.xshape != grid.profile.xshape or new_profile.width != grid.profile.width:
        raise ValueError("warm start requires matching horizontal grids")
    nx = grid.nx
    h_old = grid.profile.samples.reshape(nx)
    h_new = new_profile.samples.reshape(nx)
    from .spectral import cheb_lobatto_nodes

    s_new = cheb_lobatto_nodes(ny_new)
    # old scaled coordinate of each new node, clipped to the old film
    s_tgt = np.clip(np.outer(h_new / h_old, s_new), 0.0, 1.0)
    p_old = field.p.reshape(nx, grid.ny, grid.dim)
    p0 = np.empty((nx, ny_new, grid.dim))
    for i in range(grid.dim):
        p0[:, :, i] = barycentric_resample(p_old[:, :, i], s_tgt)
    p0[:, 0, :] = 0.0
    p0 = p0.reshape(new_profile.xshape + (ny_new, grid.dim))
    return solve_critical_point(
        new_profile, field.datum, field.density, ny_new, p0=p0, **kwargs
    )


# -- diagnostics --------------------------------------------------------------------


def coercivity_constant(grid: MappedGrid, K: np.ndarray) -> float:
    """Sharp constant relating the tangent form to the Sobolev norm.

    Returns the smallest generalized eigenvalue of ``K`` against the
    first-order Sobolev Gram matrix on the same interior space: positive
    means the quadratic form controls the norm (coercive), negative means
    the form takes negative values and the configuration cannot be a local
    minimizer of the bulk problem.
    """
    G = h1_gram(grid)
    nd = K.shape[0]

    def extreme(L, lower, which):
        def mv(w):
            t = solve_triangular(L, w, lower=lower, trans="T" if lower else "N")
            t = G @ t
            return solve_triangular(L, t, lower=lower, trans="N" if lower else "T")

        op = LinearOperator((nd, nd), matvec=mv)
        # fixed generic start vector keeps repeated runs bit-identical
        v0 = np.random.default_rng(0).standard_normal(nd)
        vals = eigsh(op, k=1, which=which, return_eigenvectors=False, tol=1e-10, v0=v0)
        return float(vals[0])

    try:
        L, lower = cho_factor(K, lower=True)
        return 1.0 / extreme(L, lower, "LA")
    except LinAlgError:
        pass
    try:
        L, lower = cho_factor(-K, lower=True)
        return -1.0 / extreme(L, lower, "SA")
    except LinAlgError:
        vals = eigh(K, G, subset_by_index=[0, 0], eigvals_only=True)
        return float(vals[0])


def legendre_hadamard_check(
    density: ElasticDensity, xi: np.ndarray, samples: int = 512, seed: int = 0
) -> float:
    """Smallest sampled rank-one value of the tangent tensor at ``xi``.

    Scans unit directions ``c, n`` and returns the minimum of
    ``C[c otimes n, c otimes n]`` over the sample set and over the leading
    axes of ``xi``; a nonnegative result is consistent with rank-one
    convexity along the checked directions.
    """
    rng = np.random.default_rng(seed)
    N = density.dim
    c = rng.normal(size=(samples, N))
    n = rng.normal(size=(samples, N))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    C = density.tangent(np.asarray(xi, dtype=float))
    vals = np.einsum("...iamb,si,sa,sm,sb->...s", C, c, n, c, n)
    return float(vals.min())


def local_min_probe(
    field: ElasticField, count: int = 8, scale: float = 1e-4, seed: int = 0
) -> tuple[bool, float]:
    """Probe that an equilibrium is an energy local minimum at fixed profile.

    Evaluates the energy at random admissible interior perturbations of size
    ``scale`` around the field and returns ``(all nonnegative, smallest
    increment)``, a direct check that does not rely on the assembled
    tangent.
    """
    rng = np.random.default_rng(seed)
    grid = field.grid
    e0 = field.energy()
    floor = 1e-12 * (1.0 + abs(e0))
    worst = np.inf
    ok = True
    for _ in range(count):
        dp = rng.normal(size=field.p.shape)
        dp[..., 0, :] = 0.0
        dp *= scale / max(np.abs(dp).max(), 1e-300)
        for sign in (1.0, -1.0):
            cand = field.with_p(field.p + sign * dp)
            if not field.density.admissible(cand.gradient()):
                continue
            diff = cand.energy() - e0
            worst = min(worst, diff)
            if diff < -floor:
                ok = False
    return ok, worst
