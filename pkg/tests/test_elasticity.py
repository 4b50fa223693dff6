"""Elastic densities, discrete assembly, and equilibrium solves."""

import numpy as np
import pytest
from scipy.optimize import brentq

from filmstab.elasticity import (
    ElasticField,
    LinearDensity,
    MismatchDatum,
    NonlinearDensity,
    _from_interior,
    assemble_hessian,
    assemble_residual,
    coercivity_constant,
    continue_critical_point,
    elastic_density_from_config,
    h1_gram,
    isotropic_tensor,
    legendre_hadamard_check,
    local_min_probe,
    solve_critical_point,
)
from filmstab.geometry import Profile, build_grid

LAM, MU, E0 = 2.0, 1.0, 0.05


def _bumpy(n, amp=0.1):
    return Profile.from_fourier_modes(
        2, n, [{"mode": 0, "amplitude": 1.0}, {"mode": 1, "amplitude": amp}]
    )


@pytest.mark.parametrize("dim", [2, 3])
def test_density_derivatives_match_finite_differences(dim):
    rng = np.random.default_rng(0)
    xi = np.eye(dim) + 0.1 * rng.normal(size=(6, dim, dim))
    step = 1e-6
    for dens in [LinearDensity.isotropic(dim, LAM, MU), NonlinearDensity(dim, LAM, MU)]:
        S = dens.stress(xi)
        C = dens.tangent(xi)
        for i in range(dim):
            for a in range(dim):
                dxi = np.zeros((dim, dim))
                dxi[i, a] = step
                fd_s = (dens.value(xi + dxi) - dens.value(xi - dxi)) / (2 * step)
                fd_c = (dens.stress(xi + dxi) - dens.stress(xi - dxi)) / (2 * step)
                assert np.abs(fd_s - S[:, i, a]).max() < 1e-6
                assert np.abs(fd_c - C[:, :, :, i, a]).max() < 1e-4


@pytest.mark.parametrize("dim", [2, 3])
def test_nonlinear_density_reference_state(dim):
    dens = NonlinearDensity(dim, LAM, MU)
    I = np.eye(dim)
    assert dens.value(I) == 0.0
    assert np.abs(dens.stress(I)).max() == 0.0
    assert np.abs(dens.tangent(I) - isotropic_tensor(dim, LAM, MU)).max() < 1e-14
    # nonnegative on random admissible gradients
    rng = np.random.default_rng(1)
    xi = np.eye(dim) + 0.3 * rng.normal(size=(50, dim, dim))
    xi = xi[np.linalg.det(xi) > 0.1]
    assert dens.value(xi).min() >= 0.0
    with pytest.raises(ValueError):
        dens.value(np.diag([1.0] * (dim - 1) + [-1.0]))


def test_linear_density_validation_and_symmetry():
    C = isotropic_tensor(2, LAM, MU)
    dens = LinearDensity(C)
    assert np.abs(dens.C - dens.C.transpose(2, 3, 0, 1)).max() == 0.0
    assert np.abs(dens.C - dens.C.transpose(1, 0, 2, 3)).max() == 0.0
    # antisymmetric part of the gradient carries no energy
    skew = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert abs(dens.value(skew)) < 1e-15
    with pytest.raises(ValueError):
        LinearDensity(np.zeros((2, 2, 2, 2)))
    with pytest.raises(ValueError):
        LinearDensity.isotropic(2, 0.0, -1.0)
    with pytest.raises(ValueError):
        LinearDensity(-C)


def test_mismatch_datum_validation():
    with pytest.raises(ValueError):
        MismatchDatum(np.eye(2), dim=2)  # wrong block size
    with pytest.raises(ValueError):
        MismatchDatum(0.1, dim=2, modes=[{"component": 1, "mode": 1, "amplitude": 0.1}])
    d = MismatchDatum.from_misfit(E0, 2, "linear")
    assert d.A[0, 0] == E0
    d = MismatchDatum.from_misfit(E0, 3, "nonlinear")
    assert np.allclose(d.A, (1 + E0) * np.eye(2))
    # nonlinear kind rejects orientation-reversing data at field build
    prof = Profile.flat(2, 8, 1.0)
    grid = build_grid(prof, 5)
    bad = MismatchDatum(-0.5, dim=2)
    with pytest.raises(ValueError):
        ElasticField(grid, bad, NonlinearDensity(2, LAM, MU))


def test_linear_flat_matches_plane_strain_formula():
    prof = Profile.flat(2, 16, thickness=1.3)
    datum = MismatchDatum.from_misfit(E0, 2, "linear")
    dens = LinearDensity.isotropic(2, LAM, MU)
    field, info = solve_critical_point(prof, datum, dens, ny=8)
    assert info["iterations"] <= 1
    b2 = -E0 * LAM / (LAM + 2 * MU)
    exact = np.diag([E0, b2])
    assert np.abs(field.gradient() - exact).max() < 1e-12
    # traction-free top row and exact energy density
    assert np.abs(field.surface_stress()[..., :, 1]).max() < 1e-12
    W = 0.5 * LAM * (E0 + b2) ** 2 + MU * (E0**2 + b2**2)
    assert field.energy() == pytest.approx(1.3 * W, rel=1e-13)


def test_linear_flat_3d():
    prof = Profile.flat(3, 8, thickness=0.7)
    datum = MismatchDatum.from_misfit(E0, 3, "linear")
    dens = LinearDensity.isotropic(3, LAM, MU)
    field, _ = solve_critical_point(prof, datum, dens, ny=6)
    b3 = -2 * LAM * E0 / (LAM + 2 * MU)
    exact = np.diag([E0, E0, b3])
    assert np.abs(field.gradient() - exact).max() < 1e-11


def test_nonlinear_flat_solves_traction_equation():
    prof = Profile.flat(2, 8, thickness=1.0)
    datum = MismatchDatum.from_misfit(E0, 2, "nonlinear")
    dens = NonlinearDensity(2, LAM, MU)
    field, info = solve_critical_point(prof, datum, dens, ny=8)
    g = field.gradient().reshape(-1, 2, 2)
    # the solution is affine diag(1+e0, c): no spread, no shear
    assert np.abs(g - g[0]).max() < 1e-11
    assert abs(g[0, 0, 1]) < 1e-11 and abs(g[0, 1, 0]) < 1e-11
    # c solves the scalar traction equation; compare with an independent root
    c_star = brentq(
        lambda c: dens.stress(np.diag([1 + E0, c]))[1, 1], 0.5, 1.0, xtol=1e-14
    )
    assert g[0, 1, 1] == pytest.approx(c_star, abs=1e-10)
    assert field.energy() > 0.0
    ok, worst = local_min_probe(field)
    assert ok


def test_zero_mismatch_gives_zero_field():
    prof = _bumpy(16)
    datum = MismatchDatum(0.0, dim=2)
    dens = LinearDensity.isotropic(2, LAM, MU)
    field, info = solve_critical_point(prof, datum, dens, ny=6)
    assert info["iterations"] == 0
    assert np.abs(field.p).max() == 0.0
    assert field.energy() == 0.0
    # nonlinear analogue: unit stretch keeps the film exactly at rest
    datn = MismatchDatum.from_misfit(0.0, 2, "nonlinear")
    fn, infon = solve_critical_point(prof, datn, NonlinearDensity(2, LAM, MU), ny=6)
    assert abs(fn.energy()) < 1e-24
    assert np.abs(fn.gradient() - np.eye(2)).max() < 1e-11


def test_periodic_substrate_perturbation_enters_exactly():
    prof = Profile.flat(2, 24, thickness=1.0)
    datum = MismatchDatum(
        0.0, dim=2, modes=[{"component": 0, "mode": 2, "amplitude": 0.03, "phase": 0.7}]
    )
    dens = LinearDensity.isotropic(2, LAM, MU)
    field, _ = solve_critical_point(prof, datum, dens, ny=10)
    x = np.arange(24) / 24.0
    q = 0.03 * np.cos(4 * np.pi * x + 0.7)
    u = field.total()
    assert np.abs(u[:, 0, 0] - q).max() < 1e-13  # substrate row pinned to the datum
    assert np.abs(u[:, 0, 1]).max() < 1e-13
    assert field.energy() > 1e-6  # the wiggle stores elastic energy


@pytest.mark.parametrize("kind", ["linear", "nonlinear"])
def test_energy_residual_hessian_consistency(kind):
    rng = np.random.default_rng(4)
    prof = _bumpy(16, amp=0.12)
    grid = build_grid(prof, 8)
    datum = MismatchDatum.from_misfit(0.08, 2, kind)
    dens = (
        LinearDensity.isotropic(2, LAM, MU)
        if kind == "linear"
        else NonlinearDensity(2, LAM, MU)
    )
    field = ElasticField(grid, datum, dens)
    p = 0.01 * rng.normal(size=field.p.shape)
    p[..., 0, :] = 0.0
    f = field.with_p(p)
    g = f.gradient()
    r = assemble_residual(grid, grid.wq[..., None, None] * dens.stress(g))
    K = assemble_hessian(grid, grid.wq[..., None, None, None, None] * dens.tangent(g))
    assert np.abs(K - K.T).max() == 0.0
    dvec = rng.normal(size=r.shape)
    dp = _from_interior(grid, dvec)
    t = 1e-6
    Ep = field.with_p(p + t * dp).energy()
    Em = field.with_p(p - t * dp).energy()
    fd_grad = (Ep - Em) / (2 * t)
    assert fd_grad == pytest.approx(float(r @ dvec), rel=1e-6)
    fd_hess = (Ep - 2 * f.energy() + Em) / t**2
    assert fd_hess == pytest.approx(float(dvec @ K @ dvec), rel=1e-4)


def test_energy_residual_consistency_3d():
    rng = np.random.default_rng(5)
    prof = Profile.from_fourier_modes(
        3, 8, [{"mode": [0, 0], "amplitude": 1.0}, {"mode": [1, 0], "amplitude": 0.08}]
    )
    grid = build_grid(prof, 5)
    datum = MismatchDatum.from_misfit(0.06, 3, "linear")
    dens = LinearDensity.isotropic(3, LAM, MU)
    field = ElasticField(grid, datum, dens)
    p = 0.01 * rng.normal(size=field.p.shape)
    p[..., 0, :] = 0.0
    f = field.with_p(p)
    r = assemble_residual(grid, grid.wq[..., None, None] * dens.stress(f.gradient()))
    dvec = rng.normal(size=r.shape)
    dp = _from_interior(grid, dvec)
    t = 1e-6
    fd = (field.with_p(p + t * dp).energy() - field.with_p(p - t * dp).energy()) / (2 * t)
    assert fd == pytest.approx(float(r @ dvec), rel=1e-6)


def test_solution_converges_under_refinement():
    datum = MismatchDatum.from_misfit(E0, 2, "linear")
    dens = LinearDensity.isotropic(2, LAM, MU)

    def solve(n, ny):
        f, info = solve_critical_point(_bumpy(n), datum, dens, ny=ny)
        geom = f.grid.geom
        defect = np.abs(
            np.einsum("...ia,...a->...i", f.surface_stress(), geom.normal)
        ).max()
        return info["energy"], defect

    e1, d1 = solve(24, 12)
    e2, d2 = solve(32, 16)
    assert e2 == pytest.approx(e1, rel=1e-4)
    assert d2 < d1  # natural condition defect shrinks under refinement


def test_warm_start_and_continuation():
    datum = MismatchDatum.from_misfit(E0, 2, "linear")
    dens = LinearDensity.isotropic(2, LAM, MU)
    prof = _bumpy(16)
    field, _ = solve_critical_point(prof, datum, dens, ny=8)
    # same profile: the transported unknown is already the solution
    same, info_same = continue_critical_point(field, prof)
    assert info_same["iterations"] == 0
    assert np.abs(same.p - field.p).max() < 1e-12
    # nearby profile: warm start agrees with a cold solve
    prof2 = Profile.from_fourier_modes(
        2, 16, [{"mode": 0, "amplitude": 1.0}, {"mode": 1, "amplitude": 0.11}]
    )
    warm, _ = continue_critical_point(field, prof2)
    cold, _ = solve_critical_point(prof2, datum, dens, ny=8)
    assert np.abs(warm.p - cold.p).max() < 1e-9


def test_coercivity_constant_matches_dense_eigensolve():
    prof = _bumpy(12, amp=0.08)
    grid = build_grid(prof, 6)
    datum = MismatchDatum.from_misfit(E0, 2, "linear")
    dens = LinearDensity.isotropic(2, LAM, MU)
    field, _ = solve_critical_point(prof, datum, dens, ny=6)
    K = assemble_hessian(
        grid, grid.wq[..., None, None, None, None] * dens.tangent(field.gradient())
    )
    c0 = coercivity_constant(grid, K)
    from scipy.linalg import eigh

    dense = eigh(K, h1_gram(grid), eigvals_only=True)[0]
    assert c0 == pytest.approx(float(dense), rel=1e-8)
    assert c0 > 0.0
    # negated form exercises the non-coercive branch
    c0_neg = coercivity_constant(grid, -K)
    dense_neg = eigh(-K, h1_gram(grid), eigvals_only=True)[0]
    assert c0_neg == pytest.approx(float(dense_neg), rel=1e-8)
    assert c0_neg < 0.0


def test_legendre_hadamard_isotropic_value():
    dens = LinearDensity.isotropic(2, LAM, MU)
    val = legendre_hadamard_check(dens, np.eye(2), samples=4096)
    # rank-one minimum of the isotropic tensor is the shear modulus
    assert val == pytest.approx(MU, abs=1e-3)
    assert val >= MU - 1e-12


def test_density_from_config():
    d = elastic_density_from_config({"kind": "linear", "lam": LAM, "mu": MU}, dim=2)
    assert isinstance(d, LinearDensity)
    d = elastic_density_from_config(
        {"kind": "linear", "tensor": isotropic_tensor(2, LAM, MU).tolist()}, dim=2
    )
    assert isinstance(d, LinearDensity)
    d = elastic_density_from_config({"kind": "nonlinear", "lam": LAM, "mu": MU}, dim=2)
    assert isinstance(d, NonlinearDensity)
    with pytest.raises(ValueError):
        elastic_density_from_config({"kind": "hyper"}, dim=2)
