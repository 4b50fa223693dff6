"""Tests for the second-variation machinery."""

import functools

import numpy as np
import pytest

from filmstab.anisotropy import IsotropicDensity, QuadraticFormDensity
from filmstab.elasticity import (
    MismatchDatum,
    assemble_residual,
    continue_critical_point,
    elastic_density_from_config,
    solve_critical_point,
)
from filmstab.geometry import Profile, surface_geometry
from filmstab.stability import (
    CriticalityWarning,
    SimGramError,
    StabilityProblem,
    SurfaceFunction,
    coefficient_a,
    criticality_residual,
    curvature_velocity_defect,
    dispersion_curve,
    fd_oracle_second_variation,
    first_variation,
    full_second_variation,
    lambda1,
    mu1,
    normal_velocity_defect,
    second_variation,
    sim_gram,
    sim_inner_product,
    solve_vphi,
    stability_verdict,
    total_energy,
)

LIN = {"kind": "linear", "lam": 2.0, "mu": 1.0}


@functools.lru_cache(maxsize=None)
def flat_pair(n=32, ny=20, e0=0.05, thickness=1.0, modes=None):
    density = elastic_density_from_config(LIN, 2)
    mode_list = [dict(component=c, mode=m, amplitude=a) for (c, m, a) in (modes or ())]
    datum = MismatchDatum(np.array([[e0]]), 2, modes=mode_list or None)
    profile = Profile.flat(2, n, thickness)
    field, _ = solve_critical_point(profile, datum, density, ny=ny)
    return field


@functools.lru_cache(maxsize=None)
def curved_pair(n=32, ny=20, e0=0.1, bump=0.03):
    density = elastic_density_from_config(LIN, 2)
    datum = MismatchDatum.from_misfit(e0, 2, "linear")
    x = np.arange(n) / n
    profile = Profile(1.0 + bump * np.cos(2.0 * np.pi * x))
    field, _ = solve_critical_point(profile, datum, density, ny=ny)
    return field


def cos_mode(n, k, width=1.0):
    x = np.arange(n) * width / n
    return np.cos(2.0 * np.pi * k * x / width)


# -- surface functions -------------------------------------------------------------


def test_surface_function_zero_mean_flag():
    field = flat_pair()
    geom = field.grid.geom
    rng = np.random.default_rng(0)
    raw = rng.normal(size=32)
    sf = SurfaceFunction.project_zero_mean(raw, geom)
    assert sf.zero_mean
    assert abs(np.sum(geom.surface_weights * sf.samples)) < 1e-12

    with pytest.raises(ValueError):
        SurfaceFunction(raw + 10.0, geom, zero_mean=True)
    with pytest.raises(ValueError):
        SurfaceFunction(np.zeros(7), geom)
    with pytest.raises(ValueError):
        SurfaceFunction(raw, zero_mean=True)  # geometry required for the check


def test_zero_mean_basis_orthonormal_and_weighted():
    prob = StabilityProblem(curved_pair(), IsotropicDensity(2))
    Z = prob.zero_mean_basis
    n = prob.grid.nx
    assert Z.shape == (n, n - 2)  # constants and the Nyquist mode excluded
    assert np.abs(Z.T @ Z - np.eye(n - 2)).max() < 1e-12
    assert np.abs(prob.geom.surface_weights.ravel() @ Z).max() < 1e-13


# -- coefficient a ------------------------------------------------------------------


def test_coefficient_a_vanishes_flat_affine():
    field = flat_pair()
    a = coefficient_a(field, IsotropicDensity(2))
    assert np.abs(a.samples).max() < 1e-9


def test_coefficient_a_flat_substrate_modes():
    field = flat_pair(modes=((0, 1, 0.2),))
    prob = StabilityProblem(field, IsotropicDensity(2))
    # flat surface: the shape-operator trace term is exactly zero, so the
    # coefficient is the normal derivative of the energy density alone
    dgrad = field.grid.surface_trace(field.gradient_derivative())
    elastic = np.einsum("...iab,...b->...ia", dgrad, prob.geom.normal)
    expected = np.einsum("...ia,...ia->...", field.surface_stress(), elastic)
    assert np.abs(prob.coefficient_a - expected).max() < 1e-12
    assert np.abs(prob.coefficient_a).max() > 1e-3


# -- adjoint solves -----------------------------------------------------------------


def test_solve_vphi_zero_and_linearity():
    field = flat_pair()
    prob = StabilityProblem(field)
    assert not np.any(prob.solve_vphi(np.zeros(32)))

    phi = cos_mode(32, 1)
    theta = cos_mode(32, 2)
    lhs = prob.solve_vphi(0.7 * phi - 1.3 * theta)
    rhs = 0.7 * prob.solve_vphi(phi) - 1.3 * prob.solve_vphi(theta)
    assert np.abs(lhs - rhs).max() < 1e-11 * max(np.abs(rhs).max(), 1e-300)

    assert np.abs(solve_vphi(field, phi) - prob.solve_vphi(phi)).max() == 0.0


def test_coupling_matches_general_assembly():
    field = curved_pair()
    prob = StabilityProblem(field)
    grid = field.grid
    N, ny = grid.dim, grid.ny
    normal = grid.geom.normal
    proj = np.eye(N) - normal[..., :, None] * normal[..., None, :]
    stress = np.einsum("...ib,...ba->...ia", field.surface_stress(), proj)
    rng = np.random.default_rng(1)
    phi = rng.normal(size=grid.profile.xshape)
    F = np.zeros(grid.profile.xshape + (ny, N, N))
    F[..., ny - 1, :, :] = (
        grid.geom.surface_weights[..., None, None] * stress * phi[..., None, None]
    )
    general = -assemble_residual(grid, F)
    special = prob.coupling @ phi.ravel()
    assert np.abs(general - special).max() < 1e-13 * (1.0 + np.abs(general).max())


def test_solve_vphi_decay_and_self_convergence():
    field = flat_pair(n=24, ny=16)
    prob = StabilityProblem(field)
    phi = cos_mode(24, 1)
    v = prob.solve_vphi(phi)
    # driven at the free surface, the correction decays toward the substrate
    lower = np.abs(v[:, : 16 // 4]).max()
    assert lower < 0.2 * np.abs(v).max()

    energy = prob.elastic_pairing(v, v)
    fine = flat_pair(n=48, ny=32)
    prob_fine = StabilityProblem(fine)
    v_fine = prob_fine.solve_vphi(cos_mode(48, 1))
    energy_fine = prob_fine.elastic_pairing(v_fine, v_fine)
    assert abs(energy - energy_fine) < 1e-3 * abs(energy_fine)


# -- surface inner product -----------------------------------------------------------


def test_sim_inner_product_flat_isotropic():
    field = flat_pair()
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    phi = cos_mode(32, 1)
    value = prob.sim_inner_product(phi, phi)
    assert value == pytest.approx(2.0 * np.pi**2, rel=1e-12)

    theta = cos_mode(32, 3)
    assert prob.sim_inner_product(phi, theta) == pytest.approx(
        prob.sim_inner_product(theta, phi), abs=1e-12
    )

    # matrix path against quadrature path
    S = prob.sim_matrix
    assert phi @ S @ phi == pytest.approx(value, rel=1e-12)
    assert sim_inner_product(field, psi, phi, theta) == pytest.approx(
        prob.sim_inner_product(phi, theta), abs=1e-14
    )


def test_sim_gram_positive_definite_at_benchmark():
    field = flat_pair()
    psi = IsotropicDensity(2)
    Sz = sim_gram(field, psi)
    assert np.abs(Sz - Sz.T).max() < 1e-12
    vals = np.linalg.eigvalsh(Sz)
    # smallest retained mode is k = 1 with weight 1/n
    assert vals[0] == pytest.approx((2.0 * np.pi) ** 2 / 32, rel=1e-10)


# -- quadratic forms ------------------------------------------------------------------


def test_second_variation_scaling_and_zero():
    field = flat_pair()
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    phi = cos_mode(32, 2)
    one = prob.second_variation(phi)
    four = prob.second_variation(2.0 * phi)
    assert four == pytest.approx(4.0 * one, rel=1e-10)
    assert prob.second_variation(np.zeros(32)) == 0.0
    assert second_variation(field, psi, phi) == pytest.approx(one, rel=1e-14)


def test_second_variation_warns_off_equilibrium():
    field = curved_pair()
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    assert prob.criticality_residual() > 1e-2
    with pytest.warns(CriticalityWarning):
        prob.second_variation(cos_mode(32, 1))


def test_full_second_variation_flat_equals_three_term():
    field = flat_pair()
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    phi = cos_mode(32, 1) + 0.4 * cos_mode(32, 3)
    # the transport field vanishes identically on a flat profile
    assert prob.full_second_variation(phi) == pytest.approx(
        prob.second_variation(phi), rel=1e-14
    )
    assert full_second_variation(field, psi, phi) == pytest.approx(
        prob.full_second_variation(phi), rel=1e-14
    )


def test_decomposition_identity_random_speeds():
    field = flat_pair(e0=0.1)
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    rng = np.random.default_rng(7)
    Z = prob.zero_mean_basis
    for _ in range(20):
        phi = Z @ rng.normal(size=Z.shape[1])
        lhs = prob.second_variation(phi)
        norm_sq = phi @ prob.sim_matrix @ phi
        correction = phi @ prob.t_matrix @ phi
        scale = max(abs(norm_sq), abs(correction), abs(lhs))
        assert abs(lhs - (norm_sq - correction)) < 1e-10 * scale


# -- eigenvalues -----------------------------------------------------------------------


def test_t_matrix_symmetric_positive():
    prob = StabilityProblem(flat_pair(e0=0.2), IsotropicDensity(2))
    T = prob.t_matrix
    assert np.abs(T - T.T).max() < 1e-10 * np.abs(T).max()
    assert prob.correction_spectrum().min() > -1e-10


def test_lambda1_zero_without_mismatch():
    density = elastic_density_from_config(LIN, 2)
    datum = MismatchDatum(np.array([[0.0]]), 2)
    profile = Profile.flat(2, 24, 1.0)
    field, _ = solve_critical_point(profile, datum, density, ny=12)
    psi = IsotropicDensity(2)
    lam, efn = lambda1(field, psi)
    assert lam == 0.0
    assert efn.zero_mean
    with pytest.warns(UserWarning):
        assert mu1(field, psi) == np.inf
    with pytest.warns(UserWarning):
        report = stability_verdict(field, psi)
    assert report.verdict == "strictly_stable"
    assert report.lambda1 == 0.0 and report.mu1 == np.inf


def test_lambda1_rayleigh_and_weak_equations():
    prob = StabilityProblem(flat_pair(e0=0.2), IsotropicDensity(2))
    lam, efn = prob.lambda1()
    assert lam > 0.0
    assert prob.sim_inner_product(efn, efn) == pytest.approx(1.0, rel=1e-10)

    v = prob.solve_vphi(efn)
    rayleigh = prob.elastic_pairing(v, v) / prob.sim_inner_product(efn, efn)
    assert abs(rayleigh - lam) < 1e-10 * lam

    grid = prob.grid
    vvec = v.reshape(grid.nx, grid.ny, grid.dim)[:, 1:].ravel()
    rhs = prob.coupling @ efn.samples.ravel()
    r_state = np.linalg.norm(prob.stiffness @ vvec - rhs) / np.linalg.norm(rhs)
    z = prob.zero_mean_basis.T @ efn.samples.ravel()
    lhs = prob.t_matrix_z @ z
    r_eigen = np.linalg.norm(lhs - lam * (prob.sim_matrix_z @ z)) / np.linalg.norm(lhs)
    assert r_state < 1e-8
    assert r_eigen < 1e-8


def test_lambda1_sign_convention():
    prob = StabilityProblem(flat_pair(e0=0.2), IsotropicDensity(2))
    _, efn = prob.lambda1()
    coeff = np.fft.fft(efn.samples)
    mags = np.abs(coeff)
    lead = coeff[int(np.flatnonzero(mags > 1e-12 * mags.max())[0])]
    key = lead.real if abs(lead.real) >= abs(lead.imag) else lead.imag
    assert key >= 0.0


def test_lambda1_refinement_agreement():
    psi = IsotropicDensity(2)
    lam_coarse, _ = lambda1(flat_pair(n=24, ny=16, e0=0.1), psi)
    lam_fine, _ = lambda1(flat_pair(n=48, ny=24, e0=0.1), psi)
    assert abs(lam_coarse - lam_fine) < 0.01 * lam_fine


def test_mu1_inverse_relation_and_thickness_monotonicity():
    psi = IsotropicDensity(2)
    prob = StabilityProblem(flat_pair(n=24, ny=16, e0=0.2), psi)
    lam, _ = prob.lambda1()
    mu = prob.mu1()
    assert mu == pytest.approx(1.0 / lam, rel=1e-6)

    thin = StabilityProblem(flat_pair(n=24, ny=16, e0=0.2, thickness=0.5), psi)
    assert thin.mu1() > mu  # thinner film resists the constrained minimum more


def test_sim_gram_error_carries_eigenvalue():
    density = elastic_density_from_config(LIN, 2)
    datum = MismatchDatum(np.array([[0.0]]), 2)
    x = np.arange(32) / 32
    profile = Profile(1.0 + 0.3 * np.cos(2.0 * np.pi * x))
    field, _ = solve_critical_point(profile, datum, density, ny=16)
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    assert prob.coefficient_a.max() <= 0.0
    assert prob.sim_gram_min < 0.0
    with pytest.raises(SimGramError) as err:
        prob.lambda1()
    assert err.value.sim_gram_min == prob.sim_gram_min

    report = prob.report()
    assert report.verdict == "indefinite_sim_product"
    assert np.isnan(report.lambda1) and np.isnan(report.mu1)
    assert np.isnan(report.coercivity_const)


# -- criticality -----------------------------------------------------------------------


def test_criticality_residual_flat_and_perturbation_slope():
    field = flat_pair()
    psi = IsotropicDensity(2)
    assert criticality_residual(field, psi) < 1e-10

    density = elastic_density_from_config(LIN, 2)
    datum = MismatchDatum.from_misfit(0.05, 2, "linear")

    def residual_at(delta):
        x = np.arange(32) / 32
        profile = Profile(1.0 + delta * np.cos(2.0 * np.pi * x))
        moved, _ = solve_critical_point(profile, datum, density, ny=20)
        return criticality_residual(moved, psi)

    r1 = residual_at(0.01)
    r2 = residual_at(0.005)
    assert r1 > 1e-4  # strictly positive, far above quadrature noise
    assert 1.5 < r1 / r2 < 2.5  # first-order in the perturbation


def test_first_variation_matches_energy_rate():
    field = curved_pair()
    psi = IsotropicDensity(2)
    x = np.arange(32) / 32
    direction = np.cos(2.0 * np.pi * x) + 0.5 * np.sin(4.0 * np.pi * x)
    predicted = first_variation(field, psi, direction)

    h = field.grid.profile.samples

    def energy_at(s):
        moved, _ = continue_critical_point(field, Profile(h + s * direction))
        return total_energy(moved, psi)

    t = 1e-5
    measured = (energy_at(t) - energy_at(-t)) / (2.0 * t)
    assert predicted == pytest.approx(measured, rel=1e-5)


# -- finite-difference oracle ------------------------------------------------------------


def test_fd_oracle_flat_matches_three_term_form():
    field = flat_pair(e0=0.1)
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    for k in (1, 2):
        phi = cos_mode(32, k)
        form = prob.second_variation(phi)
        oracle = fd_oracle_second_variation(field, psi, phi)
        assert abs(form - oracle) < 1e-3 * abs(oracle)


def test_fd_oracle_curved_matches_full_form():
    field = curved_pair()
    psi = IsotropicDensity(2)
    phi = cos_mode(32, 1) + 0.3 * np.sin(4.0 * np.pi * np.arange(32) / 32)
    form = full_second_variation(field, psi, phi)
    oracle = fd_oracle_second_variation(field, psi, phi)
    assert abs(form - oracle) < 1e-2 * abs(oracle)


def test_fd_oracle_zero_direction_and_step_error():
    field = flat_pair()
    psi = IsotropicDensity(2)
    assert abs(fd_oracle_second_variation(field, psi, np.zeros(32), richardson=False)) < 1e-6
    with pytest.raises(RuntimeError, match="smaller t"):
        # a step this large drives the profile negative
        fd_oracle_second_variation(field, psi, np.full(32, 1.0), t=5.0)


def test_pure_surface_oracle_flat_mode():
    density = elastic_density_from_config(LIN, 2)
    datum = MismatchDatum(np.array([[0.0]]), 2)
    profile = Profile.flat(2, 32, 1.0)
    field, _ = solve_critical_point(profile, datum, density, ny=12)
    psi = IsotropicDensity(2)
    oracle = fd_oracle_second_variation(field, psi, cos_mode(32, 1))
    assert oracle == pytest.approx(2.0 * np.pi**2, rel=1e-6)


# -- report ---------------------------------------------------------------------------


def test_report_fields_and_invariant():
    field = flat_pair(e0=0.2)
    psi = IsotropicDensity(2)
    prob = StabilityProblem(field, psi)
    report = prob.report()
    assert set(report.to_dict()) == {
        "c0",
        "sim_gram_min",
        "lambda1",
        "mu1",
        "criticality_residual",
        "verdict",
        "coercivity_const",
    }
    stable = report.c0 > 0 and report.sim_gram_min > 0 and report.lambda1 < 1
    assert (report.verdict == "strictly_stable") == stable
    assert report.lambda1 >= 0.0
    assert report.criticality_residual < 1e-10
    # coercivity constant is (1 - lambda1) times the norm-equivalence constant
    assert report.coercivity_const == pytest.approx(
        (1.0 - report.lambda1)
        * np.linalg.eigvalsh(
            np.linalg.solve(prob.surface_h1_gram_z(), prob.sim_matrix_z)
        ).real.min(),
        rel=1e-6,
    )


def test_unstable_verdict_with_strong_substrate_modes():
    field = flat_pair(e0=0.1, modes=((0, 2, 0.3),))
    eta = 1e-2
    psi = QuadraticFormDensity(np.diag([eta**2, 1.0]))
    report = stability_verdict(field, psi)
    assert report.verdict == "not_strictly_stable"
    assert report.lambda1 > 1.0
    assert report.mu1 < 1.0


def test_dispersion_curve_flat_benchmark():
    field = flat_pair()
    psi = IsotropicDensity(2)
    curve = dispersion_curve(field, psi, 4)
    assert curve.shape == (4, 2)
    assert np.array_equal(curve[:, 0], [1, 2, 3, 4])
    assert (curve[:, 1] > 0).all()  # thin film at weak misfit: all modes stable


# -- transport identities ----------------------------------------------------------------


@pytest.mark.parametrize("dim", [2, 3])
def test_normal_velocity_defect_linear_in_t(dim):
    n = 64 if dim == 2 else 24
    profile = Profile.from_fourier_modes(
        dim,
        n,
        [
            {"mode": 0 if dim == 2 else [0, 0], "amplitude": 1.0},
            {"mode": 1 if dim == 2 else [1, 0], "amplitude": 0.1},
        ],
    )
    geom = surface_geometry(profile)
    x = np.arange(n) / n
    raw = 0.05 * np.cos(2.0 * np.pi * x) + 0.02 * np.sin(4.0 * np.pi * x)
    phi = (raw if dim == 2 else np.broadcast_to(raw[:, None], (n, n))) / geom.area_jacobian
    d1 = normal_velocity_defect(profile, phi, 1e-2)
    d2 = normal_velocity_defect(profile, phi, 5e-3)
    assert 1.6 < d1 / d2 < 2.4


def test_curvature_velocity_defect_linear_in_t():
    n = 96
    x = np.arange(n) / n
    profile = Profile(1.0 + 0.1 * np.cos(2.0 * np.pi * x))
    geom = surface_geometry(profile)
    rng = np.random.default_rng(11)
    A = rng.normal(size=(2, 2))
    psi = QuadraticFormDensity(A @ A.T + 2.0 * np.eye(2))
    phi = (0.05 * np.cos(2.0 * np.pi * x) + 0.02 * np.sin(4.0 * np.pi * x)) / geom.area_jacobian
    d1 = curvature_velocity_defect(profile, psi, phi, 1e-2)
    d2 = curvature_velocity_defect(profile, psi, phi, 5e-3)
    assert 1.6 < d1 / d2 < 2.4
