"""Numerical stability analysis for periodic epitaxial films.

The package decides local minimality of flat and near-flat film
configurations in a variational model coupling bulk elastic energy with an
anisotropic surface energy: it solves the elastic equilibrium under a lateral
mismatch imposed at the substrate, assembles the second variation of the
total energy with respect to normal perturbations of the free profile, and
reduces strict stability to the spectral condition ``lambda_1 < 1`` for a
compact operator on zero-average surface perturbations.

Submodules are imported lazily so that the command line can configure
threading environment variables before any numerical library loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    # geometry
    "Profile": "geometry",
    "SurfaceGeometry": "geometry",
    "surface_geometry": "geometry",
    "DomainMapping": "geometry",
    "build_mapping": "geometry",
    "MappedGrid": "geometry",
    "build_grid": "geometry",
    "surface_integral": "geometry",
    "tangential_gradient": "geometry",
    "tangential_divergence": "geometry",
    # anisotropy
    "AnisotropyDensity": "anisotropy",
    "IsotropicDensity": "anisotropy",
    "QuadraticFormDensity": "anisotropy",
    "RegularizedFacetDensity": "anisotropy",
    "ShiftedFacetDensity": "anisotropy",
    "CylinderSupportDensity": "anisotropy",
    "crystalline_family": "anisotropy",
    "anisotropy_from_config": "anisotropy",
    "aniso_mean_curvature": "anisotropy",
    # elasticity
    "ElasticDensity": "elasticity",
    "LinearDensity": "elasticity",
    "NonlinearDensity": "elasticity",
    "elastic_density_from_config": "elasticity",
    "MismatchDatum": "elasticity",
    "ElasticField": "elasticity",
    "NewtonError": "elasticity",
    "solve_critical_point": "elasticity",
    "continue_critical_point": "elasticity",
    "coercivity_constant": "elasticity",
    # stability
    "StabilityProblem": "stability",
    "StabilityReport": "stability",
    "SurfaceFunction": "stability",
    "SimGramError": "stability",
    "CriticalityWarning": "stability",
    "second_variation": "stability",
    "full_second_variation": "stability",
    "fd_oracle_second_variation": "stability",
    "lambda1": "stability",
    "mu1": "stability",
    "stability_verdict": "stability",
    "criticality_residual": "stability",
    "dispersion_curve": "stability",
    # flat configurations
    "FlatConfiguration": "flat",
    "solve_affine": "flat",
    "flat_field": "flat",
    "lambda1_of_thickness": "flat",
    "mu1_of_thickness": "flat",
    "critical_thickness": "flat",
    "CriticalThickness": "flat",
    "BracketError": "flat",
    "scaling_law_check": "flat",
    "crystalline_epsilon0": "flat",
    # polynomial identities
    "PolyRing": "polyident",
    "MultiPoly": "polyident",
    "PolyMatrix": "polyident",
    "build_M": "polyident",
    "build_Q": "polyident",
    "verify_identity": "polyident",
    # configuration and command line
    "ConfigError": "config",
    "validate_config": "config",
    "config_sha256": "config",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
