"""fbmruin: ruin probabilities, volatility estimation and Malliavin
sensitivities for insurance surplus processes driven by drifted fractional
Brownian motion."""

__version__ = "0.1.0"

from .estimation import (
    PowerVariationReport,
    SigmaEstimate,
    power_variation,
    sigma_confidence,
    sigma_hat,
)
from .fbm import (
    GridFunction,
    ModelParams,
    SampledPath,
    TimeGrid,
    covariance,
    sample_fbm,
    surplus,
    running_sup_drifted,
)
from .fraccalc import (
    QuadratureConfig,
    frac_derivative,
    frac_integral,
    inner_product_H,
    kernel_K_H,
    K_star_adj_inv,
    K_star_inv,
)
from .ruin import (
    RuinEstimate,
    SensitivityEstimate,
    bm_closed_form,
    finite_diff_sens,
    kde_density_sens,
    mc_ruin,
)
from .sensitivity import (
    ConfidenceReport,
    MalliavinConfig,
    delta_method_ci,
    malliavin_sens,
    malliavin_weight,
    mollifier_psi,
    skorokhod_divergence,
    y_process,
)

__all__ = [
    "__version__",
    "PowerVariationReport",
    "SigmaEstimate",
    "power_variation",
    "sigma_confidence",
    "sigma_hat",
    "GridFunction",
    "ModelParams",
    "SampledPath",
    "TimeGrid",
    "covariance",
    "sample_fbm",
    "surplus",
    "running_sup_drifted",
    "QuadratureConfig",
    "frac_derivative",
    "frac_integral",
    "inner_product_H",
    "kernel_K_H",
    "K_star_adj_inv",
    "K_star_inv",
    "RuinEstimate",
    "SensitivityEstimate",
    "bm_closed_form",
    "finite_diff_sens",
    "kde_density_sens",
    "mc_ruin",
    "ConfidenceReport",
    "MalliavinConfig",
    "delta_method_ci",
    "malliavin_sens",
    "malliavin_weight",
    "mollifier_psi",
    "skorokhod_divergence",
    "y_process",
]
