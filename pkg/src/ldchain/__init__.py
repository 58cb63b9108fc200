"""Current large deviations of thermostated oscillator chains.

Exact Gaussian-mode functionals (activity, entropy production, tilted
functional and its per-mode maximization), an independent Riccati spectral
oracle for the same scaled cumulant generating function, Langevin simulation
with reproducible counter-based noise streams, structural identity checks
(generalized detailed balance, Gallavotti-Cohen symmetry, current
positivity, Lyapunov bound), and a CLI experiment runner.
"""

from .chain import (
    BOUNDARIES,
    ChainConfig,
    PotentialSpec,
    ReferenceMeasureSpec,
    State,
    bond_currents,
    chain_config_from_dict,
    chain_config_from_json,
    chain_config_to_dict,
    chain_config_to_json,
    custom_potential,
    drift,
    drive_field,
    force_matrix,
    grad_potential,
    hamiltonian,
    harmonic_potential,
    local_current,
    local_energy,
    mean_current,
    momentum_reversal,
    prop1_advisory,
    sigma_coefficients,
    sigma_value,
    uniform_chain,
)
from .curves import KappaLimit, RateCurve, ScgfCurve, content_hash, rate_function
from .errors import (
    BlowupError,
    ConfigError,
    NumericalFailure,
    RiccatiExistenceError,
    ScgfBasinError,
)
from .gaussian import (
    GaussianMeasureSpec,
    LDReport,
    ModeParams,
    ScgfOptimum,
    ValidityWarning,
    K_tau,
    conductivity_kappa,
    entropy_production,
    functional_F,
    mean_current_gaussian,
    mode_covariances,
    omega_k_sq,
    optimal_mode_coeffs_small_lambda,
    optimize_scgf,
    reference_measure,
    scaled_limit_F,
    single_oscillator_I,
    single_oscillator_K,
    single_oscillator_K_variational,
    single_oscillator_s,
    stationary_tilted_params,
)
from .gdb import QuadratureSpec, check_gdb
from .lyapunov import (
    fit_lyapunov_bound,
    hat_hamiltonian,
    lyapunov_F,
    lyapunov_b_threshold,
    lyapunov_energy_norm,
    lyapunov_phi,
)
from .riccati import LinearSystem, build_linear_system, scgf_riccati
from .simulate import (
    SimSpec,
    TrajectoryStats,
    current_sign_test,
    empirical_scgf,
    evolve_state,
    gc_histogram_check,
    integrate,
)

__version__ = "0.1.0"
