"""Tridiagonal beta-ensemble random operators: sampling, spectra, recursions and exponent fits."""
from .config import ConfigError, ExperimentConfig, parse_config
from .ensemble import (
    CoefficientStream,
    TridiagonalOperator,
    householder_tridiagonalize,
    log_joint_eigenvalue_density,
    mean_operator,
    read_operator_csv,
    sample_gbe,
    sample_goe_dense,
    sample_goe_dense_tridiagonalize,
    stream_gbe,
    write_operator_csv,
)
from .errors import DomainError, QuadratureError, SolverError
from .experiments import Check, ReportBundle, run_experiment
from .meanfield import (
    hermite_u,
    hermite_u_sequence,
    hermite_zeros,
    integrated_semicircle,
    oscillator_completeness_check,
    semicircle_density,
    semicircle_quantiles,
)
from .numeric import ChiParam, RngStream, derive_stream, digamma, log_gamma, sample_chi_scaled, sample_gaussian
from .recursion import (
    LogSignedSequence,
    SpectralMeasure,
    backward_solution,
    char_poly_sequence,
    eigenvalues,
    eigenvector,
    forward_solution,
    nearest_eigenvalue,
    spectral_measure,
    sturm_count,
    wronskian,
)
from .stats import (
    Histogram,
    density_compare,
    ipr,
    n2_marginal_oracle,
    repulsion_exponent,
    unfold_and_spacings,
)
from .transfer import (
    FitResult,
    TransferAccumulator,
    decay_exponent,
    fit_line,
    growth_exponent,
    lyapunov_theory,
    mean_log_b_theory,
    mean_log_D_theory,
    transfer_log_norms,
)

__version__ = "0.1.0"
