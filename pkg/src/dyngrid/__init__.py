"""Super-resolution sparse recovery on dynamic grids.

A sparse signal is estimated jointly with the continuous parameters of the
dictionary columns it lives on: a slow timescale runs variational sweeps
under a bounded (tanh) sparsity prior, a fast timescale refines the active
grid parameters by safeguarded quasi-Newton descent, and the two alternate
until the support and parameters settle. Includes a multi-antenna OFDM
channel-extrapolation front end and an experiment harness.
"""

from .model import (
    FourierDictionary,
    GridParams,
    GridRangeError,
    GroundTruth,
    Observation,
    ParametricDictionary,
    SingularSystemError,
    assemble_matrix,
    residual,
    synthesize_observation,
)
from .prior import BgtPrior, SlaPoint, sla_coefficients, sla_precision_vector, tanh_penalty, zeta_for_snr
from .vbi import (
    SseOutput,
    SupportPolicy,
    VariationalState,
    extract_support,
    run_sse,
    update_qkappa,
    update_qrho,
    update_qs,
    update_qx,
)
from .refine import (
    ArmijoResult,
    SrguConfig,
    SrguOutput,
    armijo_search,
    bfgs_direction,
    grid_gradient,
    grid_objective,
    lmmse_gain_update,
    run_srgu,
)
from .framework import (
    FrameworkConfig,
    FrameworkResult,
    TwoTimescaleWarning,
    complexity_report,
    fit_scaling_exponent,
    measure_sse_wall_times,
    run_alternating_map,
)
from .channel import (
    AngleDelayDictionary,
    InitConfig,
    OfdmArrayConfig,
    PathSet,
    build_channel_dictionary,
    coarse_grid_init,
    delay_response,
    extrapolate_channel,
    generate_channel,
    nmse_db,
    rmse_db,
    ula_steering,
)
from .oracles import OracleReport, dense_quadratic_map, exhaustive_small_mle, fd_gradient
from .harness import (
    ALGORITHMS,
    DEFAULT_CONFIG,
    ConfigError,
    derive_seed,
    emit_plot_data,
    load_config,
    omp_ongrid_baseline,
    run_cell,
    run_experiment,
    sparsity_profile,
)

__version__ = "0.1.0"
