"""Delay-Doppler link-level simulator.

Modulation over orthonormal bases (OFDM, AFDM, OTSM, Zak-OTFS), a
doubly-selective channel with pulse-shaped effective taps, cross-ambiguity
channel estimation from pilot frames or decided data frames, MMSE detection,
and reproducible Monte-Carlo sweeps.
"""

__version__ = "0.1.0"

from .ambiguity import (
    AmbiguitySurface,
    ThumbtackDiagnostic,
    cross_ambiguity,
    estimate_taps,
    expected_thumbtack,
    self_ambiguity,
    twisted_convolve_discrete,
)
from .channel import (
    DDTaps,
    GaussianSincPulse,
    PathSet,
    QuadratureSpec,
    SincPulse,
    SupportMask,
    apply_channel,
    effective_taps,
    evolve,
    noise_variance,
    pulse_from_tag,
    veh_a_paths,
)
from .equalization import (
    ChannelMatrix,
    build_G,
    mmse_detect,
    mmse_soft,
    mmse_soft_from_taps,
    ofdm_equalize_soft,
    ofdm_one_tap,
    ofdm_transfer_estimate,
    ofdm_true_diagonal,
    time_channel_matrix,
)
from .errors import (
    ConfigurationError,
    DegeneratePilotError,
    NumericalError,
    ShapeError,
    UnsupportedConfigurationError,
)
from .frames import (
    Constellation,
    FrameConfig,
    SeedSpec,
    make_config,
    map_bits,
    psk_constellation,
    slice_symbols,
)
from .modulation import (
    BasisScheme,
    PilotFrame,
    afdm_scheme,
    basis_element,
    basis_matrix,
    center_pilot_index,
    dft_p_fdma_scheme,
    gram_check,
    modulate,
    ofdm_scheme,
    otsm_scheme,
    pilot_frame,
    project,
    scheme_from_tag,
    zak_otfs_scheme,
)
from .simulation import (
    ExperimentSpec,
    FeasibilityReport,
    FrameRecord,
    TrialResult,
    aggregate,
    check_feasibility,
    mode_overhead,
    run_experiment,
    run_trial,
    run_trials,
    spectral_efficiency,
    tap_nmse,
    validate_pilot_support,
    write_results_csv,
)
