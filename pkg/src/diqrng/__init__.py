"""diqrng: certification and extraction toolkit for device-independent
quantum random number generation.

Submodules
----------
trials     trial/counts data model, game scoring, abort rule, DIRT1 format
source     SPDC photon-pair source model and trial simulation
rates      entropy-accumulation rate computation and min-entropy
extractor  Toeplitz-hashing extraction (naive and blocked FFT)
certify    KL projections, PBR hypothesis tests, no-signaling Z-tests
spacetime  spacelike-separation slack checks
presets    published experiment parameter values
report     summary JSON, CSV, and figure rendering
cli        command-line pipeline
"""

from .extractor import (
    ExtractionPlan,
    ExtractionSizingError,
    ToeplitzSeed,
    extract_blocked_fft,
    extract_naive,
    plan_extraction,
)
from .rates import (
    RateParams,
    RateResult,
    completeness_error,
    f_min_fn,
    g_fn,
    g_prime,
    min_entropy_from_histogram,
    r_opt,
    rate_curve,
    rate_fn,
)
from .source import (
    PairOutcomeDist,
    SourceParams,
    multi_pair_probs,
    optimize_mu,
    predicted_game_value,
    simulate_trials,
    single_pair_probs,
)
from .spacetime import (
    TimingConfig,
    check_emission_separation,
    check_measurement_separation,
)
from .trials import (
    CountsTable,
    GameValue,
    SpotCheckConfig,
    TrialArray,
    TrialRecord,
    abort_decision,
    aggregate_trials,
    game_value_from_counts,
    score_trial,
    spot_check_relabel,
)
from .certify import (
    BehaviorDist,
    PbrModel,
    ProjectionError,
    build_pbr,
    kl_divergence,
    project_local_realistic,
    project_no_signaling,
    pvalue_accumulate,
    ztest_no_signaling,
)

__version__ = "0.1.0"

__all__ = [
    "BehaviorDist", "CountsTable", "ExtractionPlan", "ExtractionSizingError",
    "GameValue", "PairOutcomeDist", "PbrModel", "ProjectionError", "RateParams",
    "RateResult", "SourceParams", "SpotCheckConfig", "TimingConfig", "ToeplitzSeed",
    "TrialArray", "TrialRecord", "abort_decision", "aggregate_trials",
    "build_pbr", "check_emission_separation", "check_measurement_separation",
    "completeness_error", "extract_blocked_fft", "extract_naive", "f_min_fn",
    "g_fn", "g_prime", "game_value_from_counts", "kl_divergence",
    "min_entropy_from_histogram", "multi_pair_probs", "optimize_mu",
    "plan_extraction", "predicted_game_value", "project_local_realistic",
    "project_no_signaling", "pvalue_accumulate", "r_opt", "rate_curve",
    "rate_fn", "score_trial", "simulate_trials", "single_pair_probs",
    "spot_check_relabel", "ztest_no_signaling",
]
