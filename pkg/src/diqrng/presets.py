"""Parameter presets and recorded data of the published experiment this
toolkit models.  Loaded by the CLI through ``--preset paper``.
"""

from __future__ import annotations

import math

import numpy as np

from .extractor import ExtractionPlan
from .rates import RateParams
from .source import SourceParams
from .spacetime import TimingConfig
from .trials import CountsTable

# Number of experimental trials and the aggregate game value measured over
# them; raw data for extraction is two outcome bits per trial.
PUBLISHED_TRIALS = 68_950_000_000
PUBLISHED_JBAR = 2.757e-4
PUBLISHED_RAW_BITS = 2 * PUBLISHED_TRIALS           # 1.3790e11
PUBLISHED_OUTPUT_BITS = 62_469_000                  # 6.2469e7
PUBLISHED_EXTRACTION_BLOCKS = 500
PUBLISHED_T_E = 100

# The two smoothing/accumulation error choices quoted for the same run; the
# rate reproduction test records which one matches the published bit count.
PUBLISHED_EPS_CHOICES = (3.8e-6, 1e-5)

# Recorded two-photon detection events per setting pair, rows in
# (x0y0, x0y1, x1y0, x1y1) order and columns in ab = 00, 01, 10, 11 order.
# Stored literally as published; in this table outcome bit 0 corresponds to
# "no detection" (the ab=00 cell is the dominant no-click cell), which
# leaves the game value and the two-sided Z-tests unchanged relative to the
# toolkit's detection encoding since both are invariant under flipping both
# parties' outcome bits.
PUBLISHED_COUNTS = np.array([
    [17014507270, 52352062, 58589512, 112090418],
    [16852014228, 42594266, 217902589, 121844486],
    [16862026671, 208761003, 46395448, 124337061],
    [16579373011, 319412762, 326221778, 13577435],
], dtype=np.int64)


def published_counts(relabel_rows: bool = False) -> CountsTable:
    """The recorded counts table; ``relabel_rows`` exchanges the rows
    labeled (x=0,y=1) and (x=1,y=0), the labeling under which the four
    no-signaling marginal checks come out consistent."""
    table = CountsTable(PUBLISHED_COUNTS.copy())
    return table.relabel_rows_swapped() if relabel_rows else table


# Measured game violation versus mean photon number.
MU_SWEEP = (
    (0.011, 6.47e-5), (0.026, 1.38e-4), (0.049, 2.29e-4), (0.061, 2.46e-4),
    (0.070, 2.17e-4), (0.072, 2.89e-4), (0.073, 2.98e-4), (0.074, 2.66e-4),
    (0.082, 2.80e-4), (0.083, 2.58e-4), (0.085, 2.85e-4), (0.098, 3.39e-4),
    (0.108, 3.44e-4), (0.113, 3.49e-4), (0.124, 3.22e-4), (0.132, 2.96e-4),
    (0.139, 2.74e-4), (0.153, 2.71e-4), (0.162, 2.60e-4),
)
MU_VALUES = tuple(m for m, _ in MU_SWEEP)
MU_VIOLATIONS = tuple(j for _, j in MU_SWEEP)


def published_source_params(mu: float = 0.07) -> SourceParams:
    """Source model at the operating point: state amplitude ratio 0.41,
    measurement angles (-83.5, -119.38, 6.5, -29.38) degrees, heralding
    efficiencies 78.8%/78.5%, dark-count probability 2e-5, misalignment
    5e-4, uniform double-click assignment."""
    return SourceParams(
        mu=mu,
        r=0.41,
        angles=(-83.5, -119.38, 6.5, -29.38),
        eta_a=0.788,
        eta_b=0.785,
        p_dark=2e-5,
        p_mis=5e-4,
    )


def published_rate_params(eps: float = PUBLISHED_EPS_CHOICES[0],
                          n: int = PUBLISHED_TRIALS,
                          jbar: float = PUBLISHED_JBAR) -> RateParams:
    """Rate inputs of the production run: q = 1 (uniform inputs every
    trial), delta_est = sqrt(10/n), t_e = 100."""
    return RateParams.from_jbar(
        n=n, jbar=jbar, q=1.0,
        eps_s=eps, eps_ea=eps,
        delta_est=math.sqrt(10.0 / n),
        t_e=PUBLISHED_T_E,
    )


def published_timing(t_m1: float = 55.0) -> TimingConfig:
    """Timing/geometry of the stations.  The detector response on Alice's
    side is quoted both as 50 ns and 55 ns in different places; the preset
    defaults to 55 ns and accepts the other value explicitly."""
    if t_m1 not in (50.0, 55.0):
        raise ValueError("published t_m1 is either 50 or 55 ns")
    return TimingConfig(
        dist_sa=93.0, dist_sb=90.0,
        len_sa=194.0, len_sb=175.0,
        t_e=10.0,
        t_qrng1=96.0, t_qrng2=96.0,
        t_delay1=270.0, t_delay2=230.0,
        t_pc1=112.0, t_pc2=100.0,
        t_m1=t_m1, t_m2=100.0,
    )


def published_extraction_plan() -> ExtractionPlan:
    """The production hashing job: a 62.469 Mb x 137.90 Gb Toeplitz matrix
    applied in 500 FFT blocks."""
    return ExtractionPlan(
        n=PUBLISHED_RAW_BITS,
        m=PUBLISHED_OUTPUT_BITS,
        t_e=PUBLISHED_T_E,
        block_count=PUBLISHED_EXTRACTION_BLOCKS,
    ).validate()
