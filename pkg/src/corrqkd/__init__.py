"""Finite-key BB84 key rates for sources with classical pulse correlations."""

from .config import DEFAULT_CONFIG, ConfigError, RunConfig, load_config, parse_config
from .corrmodel import (
    INFINITE,
    LtiModel,
    TruncationPlan,
    encoded_phase,
    plan_truncation,
    required_lc,
    trace_distance_bound,
    xi_at,
    xi_total,
)
from .estimator import BoundTable, EstimatorSpec, TableMissError, estimate, sampling_estimator
from .keyrate import (
    ChannelParams,
    KeyResult,
    binary_entropy,
    ec_leakage,
    finalize_key,
    key_length,
    security_params,
    sweep,
    write_csv,
)
from .partition import (
    EmptyKeyError,
    EpsBudget,
    ObservedData,
    PartitionScheme,
    RoundLog,
    Tally,
    combine_bounds,
    partition_rounds,
    restrict_data,
)
from .verify import AttackModel, TrialReport, mc_peep, mc_union

__version__ = "0.1.0"
