"""Cooperative edge caching: elastic federated AAE prediction plus MADDPG placement."""

from ._cefmr import (
    AaeModel,
    Config,
    ConfigError,
    Error,
    IoError,
    ParseError,
    SchemaError,
    describe_keys,
    git_blob_sha1,
    optimal_placement,
    read_metrics_csv,
    rerun_manifest,
    run_experiment,
    saved_cost_reward,
    slot_cost,
)

__all__ = [
    "AaeModel",
    "Config",
    "ConfigError",
    "Error",
    "IoError",
    "ParseError",
    "SchemaError",
    "describe_keys",
    "git_blob_sha1",
    "optimal_placement",
    "read_metrics_csv",
    "rerun_manifest",
    "run_experiment",
    "saved_cost_reward",
    "slot_cost",
]
